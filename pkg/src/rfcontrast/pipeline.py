"""Three-stage training pipeline and the experiment grid runner.

Stage 1 pre-trains the dual encoder on pooled source+target frames with the
symmetrized contrastive loss (no device labels anywhere; positives are frames
sharing a transmission id). Stage 2 freezes the base encoder and fits the
classifier head on labeled source features. Stage 3 evaluates on the target
Set. The two baselines share the exact same encoder architecture: CNN trains
it end-to-end with cross-entropy on source labels, AB is the full method with
target data withheld from pre-training.

Every run is deterministic given its seed under single-threaded execution;
target device labels are never read before evaluation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as nn

from .augment import AugmentConfig, make_pair
from .config import DatasetConfig, ExperimentConfig, GridConfig, PretrainConfig, TrainConfig
from .dataio import (CaptureSet, LabeledFrame, TransmissionIdAllocator,
                     build_capture_set, standardize_frame)
from .encoder import BaseEncoder, ClassifierHead, EncoderConfig, ModelState
from .loss import symmetrized_loss
from .synth import RawCapture, sample_device_profiles, sample_domain_profiles, synthesize_capture

MODEL_KINDS = ("CNN", "AB", "CTL")


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # K x K counts, rows = true device
    source_id: tuple  # (day, set_index)
    target_id: tuple
    model_kind: str
    seed: int = 0


@dataclass
class TrainRun:
    state: ModelState
    classifier: ClassifierHead
    pretrain_losses: list
    classifier_losses: list
    seed: int


def synthesize_dataset(cfg: ExperimentConfig) -> list[RawCapture]:
    """Generate one raw capture per (device, day), long enough for all Sets."""
    profiles = sample_device_profiles(cfg.devices.num_devices, cfg.devices.seed,
                                      cfg.devices.ranges)
    domains = sample_domain_profiles(cfg.domains.num_days, cfg.domains.seed,
                                     cfg.domains.ranges)
    captures = []
    for domain in domains:
        for profile in profiles:
            captures.append(synthesize_capture(
                profile, domain, cfg.dataset.samples_per_day,
                cfg.dataset.sample_rate_hz, cfg.dataset.seed))
    return captures


def build_capture_sets(raw_captures: list[RawCapture],
                       dataset_cfg: DatasetConfig) -> dict:
    """Window every day's recordings into Sets, keyed by (day, set_index).

    A single allocator hands out transmission ids in (day, set, device) order,
    so ids are unique across the whole experiment including across days.
    """
    by_day: dict[int, list[RawCapture]] = {}
    for cap in raw_captures:
        by_day.setdefault(cap.day_id, []).append(cap)
    allocator = TransmissionIdAllocator()
    sets = {}
    for day in sorted(by_day):
        for s in range(dataset_cfg.sets_per_day):
            sets[(day, s)] = build_capture_set(
                by_day[day], s, dataset_cfg.frames_per_capture,
                dataset_cfg.window, allocator)
    return sets


def dataset_fingerprint(raw_captures: list[RawCapture]) -> str:
    """Order-independent sha256 of all capture bytes, for run manifests."""
    digest = hashlib.sha256()
    for cap in sorted(raw_captures, key=lambda c: (c.day_id, c.device_id)):
        digest.update(f"{cap.device_id}/{cap.day_id}/{cap.sample_rate_hz}".encode())
        digest.update(cap.samples.tobytes())
    return digest.hexdigest()


def _standardized_pool(capture_set: CaptureSet):
    """(standardized frames, transmission ids) for every frame of a Set."""
    frames, tids = [], []
    for cap in capture_set.captures:
        for f in cap.frames:
            frames.append(standardize_frame(f))
            tids.append(cap.transmission_id)
    return frames, tids


def _frames_tensor(frames) -> torch.Tensor:
    return torch.from_numpy(np.stack([f.data for f in frames]))


def pretrain(source: CaptureSet, target: CaptureSet | None,
             cfg: PretrainConfig, encoder_cfg: EncoderConfig,
             augment_cfg: AugmentConfig = AugmentConfig()):
    """Contrastive pre-training; returns (ModelState, per-epoch mean losses).

    The frame pool is source plus target when domains_used permits; with an
    empty (or absent) target the run is bit-identical to the source-only
    ablation under the same seed, because no code path consumes randomness
    differently.
    """
    frames, tids = _standardized_pool(source)
    if not frames:
        raise ValueError("source set has no frames")
    if cfg.domains_used == "source_and_target" and target is not None:
        t_frames, t_tids = _standardized_pool(target)
        overlap = set(tids) & set(t_tids)
        if overlap:
            raise ValueError(f"transmission ids overlap across domains: {sorted(overlap)}")
        frames += t_frames
        tids += t_tids

    torch.manual_seed(cfg.seed)
    state = ModelState(encoder_cfg, cfg.momentum_coeff).train()
    opt = torch.optim.AdamW(state.trainable_parameters(), lr=cfg.learning_rate,
                            weight_decay=cfg.weight_decay)
    pool = len(frames)
    full, rem = divmod(pool, cfg.batch_size)
    steps_per_epoch = full + (1 if rem >= 2 else 0)
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=total_steps)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA46]))

    epoch_losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(pool)
        batch_losses = []
        for start in range(0, pool, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue  # a lone frame has no negatives
            pairs = [make_pair(frames[i], tids[i], rng, augment_cfg) for i in idx]
            x_w = _frames_tensor([p.x_weak for p in pairs])
            x_s = _frames_tensor([p.x_strong for p in pairs])
            y = torch.tensor([p.transmission_id for p in pairs])
            n = x_w.shape[0]

            both = torch.cat([x_w, x_s], dim=0)
            q_all = state.predict(state.encode_base(both))
            q_w, q_s = q_all[:n], q_all[n:]
            k_all = state.encode_momentum(both)
            k_w, k_s = k_all[:n], k_all[n:]

            loss = symmetrized_loss(q_w, k_s, q_s, k_w, y, cfg.tau)
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            state.momentum_update()
            batch_losses.append(loss.item())
        epoch_losses.append(float(np.mean(batch_losses)) if batch_losses else math.nan)
    return state, epoch_losses


def extract_features(state: ModelState, frames, batch_size: int = 512) -> torch.Tensor:
    """Frozen-encoder features for raw frames (standardized, no augmentation)."""
    state.eval()
    std = [standardize_frame(f) for f in frames]
    out = []
    with torch.no_grad():
        for start in range(0, len(std), batch_size):
            out.append(state.encode_base(_frames_tensor(std[start:start + batch_size])))
    return torch.cat(out, dim=0)


def train_classifier(state: ModelState, labeled_source: list[LabeledFrame],
                     cfg: TrainConfig, seed: int, num_classes: int | None = None):
    """Fit the classifier head on frozen source features with cross-entropy."""
    if not labeled_source:
        raise ValueError("no labeled source frames")
    labels = np.array([lf.device_label for lf in labeled_source])
    if labels.min() < 0:
        raise ValueError(f"negative device label: {labels.min()}")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    elif labels.max() >= num_classes:
        raise ValueError(f"label {labels.max()} out of range for {num_classes} classes")

    features = extract_features(state, [lf.frame for lf in labeled_source])
    targets = torch.from_numpy(labels).long()

    torch.manual_seed(seed)
    head = ClassifierHead(num_classes, state.cfg.embedding_dim)
    opt = torch.optim.Adam(head.parameters(), lr=cfg.learning_rate)
    ce = nn.CrossEntropyLoss()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1F]))

    epoch_losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(labeled_source))
        batch_losses = []
        for start in range(0, len(perm), cfg.batch_size):
            idx = torch.from_numpy(perm[start:start + cfg.batch_size])
            loss = ce(head(features[idx]), targets[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            batch_losses.append(loss.item())
        epoch_losses.append(float(np.mean(batch_losses)))
    return head, epoch_losses


def _confusion_from_predictions(true_labels: np.ndarray, predicted: np.ndarray,
                                num_classes: int) -> np.ndarray:
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true_labels, predicted), 1)
    return confusion


def evaluate(state: ModelState, classifier: ClassifierHead, target: CaptureSet,
             model_kind: str = "CTL", source_id: tuple = (-1, -1),
             seed: int = 0) -> EvalResult:
    """Closed-set evaluation on a target Set: argmax logits, no augmentation."""
    num_classes = classifier.num_classes
    device_ids = [c.device_id for c in target.captures]
    bad = [d for d in device_ids if not 0 <= d < num_classes]
    if bad:
        raise ValueError(f"target devices {bad} outside training label space [0, {num_classes})")

    true_labels, preds = [], []
    with torch.no_grad():
        for cap in target.captures:
            features = extract_features(state, cap.frames)
            pred = classifier(features).argmax(dim=1).numpy()
            preds.append(pred)
            true_labels.append(np.full(pred.shape, cap.device_id))
    true_labels = np.concatenate(true_labels)
    preds = np.concatenate(preds)
    confusion = _confusion_from_predictions(true_labels, preds, num_classes)
    return EvalResult(accuracy=float(np.trace(confusion) / confusion.sum()),
                      confusion=confusion,
                      source_id=source_id, target_id=(target.day_id, target.set_index),
                      model_kind=model_kind, seed=seed)


def run_contrastive(source: CaptureSet, target: CaptureSet | None,
                    cfg: ExperimentConfig, seed: int, ablation: bool = False) -> TrainRun:
    """Pre-train (CTL, or AB when ablation), then fit the source classifier."""
    pcfg = replace(cfg.pretrain, seed=seed,
                   domains_used="source_only" if ablation else cfg.pretrain.domains_used)
    state, pre_losses = pretrain(source, target, pcfg, cfg.encoder, cfg.augment)
    labeled = [LabeledFrame(frame=f, device_label=c.device_id,
                            transmission_id=c.transmission_id)
               for c in source.captures for f in c.frames]
    head, clf_losses = train_classifier(state, labeled, cfg.train, seed=seed + 1,
                                        num_classes=source.num_devices)
    return TrainRun(state=state, classifier=head, pretrain_losses=pre_losses,
                    classifier_losses=clf_losses, seed=seed)


class CnnBaseline(nn.Module):
    """Supervised control: identical encoder trained end-to-end with CE."""

    def __init__(self, encoder_cfg: EncoderConfig, num_classes: int):
        super().__init__()
        self.encoder = BaseEncoder(encoder_cfg)
        self.head = ClassifierHead(num_classes, encoder_cfg.embedding_dim)

    def forward(self, x):
        return self.head(self.encoder(x))


def train_cnn(source: CaptureSet, encoder_cfg: EncoderConfig, cfg: TrainConfig,
              seed: int) -> CnnBaseline:
    frames, labels = [], []
    for cap in source.captures:
        for f in cap.frames:
            frames.append(standardize_frame(f))
            labels.append(cap.device_id)
    if not frames:
        raise ValueError("source set has no frames")

    torch.manual_seed(seed)
    model = CnnBaseline(encoder_cfg, source.num_devices)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    ce = nn.CrossEntropyLoss()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCBB]))
    targets = torch.tensor(labels)

    for _ in range(cfg.epochs):
        perm = rng.permutation(len(frames))
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue  # keep batch-norm statistics well-defined
            x = _frames_tensor([frames[i] for i in idx])
            loss = ce(model(x), targets[torch.from_numpy(idx)])
            opt.zero_grad()
            loss.backward()
            opt.step()
    return model


def evaluate_cnn(model: CnnBaseline, target: CaptureSet, source_id: tuple = (-1, -1),
                 seed: int = 0) -> EvalResult:
    model.eval()
    num_classes = model.head.num_classes
    bad = [c.device_id for c in target.captures if not 0 <= c.device_id < num_classes]
    if bad:
        raise ValueError(f"target devices {bad} outside training label space [0, {num_classes})")

    true_labels, preds = [], []
    with torch.no_grad():
        for cap in target.captures:
            std = [standardize_frame(f) for f in cap.frames]
            for start in range(0, len(std), 512):
                logits = model(_frames_tensor(std[start:start + 512]))
                preds.append(logits.argmax(dim=1).numpy())
                true_labels.append(np.full(len(std[start:start + 512]), cap.device_id))
    true_labels = np.concatenate(true_labels)
    preds = np.concatenate(preds)
    confusion = _confusion_from_predictions(true_labels, preds, num_classes)
    return EvalResult(accuracy=float(np.trace(confusion) / confusion.sum()),
                      confusion=confusion,
                      source_id=source_id, target_id=(target.day_id, target.set_index),
                      model_kind="CNN", seed=seed)


def run_cnn_baseline(source: CaptureSet, target: CaptureSet, encoder_cfg: EncoderConfig,
                     cfg: TrainConfig, seed: int) -> EvalResult:
    model = train_cnn(source, encoder_cfg, cfg, seed)
    return evaluate_cnn(model, target, source_id=(source.day_id, source.set_index),
                        seed=seed)


def cell_seed(seed: int, source_id: tuple, target_id: tuple, model_kind: str) -> int:
    """Deterministic per-cell seed; identical cells reproduce identically."""
    entropy = [seed, source_id[0], source_id[1], target_id[0], target_id[1],
               MODEL_KINDS.index(model_kind)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def run_matrix(sets: dict, grid: GridConfig, cfg: ExperimentConfig) -> list[EvalResult]:
    """Run every (pair, model, seed) cell of the experiment grid."""
    unknown = [m for m in grid.models if m not in MODEL_KINDS]
    if unknown:
        raise ValueError(f"unknown model kinds: {unknown}")
    results = []
    for seed in grid.seeds:
        for pair in grid.pairs:
            source_id, target_id = tuple(pair[0]), tuple(pair[1])
            source, target = sets[source_id], sets[target_id]
            for model in grid.models:
                cseed = cell_seed(seed, source_id, target_id, model)
                if model == "CNN":
                    result = run_cnn_baseline(source, target, cfg.encoder, cfg.train, cseed)
                else:
                    run = run_contrastive(source, target, cfg, cseed, ablation=(model == "AB"))
                    result = evaluate(run.state, run.classifier, target, model_kind=model,
                                      source_id=source_id, seed=cseed)
                result.source_id = source_id
                result.seed = seed
                results.append(result)
    return results
