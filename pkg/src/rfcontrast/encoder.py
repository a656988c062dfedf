"""Base/momentum encoders, projector, predictor, and the classifier head.

The backbone is a 1-D residual CNN over time with I/Q as the two input
channels; the first convolution (kernel 100, stride 20) collapses each
1000-sample window to 46 time steps. A 2-layer MLP projector replaces the
usual final fully-connected layer and emits the 128-dim feature h; during
pre-training a 2-layer MLP predictor sits on the query branch only. All of
h, q, k are L2-normalized, which bounds pairwise squared distances to [0, 4]
without changing the contrastive minimizer (the loss is invariant to a common
shift of all squared distances).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, asdict
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class EncoderConfig:
    window: int = 1000
    first_conv_kernel: int = 100
    first_conv_stride: int = 20
    embedding_dim: int = 128
    projector_hidden: int = 512
    predictor_hidden: int = 512
    stage_widths: tuple = (64, 128, 256, 512)
    stage_blocks: tuple = (2, 2, 2, 2)
    norm: str = "batch"  # "batch": per-batch statistics over the (mixed) batch; "instance": none

    def __post_init__(self):
        if (self.window - self.first_conv_kernel) // self.first_conv_stride + 1 < 1:
            raise ValueError(f"first conv does not fit window {self.window}")
        if len(self.stage_widths) != len(self.stage_blocks) or not self.stage_widths:
            raise ValueError("stage_widths and stage_blocks must be equal-length, non-empty")
        if self.norm not in ("batch", "instance"):
            raise ValueError(f"norm must be 'batch' or 'instance', got {self.norm!r}")

    @property
    def input_shape(self) -> tuple:
        return (2, self.window)

    @property
    def stem_out_steps(self) -> int:
        return (self.window - self.first_conv_kernel) // self.first_conv_stride + 1


def _norm1d(cfg: EncoderConfig, channels: int) -> nn.Module:
    if cfg.norm == "batch":
        return nn.BatchNorm1d(channels)
    return nn.GroupNorm(1, channels)


class ResidualBlock(nn.Module):
    def __init__(self, cfg: EncoderConfig, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv1d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.norm1 = _norm1d(cfg, out_ch)
        self.conv2 = nn.Conv1d(out_ch, out_ch, 3, padding=1, bias=False)
        self.norm2 = _norm1d(cfg, out_ch)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv1d(in_ch, out_ch, 1, stride=stride, bias=False),
                _norm1d(cfg, out_ch))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class Backbone(nn.Module):
    """Residual CNN over time; input (N, 2, W), output (N, stage_widths[-1])."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv1d(2, cfg.stage_widths[0], cfg.first_conv_kernel,
                      stride=cfg.first_conv_stride, bias=False),
            _norm1d(cfg, cfg.stage_widths[0]),
            nn.ReLU(inplace=True))
        stages = []
        in_ch = cfg.stage_widths[0]
        for s, (width, blocks) in enumerate(zip(cfg.stage_widths, cfg.stage_blocks)):
            for b in range(blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                stages.append(ResidualBlock(cfg, in_ch, width, stride))
                in_ch = width
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool1d(1)
        self.out_features = in_ch

    def forward(self, x):
        x = self.stem(x)
        x = self.stages(x)
        return self.pool(x).squeeze(-1)


def _mlp_head(in_dim: int, hidden: int, out_dim: int, cfg: EncoderConfig) -> nn.Sequential:
    norm = nn.BatchNorm1d(hidden) if cfg.norm == "batch" else nn.LayerNorm(hidden)
    return nn.Sequential(nn.Linear(in_dim, hidden), norm, nn.ReLU(inplace=True),
                         nn.Linear(hidden, out_dim))


class BaseEncoder(nn.Module):
    """Backbone + projector; forward returns the L2-normalized 128-dim h."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg)
        self.projector = _mlp_head(self.backbone.out_features, cfg.projector_hidden,
                                   cfg.embedding_dim, cfg)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1:] != (2, self.cfg.window):
            raise ValueError(f"expected (N, 2, {self.cfg.window}) input, got {tuple(x.shape)}")
        h = self.projector(self.backbone(x))
        return F.normalize(h, dim=1)


class Predictor(nn.Module):
    """Query-branch MLP mapping h to q; the momentum branch has no twin."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.net = _mlp_head(cfg.embedding_dim, cfg.predictor_hidden, cfg.embedding_dim, cfg)

    def forward(self, h):
        return F.normalize(self.net(h), dim=1)


class ClassifierHead(nn.Module):
    """Two-hidden-layer MLP from the 128-dim feature to device logits."""

    def __init__(self, num_classes: int, embedding_dim: int = 128,
                 hidden1: int = 256, hidden2: int = 128):
        super().__init__()
        self.num_classes = num_classes
        self.net = nn.Sequential(
            nn.Linear(embedding_dim, hidden1), nn.ReLU(inplace=True),
            nn.Linear(hidden1, hidden2), nn.ReLU(inplace=True),
            nn.Linear(hidden2, num_classes))

    def forward(self, h):
        return self.net(h)


def classify(h_batch: torch.Tensor, classifier: ClassifierHead) -> torch.Tensor:
    """Logits for a batch of 128-dim features; no normalization of outputs."""
    expected = classifier.net[0].in_features
    if h_batch.ndim != 2 or h_batch.shape[1] != expected:
        raise ValueError(f"expected (N, {expected}) features, got {tuple(h_batch.shape)}")
    return classifier(h_batch)


class ModelState:
    """Pre-training state: base encoder theta_q, momentum twin theta_k, predictor.

    The momentum encoder starts as an exact copy of the base encoder and never
    receives gradients; it only moves through `momentum_update`.
    """

    def __init__(self, cfg: EncoderConfig, momentum_coeff: float = 0.99):
        if not 0 <= momentum_coeff < 1:
            raise ValueError(f"momentum_coeff must be in [0, 1), got {momentum_coeff}")
        self.cfg = cfg
        self.m = momentum_coeff
        self.base = BaseEncoder(cfg)
        self.momentum = copy.deepcopy(self.base)
        for p in self.momentum.parameters():
            p.requires_grad_(False)
        self.predictor = Predictor(cfg)

    def encode_base(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x)

    def predict(self, h: torch.Tensor) -> torch.Tensor:
        return self.predictor(h)

    @torch.no_grad()
    def encode_momentum(self, x: torch.Tensor) -> torch.Tensor:
        return self.momentum(x)

    @torch.no_grad()
    def momentum_update(self) -> "ModelState":
        """theta_k <- m*theta_k + (1-m)*theta_q over backbone+projector.

        Accumulated in float64 and rounded once, so the update is the
        correctly-rounded value of the formula in the parameter dtype (and
        theta_k == theta_q is an exact fixed point).
        """
        for p_k, p_q in zip(self.momentum.parameters(), self.base.parameters()):
            mixed = self.m * p_k.data.double() + (1.0 - self.m) * p_q.data.double()
            p_k.data = mixed.to(p_k.dtype)
        return self

    def trainable_parameters(self):
        return list(self.base.parameters()) + list(self.predictor.parameters())

    def train(self):
        self.base.train()
        self.momentum.train()
        self.predictor.train()
        return self

    def eval(self):
        self.base.eval()
        self.momentum.eval()
        self.predictor.eval()
        return self


def save_checkpoint(path: str | Path, state: ModelState, seed: int,
                    classifier: ClassifierHead | None = None) -> Path:
    """Persist all parameter tensors plus the config and training seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "encoder_config": asdict(state.cfg),
        "momentum_coeff": state.m,
        "seed": seed,
        "base": state.base.state_dict(),
        "momentum": state.momentum.state_dict(),
        "predictor": state.predictor.state_dict(),
    }
    if classifier is not None:
        payload["classifier"] = classifier.state_dict()
        payload["num_classes"] = classifier.num_classes
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path):
    """Reload (state, seed, classifier-or-None) from `save_checkpoint` output."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    raw_cfg = dict(payload["encoder_config"])
    raw_cfg["stage_widths"] = tuple(raw_cfg["stage_widths"])
    raw_cfg["stage_blocks"] = tuple(raw_cfg["stage_blocks"])
    cfg = EncoderConfig(**raw_cfg)
    state = ModelState(cfg, momentum_coeff=payload["momentum_coeff"])
    state.base.load_state_dict(payload["base"])
    state.momentum.load_state_dict(payload["momentum"])
    state.predictor.load_state_dict(payload["predictor"])
    classifier = None
    if "classifier" in payload:
        classifier = ClassifierHead(payload["num_classes"], cfg.embedding_dim)
        classifier.load_state_dict(payload["classifier"])
    return state, payload["seed"], classifier
