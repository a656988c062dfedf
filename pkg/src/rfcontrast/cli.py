"""Command-line entry point.

Subcommands: synth, make-sets, pretrain, train, eval, baseline, matrix,
report. Every subcommand takes --config/--out plus an optional --seed that
rebases all config seeds; commands that consume captures accept --data to
read a synthesized dataset directory, and regenerate the dataset in memory
from the config when --data is omitted (both paths are deterministic, so the
results are identical).

Exit codes: 0 success, 1 validation/usage error, 2 I/O or container error.
Input dataset directories are never mutated.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import dataio, pipeline, report
from .config import ExperimentConfig, load_config
from .encoder import load_checkpoint, save_checkpoint


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(parser):
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="rebase all config seeds on this master seed")


def _data_flag(parser):
    parser.add_argument("--data", default=None,
                        help="dataset directory from `synth` (default: synthesize in memory)")


def build_parser() -> _Parser:
    parser = _Parser(prog="rfcontrast",
                     description="Contrastive domain adaptation for RF fingerprinting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext, with_data, extra in (
        ("synth", "generate a synthetic dataset directory", False, ()),
        ("make-sets", "window a dataset into Capture Sets and write a manifest", True, ()),
        ("pretrain", "contrastive pre-training on the first grid pair", True, ()),
        ("train", "fit the classifier head on frozen source features", True, ("--checkpoint",)),
        ("eval", "evaluate a trained checkpoint on the target Set", True, ("--checkpoint",)),
        ("baseline", "train and evaluate the supervised CNN baseline", True, ()),
        ("matrix", "run the full (pair, model, seed) experiment grid", True, ()),
    ):
        p = sub.add_parser(name, help=helptext)
        _common_flags(p)
        if with_data:
            _data_flag(p)
        for flag in extra:
            p.add_argument(flag, required=True, help="model checkpoint path")
        if name == "matrix":
            p.add_argument("--plots", action="store_true",
                           help="also render PNG heatmaps/bars (needs matplotlib)")

    p = sub.add_parser("report", help="render tables and confusion CSVs from matrix results")
    p.add_argument("--results", required=True, help="directory holding results.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plots", action="store_true",
                   help="also render PNG heatmaps/bars (needs matplotlib)")
    return parser


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.exists():
        raise ValueError(f"config file not found: {path}")
    cfg = load_config(path)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _captures(cfg: ExperimentConfig, args) -> list:
    if getattr(args, "data", None):
        return dataio.load_dataset(args.data)
    return pipeline.synthesize_dataset(cfg)


def _first_pair(cfg: ExperimentConfig):
    if not cfg.grid.pairs:
        raise ValueError("config grid has no (source, target) pairs")
    (sd, ss), (td, ts) = cfg.grid.pairs[0]
    return (sd, ss), (td, ts)


def _sets_for(cfg: ExperimentConfig, args):
    sets = pipeline.build_capture_sets(_captures(cfg, args), cfg.dataset)
    source_id, target_id = _first_pair(cfg)
    for key in (source_id, target_id):
        if key not in sets:
            raise ValueError(f"grid references set {key} absent from dataset "
                             f"(days x sets available: {sorted(sets)})")
    return sets, source_id, target_id


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_losses(path: Path, losses: list):
    lines = ["epoch,loss"] + [f"{i},{v:.6f}" for i, v in enumerate(losses)]
    path.write_text("\n".join(lines) + "\n")


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    captures = pipeline.synthesize_dataset(cfg)
    dataio.save_dataset(captures, out)
    print(f"wrote {len(captures)} captures to {out}")
    return 0


def cmd_make_sets(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sets = pipeline.build_capture_sets(_captures(cfg, args), cfg.dataset)
    manifest = [{
        "day_id": s.day_id,
        "set_index": s.set_index,
        "num_devices": s.num_devices,
        "total_frames": s.total_frames,
        "window": cfg.dataset.window,
        "transmission_ids": {str(c.device_id): c.transmission_id for c in s.captures},
    } for s in sets.values()]
    (out / "sets.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote manifest for {len(manifest)} sets to {out / 'sets.json'}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sets, source_id, target_id = _sets_for(cfg, args)
    pcfg = cfg.pretrain if args.seed is None else replace(cfg.pretrain, seed=args.seed)
    state, losses = pipeline.pretrain(sets[source_id], sets[target_id], pcfg,
                                      cfg.encoder, cfg.augment)
    save_checkpoint(out / "pretrained.pt", state, pcfg.seed)
    _write_losses(out / "pretrain_losses.csv", losses)
    print(f"pre-trained on {report.set_name(source_id)} + {report.set_name(target_id)} "
          f"({pcfg.domains_used}); final loss {losses[-1]:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sets, source_id, _ = _sets_for(cfg, args)
    state, seed, _ = load_checkpoint(args.checkpoint)
    source = sets[source_id]
    labeled = [dataio.LabeledFrame(frame=f, device_label=c.device_id,
                                   transmission_id=c.transmission_id)
               for c in source.captures for f in c.frames]
    head, losses = pipeline.train_classifier(state, labeled, cfg.train, seed=seed + 1,
                                             num_classes=source.num_devices)
    save_checkpoint(out / "model.pt", state, seed, classifier=head)
    _write_losses(out / "classifier_losses.csv", losses)
    print(f"trained classifier on {report.set_name(source_id)}; "
          f"final loss {losses[-1]:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sets, source_id, target_id = _sets_for(cfg, args)
    state, seed, head = load_checkpoint(args.checkpoint)
    if head is None:
        raise ValueError(f"checkpoint {args.checkpoint} has no classifier; run `train` first")
    result = pipeline.evaluate(state, head, sets[target_id], model_kind="CTL",
                               source_id=source_id, seed=seed)
    (out / "eval.json").write_text(report.results_to_json([result]))
    (out / "confusion.csv").write_text(report.confusion_csv(result.confusion))
    print(f"{report.set_name(source_id)} -> {report.set_name(target_id)}: "
          f"accuracy {100 * result.accuracy:.1f}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sets, source_id, target_id = _sets_for(cfg, args)
    seed = args.seed if args.seed is not None else cfg.pretrain.seed
    result = pipeline.run_cnn_baseline(sets[source_id], sets[target_id],
                                       cfg.encoder, cfg.train, seed)
    (out / "baseline.json").write_text(report.results_to_json([result]))
    (out / "confusion.csv").write_text(report.confusion_csv(result.confusion))
    print(f"CNN {report.set_name(source_id)} -> {report.set_name(target_id)}: "
          f"accuracy {100 * result.accuracy:.1f}")
    return 0


def cmd_matrix(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    captures = _captures(cfg, args)
    sets = pipeline.build_capture_sets(captures, cfg.dataset)
    for pair in cfg.grid.pairs:
        for key in (tuple(pair[0]), tuple(pair[1])):
            if key not in sets:
                raise ValueError(f"grid references set {key} absent from dataset")
    results = pipeline.run_matrix(sets, cfg.grid, cfg)
    (out / "results.json").write_text(report.results_to_json(results))
    manifest = {
        "config": asdict(cfg),
        "seeds": list(cfg.grid.seeds),
        "dataset_sha256": pipeline.dataset_fingerprint(captures),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    report.write_bundle(results, out, plots=args.plots)
    print(f"ran {len(results)} grid cells; bundle written to {out}")
    return 0


def cmd_report(args) -> int:
    results_path = Path(args.results) / "results.json"
    if not results_path.exists():
        raise ValueError(f"no results.json under {args.results}")
    results = report.results_from_json(results_path.read_text())
    bundle = report.write_bundle(results, _out_dir(args), plots=args.plots)
    print(f"rendered {len(bundle.emitted)} files to {bundle.out_dir}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "make-sets": cmd_make_sets,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "matrix": cmd_matrix,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except dataio.FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
