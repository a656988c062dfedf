"""Result rendering: accuracy tables, row-normalized confusion matrices, CSV.

Accuracy tables mirror the two-direction layout used for the experiment
grids (rows = Set pairs, one CNN/AB/CTL column triple per direction), with
values as mean accuracy over seeds in percent, one decimal. All rendering is
a pure function of the results, so outputs are golden-file testable and
byte-stable under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pipeline import MODEL_KINDS, EvalResult


def normalize_confusion(confusion: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; rows then sum to 1 within 1e-9."""
    confusion = np.asarray(confusion, dtype=np.float64)
    sums = confusion.sum(axis=1)
    zero = np.flatnonzero(sums == 0)
    if zero.size:
        raise ValueError(f"confusion row for device {int(zero[0])} has zero total")
    return confusion / sums[:, None]


def set_name(set_id: tuple) -> str:
    """(day, set_index) -> D1S1-style label (both displayed 1-based)."""
    return f"D{set_id[0] + 1}S{set_id[1] + 1}"


def _mean_accuracy(results: list[EvalResult], source_id, target_id, model: str) -> float:
    cells = [r.accuracy for r in results
             if r.source_id == tuple(source_id) and r.target_id == tuple(target_id)
             and r.model_kind == model]
    if not cells:
        raise ValueError(f"missing results for {set_name(source_id)} -> "
                         f"{set_name(target_id)} {model}")
    return float(np.mean(cells))


@dataclass
class AccuracyTable:
    """One two-direction accuracy table (percent, one decimal)."""

    day_pair: tuple
    models: tuple
    rows: list  # (row_label, forward values, reverse values)

    @property
    def has_reverse(self) -> bool:
        return any(rev for _, _, rev in self.rows)

    def to_csv(self) -> str:
        a, b = self.day_pair
        directions = ((a, b), (b, a)) if self.has_reverse else ((a, b),)
        header = ["pair"]
        for src, dst in directions:
            header += [f"day{src + 1}_to_day{dst + 1}_{m}" for m in self.models]
        lines = [",".join(header)]
        for label, fwd, rev in self.rows:
            lines.append(",".join([label] + [f"{v:.1f}" for v in fwd + rev]))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        a, b = self.day_pair
        width = 7
        model_cols = "".join(f"{m:>{width}}" for m in self.models)
        label_w = max(len(r[0]) for r in self.rows) + 2
        head = f"{'':<{label_w}}{f'Day {a + 1} -> {b + 1}':<{width * len(self.models) + 3}}"
        if self.has_reverse:
            head += f"Day {b + 1} -> {a + 1}"
        cols = f"{'Source -> Target':<{label_w}}{model_cols}"
        if self.has_reverse:
            cols += f"   {model_cols}"
        lines = [head.rstrip() if not self.has_reverse else head, cols]
        for label, fwd, rev in self.rows:
            line = f"{label:<{label_w}}" + "".join(f"{v:{width}.1f}" for v in fwd)
            if rev:
                line += "   " + "".join(f"{v:{width}.1f}" for v in rev)
            lines.append(line)
        return "\n".join(lines) + "\n"


def render_accuracy_table(results: list[EvalResult], direction_pair: tuple,
                          models: tuple = MODEL_KINDS) -> AccuracyTable:
    """Build the table for one day pair, e.g. direction_pair=(0, 1).

    Rows are the (source set, target set) combinations present for the
    forward direction; each row reports the forward and reverse direction
    means over seeds. Missing cells raise, naming the absent (pair, model).
    """
    if not results:
        raise ValueError("no results to render")
    a, b = direction_pair
    combos = sorted({(r.source_id[1], r.target_id[1]) for r in results
                     if r.source_id[0] == a and r.target_id[0] == b})
    if not combos:
        raise ValueError(f"no results for direction day {a + 1} -> day {b + 1}")
    # the reverse column group appears only when that direction was run at all
    reverse_run = any(r.source_id[0] == b and r.target_id[0] == a for r in results)
    rows = []
    for src_set, tgt_set in combos:
        fwd = [100 * _mean_accuracy(results, (a, src_set), (b, tgt_set), m) for m in models]
        rev = [100 * _mean_accuracy(results, (b, src_set), (a, tgt_set), m)
               for m in models] if reverse_run else []
        rows.append((f"DayA_S{src_set + 1} -> DayB_S{tgt_set + 1}", fwd, rev))
    return AccuracyTable(day_pair=(a, b), models=tuple(models), rows=rows)


def accuracy_csv(results: list[EvalResult]) -> str:
    """Per-cell CSV: source,target,model,seed,accuracy (accuracy as fraction)."""
    order = sorted(results, key=lambda r: (r.source_id, r.target_id,
                                           MODEL_KINDS.index(r.model_kind), r.seed))
    lines = ["source,target,model,seed,accuracy"]
    for r in order:
        lines.append(f"{set_name(r.source_id)},{set_name(r.target_id)},"
                     f"{r.model_kind},{r.seed},{r.accuracy:.6f}")
    return "\n".join(lines) + "\n"


def confusion_csv(confusion: np.ndarray) -> str:
    """Row-major CSV of one matrix: true_device,pred_device,count,fraction."""
    fractions = normalize_confusion(confusion)
    lines = ["true_device,pred_device,count,fraction"]
    for i in range(confusion.shape[0]):
        for j in range(confusion.shape[1]):
            lines.append(f"{i},{j},{int(confusion[i, j])},{fractions[i, j]:.6f}")
    return "\n".join(lines) + "\n"


def results_to_json(results: list[EvalResult]) -> str:
    payload = [{
        "accuracy": r.accuracy,
        "confusion": np.asarray(r.confusion).tolist(),
        "source_id": list(r.source_id),
        "target_id": list(r.target_id),
        "model_kind": r.model_kind,
        "seed": r.seed,
    } for r in results]
    return json.dumps(payload, indent=2)


def results_from_json(text: str) -> list[EvalResult]:
    return [EvalResult(accuracy=e["accuracy"],
                       confusion=np.asarray(e["confusion"], dtype=np.int64),
                       source_id=tuple(e["source_id"]), target_id=tuple(e["target_id"]),
                       model_kind=e["model_kind"], seed=e["seed"])
            for e in json.loads(text)]


@dataclass
class ReportBundle:
    results: list
    seeds: tuple
    out_dir: Path
    emitted: list = field(default_factory=list)


def _summed_confusions(results: list[EvalResult]) -> dict:
    """Confusion counts summed over seeds, keyed by (source, target, model)."""
    cells = {}
    for r in results:
        key = (r.source_id, r.target_id, r.model_kind)
        cells[key] = r.confusion + cells.get(key, 0)
    return cells


def write_bundle(results: list[EvalResult], out_dir: str | Path,
                 plots: bool = False) -> ReportBundle:
    """Emit accuracy CSV, per-day-pair tables, and per-cell confusion CSVs.

    Confusion counts are summed over seeds per (pair, model) before row
    normalization, one file per cell. Plot images (heatmaps, bar charts) are
    opt-in so the core pipeline carries no plotting dependency. Never touches
    its inputs.
    """
    if not results:
        raise ValueError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(results=results,
                          seeds=tuple(sorted({r.seed for r in results})),
                          out_dir=out_dir)

    def emit(name: str, text: str):
        path = out_dir / name
        path.write_text(text)
        bundle.emitted.append(path)

    emit("accuracy.csv", accuracy_csv(results))

    day_pairs = sorted({tuple(sorted((r.source_id[0], r.target_id[0]))) for r in results})
    models = tuple(m for m in MODEL_KINDS if any(r.model_kind == m for r in results))
    for a, b in day_pairs:
        if a == b:
            continue
        table = render_accuracy_table(results, (a, b), models)
        emit(f"accuracy_day{a + 1}_day{b + 1}.csv", table.to_csv())
        emit(f"accuracy_day{a + 1}_day{b + 1}.txt", table.to_text())

    cells = sorted(_summed_confusions(results).items(),
                   key=lambda kv: (kv[0][0], kv[0][1], MODEL_KINDS.index(kv[0][2])))
    for (source_id, target_id, model), total in cells:
        emit(f"confusion_{set_name(source_id)}_to_{set_name(target_id)}_{model}.csv",
             confusion_csv(total))
    if plots:
        bundle.emitted.extend(write_plots(results, out_dir))
    return bundle


def write_plots(results: list[EvalResult], out_dir: str | Path) -> list:
    """Render confusion heatmaps and per-model accuracy bars as PNG files.

    Imports matplotlib lazily; callers that never pass --plots never need it.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    emitted = []
    for (source_id, target_id, model), total in sorted(
            _summed_confusions(results).items(),
            key=lambda kv: (kv[0][0], kv[0][1], MODEL_KINDS.index(kv[0][2]))):
        fig, ax = plt.subplots(figsize=(4.5, 4))
        image = ax.imshow(normalize_confusion(total), vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_xlabel("predicted device")
        ax.set_ylabel("true device")
        ax.set_title(f"{model}: {set_name(source_id)} -> {set_name(target_id)}")
        fig.colorbar(image, ax=ax, fraction=0.046)
        path = out_dir / (f"confusion_{set_name(source_id)}_to_"
                          f"{set_name(target_id)}_{model}.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        emitted.append(path)

    models = [m for m in MODEL_KINDS if any(r.model_kind == m for r in results)]
    pairs = sorted({(r.source_id, r.target_id) for r in results})
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(pairs), 3.5))
    width = 0.8 / len(models)
    for i, model in enumerate(models):
        means = [100 * _mean_accuracy(results, s, t, model) for s, t in pairs]
        ax.bar(np.arange(len(pairs)) + i * width, means, width, label=model)
    ax.set_xticks(np.arange(len(pairs)) + 0.4 - width / 2)
    ax.set_xticklabels([f"{set_name(s)}->{set_name(t)}" for s, t in pairs],
                       rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("accuracy (%)")
    ax.legend()
    path = out_dir / "accuracy_bars.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    emitted.append(path)
    return emitted
