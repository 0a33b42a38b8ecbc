"""Grid runner over (architecture x activation) and its CSV / markdown reports."""
from __future__ import annotations

import csv
import io
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .activations import MAF_SWEEP, ActivationSpec, parse_activation
from .architectures import ARCHITECTURES, DISPLAY_NAMES, NetworkConfig, build
from .data.pipeline import TrialSet, standardize
from .training import FoldData, FoldResult, TrainConfig, make_folds, train_protocol

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "architecture", "activation", "alpha", "fold", "tp", "tn", "fp", "fn",
    "train_acc", "test_acc", "sensitivity", "specificity", "selected_epoch", "seconds",
)
METRIC_COLUMNS = ("train_acc", "test_acc", "sensitivity", "specificity")
METRIC_HEADERS = ("Train Accuracy (%)", "Test Accuracy (%)", "Sensitivity (%)", "Specificity (%)")


@dataclass
class CellResult:
    architecture: str
    activation: ActivationSpec
    folds: list = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Summary:
    mean: float | None
    std: float | None

    def __str__(self) -> str:
        return "n/a" if self.mean is None else f"{self.mean:.2f} ± {self.std:.2f}"


def fold_metric_values(fr: FoldResult) -> dict:
    m = fr.metrics.as_floats()
    return {
        "train_acc": fr.train_acc,
        "test_acc": m["accuracy"],
        "sensitivity": m["sensitivity"],
        "specificity": m["specificity"],
    }


def summarize(values) -> Summary:
    vals = [v for v in values if v is not None]
    if not vals:
        return Summary(None, None)
    arr = np.asarray(vals, dtype=float)
    return Summary(float(arr.mean()), float(arr.std()))


@dataclass
class BenchmarkReport:
    cells: list

    def aggregate(self) -> list[dict]:
        """One row per successful cell: mean ± std over folds of each metric."""
        rows = []
        for cell in self.cells:
            if not cell.ok:
                continue
            per_fold = [fold_metric_values(f) for f in cell.folds]
            row = {"architecture": cell.architecture, "activation": cell.activation}
            for col in METRIC_COLUMNS:
                row[col] = summarize(v[col] for v in per_fold)
            rows.append(row)
        return rows

    @property
    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def to_csv(self, include_timing: bool = False) -> str:
        """Per-fold rows.  ``seconds`` stays blank unless ``include_timing``, keeping reruns byte-identical."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for cell in self.cells:
            if not cell.ok:
                continue
            act = cell.activation
            for k, fr in enumerate(cell.folds):
                vals = fold_metric_values(fr)
                w.writerow([
                    cell.architecture, act.kind, "" if act.alpha is None else repr(act.alpha), k,
                    fr.tp, fr.tn, fr.fp, fr.fn,
                    *(_fmt(vals[c]) for c in METRIC_COLUMNS),
                    fr.selected_epoch,
                    repr(round(fr.seconds, 3)) if include_timing else "",
                ])
        return buf.getvalue()

    def to_markdown(self) -> str:
        return render_markdown(self.aggregate(), self.failures)


def _fmt(v) -> str:
    return "n/a" if v is None else repr(float(v))


def _parse_float(s: str):
    return None if s in ("", "n/a") else float(s)


def report_from_csv(text: str) -> BenchmarkReport:
    """Rebuild a report (fold confusion counts included) from :meth:`BenchmarkReport.to_csv` output."""
    cells: dict = {}
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CSV is missing columns: {sorted(missing)}")
    for row in reader:
        alpha = _parse_float(row["alpha"])
        spec = ActivationSpec(row["activation"], alpha)
        key = (row["architecture"], spec)
        cell = cells.setdefault(key, CellResult(row["architecture"], spec))
        cell.folds.append(FoldResult(
            int(row["tp"]), int(row["tn"]), int(row["fp"]), int(row["fn"]),
            train_acc=float(row["train_acc"]),
            selected_epoch=int(row["selected_epoch"]),
            seconds=_parse_float(row["seconds"]) or 0.0,
        ))
    return BenchmarkReport(list(cells.values()))


def render_markdown(rows: list[dict], failures=()) -> str:
    """Tables in the report layout: one per architecture, plus one MAF alpha table."""
    out = []
    archs = list(dict.fromkeys(r["architecture"] for r in rows))
    header = "| AF | " + " | ".join(METRIC_HEADERS) + " |"
    rule = "|" + "---|" * (len(METRIC_HEADERS) + 1)
    for arch in archs:
        named = [r for r in rows if r["architecture"] == arch and r["activation"].kind != "maf"]
        if not named:
            continue
        out.append(f"**{DISPLAY_NAMES.get(arch, arch)} performance metrics (mean ± std) for different activation functions**")
        out.append("")
        out.append(header)
        out.append(rule)
        for r in named:
            out.append(f"| {r['activation'].display_name} | " + " | ".join(str(r[c]) for c in METRIC_COLUMNS) + " |")
        out.append("")
    maf = [r for r in rows if r["activation"].kind == "maf"]
    if maf:
        out.append("**Performance metrics (mean ± std) for different alpha values (all values in %)**")
        out.append("")
        out.append("| Alpha | " + " | ".join(METRIC_HEADERS) + " |")
        out.append(rule)
        for arch in dict.fromkeys(r["architecture"] for r in maf):
            out.append(f"| **{DISPLAY_NAMES.get(arch, arch)}** |" + " |" * len(METRIC_HEADERS))
            for r in (r for r in maf if r["architecture"] == arch):
                out.append(f"| {r['activation'].alpha:g} | " + " | ".join(str(r[c]) for c in METRIC_COLUMNS) + " |")
        out.append("")
    if failures:
        out.append("**Failed cells**")
        out.append("")
        for c in failures:
            out.append(f"- {DISPLAY_NAMES.get(c.architecture, c.architecture)} / {c.activation.display_name}: {c.error}")
        out.append("")
    return "\n".join(out)


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def fold_seeds(seed: int, architecture: str, activation: ActivationSpec, fold: int):
    """Independent (init seed, shuffle rng, dropout rng) for one cell-fold."""
    ss = np.random.SeedSequence([seed, _name_key(architecture), _name_key(activation.name), fold])
    init, shuffle, drop = ss.spawn(3)
    return int(init.generate_state(1)[0]), np.random.default_rng(shuffle), np.random.default_rng(drop)


def prepare_fold(dataset: TrialSet, fold) -> FoldData:
    return FoldData(
        standardize(dataset.subset(fold.train)),
        standardize(dataset.subset(fold.val)),
        standardize(dataset.subset(fold.test)),
    )


def _run_task(args):
    arch, act, k, fold_data, cfg, net_overrides = args
    init_seed, shuffle_rng, dropout_rng = fold_seeds(cfg.seed, arch, act, k)
    _, c, t = fold_data.train.data.shape
    net_cfg = NetworkConfig(architecture=arch, channels=c, timepoints=t, activation=act,
                            seed=init_seed, dtype=cfg.dtype, **(net_overrides or {}))
    try:
        net = build(net_cfg)
        _, result = train_protocol(net, fold_data, cfg, shuffle_rng, dropout_rng)
    except Exception as exc:  # recorded per cell; the grid keeps going
        return arch, act, k, None, f"fold {k}: {type(exc).__name__}: {exc}"
    return arch, act, k, result, None


def resolve_activations(activations, maf_sweep: bool = False) -> list[ActivationSpec]:
    specs = [a if isinstance(a, ActivationSpec) else parse_activation(a) for a in activations]
    if maf_sweep:
        for alpha in MAF_SWEEP:
            s = ActivationSpec("maf", alpha)
            if s not in specs:
                specs.append(s)
    return specs


def run_benchmark(
    architectures,
    activations,
    dataset: TrialSet,
    cfg: TrainConfig,
    *,
    maf_sweep: bool = False,
    jobs: int = 1,
    net_overrides: dict | None = None,
) -> BenchmarkReport:
    """Run every (architecture, activation) cell through all folds.

    Folds are shared by every cell.  Each cell-fold draws its seeds from
    ``(seed, architecture, activation, fold)``, so results do not depend on
    ``jobs`` or scheduling order.
    """
    archs = list(architectures)
    acts = resolve_activations(activations, maf_sweep)
    if not archs or not acts:
        raise ValueError("architecture and activation grids must be non-empty")
    for a in archs:
        if a not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {a!r}")

    folds = make_folds(dataset.labels, cfg.folds, cfg.seed, cfg.val_share)
    prepared = [prepare_fold(dataset, f) for f in folds]
    tasks = [(arch, act, k, prepared[k], cfg, net_overrides) for arch in archs for act in acts for k in range(len(folds))]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = []
        for task in tasks:
            outcomes.append(_run_task(task))
            arch, act, k, res, err = outcomes[-1]
            log.info("%s / %s fold %d: %s", arch, act.name, k, err or f"test acc {float(res.metrics.accuracy):.1f}%")

    cells = {(arch, act): CellResult(arch, act) for arch in archs for act in acts}
    for arch, act, k, res, err in outcomes:
        cell = cells[(arch, act)]
        if err is not None:
            cell.error = cell.error or err
            continue
        cell.folds.append((k, res))
    for cell in cells.values():
        cell.folds = [] if cell.error else [r for _, r in sorted(cell.folds, key=lambda kr: kr[0])]
    return BenchmarkReport(list(cells.values()))
