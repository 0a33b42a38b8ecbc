"""Command-line front end: ``actfn {run,gen-data,check,gradcheck,report}``.

Exit codes: 0 success, 1 usage/config error, 2 verification failure,
3 benchmark finished with failed cells.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .activations import NAMED_KINDS, ActivationProperties, ActivationSpec, check_properties, expected_properties, parse_activation
from .architectures import ARCHITECTURES, NetworkConfig
from .benchmark import report_from_csv, run_benchmark
from .data import PRESETS, load_fnirset, save_fnirset, synth_preset
from .errors import ConfigError
from .gradcheck import run_gradcheck
from .training import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("actfn")

_CONFIG_KEYS = {"dataset", "architectures", "activations", "maf_sweep", "train", "network", "output_dir", "seed"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_NETWORK_KEYS = {"dropout", "temporal_kernel", "branch_filters", "deep_filters", "pool", "batch_norm"}


def load_config(path) -> dict:
    """Parse and validate an experiment config; raises ConfigError with a field or line diagnostic."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")

    archs = cfg.get("architectures")
    if not isinstance(archs, list) or not archs:
        raise ConfigError(f"{path}: field 'architectures' must be a non-empty list")
    for a in archs:
        if a not in ARCHITECTURES:
            raise ConfigError(f"{path}: field 'architectures': unknown name {a!r}")
    acts = cfg.get("activations")
    if not isinstance(acts, list) or not acts:
        raise ConfigError(f"{path}: field 'activations' must be a non-empty list")
    for a in acts:
        try:
            parse_activation(str(a))
        except ValueError as exc:
            raise ConfigError(f"{path}: field 'activations': {exc}") from None

    ds = cfg.get("dataset", {"preset": "small"})
    if not isinstance(ds, dict) or (("preset" in ds) == ("path" in ds)):
        raise ConfigError(f"{path}: field 'dataset' needs exactly one of 'preset' or 'path'")
    if "preset" in ds and ds["preset"] not in PRESETS:
        raise ConfigError(f"{path}: field 'dataset.preset': unknown preset {ds['preset']!r}")

    train = cfg.get("train", {})
    bad = set(train) - _TRAIN_KEYS
    if bad:
        raise ConfigError(f"{path}: field 'train': unknown key(s) {sorted(bad)}")
    net = cfg.get("network", {})
    bad = set(net) - _NETWORK_KEYS
    if bad:
        raise ConfigError(f"{path}: field 'network': unknown key(s) {sorted(bad)}")
    try:
        train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: field 'train': {exc}") from None
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    train = dict(cfg.get("train", {}))
    if "seed" in cfg:
        train["seed"] = int(cfg["seed"])
    return TrainConfig(**train)


def load_dataset(cfg: dict, base: Path):
    ds = cfg.get("dataset", {"preset": "small"})
    if "path" in ds:
        p = Path(ds["path"])
        return load_fnirset(p if p.is_absolute() else base / p)
    return synth_preset(
        ds["preset"],
        seed=int(ds.get("seed", cfg.get("seed", 0))),
        noise_sigma=float(ds.get("noise", 0.5)),
        class_effect=float(ds.get("effect", 0.8)),
    )


def resolve_jobs(flag: int | None) -> int:
    env = os.environ.get("ACTFN_JOBS")
    if env:
        return max(1, int(env))
    if flag:
        return max(1, flag)
    return os.cpu_count() or 1


def _manifest(cfg: dict, raw: bytes, train: TrainConfig) -> dict:
    import scipy

    return {
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "config": cfg,
        "seed": train.seed,
        "train": asdict(train),
        "versions": {
            "actfn": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    config_path = Path(args.config)
    base = config_path.resolve().parent
    train = train_config(cfg)
    out = Path(args.out or cfg.get("output_dir", "results"))
    out = out if out.is_absolute() else base / out
    dataset = load_dataset(cfg, base)
    jobs = resolve_jobs(args.jobs)
    log.info("running %d x %d grid on %s trials with %d job(s)", len(cfg["architectures"]),
             len(cfg["activations"]), dataset.shape, jobs)
    report = run_benchmark(
        cfg["architectures"], cfg["activations"], dataset, train,
        maf_sweep=bool(cfg.get("maf_sweep", False)), jobs=jobs, net_overrides=cfg.get("network") or None,
    )
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.to_csv(include_timing=args.timing_in_csv))
    (out / "summary.md").write_text(report.to_markdown())
    timings = ["architecture,activation,fold,seconds"] + [
        f"{c.architecture},{c.activation.name},{k},{f.seconds:.3f}" for c in report.cells for k, f in enumerate(c.folds)
    ]
    (out / "timings.csv").write_text("\n".join(timings) + "\n")
    (out / "manifest.json").write_text(json.dumps(_manifest(cfg, config_path.read_bytes(), train), indent=2) + "\n")
    if report.failures:
        (out / "failures.json").write_text(json.dumps(
            [{"architecture": c.architecture, "activation": c.activation.name, "error": c.error} for c in report.failures],
            indent=2) + "\n")
        for c in report.failures:
            print(f"FAILED {c.architecture} / {c.activation.name}: {c.error}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    trials = synth_preset(args.preset, seed=args.seed, noise_sigma=args.noise, class_effect=args.effect)
    try:
        out = save_fnirset(trials, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    n, c, t = trials.shape
    print(f"wrote {out} ({n}, {c}, {t})")
    return EXIT_OK


def _fmt_props(p: ActivationProperties | None) -> str:
    if p is None:
        return "-"
    return " ".join("Yes" if v else "No " for v in p.as_tuple())


def cmd_check(args) -> int:
    if args.name == "all":
        specs = [ActivationSpec(k) for k in NAMED_KINDS]
    else:
        specs = [parse_activation(args.name)]
    for a in args.maf or ():
        specs.append(ActivationSpec("maf", a))
    print(f"{'activation':12s} {'checked (' + ' '.join(f[:4] for f in ActivationProperties.FIELDS) + ')':36s} expected")
    mismatch = False
    for spec in specs:
        got = check_properties(spec)
        want = expected_properties(spec)
        flag = ""
        if want is not None and got != want:
            mismatch = True
            diff = [f for f in ActivationProperties.FIELDS if getattr(got, f) != getattr(want, f)]
            flag = "  MISMATCH: " + ", ".join(diff)
        print(f"{spec.name:12s} {_fmt_props(got):36s} {_fmt_props(want)}{flag}")
    return EXIT_VERIFY if mismatch else EXIT_OK


def cmd_gradcheck(args) -> int:
    try:
        results = run_gradcheck(args.op, seed=args.seed)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.name:28s} worst rel err {r.worst_error:.3e} (tol {r.tolerance:g})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_report(args) -> int:
    try:
        text = Path(args.csv).read_text()
        report = report_from_csv(text)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {args.csv}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    md = report.to_markdown()
    if args.out:
        Path(args.out).write_text(md)
    else:
        print(md)
    return EXIT_OK


def _alpha_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actfn", description="Activation-function benchmark for fNIRS CNNs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a benchmark from a JSON config")
    p.add_argument("config", help="path to the JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (ACTFN_JOBS overrides)")
    p.add_argument("--timing-in-csv", action="store_true", help="fill the seconds column (breaks byte-identical reruns)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-data", help="write a synthetic FNIRSET dataset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="small")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5, help="noise sigma")
    p.add_argument("--effect", type=float, default=0.8, help="deviant amplitude contrast")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("check", help="empirically check activation properties against the reference table")
    p.add_argument("name", help="registry name (relu, maf:-1, ...) or 'all'")
    p.add_argument("--maf", type=_alpha_list, help="comma-separated MAF alphas to add, e.g. -2,-1,0,2")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--op", action="append", help="restrict to a check name or prefix (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="re-aggregate a results CSV into markdown tables")
    p.add_argument("csv")
    p.add_argument("--out", help="write markdown here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
