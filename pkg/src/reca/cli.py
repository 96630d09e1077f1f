"""Command-line entry point: ``reca <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 configuration or usage
error, 3 data or I/O error.  Every subcommand that takes ``--out`` writes
``manifest.json`` there before any result file.  CSV numbers are written in
shortest round-trip form, so reruns with the same inputs give identical bytes;
timestamps and wall-clock times live only in the manifest.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import reca
from reca import activations as act
from reca import data as D
from reca.experiments import curves, gradcheck, training
from reca.experiments.config import ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3
COMPARE_COLUMNS = ("function", "metric", "mean", "median", "min", "max")
RUN_COLUMNS = ("seed", "activation", "params_total", "params_activation", "initial_loss",
               "final_train_loss", "final_test_top1", "final_test_top5",
               "shift_alpha", "shift_beta", "shift_delta")


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------------------

def fmt(v) -> str:
    """Shortest round-trip text for numbers; plain str otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def build_id() -> str:
    """Hash of the package sources, standing in for a commit id."""
    h = hashlib.sha256()
    root = Path(reca.__file__).parent
    for path in sorted(root.rglob("*.py")):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def write_manifest(out: Path, args, extra: dict) -> dict:
    manifest = {
        "subcommand": args.command,
        "argv": list(args.argv),
        "version": reca.__version__,
        "build_id": build_id(),
        "numpy": np.__version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    out = _out_dir(args) if args.out else None
    if out:
        write_manifest(out, args, {"seed": args.seed, "trials": args.trials, "precision": args.precision})
    report = gradcheck.run_gradcheck(args.seed, args.trials, erratum=args.erratum, precision=args.precision)
    print(report.format_table())
    if out:
        write_csv(out / "gradcheck.csv", ("component", "max_rel_err", "tol", "passed"),
                  [(c.name, c.max_rel_err, c.tol, c.passed) for c in report.components])
        if report.erratum:
            e = report.erratum
            write_csv(out / "erratum.csv", ("form", "value", "finite_difference", "rel_err"),
                      [("alpha*f", e["literal"], e["numeric"], e["literal_rel_err"]),
                       ("alpha*g", e["corrected"], e["numeric"], e["corrected_rel_err"])])
    if not report.passed:
        for c in report.failures():
            print(f"gradcheck: {c.name} max rel err {c.max_rel_err:.3e} > {c.tol:g} "
                  f"at {c.worst_case} (analytic {c.analytic!r}, numeric {c.numeric!r})", file=sys.stderr)
        return EXIT_FAIL
    print("gradcheck: all components within tolerance")
    return EXIT_OK


def _pairs_arg(text):
    try:
        pairs = []
        for item in text.split(";"):
            b, d = item.split(",")
            pairs.append((float(b), float(d)))
        return pairs
    except ValueError:
        raise UsageError(f"--pairs: expected 'beta,delta;beta,delta;...', got {text!r}") from None


def cmd_sweep(args) -> int:
    if (args.preset is None) == (args.pairs is None):
        raise UsageError("sweep: give exactly one of --preset or --pairs")
    pairs = _pairs_arg(args.pairs) if args.pairs else None
    try:
        table = curves.sweep_curves(pairs, args.alpha, args.x_min, args.x_max, args.step, preset=args.preset)
    except (ValueError, act.DomainError) as e:
        raise UsageError(f"sweep: {e}") from None
    out = _out_dir(args)
    write_manifest(out, args, {"preset": args.preset, "pairs": args.pairs, "alpha": args.alpha,
                               "x_range": [args.x_min, args.x_max], "step": args.step})
    write_csv(out / "sweep.csv", curves.SWEEP_COLUMNS, table.tolist())
    print(f"sweep: {len(table)} rows -> {out / 'sweep.csv'}")
    return EXIT_OK


def _landscape_kind(name, reca_params):
    if name == "reca":
        return act.ReCA(act.RecaParams(*reca_params))
    if name not in ("linear", "relu"):
        raise UsageError(f"landscape: activation must be linear, relu or reca, got {name!r}")
    return act.kind_from_name(name)


def cmd_landscape(args) -> int:
    try:
        params = tuple(float(v) for v in args.reca_params.split(","))
        if len(params) != 3:
            raise ValueError
    except ValueError:
        raise UsageError(f"--reca-params: expected 'alpha,beta,delta', got {args.reca_params!r}") from None
    try:
        kinds = [_landscape_kind(n, params) for n in args.activation]
    except act.DomainError as e:
        raise UsageError(f"--reca-params: {e}") from None
    out = _out_dir(args)
    write_manifest(out, args, {"seed": args.seed, "activations": [curves.kind_label(k) for k in kinds]})
    rows = []
    for kind in kinds:
        grid = curves.landscape(kind, args.seed)
        label = curves.kind_label(kind)
        print(f"landscape: {label} max second difference {curves.max_second_difference(grid):.3e}")
        rows += [(x1, x2, z, label, args.seed) for x1, x2, z in grid.tolist()]
    write_csv(out / "landscape.csv", curves.LANDSCAPE_COLUMNS, rows)
    return EXIT_OK


def _config(args):
    if args.config is not None and not Path(args.config).is_file():
        raise ConfigError(f"config file not found: {args.config}")
    return load_config(args.config, args.set)


def cmd_train(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    manifest = write_manifest(out, args, {"config": config.to_dict(), "seeds": list(config.seeds),
                                          "precision": config.precision})
    reports = training.train_experiment(config, training.load_dataset(config))
    run_rows = []
    for r in reports:
        write_csv(out / f"epochs_seed{r.seed}.csv", training.EPOCH_COLUMNS, r.rows())
        s = r.activation_shift
        run_rows.append((r.seed, r.activation, r.params_total, r.params_activation, r.initial_loss,
                         r.final.train_loss, r.final.test_top1, r.final.test_top5,
                         s.get("alpha", ""), s.get("beta", ""), s.get("delta", "")))
        print(f"train: seed {r.seed} {r.activation} final test top1 {r.final.test_top1:.4f} "
              f"({r.wall_seconds:.1f} s)")
    write_csv(out / "runs.csv", RUN_COLUMNS, run_rows)
    manifest["wall_seconds"] = {str(r.seed): r.wall_seconds for r in reports}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def read_run_dir(path: Path):
    """(function label, [RunReport-like dicts]) from a ``train`` output directory."""
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{path}: no manifest.json (not a train output directory)")
    manifest = json.loads(manifest_path.read_text())
    config = manifest.get("config") or {}
    label = config.get("activation", path.name)
    runs = []
    for seed in manifest.get("seeds", []):
        csv_path = path / f"epochs_seed{seed}.csv"
        with open(csv_path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["split"] == "test"]
        if not rows:
            raise D.DataError(f"{csv_path}: no test rows")
        runs.append({"top1": float(rows[-1]["top1"]), "top5": float(rows[-1]["top5"])})
    return label, runs


def cmd_compare(args) -> int:
    if bool(args.runs) == bool(args.published):
        raise UsageError("compare: give run directories or --published NAME, not both or neither")
    if args.published:
        if args.published not in training.PUBLISHED_RUNS:
            raise UsageError(f"--published: unknown {args.published!r}; "
                             f"choose from {sorted(training.PUBLISHED_RUNS)}")
        reports = training.PUBLISHED_RUNS[args.published]
    else:
        reports = {}
        for p in args.runs:
            label, runs = read_run_dir(Path(p))
            if label in reports:
                label = Path(p).name
            reports[label] = runs
    try:
        comparison = training.compare_report(reports)
    except ValueError as e:
        raise UsageError(f"compare: {e}") from None
    out = _out_dir(args)
    write_manifest(out, args, {"published": args.published, "runs": [str(p) for p in args.runs]})
    rows = [(r.function, r.metric, r.mean, r.median, r.min, r.max) for r in comparison.rows]
    write_csv(out / "compare.csv", COMPARE_COLUMNS, rows)
    for r in comparison.rows:
        print(f"{r.function:<8} {r.metric:<5} mean {r.mean:.4f} median {r.median:.4f} "
              f"min {r.min:.4f} max {r.max:.4f}")
    return EXIT_OK


def cmd_resources(args) -> int:
    config = _config(args)
    out = _out_dir(args) if args.out else None
    if out:
        write_manifest(out, args, {"config": config.to_dict(), "steps": args.steps})
    rep = training.resource_report(config, steps=args.steps)
    print(f"params: relu twin {rep.params_relu}, {config.activation} {rep.params_variant}, "
          f"delta {rep.param_delta} over {rep.activation_channels} activation channels")
    print(f"time for {args.steps} steps: relu {rep.seconds_relu:.3f} s, {config.activation} "
          f"{rep.seconds_variant:.3f} s, ratio {rep.time_ratio:.3f}")
    if out:
        # timings are not reproducible, so they stay out of the CSV
        write_csv(out / "resources.csv", ("model", "activation", "params_total", "params_activation",
                                          "activation_channels", "param_delta"),
                  [(config.model, "relu", rep.params_relu, 0, rep.activation_channels, 0),
                   (config.model, config.activation, rep.params_variant, rep.params_activation,
                    rep.activation_channels, rep.param_delta)])
        manifest = json.loads((out / "manifest.json").read_text())
        manifest.update(seconds_relu=rep.seconds_relu, seconds_variant=rep.seconds_variant,
                        time_ratio=rep.time_ratio)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_inspect_data(args) -> int:
    config = load_config(None, [f"dataset={args.dataset}", "model=mini-cnn" if args.dataset != "spirals"
                                else "model=mlp", "activation=relu", "epochs=1"]
                         + ([f"data_dir={args.data_dir}"] if args.data_dir else []))
    ds = training.load_dataset(config)
    counts = np.bincount(ds.labels, minlength=ds.class_count)
    print(f"{ds.name}: {len(ds)} samples, shape {ds.images.shape[1:]}, dtype {ds.images.dtype}, "
          f"{ds.class_count} classes")
    print(f"class counts: min {counts.min()} max {counts.max()}")
    if ds.images.ndim == 4:
        mean, std = D.channel_stats(ds)
        print("channel mean " + " ".join(f"{v:.4f}" for v in mean))
        print("channel std  " + " ".join(f"{v:.4f}" for v in std))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reca", description="ReCA activation verification and benchmark harness")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    p.add_argument("--version", action="version", version=f"reca {reca.__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    g.add_argument("--trials", type=int, default=1000)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--erratum", action="store_true", help="also compare both first-term forms at x=1, p=(0.5,1,1)")
    g.add_argument("--precision", choices=("float32", "float64"), default="float32",
                   help="precision of the composed-layer checks")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("sweep", help="ReCA and its derivatives over an x grid")
    s.add_argument("--preset", choices=curves.SWEEP_PRESETS)
    s.add_argument("--pairs", help="explicit 'beta,delta;beta,delta;...'")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--x-min", type=float, default=-3.0)
    s.add_argument("--x-max", type=float, default=3.0)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    l = sub.add_parser("landscape", help="output of a fixed random MLP over [-1,1]^2")
    l.add_argument("--activation", nargs="+", default=["linear", "relu", "reca"])
    l.add_argument("--reca-params", default="0.5,1,1")
    l.add_argument("--seed", type=int, default=0)
    l.add_argument("--out", required=True)
    l.set_defaults(func=cmd_landscape)

    for name, func, helptext in (("train", cmd_train, "seeded training runs"),
                                 ("resources", cmd_resources, "parameter and time overhead vs the ReLU twin")):
        t = sub.add_parser(name, help=helptext)
        t.add_argument("--config")
        t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        t.add_argument("--out", required=(name == "train"))
        if name == "resources":
            t.add_argument("--steps", type=int, default=10)
        t.set_defaults(func=func)

    c = sub.add_parser("compare", help="mean/median/min/max of final accuracies")
    c.add_argument("runs", nargs="*", help="train output directories")
    c.add_argument("--published", help="published per-run table: " + ", ".join(training.PUBLISHED_RUNS))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("inspect-data", help="load a dataset and print its summary")
    d.add_argument("--dataset", required=True, choices=("cifar10", "cifar100", "spirals", "synthetic-cifar"))
    d.add_argument("--data-dir")
    d.set_defaults(func=cmd_inspect_data)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (D.DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except training.TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:  # shape and domain errors surface as bad configuration
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
