"""Command-line front end.

Exit codes: 0 success (or conditions satisfied), 1 checked condition false,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import fields

from . import __version__
from .analysis import counterexample_grid, write_counterexample_csv
from .batching import BatchSet, batch_binding, check_batches, make_partition, reshuffle_union
from .geometry import (LabelSet, imbalanced_counts, read_embeddings_csv, read_labels_csv,
                       write_embeddings_csv, write_labels_csv)
from .loss import LossConfig, LossReport, full_lower_bound, lower_bound
from .metrics import geometry_report
from .solver import NumericalError, SolverConfig, multi_start, restart_summary

EXIT_OK, EXIT_FALSE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "labels": {"k": 3, "dist": "step", "ratio": 10, "n_min": 2},
    "d": 5,
    "loss": {"tau": 0.1, "base_tau": None, "per_sample": False},
    "solver": {
        "nonneg": True,
        "step_size": None,
        "decay": 0.5,
        "max_iters": 50000,
        "rel_tol": 1e-12,
        "seed": 0,
        "init": "random_nonneg",
        "n_starts": 1,
    },
    "batching": {"scheme": "full", "batch_size": None, "binding": False, "seed": 0,
                 "epochs": 1},
    "outputs": {"dir": "run", "metrics_every": 50},
}


class InputError(Exception):
    pass


def _fail(msg):
    raise InputError(msg)


def write_atomic(path, write_fn, mode="w"):
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out=None):
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, lambda fh: fh.write(text))


def _parse_ints(text, what):
    try:
        vals = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        _fail(f"malformed {what}: {text!r}")
    if not vals:
        _fail(f"empty {what}")
    return vals


def _read_labels(path):
    try:
        with open(path, newline="") as fh:
            return read_labels_csv(fh)
    except (OSError, ValueError) as exc:
        _fail(f"cannot read labels from {path}: {exc}")


def _read_batches(path):
    try:
        with open(path) as fh:
            return BatchSet.from_json(fh.read())
    except (OSError, ValueError) as exc:
        _fail(f"cannot read batches from {path}: {exc}")


# -- config ---------------------------------------------------------------


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"cannot parse config {path}: {exc}")
    if not isinstance(raw, dict):
        _fail("config must be a JSON object")
    if isinstance(raw.get("labels"), list):
        labels = raw["labels"]
        cfg = _merge({k: v for k, v in DEFAULT_CONFIG.items() if k != "labels"},
                     {k: v for k, v in raw.items() if k != "labels"})
        cfg["labels"] = labels
        return cfg
    return _merge(DEFAULT_CONFIG, raw)


def labels_from_config(section):
    try:
        if isinstance(section, list):
            return LabelSet(section)
        counts = imbalanced_counts(int(section["k"]), section.get("dist", "balanced"),
                                   float(section.get("ratio", 1)), int(section.get("n_min", 2)))
        return LabelSet.from_counts(counts)
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"bad labels entry: {exc}")


def batches_from_config(section, y):
    scheme = section.get("scheme", "full")
    if scheme == "full":
        batches = None
    else:
        size = section.get("batch_size")
        if not isinstance(size, int) or size < 1:
            _fail("batching.batch_size must be a positive integer")
        seed = int(section.get("seed", 0))
        try:
            if scheme == "fixed":
                batches = make_partition(y.n, size, "fixed", 0, seed)
            elif scheme == "reshuffle":
                batches = reshuffle_union(y.n, size, int(section.get("epochs", 1)), seed)
            else:
                _fail(f"unknown batching scheme {scheme!r}")
        except ValueError as exc:
            _fail(str(exc))
    if section.get("binding"):
        batches = batch_binding(batches or BatchSet.full(y.n), y)
    return batches


def solver_config(section, metrics_every):
    names = {f.name for f in fields(SolverConfig)}
    unknown = set(section) - names - {"n_starts"}
    if unknown:
        _fail(f"unknown solver options {sorted(unknown)}")
    try:
        return SolverConfig(metrics_every=int(metrics_every),
                            **{k: v for k, v in section.items() if k in names})
    except (TypeError, ValueError) as exc:
        _fail(f"bad solver config: {exc}")


def loss_config(section):
    try:
        return LossConfig(float(section.get("tau", 0.1)),
                          None if section.get("base_tau") is None else float(section["base_tau"]),
                          bool(section.get("per_sample", False)))
    except (TypeError, ValueError) as exc:
        _fail(f"bad loss config: {exc}")


# -- commands -------------------------------------------------------------


def cmd_bound(args):
    counts = _parse_ints(args.counts, "counts")
    if any(c < 1 for c in counts):
        _fail("counts must be positive")
    try:
        cfg = LossConfig(args.tau, args.base_tau, args.per_sample)
    except ValueError as exc:
        _fail(str(exc))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = full_lower_bound(counts, cfg)
    _emit(LossReport.build(b, b, cfg).to_json() + "\n")
    return EXIT_OK


def cmd_optimize(args):
    conf = load_config(args.config)
    if args.seed is not None:
        conf["solver"]["seed"] = args.seed
        conf["batching"]["seed"] = args.seed
    outdir = args.out or conf["outputs"].get("dir", "run")
    y = labels_from_config(conf["labels"])
    try:
        d = int(conf["d"])
    except (TypeError, ValueError):
        _fail("d must be an integer")
    if d < 1:
        _fail("d must be >= 1")
    lcfg = loss_config(conf["loss"])
    scfg = solver_config(conf["solver"], conf["outputs"].get("metrics_every", 50))
    n_starts = int(conf["solver"].get("n_starts", 1))
    batches = batches_from_config(conf["batching"], y)
    if d < y.k:
        print(f"warning: d={d} < k={y.k}; the orthogonal frame does not fit", file=sys.stderr)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            runs = multi_start(y, d, batches, lcfg, scfg, n_starts, workers=args.workers)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.trajectory is not None:
            write_atomic(os.path.join(outdir, "trajectory.csv"), exc.trajectory.write_csv)
        return EXIT_NUMERIC

    best = min(runs, key=lambda r: r.loss)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bound = lower_bound(y, batches, lcfg)
    report = geometry_report(best.H, y, loss=best.loss, lower_bound=bound)
    summary = best.summary()
    summary.update({
        "n": y.n, "k": y.k, "d": d, "counts": y.counts.tolist(),
        "tau": lcfg.tau, "nonneg": scfg.nonneg,
        "n_batches": None if batches is None else len(batches),
        "restarts": restart_summary(runs),
        "geometry": json.loads(report.to_json()),
    })
    write_atomic(os.path.join(outdir, "trajectory.csv"), best.write_csv)
    write_atomic(os.path.join(outdir, "embeddings.csv"), lambda fh: write_embeddings_csv(best.H, fh))
    write_atomic(os.path.join(outdir, "summary.json"),
                 lambda fh: fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n"))
    print(json.dumps({"reason": best.reason, "achieved": summary["achieved"],
                      "loss": best.loss, "lower_bound": best.lower_bound}))
    return EXIT_OK


def cmd_check_batches(args):
    batches = _read_batches(args.batches)
    y = _read_labels(args.labels)
    try:
        rep = check_batches(batches, y)
    except ValueError as exc:
        _fail(str(exc))
    _emit(rep.to_json() + "\n")
    return EXIT_OK if rep.satisfied else EXIT_FALSE


def cmd_bind(args):
    batches = _read_batches(args.batches)
    y = _read_labels(args.labels)
    binding = _parse_ints(args.binding, "binding") if args.binding else None
    try:
        out = batch_binding(batches, y, binding=binding, seed=args.seed)
    except ValueError as exc:
        _fail(str(exc))
    _emit(out.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_counterexample(args):
    nmins = _parse_ints(args.nmin, "nmin")
    if args.step <= 0 or args.rmax < args.rmin:
        _fail("need step > 0 and rmax >= rmin")
    ratios = list(range(args.rmin, args.rmax + 1, args.step))
    try:
        rows = counterexample_grid(nmins, ratios)
    except ValueError as exc:
        _fail(str(exc))
    buf = io.StringIO()
    write_counterexample_csv(rows, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_metrics(args):
    try:
        with open(args.embeddings, newline="") as fh:
            H = read_embeddings_csv(fh)
    except (OSError, ValueError) as exc:
        _fail(f"cannot read embeddings from {args.embeddings}: {exc}")
    y = _read_labels(args.labels)
    if H.shape[1] != y.n:
        _fail(f"embeddings have {H.shape[1]} columns but there are {y.n} labels")
    rep = geometry_report(H, y)
    _emit(rep.to_json(indent=2) + "\n", args.out)
    if args.heatmap:
        write_atomic(args.heatmap, rep.write_heatmap_csv)
    return EXIT_OK


def cmd_gen_labels(args):
    try:
        y = LabelSet.from_counts(imbalanced_counts(args.k, args.dist, args.ratio, args.nmin))
    except ValueError as exc:
        _fail(str(exc))
    buf = io.StringIO()
    write_labels_csv(y, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_print_default_config(args):
    _emit(json.dumps(DEFAULT_CONFIG, indent=2) + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sclgeom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("bound", help="full-batch lower bound for given class sizes")
    s.add_argument("--counts", required=True, help="comma-separated class sizes")
    s.add_argument("--tau", type=float, default=0.1)
    s.add_argument("--base-tau", type=float, default=None)
    s.add_argument("--per-sample", action="store_true")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("optimize", help="run projected gradient descent from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides outputs.dir)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("check-batches", help="check the interaction-graph conditions")
    s.add_argument("batches")
    s.add_argument("labels")
    s.set_defaults(func=cmd_check_batches)

    s = sub.add_parser("bind", help="append one binding example per class to every batch")
    s.add_argument("batches")
    s.add_argument("labels")
    s.add_argument("--binding", help="comma-separated example indices, one per class")
    s.add_argument("--seed", type=int, default=None,
                   help="pick binding examples at random (default: lowest index per class)")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_bind)

    s = sub.add_parser("counterexample", help="ETF vs two-point losses over an (n_min, R) grid")
    s.add_argument("--nmin", default="2", help="comma-separated n_min values")
    s.add_argument("--rmin", type=int, default=10)
    s.add_argument("--rmax", type=int, default=100)
    s.add_argument("--step", type=int, default=10)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("metrics", help="geometry report for an embeddings CSV")
    s.add_argument("embeddings")
    s.add_argument("labels")
    s.add_argument("--heatmap", help="write the max-normalized class-mean Gram here")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser(
        "gen-labels", help="generate a label CSV",
        description="STEP: first ceil(k/2) classes get ratio*nmin examples, the rest nmin. "
                    "longtail: n_c = round(n_max * ratio^(-c/(k-1))), n_max = ratio*nmin.")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--dist", choices=["balanced", "step", "longtail"], default="balanced")
    s.add_argument("--ratio", type=float, default=1.0)
    s.add_argument("--nmin", type=int, default=2)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_gen_labels)

    s = sub.add_parser("print-default-config", help="print the default optimize config")
    s.set_defaults(func=cmd_print_default_config)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
