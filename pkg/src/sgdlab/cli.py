"""Command-line entry points.

Subcommands: sample, train-perceptron, train-mlp, sweep, fit, collapse,
evt, tmax, plot, boundary2d.  Relative output paths resolve against the
SGDLAB_OUTDIR environment variable when it is set.  Exit codes: 0 on
success, 2 on usage errors, 1 on runtime errors (with a diagnostic on
stderr).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from sgdlab.data import ChiDistribution, dataset_to_csv, sample_chi_dataset
from sgdlab.evt import maxima_to_csv, predicted_gamma, sample_max_statistic
from sgdlab.mlp import cross_entropy_train_early_stop, EarlyStopConfig, find_tmax, sgd_train
from sgdlab.perceptron import train_to_zero
from sgdlab.records import TrainConfig, read_jsonl
from sgdlab.scaling import best_collapse_exponent, fit_power_law, fit_two_var_scaling
from sgdlab.sweep import SweepSpec, load_result, persist, resume, run_sweep


def _outpath(p) -> str:
    p = str(p)
    base = os.environ.get("SGDLAB_OUTDIR")
    if base and not os.path.isabs(p):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, p)
    return p


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _dataset(args, P=None, seed=None):
    dist = ChiDistribution(chi=args.chi, d=args.d)
    return sample_chi_dataset(dist, P if P is not None else args.P,
                              seed if seed is not None else args.seed)


def _config(args) -> TrainConfig:
    if (args.temperature is None) == (args.eta is None):
        raise SystemExit("exactly one of --temperature / --eta is required")
    eta = args.eta if args.eta is not None else args.temperature * args.batch_size
    return TrainConfig(alpha=args.alpha, eta=eta, batch_size=args.batch_size,
                       seed=args.seed, max_steps=args.max_steps)


def _cmd_sample(args) -> int:
    ds = _dataset(args)
    out = _outpath(args.out)
    dataset_to_csv(ds, out)
    _print({"P": ds.P, "d": ds.d, "chi": args.chi, "out": out})
    return 0


def _train_common(args, record):
    if args.out:
        with open(_outpath(args.out), "a") as f:
            f.write(record.to_json_line() + "\n")
    _print(record.to_dict())
    return 0


def _cmd_train_perceptron(args) -> int:
    ds = _dataset(args)
    test_ds = _dataset(args, P=args.test_points, seed=args.seed + 1) if args.test_points else None
    record = train_to_zero(ds, _config(args), test_ds=test_ds)
    return _train_common(args, record)


def _cmd_train_mlp(args) -> int:
    ds = _dataset(args)
    test_ds = _dataset(args, P=args.test_points, seed=args.seed + 1) if args.test_points else None
    cfg = _config(args)
    if args.loss == "xent":
        es = EarlyStopConfig(checkpoint_every=max(1, ds.P // cfg.batch_size),
                             patience=args.patience, validation_fraction=args.validation_fraction)
        record = cross_entropy_train_early_stop(ds, cfg, es, depth=args.depth,
                                                width=args.width, test_ds=test_ds)
    else:
        record = sgd_train(ds, cfg, depth=args.depth, width=args.width, test_ds=test_ds)
    return _train_common(args, record)


def _parse_value(tok: str):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def load_sweep_config(path) -> SweepSpec:
    """Read a sweep definition from flat key-value text with a [grid] section."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"sweep config not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    if "sweep" not in parser or "grid" not in parser:
        raise ValueError(f"{path} must contain [sweep] and [grid] sections")
    sw = parser["sweep"]
    grid = {key: tuple(_parse_value(tok) for tok in value.replace(",", " ").split())
            for key, value in parser["grid"].items()}
    # configparser lowercases keys; the P axis is uppercase by convention
    if "p" in grid:
        grid["P"] = grid.pop("p")
    return SweepSpec(
        model_kind=sw.get("model_kind", "perceptron"),
        grid=grid,
        replicas=sw.getint("replicas", 1),
        base_seed=sw.getint("base_seed", 0),
        budget=sw.getint("budget", 50_000_000),
        loss_kind=sw.get("loss_kind", "hinge"),
        divergence_norm=sw.getfloat("divergence_norm", 1e8),
        test_points=sw.getint("test_points", 0),
    )


def _cmd_sweep(args) -> int:
    spec = load_sweep_config(args.config)
    out = _outpath(args.out)
    if args.resume:
        result = resume(spec, out, worker_count=args.workers)
    else:
        result = run_sweep(spec, worker_count=args.workers)
        persist(result, out)
    n_div = sum(r.diverged for r in result.records)
    _print({"runs": len(result.records), "diverged": n_div,
            "fingerprint": result.spec_fingerprint, "out": out})
    return 0


def _records_for_fit(path, y_field):
    records = [r for r in read_jsonl(path) if not r.diverged]
    return [r for r in records
            if getattr(r, y_field, None) is not None]


def _cmd_fit(args) -> int:
    records = _records_for_fit(_outpath(args.records), args.y)
    if args.x2:
        f1, f2 = fit_two_var_scaling(records, args.x, args.x2, args.y)
        _print({args.x: f1.__dict__, args.x2: f2.__dict__})
    else:
        xs = [getattr(r, args.x) for r in records]
        ys = [getattr(r, args.y) for r in records]
        _print({args.x: fit_power_law(xs, ys).__dict__})
    return 0


def _curves_from_records(records, group_field, x_field, y_field):
    groups: dict = {}
    for r in records:
        g, x, y = getattr(r, group_field), getattr(r, x_field), getattr(r, y_field)
        if g is None or x is None or y is None:
            continue
        groups.setdefault(g, []).append((float(x), float(y)))
    return sorted(groups.items())


def _cmd_collapse(args) -> int:
    records = _records_for_fit(_outpath(args.records), args.y)
    curves = _curves_from_records(records, args.group, args.x, args.y)
    a_grid = np.arange(args.a_min, args.a_max + args.a_step / 2, args.a_step)
    res = best_collapse_exponent(curves, a_grid)
    _print({"best_exponent": res.best_exponent, "score_at_best": res.score_at_best,
            "bracket": list(res.bracket)})
    return 0


def _cmd_evt(args) -> int:
    Ps = []
    P = args.pmin
    while P <= args.pmax:
        Ps.append(P)
        P *= 2
    if len(Ps) < 3:
        raise ValueError("need at least 3 sample sizes between pmin and pmax")
    stats = [sample_max_statistic(P, args.chi, args.trials, args.seed) for P in Ps]
    slope_typical = fit_power_law(Ps, [s.median_MP for s in stats]).exponent
    slope_mean = fit_power_law(Ps, [s.mean_MP for s in stats]).exponent
    if args.out:
        maxima_to_csv(stats, _outpath(args.out))
    _print({"chi": args.chi, "slope": slope_typical, "slope_mean": slope_mean,
            "predicted_gamma": predicted_gamma(args.chi), "P_values": Ps})
    return 0


def _cmd_tmax(args) -> int:
    ds = _dataset(args)
    grid = np.geomspace(args.t_lo, args.t_hi, args.grid_points)
    results = []
    for alpha in args.alpha:
        tm = find_tmax(ds, grid, alpha=alpha, depth=args.depth, width=args.width,
                       batch_size=args.batch_size, max_steps=args.max_steps,
                       seed=args.seed)
        results.append({"alpha": alpha, "t_max": tm})
        _print(results[-1])
    if len(results) >= 3:
        fit = fit_power_law([r["alpha"] for r in results], [r["t_max"] for r in results])
        _print({"t_max_slope_vs_alpha": fit.exponent, "stderr": fit.stderr})
    return 0


def _cmd_plot(args) -> int:
    from sgdlab.plots import PlotSpec, emit_loglog_svg

    records = read_jsonl(_outpath(args.records))
    if args.converged_only:
        records = [r for r in records if not r.diverged]
    spec = PlotSpec(x_field=args.x, y_field=args.y, group_by=args.group,
                    output_path=_outpath(args.out),
                    x_rescale_exponent=args.x_rescale,
                    y_rescale_exponent=args.y_rescale,
                    log_x=not args.linear_x, log_y=not args.linear_y)
    path = emit_loglog_svg(records, spec)
    _print({"out": path, "csv": os.path.splitext(path)[0] + ".csv"})
    return 0


def _cmd_boundary2d(args) -> int:
    from sgdlab.plots import render_boundary_2d

    ds = _dataset(args)
    cfg = _config(args)
    if args.model == "perceptron":
        record, state = train_to_zero(ds, cfg, return_state=True)
    else:
        record, state = sgd_train(ds, cfg, depth=args.depth, width=args.width,
                                  return_state=True)
    trace = render_boundary_2d(state, ds, grid_resolution=args.resolution,
                               output_path=_outpath(args.out),
                               show_gradient=args.gradient_arrow)
    _print({"out": trace.path, "segments": len(trace.segments),
            "diverged": record.diverged, "t_star": record.t_star})
    return 0


def _add_data_flags(p, d_default=128):
    p.add_argument("--chi", type=float, default=0.0)
    p.add_argument("--d", type=int, default=d_default)
    p.add_argument("--P", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)


def _add_train_flags(p):
    p.add_argument("--alpha", type=float, default=32768.0)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--max-steps", type=int, default=50_000_000)
    p.add_argument("--test-points", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgdlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a synthetic dataset to CSV")
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("train-perceptron", help="one hinge-to-zero perceptron run")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default=None, help="append the record to this JSONL file")
    p.set_defaults(func=_cmd_train_perceptron)

    p = sub.add_parser("train-mlp", help="one fully-connected training run")
    _add_data_flags(p, d_default=16)
    _add_train_flags(p)
    p.add_argument("--out", default=None, help="append the record to this JSONL file")
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--loss", choices=["hinge", "xent"], default="hinge")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--validation-fraction", type=float, default=0.15)
    p.set_defaults(func=_cmd_train_mlp)

    p = sub.add_parser("sweep", help="run a declarative experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="power-law fits over a JSONL record file")
    p.add_argument("--records", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--x2", default=None)
    p.add_argument("--y", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("collapse", help="curve-collapse exponent extraction")
    p.add_argument("--records", required=True)
    p.add_argument("--x", default="temperature")
    p.add_argument("--y", required=True)
    p.add_argument("--group", default="P")
    p.add_argument("--a-min", type=float, default=-0.2)
    p.add_argument("--a-max", type=float, default=1.4)
    p.add_argument("--a-step", type=float, default=0.05)
    p.set_defaults(func=_cmd_collapse)

    p = sub.add_parser("evt", help="Monte Carlo maximum statistic vs P")
    p.add_argument("--chi", type=float, required=True)
    p.add_argument("--pmin", type=int, default=128)
    p.add_argument("--pmax", type=int, default=16384)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV of (P, trial, max_value)")
    p.set_defaults(func=_cmd_evt)

    p = sub.add_parser("tmax", help="largest converging temperature per alpha")
    _add_data_flags(p, d_default=16)
    p.add_argument("--alpha", type=float, nargs="+", required=True)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--t-lo", type=float, default=1e-4)
    p.add_argument("--t-hi", type=float, default=30.0)
    p.add_argument("--grid-points", type=int, default=14)
    p.add_argument("--max-steps", type=int, default=200_000)
    p.set_defaults(func=_cmd_tmax)

    p = sub.add_parser("plot", help="log-log figure with CSV sidecar")
    p.add_argument("--records", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--group", default="P")
    p.add_argument("--x-rescale", type=float, default=0.0)
    p.add_argument("--y-rescale", type=float, default=0.0)
    p.add_argument("--linear-x", action="store_true")
    p.add_argument("--linear-y", action="store_true")
    p.add_argument("--converged-only", action="store_true", default=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("boundary2d", help="2-d decision-boundary rendering")
    _add_data_flags(p, d_default=2)
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["perceptron", "mlp"], default="perceptron")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--gradient-arrow", action="store_true")
    p.set_defaults(func=_cmd_boundary2d)

    return parser


def cli_dispatch(argv) -> int:
    """Parse argv and run the subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        print(f"sgdlab: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, KeyError, AttributeError) as exc:
        print(f"sgdlab: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
