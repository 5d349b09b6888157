"""Command-line front end: simulate -> infer -> diagnose -> summarize.

Exit codes: 0 ok, 2 usage, 3 bad data, 4 numerical failure, 5 I/O.
Flags override an optional key=value config file, which overrides defaults.
The seed falls back to the PHYLOCOAL_SEED environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from . import diagnostics, genealogy, gmrf, gridlik, samplers, simulate
from .errors import DataError, NumericalError, PhylocoalError

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def _fail(code: int, kind: str, message: str) -> int:
    print(f"phylocoal: {kind}: {message}", file=sys.stderr)
    return code


def _resolve_seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("PHYLOCOAL_SEED")
    return int(env) if env else None


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise DataError(f"bad config line {line!r}")
            values[key.strip()] = val.strip()
    return values


# defaults for infer options; flags > config file > these
INFER_DEFAULTS = {
    "sampler": "splithmc",
    "grid_points": 100,
    "iters": 15000,
    "burnin": 5000,
    "thin": 1,
    "epsilon": 0.1,
    "kappa_step_c": 1.1,
    "alpha": gmrf.DEFAULT_ALPHA,
    "beta": gmrf.DEFAULT_BETA,
    "jitter": gmrf.DEFAULT_JITTER,
    "seed": None,
    "clock": "cpu",
}
_INFER_TYPES = {
    "sampler": str, "grid_points": int, "iters": int, "burnin": int,
    "thin": int, "epsilon": float, "leap_steps": int, "kappa_step_c": float,
    "alpha": float, "beta": float, "jitter": float, "seed": int, "clock": str,
}


def _apply_config(args: argparse.Namespace) -> None:
    """Fill options left unset on the command line from the config file,
    then from the defaults table."""
    config = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, raw in config.items():
        if key in _INFER_TYPES and getattr(args, key, None) is None:
            try:
                setattr(args, key, _INFER_TYPES[key](raw))
            except ValueError:
                raise DataError(f"bad config value {key}={raw!r}") from None
    for key, value in INFER_DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


# -- subcommands -------------------------------------------------------------

def _parse_design(text: str) -> list[tuple[float, int]]:
    design = []
    for item in text.split(","):
        s, sep, c = item.partition(":")
        if not sep:
            raise DataError(f"bad design entry {item!r}; expected time:count")
        design.append((float(s), int(c)))
    return design


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    rng = np.random.default_rng(seed)
    if args.trajectory not in simulate.TRAJECTORIES:
        raise DataError(f"unknown trajectory {args.trajectory!r}")
    traj = simulate.TRAJECTORIES[args.trajectory]()
    design = (
        _parse_design(args.design)
        if args.design
        else simulate.isochronous_design(args.n)
    )
    g = simulate.simulate_genealogy(traj, design, rng, sim_resolution=args.sim_resolution)
    genealogy.write_genealogy(args.out, g)
    print(args.out)
    if args.truth:
        ts = np.linspace(0.0, g.root_time, 512)
        with open(args.truth, "w") as fh:
            fh.write("t,Ne\n")
            for t in ts:
                fh.write(f"{float(t)!r},{float(traj(t))!r}\n")
        print(args.truth)
    return 0


def cmd_infer(args) -> int:
    seed = _resolve_seed(args)
    if args.sampler not in samplers.KERNELS:
        raise DataError(f"unknown sampler {args.sampler!r}")
    if args.newick:
        with open(args.genealogy) as fh:
            g = genealogy.parse_newick(fh.read())
    else:
        g = genealogy.read_genealogy(args.genealogy)

    grid = gridlik.build_grid(g, args.grid_points)
    stats = gridlik.sufficient_stats(g, grid)
    if args.dump_stats:
        stats.dump_csv(args.dump_stats)
    precision = gmrf.build_precision(grid.midpoints, jitter=args.jitter)
    prior = gmrf.PriorConfig(alpha=args.alpha, beta=args.beta)
    target = samplers.CoalescentTarget(stats, precision, prior)
    cfg = samplers.SamplerConfig(
        epsilon=args.epsilon, leap_steps=args.leap_steps, kappa_step_c=args.kappa_step_c
    )
    kernel = samplers.KERNELS[args.sampler](target, cfg)

    clock = _ITERATION_CLOCK() if args.clock == "iteration" else time.process_time
    rng = np.random.default_rng(seed)
    trace = samplers.run_chain(
        kernel,
        target.default_init(),
        iters=args.iters,
        burnin=args.burnin,
        thin=args.thin,
        rng=rng,
        clock=clock,
        seed=seed,
    )
    meta = {
        "grid_points": args.grid_points,
        "root_time": repr(float(g.root_time)),
        "epsilon": repr(float(kernel.cfg.epsilon)),
        "leap_steps": kernel.cfg.leap_steps,
        "kappa_step_c": repr(float(kernel.cfg.kappa_step_c)),
        "alpha": repr(float(args.alpha)),
        "beta": repr(float(args.beta)),
        "jitter": repr(float(args.jitter)),
        "genealogy_sha256": _sha256(args.genealogy),
    }
    samplers.write_trace(args.out, trace, meta)
    print(args.out)
    print(samplers.meta_path(args.out))
    return 0


class _ITERATION_CLOCK:
    """Deterministic clock counting calls; makes trace files byte-identical."""

    def __init__(self):
        self.ticks = 0

    def __call__(self) -> float:
        self.ticks += 1
        return float(self.ticks)


def cmd_diagnose(args) -> int:
    reports = []
    baseline = None
    for path in args.traces:
        trace = samplers.read_trace(path)
        report = diagnostics.efficiency_report(trace, baseline=baseline)
        if baseline is None:
            baseline = report
        reports.append(report)
    print(diagnostics.format_report_table(reports))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(diagnostics.EfficiencyReport.CSV_HEADER + "\n")
            for r in reports:
                fh.write(r.csv_row() + "\n")
        print(args.csv)
    return 0


def cmd_summarize(args) -> int:
    trace = samplers.read_trace(args.trace)
    meta = trace.meta
    if "grid_points" not in meta or "root_time" not in meta:
        raise DataError("trace metadata sidecar with grid_points/root_time required")
    n_points = int(meta["grid_points"])
    if n_points - 1 != trace.dim - 1:
        raise DataError(
            f"metadata says {n_points - 1} cells but trace has {trace.dim - 1}"
        )
    grid = gridlik.Grid(np.linspace(0.0, float(meta["root_time"]), n_points))

    truth = None
    if args.truth:
        data = np.genfromtxt(args.truth, delimiter=",", names=True)
        truth = np.interp(grid.midpoints, data["t"], data["Ne"])
    summary = diagnostics.trajectory_summary(trace, grid, truth=truth)
    summary.write_csv(args.out)
    print(args.out)
    if summary.coverage is not None:
        print(f"coverage={summary.coverage:.4f}")
    if args.svg:
        from .plotting import plot_trajectory_summary

        plot_trajectory_summary(summary, args.svg)
        print(args.svg)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phylocoal",
        description="Nonparametric population size inference from timed genealogies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a genealogy under a trajectory")
    sim.add_argument("--trajectory", default="logistic",
                     choices=sorted(simulate.TRAJECTORIES))
    sim.add_argument("--n", type=int, default=50, help="sample size (isochronous)")
    sim.add_argument("--design", default=None,
                     help="heterochronous design, e.g. 0:20,0.5:15,1:15")
    sim.add_argument("--sim-resolution", dest="sim_resolution", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default="genealogy.txt")
    sim.add_argument("--truth", default=None, help="also write the trajectory CSV")
    sim.set_defaults(func=cmd_simulate)

    inf = sub.add_parser("infer", help="run one MCMC chain on a genealogy")
    inf.add_argument("genealogy")
    inf.add_argument("--newick", action="store_true", help="input is a Newick tree")
    inf.add_argument("--sampler", default=None, choices=sorted(samplers.KERNELS))
    inf.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    inf.add_argument("--iters", type=int, default=None)
    inf.add_argument("--burnin", type=int, default=None)
    inf.add_argument("--thin", type=int, default=None)
    inf.add_argument("--epsilon", type=float, default=None)
    inf.add_argument("--leap-steps", dest="leap_steps", type=int, default=None)
    inf.add_argument("--kappa-step-c", dest="kappa_step_c", type=float, default=None)
    inf.add_argument("--alpha", type=float, default=None)
    inf.add_argument("--beta", type=float, default=None)
    inf.add_argument("--jitter", type=float, default=None)
    inf.add_argument("--seed", type=int, default=None)
    inf.add_argument("--clock", choices=("cpu", "iteration"), default=None)
    inf.add_argument("--config", default=None, help="key=value config file")
    inf.add_argument("--dump-stats", dest="dump_stats", default=None)
    inf.add_argument("--out", default="trace.csv")
    inf.set_defaults(func=cmd_infer)

    diag = sub.add_parser("diagnose", help="ESS efficiency table for trace files")
    diag.add_argument("traces", nargs="+",
                      help="trace CSVs; the first is the speedup baseline")
    diag.add_argument("--csv", default=None)
    diag.set_defaults(func=cmd_diagnose)

    summ = sub.add_parser("summarize", help="posterior trajectory band from a trace")
    summ.add_argument("trace")
    summ.add_argument("--truth", default=None, help="truth CSV (t,Ne) for overlay")
    summ.add_argument("--svg", default=None, help="also render the band figure")
    summ.add_argument("--out", default="summary.csv")
    summ.set_defaults(func=cmd_summarize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "infer":
            _apply_config(args)
            if args.leap_steps is None:
                args.leap_steps = 15 if args.sampler == "splithmc" else 20
        return args.func(args)
    except DataError as exc:
        return _fail(EXIT_DATA, type(exc).__name__, str(exc))
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    except PhylocoalError as exc:
        return _fail(EXIT_DATA, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, type(exc).__name__, str(exc))
    except ValueError as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
