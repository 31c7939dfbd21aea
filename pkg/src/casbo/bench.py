"""Multi-seed benchmark harness with CSV traces and SVG convergence plots.

Runs ``runs`` independent optimizations of one registered problem, one seed
per run, writes one trace CSV per run plus a cross-run summary (per-iteration
mean and standard deviation, the quantities behind a convergence plot's line
and shaded band), echoes the effective configuration, and optionally renders
a self-contained SVG of the summary.
"""

import argparse
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed

from .optimizers import build_optimizer
from .problems import PROBLEM_REGISTRY, make_problem

__all__ = [
    "ExperimentConfig",
    "parse_cli",
    "run_experiment",
    "emit_plot",
    "main",
    "SUMMARY_HEADER",
]

SUMMARY_HEADER = (
    "iter,mean_cum_obj_mean,mean_cum_obj_std,"
    "best_sampled_cum_obj_mean,best_sampled_cum_obj_std"
)

_ROTATION_PROBLEMS = ("rastrigin10", "l1ellipsoid", "levy")


@dataclass
class ExperimentConfig:
    """Fully resolved settings of one benchmark experiment."""

    problem: str
    out: str
    K: int = 10
    d: int = 100
    mode: str = "bdtg"
    alpha: float = 10.0
    beta: float = 1.0
    nu: float = 1.0
    sigma: float = 1.0
    N: int = 32
    T: int = 100
    runs: int = 5
    seed: int = 0
    jobs: int = 1
    checkpoint_every: int = 0
    plot: bool = False


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="casbo-bench",
        description="Multi-seed sequential black-box optimization benchmark.",
    )
    parser.add_argument("--problem", required=True,
                        choices=sorted(PROBLEM_REGISTRY),
                        help="registered problem name")
    parser.add_argument("--K", type=int, default=10, help="number of steps")
    parser.add_argument("--d", type=int, default=100, help="decision dimension")
    parser.add_argument("--mode", choices=["bdtg", "casbo", "es"],
                        default="bdtg", help="optimizer")
    parser.add_argument("--alpha", type=float, default=10.0,
                        help="step-size scale (bdtg/casbo schedules; es step size)")
    parser.add_argument("--beta", type=float, default=1.0,
                        help="mean step-size base scalar (casbo only)")
    parser.add_argument("--nu", type=float, default=1.0,
                        help="whitened-update floor scalar (casbo only)")
    parser.add_argument("--sigma", type=float, default=1.0,
                        help="perturbation scale (es only)")
    parser.add_argument("--N", type=int, default=32, help="batch size")
    parser.add_argument("--T", type=int, default=100, help="iterations per run")
    parser.add_argument("--runs", type=int, default=5, help="number of seeds")
    parser.add_argument("--seed", type=int, default=0, help="base seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel runs (default: min(runs, cpu count))")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--checkpoint-every", type=int, default=0,
                        dest="checkpoint_every",
                        help="write chain snapshots every C iterations (0 = off)")
    parser.add_argument("--plot", action="store_true",
                        help="render plot.svg from the summary")
    return parser


def parse_cli(argv=None):
    """Parse CLI flags into an :class:`ExperimentConfig`.

    Usage problems (unknown flags, unparsable numbers, out-of-range values)
    exit with status 2 via argparse.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.K < 1:
        parser.error(f"--K must be >= 1, got {args.K}")
    if args.d < 1:
        parser.error(f"--d must be >= 1, got {args.d}")
    if args.problem in _ROTATION_PROBLEMS and args.d < 2:
        parser.error(f"--problem {args.problem} needs --d >= 2, got {args.d}")
    if args.N < 2:
        parser.error(f"--N must be >= 2, got {args.N}")
    if args.T < 0:
        parser.error(f"--T must be >= 0, got {args.T}")
    if args.runs < 1:
        parser.error(f"--runs must be >= 1, got {args.runs}")
    if args.checkpoint_every < 0:
        parser.error(f"--checkpoint-every must be >= 0, got {args.checkpoint_every}")
    for name in ("alpha", "beta", "nu", "sigma"):
        if getattr(args, name) <= 0:
            parser.error(f"--{name} must be positive, got {getattr(args, name)}")
    if args.jobs is None:
        args.jobs = max(1, min(args.runs, os.cpu_count() or 1))
    elif args.jobs < 1:
        parser.error(f"--jobs must be >= 1, got {args.jobs}")
    return ExperimentConfig(**vars(args))


def _optimizer_params(config, run_index):
    common = dict(
        n_samples=config.N,
        n_iterations=config.T,
        random_state=config.seed + run_index,
    )
    if config.checkpoint_every:
        common["checkpoint_every"] = config.checkpoint_every
        common["checkpoint_path"] = os.path.join(
            config.out, f"chain_{run_index}_{{t}}.txt"
        )
    if config.mode == "bdtg":
        return dict(common, alpha=config.alpha)
    if config.mode == "casbo":
        return dict(common, alpha=config.alpha, beta=config.beta, nu=config.nu)
    if config.mode == "es":
        return dict(common, beta=config.alpha, sigma=config.sigma)
    raise ValueError(f"unknown mode {config.mode!r}")


def _single_run(config, run_index):
    # Runs 1..runs get seeds base_seed + r; the problem instance itself is
    # built from the base seed, so no run shares a stream with it.
    problem = make_problem(config.problem, config.K, config.d, config.seed)
    est = build_optimizer(config.mode, _optimizer_params(config, run_index))
    est.fit(problem)
    est.trace_.write_csv(os.path.join(config.out, f"run_{run_index}.csv"))
    return est.trace_


def _write_config(config, path):
    with open(path, "w", newline="\n") as fh:
        for key, value in asdict(config).items():
            fh.write(f"{key} = {value}\n")


def _summarize(traces):
    """Per-iteration mean and population std across runs."""
    mean_obj = np.array([[rec.mean_cum_obj for rec in tr] for tr in traces])
    best_obj = np.array([[rec.best_sampled_cum_obj for rec in tr] for tr in traces])
    iters = [rec.t for rec in traces[0]]
    rows = []
    for i, t in enumerate(iters):
        rows.append((
            t,
            float(np.mean(mean_obj[:, i])),
            float(np.std(mean_obj[:, i])),
            float(np.mean(best_obj[:, i])),
            float(np.std(best_obj[:, i])),
        ))
    return rows


def _write_summary(rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for t, m, s, bm, bs in rows:
            fh.write(f"{t},{m!r},{s!r},{bm!r},{bs!r}\n")


def run_experiment(config):
    """Run the configured multi-seed experiment and write all outputs.

    Creates ``run_<r>.csv`` per run (r = 1..runs, seed = base seed + r),
    ``summary.csv``, ``config.txt``, optional chain snapshots and an
    optional ``plot.svg``.  Returns the list of run traces.
    """
    os.makedirs(config.out, exist_ok=True)
    _write_config(config, os.path.join(config.out, "config.txt"))
    run_indices = range(1, config.runs + 1)
    jobs = min(config.jobs, config.runs)
    if jobs > 1:
        traces = Parallel(n_jobs=jobs)(
            delayed(_single_run)(config, r) for r in run_indices
        )
    else:
        traces = [_single_run(config, r) for r in run_indices]
    summary = _summarize(traces)
    _write_summary(summary, os.path.join(config.out, "summary.csv"))
    if config.plot:
        plot_rows = [(t, m, s) for t, m, s, _, _ in summary]
        emit_plot(plot_rows, os.path.join(config.out, "plot.svg"))
    return traces


# ---------------------------------------------------------------------------
# SVG rendering


def emit_plot(summary, path, width=640, height=480):
    """Render a convergence curve as a self-contained SVG file.

    ``summary`` is a non-empty sequence of ``(iteration, mean, std)`` rows.
    A polyline traces the mean, a translucent polygon the mean +- one
    standard deviation; the y axis switches to log scale when every plotted
    value is positive.
    """
    rows = [(float(t), float(m), float(s)) for t, m, s in summary]
    if not rows:
        raise ValueError("summary must contain at least one row")
    ts = [r[0] for r in rows]
    means = [r[1] for r in rows]
    lowers = [m - s for _, m, s in rows]
    uppers = [m + s for _, m, s in rows]

    log_y = all(v > 0.0 for v in lowers + means + uppers)
    fy = (lambda v: float(np.log10(v))) if log_y else (lambda v: v)
    vals = [fy(v) for v in lowers + means + uppers]
    vmin, vmax = min(vals), max(vals)
    vspan = (vmax - vmin) or 1.0
    tmin, tmax = min(ts), max(ts)
    tspan = (tmax - tmin) or 1.0

    ml, mr, mt, mb = 70.0, 20.0, 20.0, 50.0

    def sx(t):
        return ml + (t - tmin) / tspan * (width - ml - mr)

    def sy(v):
        return (height - mb) - (fy(v) - vmin) / vspan * (height - mt - mb)

    def pts(pairs):
        return " ".join(f"{x:.3f},{y:.3f}" for x, y in pairs)

    band = [(sx(t), sy(u)) for t, u in zip(ts, uppers)]
    band += [(sx(t), sy(l)) for t, l in zip(reversed(ts), reversed(lowers))]
    line = [(sx(t), sy(m)) for t, m in zip(ts, means)]

    y_label = "cumulative objective" + (" (log scale)" if log_y else "")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<polygon points="{pts(band)}" fill="#4c72b0" fill-opacity="0.25" '
        f'stroke="none"/>',
        f'<polyline points="{pts(line)}" fill="none" stroke="#4c72b0" '
        f'stroke-width="1.5"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
        f'y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
        f'stroke="black"/>',
        f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" '
        f'text-anchor="middle" font-size="14">optimization step</text>',
        f'<text x="20" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" '
        f'font-size="14" transform="rotate(-90 20 '
        f'{(mt + height - mb) / 2:.1f})">{y_label}</text>',
        "</svg>",
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def main(argv=None):
    """CLI entry point: 0 on success, 2 on usage errors, 1 on runtime errors."""
    config = parse_cli(argv)
    try:
        run_experiment(config)
    except Exception as exc:  # noqa: BLE001 - boundary of the CLI
        print(f"casbo-bench: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
