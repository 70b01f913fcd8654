"""Command-line entry points.

Commands: ``estimate`` (density values on a grid), ``bandwidth``
(plug-in bandwidth with optional stage trace), ``risk`` (exact risk over
a bandwidth grid), ``simulate`` (Monte Carlo quantile bands), and
``diagnose`` (error-scale divergence diagnostic plus the numeric check
that the squared-transform sum stays positive).

Exit codes: 0 success, 1 malformed input, 2 numerical failure. Output
files are written atomically, so failures leave nothing behind.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bandwidth import PluginConfig, plugin_bandwidth
from .errors import StableSymmetric, cf_sum_sq, consistency_diagnostic
from .estimator import EstimatorConfig, estimate_density
from .io import (
    fmt,
    read_models_file,
    read_observations,
    read_replicates,
    write_text_atomic,
)
from .kernels import K2, get_kernel
from .quadrature import QuadratureSpec
from .risk import exact_mise
from .simulation import (
    Scenario,
    density_spec,
    run_experiment,
    write_bands_csv,
    write_summary_csv,
)

__all__ = ["main", "build_parser"]


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc.strerror}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", default="k2", help="kernel name: sinc or k2")
    p.add_argument(
        "--nodes", type=int, default=4097, help="quadrature node count (odd)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetdecon",
        description="Kernel density deconvolution with heteroscedastic errors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="evaluate the estimator on a grid")
    p_est.add_argument("--data", help="observations CSV (y,model_id)")
    p_est.add_argument("--models", help="model config file")
    p_est.add_argument("--replicates", help="replicates CSV (subject,y)")
    p_est.add_argument(
        "--bandwidth", required=True, help="'plugin' or a positive number"
    )
    p_est.add_argument(
        "--grid", nargs=3, required=True, metavar=("MIN", "MAX", "POINTS")
    )
    p_est.add_argument(
        "--weight", default="psi", choices=("psi", "phi", "ridge"),
        help="weight function",
    )
    p_est.add_argument("--ridge", type=float, help="ridge value (weight=ridge)")
    p_est.add_argument(
        "--derivative", type=int, default=0, help="derivative order r >= 0"
    )
    p_est.add_argument("--out", required=True, help="output CSV path")
    p_est.add_argument("--verbose", action="store_true")
    _add_common(p_est)

    p_bw = sub.add_parser("bandwidth", help="print the plug-in bandwidth")
    p_bw.add_argument("--data", required=True)
    p_bw.add_argument("--models", required=True)
    p_bw.add_argument("--verbose", action="store_true", help="print stage trace")
    _add_common(p_bw)

    p_risk = sub.add_parser("risk", help="exact risk over a bandwidth grid")
    p_risk.add_argument("--density", type=int, required=True, choices=(1, 2))
    p_risk.add_argument("--models", required=True)
    p_risk.add_argument("--data", help="observations CSV fixing the model multiset")
    p_risk.add_argument(
        "--counts",
        help="model multiset as id=count[,id=count...] (alternative to --data)",
    )
    p_risk.add_argument(
        "--h-grid", nargs=3, required=True, metavar=("MIN", "MAX", "POINTS")
    )
    p_risk.add_argument("--out", required=True)
    _add_common(p_risk)

    p_sim = sub.add_parser("simulate", help="Monte Carlo quantile bands")
    p_sim.add_argument("--density", type=int, required=True, choices=(1, 2))
    p_sim.add_argument(
        "--errors", required=True, choices=("i", "ii", "iii", "iv")
    )
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--grid", nargs=3, metavar=("MIN", "MAX", "POINTS"))
    p_sim.add_argument("--threads", type=int, default=0, help="0 = auto")
    p_sim.add_argument("--out", required=True, help="bands CSV path")
    p_sim.add_argument("--summary-out", help="per-replication summary CSV path")
    _add_common(p_sim)

    p_diag = sub.add_parser("diagnose", help="error-scale diagnostics")
    p_diag.add_argument("--models", required=True)
    p_diag.add_argument("--omega", type=float, required=True)
    p_diag.add_argument(
        "--t-grid", nargs=3, default=("-10", "10", "201"),
        metavar=("MIN", "MAX", "POINTS"),
    )
    return parser


def _parse_grid(raw, what: str) -> np.ndarray:
    lo, hi, count = float(raw[0]), float(raw[1]), int(raw[2])
    if count < 2 or not lo < hi:
        raise ValueError(f"bad {what}: need MIN < MAX and POINTS >= 2")
    return np.linspace(lo, hi, count)


def _cmd_estimate(args) -> int:
    x_grid = _parse_grid(args.grid, "--grid")
    quad = QuadratureSpec(node_count=args.nodes)
    kernel = get_kernel(args.kernel)

    if args.weight == "ridge":
        if not args.replicates:
            raise ValueError("weight=ridge needs --replicates")
        if args.ridge is None or args.ridge <= 0:
            raise ValueError("weight=ridge needs a positive --ridge")
        if args.bandwidth == "plugin":
            raise ValueError(
                "plug-in selection needs known error models; give a "
                "numeric --bandwidth with weight=ridge"
            )
        data = read_replicates(_read(args.replicates))
    else:
        if not args.data or not args.models:
            raise ValueError(f"weight={args.weight} needs --data and --models")
        models = read_models_file(_read(args.models))
        data = read_observations(_read(args.data), models)

    if args.bandwidth == "plugin":
        h, trace = plugin_bandwidth(data, kernel=kernel, quad=quad)
        if args.verbose:
            for line in trace.lines():
                print(line)
    else:
        h = float(args.bandwidth)
        if h <= 0:
            raise ValueError("--bandwidth must be positive")

    cfg = EstimatorConfig(
        kernel=kernel, h=h, x_grid=x_grid, quad=quad,
        weight_source=args.weight, ridge=args.ridge,
        derivative_order=args.derivative,
    )
    est = estimate_density(data, cfg)
    lines = ["x,fhat"] + [
        f"{fmt(x)},{fmt(v)}" for x, v in zip(est.x_grid, est.values)
    ]
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    if args.verbose:
        print(f"h = {fmt(h)}")
        print(f"max_imag_discarded = {est.max_imag_discarded:.3e}")
    return 0


def _cmd_bandwidth(args) -> int:
    quad = QuadratureSpec(node_count=args.nodes)
    kernel = get_kernel(args.kernel)
    models = read_models_file(_read(args.models))
    sample = read_observations(_read(args.data), models)
    h, trace = plugin_bandwidth(sample, kernel=kernel, quad=quad)
    if args.verbose:
        for line in trace.lines():
            print(line)
    print(fmt(h))
    return 0


def _model_multiset(args, models) -> list:
    if args.data:
        sample = read_observations(_read(args.data), models)
        return sample.models_per_observation()
    if args.counts:
        out = []
        for token in args.counts.split(","):
            mid, _, count_text = token.partition("=")
            mid = mid.strip()
            if mid not in models:
                raise ValueError(f"unknown model id {mid!r} in --counts")
            count = int(count_text)
            if count < 1:
                raise ValueError(f"count for {mid!r} must be >= 1")
            out.extend([models[mid]] * count)
        return out
    raise ValueError("risk needs --data or --counts to fix the model multiset")


def _cmd_risk(args) -> int:
    quad = QuadratureSpec(node_count=args.nodes)
    kernel = get_kernel(args.kernel)
    models = read_models_file(_read(args.models))
    per_obs = _model_multiset(args, models)
    fx = density_spec(args.density)
    h_grid = _parse_grid(args.h_grid, "--h-grid")
    lines = ["h,bias_term,variance_term,rn_term,mise"]
    for h in h_grid:
        report = exact_mise(fx, per_obs, kernel, float(h), quad)
        lines.append(report.csv_row())
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    grid = _parse_grid(args.grid, "--grid") if args.grid else None
    scenario = Scenario(
        density_id=args.density,
        error_layout=args.errors,
        n=args.n,
        replications=args.reps,
        x_grid=grid,
        seed=args.seed,
    )
    quad = QuadratureSpec(node_count=args.nodes)
    kernel = get_kernel(args.kernel)
    result = run_experiment(
        scenario, kernel=kernel, quad=quad, threads=args.threads
    )
    write_bands_csv(args.out, result)
    if args.summary_out:
        write_summary_csv(args.summary_out, result)
    if result.failures:
        print(f"warning: {len(result.failures)} replications failed",
              file=sys.stderr)
    return 0


def _cmd_diagnose(args) -> int:
    models = read_models_file(_read(args.models))
    model_list = list(models.values())
    t_grid = _parse_grid(args.t_grid, "--t-grid")
    if all(isinstance(m, StableSymmetric) for m in model_list):
        value = consistency_diagnostic(model_list, args.omega)
        print(f"divergence_diagnostic(omega={fmt(args.omega)}) = {fmt(value)}")
    else:
        print("divergence_diagnostic: n/a (needs all-stable models)")
    sums = cf_sum_sq(model_list, t_grid)
    print(f"min_sum_sq_transform = {fmt(float(np.min(sums)))}")
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bandwidth": _cmd_bandwidth,
    "risk": _cmd_risk,
    "simulate": _cmd_simulate,
    "diagnose": _cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
