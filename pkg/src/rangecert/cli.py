"""Command-line pipeline: simulate, solve and certify, evaluate, benchmark.

Five subcommands share one JSON config file and a small set of global flags
(``--config``, ``--out``, ``--seed``, ``--quiet``). Outputs are plot-ready
CSV plus JSON reports that embed the resolved config and a content hash of
every input file, so a run can be reproduced from its report alone.

Exit status: 0 when the best solution is certified (or the command has no
certification step), 2 when a solve completed but the best solution did not
certify, 1 on any error.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .cert import (
    CERTIFIED,
    DEFAULT_BETA,
    DEFAULT_PIVOT_TOLERANCE,
    DEFAULT_STATIONARITY_THRESHOLD,
    certify,
    compute_duals,
    psd_arrowhead,
    assemble_H,
)
from .lift import build_matrices
from .model import TrajectoryEstimate
from .prior import MotionPrior
from .problem import (
    DatasetError,
    NoiseModel,
    ProblemData,
    SQUARED_CONSTANT,
    load_problem,
    save_problem,
)
from .sim import SimConfig, simulate
from .solver import (
    BEST_COST,
    RankDeficiencyError,
    SolveConfig,
    label_by_best_cost,
    multi_restart,
    _Workspace,
    _init_from_truth,
    solve as gn_solve,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCERTIFIED = 2

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "sim": {
        "n_times": 100,
        "n_anchors": 6,
        "dim": 2,
        "sigma_a": 0.2,
        "sigma_d": 0.01,
        "schedule": "all-anchors",
        "anchor_mode": "uniform-box",
        "colinear_eps": 0.01,
        "delta_t": 1.0,
        "velocity_scale": 1.0,
    },
    "noise": {
        "policy": SQUARED_CONSTANT,
        "sigma_d": 0.01,
        "sigma_sq": None,
    },
    "prior": {
        "kind": "constant-velocity",
        "sigma_a": 0.2,
    },
    "solve": {
        "max_iterations": 50,
        "step_tolerance": 1e-10,
        "n_restarts": 10,
        "init_strategy": "random-in-box",
        "init_box_scale": 1.0,
        "write_svg": True,
    },
    "certificate": {
        "beta": DEFAULT_BETA,
        "stationarity_threshold": DEFAULT_STATIONARITY_THRESHOLD,
        "pivot_tolerance": DEFAULT_PIVOT_TOLERANCE,
    },
    "bench": {
        "n_grid": [1000, 10000, 100000, 1000000],
        "gn_timing_steps": 3,
    },
    "sweep": {
        "n_setups": 20,
        "noise_grid": [1e-3, 1e-2, 1e-1],
        "n_restarts": 10,
        "relative_gap": 1e-4,
    },
}


class CliError(RuntimeError):
    """User-facing failure; the message goes to stderr and the exit code is 1."""


def _strip_docs(node):
    if isinstance(node, dict):
        return {k: _strip_docs(v) for k, v in node.items() if not k.startswith("_")}
    return node


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise CliError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | None, seed_override: int | None = None) -> dict:
    """Defaults deep-merged with the optional JSON file; unknown keys are
    rejected rather than silently ignored. Keys starting with an underscore
    are documentation and dropped before merging."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise CliError(f"config file {path} must hold a JSON object")
        cfg = _merge(cfg, _strip_docs(user))
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    return cfg


def _sim_config(cfg: dict, sigma_d: float | None = None,
                seed: int | None = None) -> SimConfig:
    s = cfg["sim"]
    return SimConfig(
        n_times=int(s["n_times"]),
        n_anchors=int(s["n_anchors"]),
        dim=int(s["dim"]),
        sigma_a=float(s["sigma_a"]),
        sigma_d=float(s["sigma_d"] if sigma_d is None else sigma_d),
        schedule=s["schedule"],
        anchor_mode=s["anchor_mode"],
        colinear_eps=float(s["colinear_eps"]),
        delta_t=float(s["delta_t"]),
        velocity_scale=float(s["velocity_scale"]),
        variance_policy=cfg["noise"]["policy"],
        sigma_sq=cfg["noise"]["sigma_sq"],
        rng_seed=int(cfg["seed"] if seed is None else seed),
    )


def _solve_config(cfg: dict, seed: int | None = None,
                  n_restarts: int | None = None) -> SolveConfig:
    s = cfg["solve"]
    return SolveConfig(
        max_iterations=int(s["max_iterations"]),
        step_tolerance=float(s["step_tolerance"]),
        n_restarts=int(s["n_restarts"] if n_restarts is None else n_restarts),
        init_strategy=s["init_strategy"],
        rng_seed=int(cfg["seed"] if seed is None else seed),
        init_box_scale=float(s["init_box_scale"]),
    )


def _noise_model(cfg: dict) -> NoiseModel:
    n = cfg["noise"]
    sigma_sq = n["sigma_sq"]
    return NoiseModel(
        sigma_d=float(n["sigma_d"]),
        policy=n["policy"],
        sigma_sq=None if sigma_sq is None else float(sigma_sq),
    )


def _prior(cfg: dict, dim: int) -> MotionPrior:
    p = cfg["prior"]
    return MotionPrior.isotropic(p["kind"], float(p["sigma_a"]), dim)


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problem, _states = simulate(_sim_config(cfg))
    paths = save_problem(problem, out)
    inputs = {}
    if args.config:
        inputs[str(args.config)] = _hash_file(Path(args.config))
    _write_json(out / "config_resolved.json", {
        "command": "simulate",
        "config": cfg,
        "inputs": inputs,
    })
    _say(args.quiet, f"wrote {problem.measurements.total} measurement rows over "
                     f"{problem.n_times} timestamps to {out}")
    for p in paths.values():
        _say(args.quiet, f"  {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _rmse_mae(estimate: TrajectoryEstimate,
              problem: ProblemData) -> tuple[float, float] | None:
    if problem.ground_truth is None:
        return None
    _t, truth = problem.ground_truth
    err = np.linalg.norm(estimate.positions() - truth, axis=1)
    return float(np.sqrt(np.mean(err**2))), float(np.mean(err))


def _estimate_rows(estimate: TrajectoryEstimate) -> list[str]:
    d = estimate.dim
    coords = ["x", "y", "z"][:d]
    header = ["t"] + coords
    if estimate.state_dim == 2 * d:
        header += ["v" + c for c in coords]
    rows = [",".join(header)]
    states = estimate.states()
    for t, row in zip(estimate.times, states):
        rows.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    return rows


def _svg_overlay(estimate: TrajectoryEstimate, problem: ProblemData,
                 path: Path) -> None:
    """Hand-rolled two-polyline overlay of the estimate against the truth,
    with anchors marked; skipped for non-planar problems."""
    if estimate.dim != 2:
        return
    parts = [estimate.positions(), problem.anchors.coordinates.T]
    if problem.ground_truth is not None:
        parts.append(problem.ground_truth[1])
    allpts = np.vstack(parts)
    lo = allpts.min(axis=0)
    span = np.maximum(allpts.max(axis=0) - lo, 1e-9)
    size = 640.0
    margin = 20.0

    def to_px(pts: np.ndarray) -> np.ndarray:
        unit = (pts - lo) / span.max()
        px = margin + unit * (size - 2 * margin)
        px[:, 1] = size - px[:, 1]
        return px

    def polyline(pts: np.ndarray, color: str, dash: str = "") -> str:
        coords = " ".join(f"{p[0]:.2f},{p[1]:.2f}" for p in to_px(pts))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<polyline points="{coords}" fill="none" stroke="{color}"'
                f' stroke-width="1.5"{extra}/>')

    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}"'
            f' height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
            f'<rect width="{size:.0f}" height="{size:.0f}" fill="white"/>']
    if problem.ground_truth is not None:
        body.append(polyline(problem.ground_truth[1], "#888888", dash="4 3"))
    body.append(polyline(estimate.positions(), "#0055cc"))
    for p in to_px(problem.anchors.coordinates.T):
        body.append(f'<circle cx="{p[0]:.2f}" cy="{p[1]:.2f}" r="4"'
                    f' fill="#cc3300"/>')
    body.append("</svg>")
    path.write_text("\n".join(body) + "\n", encoding="utf-8")


def _certify_all(estimates, problem, prior, cfg):
    """Certificate report (or None for diverged runs) per estimate, plus the
    wall time spent in the dual and PSD stages."""
    cc = cfg["certificate"]
    reports = []
    t_duals = t_psd = 0.0
    lifted = build_matrices(problem, prior)
    for est in estimates:
        if est.diverged or not np.isfinite(est.cost):
            reports.append(None)
            continue
        t0 = time.perf_counter()
        _duals = compute_duals(est, problem, prior)
        t_duals += time.perf_counter() - t0
        t0 = time.perf_counter()
        report = certify(
            est, problem, prior,
            beta=float(cc["beta"]),
            stationarity_threshold=float(cc["stationarity_threshold"]),
            pivot_tolerance=float(cc["pivot_tolerance"]),
            lifted=lifted,
        )
        t_psd += time.perf_counter() - t0
        reports.append(report)
    return reports, t_duals, t_psd


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = Path(args.dataset)
    anchors = dataset / "anchors.csv"
    measurements = dataset / "measurements.csv"
    truth = dataset / "ground_truth.csv"
    for required in (anchors, measurements):
        if not required.is_file():
            raise CliError(f"dataset file missing: {required}")
    problem = load_problem(
        anchors, measurements,
        noise=_noise_model(cfg),
        ground_truth_file=truth if truth.is_file() else None,
    )
    prior = _prior(cfg, problem.dim)
    t0 = time.perf_counter()
    try:
        estimates = multi_restart(problem, prior, _solve_config(cfg))
    except RankDeficiencyError as exc:
        raise CliError(
            f"Gauss-Newton system is rank deficient ({exc}); with sparse "
            "per-time measurements the data term alone cannot pin down the "
            "trajectory. Add a motion prior (config prior.kind "
            "zero-velocity or constant-velocity).")
    t_solve = time.perf_counter() - t0

    reports, t_duals, t_psd = _certify_all(estimates, problem, prior, cfg)
    labels = label_by_best_cost(estimates)

    rows = []
    for est, rep, label in zip(estimates, reports, labels):
        metrics = _rmse_mae(est, problem)
        rows.append({
            "restart": est.restart,
            "cost": est.cost,
            "iterations": est.iterations,
            "converged": bool(est.converged),
            "diverged": bool(est.diverged),
            "label": label,
            "verdict": None if rep is None else rep.verdict,
            "duality_gap": None if rep is None else rep.duality_gap,
            "min_diag": None if rep is None else rep.min_diag,
            "stationarity_residual":
                None if rep is None else rep.stationarity_residual,
            "rmse": None if metrics is None else metrics[0],
            "mae": None if metrics is None else metrics[1],
        })

    certified = [i for i, r in enumerate(reports)
                 if r is not None and r.verdict == CERTIFIED]
    if certified:
        best_index = min(certified, key=lambda i: estimates[i].cost)
    else:
        best_index = int(np.argmin(
            [e.cost if np.isfinite(e.cost) and not e.diverged else np.inf
             for e in estimates]))
        print("warning: no restart certified; writing the best-cost "
              "estimate instead", file=sys.stderr)
    best = estimates[best_index]

    inputs = {p.name: _hash_file(p) for p in (anchors, measurements)
              if p.is_file()}
    if truth.is_file():
        inputs[truth.name] = _hash_file(truth)
    if args.config:
        inputs[str(args.config)] = _hash_file(Path(args.config))

    report = {
        "command": "solve",
        "config": cfg,
        "inputs": inputs,
        "restarts": rows,
        "best": rows[best_index],
        "timing": {
            "solve_s": t_solve,
            "duals_s": t_duals,
            "psd_s": t_psd,
        },
    }
    _write_json(out / "report.json", report)
    (out / "estimate.csv").write_text(
        "\n".join(_estimate_rows(best)) + "\n", encoding="utf-8")
    if cfg["solve"]["write_svg"]:
        _svg_overlay(best, problem, out / "overlay.svg")

    best_row = rows[best_index]
    _say(args.quiet,
         f"best restart {best_row['restart']}: cost {best_row['cost']:.6e}, "
         f"verdict {best_row['verdict']}, label {best_row['label']}")
    if best_row["rmse"] is not None:
        _say(args.quiet,
             f"rmse {best_row['rmse']:.6e}  mae {best_row['mae']:.6e}")
    _say(args.quiet, f"report: {out / 'report.json'}")
    return EXIT_OK if best_row["verdict"] == CERTIFIED else EXIT_UNCERTIFIED


# ---------------------------------------------------------------------------
# eval


def _load_xy_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and position columns from an estimate or truth CSV. Velocity
    columns, when present, are ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    except ValueError as exc:
        raise CliError(f"malformed numeric data in {path}: {exc}")
    if header[0] != "t":
        raise CliError(f"{path}: first column must be t, got {header[0]!r}")
    coords = [c for c in header[1:] if c in ("x", "y", "z")]
    if not coords:
        raise CliError(f"{path}: no position columns among {header[1:]!r}")
    return data[:, 0], data[:, 1:1 + len(coords)]


def cmd_eval(args: argparse.Namespace) -> int:
    t_est, x_est = _load_xy_csv(Path(args.estimate))
    t_ref, x_ref = _load_xy_csv(Path(args.truth))
    if t_est.shape != t_ref.shape:
        raise CliError(
            f"length mismatch: estimate has {t_est.shape[0]} rows, "
            f"ground truth has {t_ref.shape[0]}")
    if x_est.shape[1] != x_ref.shape[1]:
        raise CliError(
            f"dimension mismatch: estimate is {x_est.shape[1]}-d, "
            f"ground truth is {x_ref.shape[1]}-d")
    mismatch = np.nonzero(np.abs(t_est - t_ref) > 1e-6)[0]
    if mismatch.size:
        shown = ", ".join(
            f"row {i}: {float(t_est[i])!r} vs {float(t_ref[i])!r}"
            for i in mismatch[:10])
        more = "" if mismatch.size <= 10 else f" (and {mismatch.size - 10} more)"
        raise CliError(f"timestamps do not align within 1e-6: {shown}{more}")
    err = np.linalg.norm(x_est - x_ref, axis=1)
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(err))
    payload = {
        "command": "eval",
        "inputs": {
            str(args.estimate): _hash_file(Path(args.estimate)),
            str(args.truth): _hash_file(Path(args.truth)),
        },
        "rmse": rmse,
        "mae": mae,
        "count": int(t_est.shape[0]),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "metrics.json", payload)
    _say(args.quiet, f"rmse {rmse:.12e}")
    _say(args.quiet, f"mae {mae:.12e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _bench_point(cfg: dict, n: int) -> dict:
    sim_cfg = dataclasses.replace(_sim_config(cfg, sigma_d=1e-3), n_times=n)
    problem, _ = simulate(sim_cfg)
    prior = _prior(cfg, problem.dim)
    ws = _Workspace(problem, prior)
    theta = _init_from_truth(problem, prior)
    reps = int(cfg["bench"]["gn_timing_steps"])
    t0 = time.perf_counter()
    for _ in range(reps):
        delta, _cost = ws.step(theta)
        theta = theta + delta
    t_gn = (time.perf_counter() - t0) / reps
    est = gn_solve(problem, prior, _solve_config(cfg, n_restarts=1), theta,
                   workspace=ws)
    t0 = time.perf_counter()
    duals = compute_duals(est, problem, prior)
    t_duals = time.perf_counter() - t0
    lifted = build_matrices(problem, prior)
    h = assemble_H(duals, lifted, prior)
    t0 = time.perf_counter()
    result = psd_arrowhead(h, beta=float(cfg["certificate"]["beta"]))
    t_psd = time.perf_counter() - t0
    return {
        "n": n,
        "gn_iteration_s": t_gn,
        "duals_s": t_duals,
        "psd_s": t_psd,
        "psd": result.psd,
    }


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in cfg["bench"]["n_grid"]:
        row = _bench_point(cfg, int(n))
        rows.append(row)
        _say(args.quiet,
             f"N={row['n']}: gn {row['gn_iteration_s']:.4f} s/iter, "
             f"duals {row['duals_s']:.4f} s, psd {row['psd_s']:.4f} s")
    lines = ["n,gn_iteration_s,duals_s,psd_s"]
    for row in rows:
        lines.append(f"{row['n']},{row['gn_iteration_s']:.9f},"
                     f"{row['duals_s']:.9f},{row['psd_s']:.9f}")
    (out / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _say(args.quiet, f"wrote {out / 'bench.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_cfg = cfg["sweep"]
    n_setups = int(sweep_cfg["n_setups"])
    rel_gap = float(sweep_cfg["relative_gap"])
    base_seed = int(cfg["seed"])
    rows = []
    stats = {}
    for noise_index, noise in enumerate(sweep_cfg["noise_grid"]):
        noise = float(noise)
        cell = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
        for setup in range(n_setups):
            seed = base_seed + 7919 * setup + 104729 * noise_index
            sim_cfg = _sim_config(cfg, sigma_d=noise, seed=seed)
            problem, _ = simulate(sim_cfg)
            prior = _prior(cfg, problem.dim)
            solve_cfg = _solve_config(
                cfg, seed=seed, n_restarts=int(sweep_cfg["n_restarts"]))
            estimates = multi_restart(problem, prior, solve_cfg)
            reports, _td, _tp = _certify_all(estimates, problem, prior, cfg)
            finite = [e.cost for e in estimates
                      if not e.diverged and np.isfinite(e.cost)]
            if not finite:
                continue
            best_cost = min(finite)
            for est, rep in zip(estimates, reports):
                if rep is None:
                    continue
                certified = rep.verdict == CERTIFIED
                at_best = est.cost <= best_cost * (1 + rel_gap)
                key = ("tp" if certified else "fn") if at_best else \
                      ("fp" if certified else "tn")
                cell[key] += 1
                metrics = _rmse_mae(est, problem)
                rows.append({
                    "noise": noise,
                    "setup": setup,
                    "restart": est.restart,
                    "rmse": float("nan") if metrics is None else metrics[0],
                    "cost": est.cost,
                    "certified": int(certified),
                    "label": BEST_COST if at_best else "suboptimal",
                })
        stats[repr(noise)] = cell
        _say(args.quiet, f"noise {noise:g}: {cell}")
    lines = ["noise,setup,restart,rmse,cost,certified,label"]
    for row in rows:
        lines.append(f"{row['noise']:g},{row['setup']},{row['restart']},"
                     f"{row['rmse']:.9e},{row['cost']:.9e},"
                     f"{row['certified']},{row['label']}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    stat_lines = ["noise,true_positive,true_negative,false_positive,false_negative"]
    for noise in sweep_cfg["noise_grid"]:
        cell = stats[repr(float(noise))]
        stat_lines.append(f"{float(noise):g},{cell['tp']},{cell['tn']},"
                          f"{cell['fp']},{cell['fn']}")
    (out / "sweep_stats.csv").write_text(
        "\n".join(stat_lines) + "\n", encoding="utf-8")
    inputs = {}
    if args.config:
        inputs[str(args.config)] = _hash_file(Path(args.config))
    _write_json(out / "sweep_report.json", {
        "command": "sweep",
        "config": cfg,
        "inputs": inputs,
        "stats": stats,
    })
    _say(args.quiet, f"wrote {out / 'sweep.csv'} and {out / 'sweep_stats.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=None, metavar="PATH",
                        help="JSON config file (defaults apply otherwise)")
    shared.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (default: current directory)")
    shared.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="override the config seed")
    shared.add_argument("--quiet", action="store_true",
                        help="suppress progress output")

    parser = argparse.ArgumentParser(
        prog="rangecert",
        description="Trajectory estimation from anchor range measurements "
                    "with a global-optimality certificate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared],
                       help="generate a synthetic dataset")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", parents=[shared],
                       help="estimate a trajectory from a dataset and "
                            "certify the result")
    p.add_argument("dataset", help="directory with anchors.csv and "
                                   "measurements.csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", parents=[shared],
                       help="compare an estimate CSV against ground truth")
    p.add_argument("estimate", help="estimate CSV (t,x[,y,z][,v...])")
    p.add_argument("truth", help="ground-truth CSV with matching timestamps")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[shared],
                       help="time each pipeline stage over a grid of "
                            "problem sizes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[shared],
                       help="certification statistics over setups and "
                            "noise levels")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
