"""Batch front-end: config-driven runs with persisted artifacts.

Every invocation reads one JSON config, executes one mode (solve,
classify, branch, flow, oracle, moments) and writes a self-contained run
directory: config-echo.json, summary.json, per-state JSON snapshots and
CSV time series. summary.json is deterministic for a given config (wall
time lives in timing.json) so runs diff cleanly. The report subcommand
post-processes a finished run directory into plot-ready CSV files and
rendered figures.

Exit codes: 0 ok, 2 config error, 3 solver error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import classify
from .curves import BoundaryCurve, circle, unit_circle
from .errors import ConfigError, ConfigInvalid, MissingArtifacts, SolverError
from .flow import FlowOptions, branch_sweep, run_flow
from .moments import harmonic_test_basis, max_quadrature_residual, moments
from .operator import QSchedule, eval_F, newton_correct
from .potential import AnnularDomain

log = logging.getLogger("bernoulli_fbp")

MODES = ("solve", "classify", "branch", "flow", "oracle", "moments")


@dataclass
class RunConfig:
    mode: str
    container: BoundaryCurve | None = None
    initial_curve: BoundaryCurve | None = None
    schedule: QSchedule | None = None
    nodes: int = 128
    newton_tol: float = 1e-9
    newton_max_iter: int = 25
    k_max: int = 8
    flow_T: float | None = None
    flow_case: str | None = None
    flow_opts: dict = field(default_factory=dict)
    branch_Q_values: list[float] = field(default_factory=list)
    branch_seeds: list[BoundaryCurve] = field(default_factory=list)
    oracle_n: int = 2
    oracle_Q_values: list[float] = field(default_factory=list)
    raw: dict = field(default_factory=dict)


def _parse_curve(spec) -> BoundaryCurve:
    if isinstance(spec, dict) and "circle" in spec:
        return circle(float(spec["circle"]), tuple(spec.get("center", (0.0, 0.0))))
    if isinstance(spec, dict):
        return BoundaryCurve.from_dict(spec)
    raise ConfigInvalid(f"cannot interpret curve spec {spec!r}")


def _parse_schedule(spec) -> QSchedule:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigInvalid("schedule spec must be an object with a 'type' field")
    kind = spec["type"]
    if kind == "constant":
        return QSchedule.constant(float(spec["Q"]))
    if kind == "affine":
        return QSchedule.affine(
            float(spec["Q0"]),
            float(spec.get("rate", 0.0)),
            tuple(spec.get("x_coeff", (0.0, 0.0))),
        )
    if kind == "table":
        return QSchedule.table(
            np.asarray(spec["x"], dtype=float),
            np.asarray(spec["y"], dtype=float),
            np.asarray(spec["values"], dtype=float),
            Q0=float(spec.get("Q0", 1.0)),
            rate=float(spec.get("rate", 0.0)),
        )
    raise ConfigInvalid(f"unknown schedule type {kind!r}")


def _probe_points(container: BoundaryCurve) -> np.ndarray:
    angles = np.linspace(0.0, 2 * np.pi, 24, endpoint=False)
    radii = np.linspace(0.05, 0.95, 8)
    rr, aa = np.meshgrid(radii, angles)
    scale = container.radius(aa.ravel())
    cx, cy = container.center
    return np.stack(
        [cx + rr.ravel() * scale * np.cos(aa.ravel()),
         cy + rr.ravel() * scale * np.sin(aa.ravel())],
        axis=-1,
    )


def _validate_schedule(cfg: RunConfig) -> None:
    """Positivity probe over the container, and declared-case sign check."""
    pts = _probe_points(cfg.container)
    horizon = cfg.flow_T if cfg.flow_T is not None else 0.0
    for t in np.linspace(0.0, horizon, 5) if horizon > 0 else [0.0]:
        q = cfg.schedule.value(pts, float(t))
        if np.any(q <= 0.0):
            raise ConfigInvalid(
                f"schedule is not positive on the probe grid at t={t:.3g} "
                f"(min {q.min():.3g})"
            )
    if cfg.flow_case is not None:
        sign = {"A": 1.0, "B": -1.0}[cfg.flow_case]
        for t in np.linspace(0.0, max(horizon, 0.0), 5):
            dq = cfg.schedule.time_deriv(pts, float(t))
            if np.any(sign * dq <= 0.0):
                raise ConfigInvalid(
                    f"case ({cfg.flow_case}) declared but dQ/dt has the wrong "
                    f"sign on the probe grid at t={t:.3g}"
                )


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc

    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigInvalid(f"mode must be one of {MODES}, got {mode!r}")
    cfg = RunConfig(mode=mode, raw=raw)

    numerics = raw.get("numerics", {})
    cfg.nodes = int(numerics.get("nodes", 128))
    cfg.newton_tol = float(numerics.get("newton_tol", 1e-9))
    cfg.newton_max_iter = int(numerics.get("max_iter", 25))
    cfg.k_max = int(numerics.get("k_max", 8))

    if mode == "oracle":
        oracle = raw.get("oracle", {})
        cfg.oracle_n = int(oracle.get("n", 2))
        cfg.oracle_Q_values = [float(q) for q in oracle.get("Q_values", [])]
        if not cfg.oracle_Q_values:
            raise ConfigInvalid("oracle mode needs oracle.Q_values")
        return cfg

    container = raw.get("container", "unit_disk")
    cfg.container = unit_circle() if container == "unit_disk" else _parse_curve(container)

    if "schedule" not in raw:
        raise ConfigInvalid(f"{mode} mode needs a schedule")
    try:
        cfg.schedule = _parse_schedule(raw["schedule"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad schedule spec: {exc}") from exc

    if mode == "branch":
        branch = raw.get("branch", {})
        cfg.branch_Q_values = [float(q) for q in branch.get("Q_values", [])]
        seeds = branch.get("seeds", [])
        if not cfg.branch_Q_values or not seeds:
            raise ConfigInvalid("branch mode needs branch.Q_values and branch.seeds")
        cfg.branch_seeds = [
            circle(float(s)) if isinstance(s, (int, float)) else _parse_curve(s)
            for s in seeds
        ]
    else:
        if "initial_curve" not in raw:
            raise ConfigInvalid(f"{mode} mode needs an initial_curve")
        cfg.initial_curve = _parse_curve(raw["initial_curve"])

    if mode == "flow":
        flow = raw.get("flow", {})
        if "T" not in flow:
            raise ConfigInvalid("flow mode needs flow.T")
        cfg.flow_T = float(flow["T"])
        case = flow.get("case")
        if case not in ("A", "B"):
            raise ConfigInvalid(
                f"flow mode needs flow.case 'A' or 'B', got {case!r}"
            )
        cfg.flow_case = case
        cfg.flow_opts = {
            k: float(numerics[k])
            for k in ("dt0", "dt_min", "dt_max", "drift_tol")
            if k in numerics
        }

    if mode == "moments" and cfg.container != unit_circle():
        raise ConfigInvalid("moments mode requires the unit_disk container")

    _validate_schedule(cfg)
    return cfg


def _curve_summary(curve: BoundaryCurve) -> dict:
    return {
        "curve": curve.to_dict(),
        "area": curve.enclosed_area(),
        "equivalent_radius": curve.equivalent_radius(),
    }


def _state_summary(state) -> dict:
    info = _curve_summary(state.curve)
    info.update(
        {
            "t": state.t,
            "residual_norm": state.residual_norm,
            "converged": state.converged,
            "warnings": list(state.warnings),
            "classification": state.classification.to_dict()
            if state.classification
            else None,
        }
    )
    return info


def _write_state_files(run_dir: Path, states) -> None:
    (run_dir / "states").mkdir(parents=True, exist_ok=True)
    for i, st in enumerate(states):
        (run_dir / "states" / f"{i:04d}.json").write_text(
            json.dumps(_state_summary(st), indent=1, sort_keys=True)
        )


def _run_solve(cfg: RunConfig, run_dir: Path, do_classify: bool) -> dict:
    domain = AnnularDomain.create(cfg.container, cfg.initial_curve, cfg.nodes, cfg.nodes)
    state = newton_correct(
        eval_F(domain, cfg.schedule, 0.0),
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
    )
    if do_classify:
        classify(state)
    _write_state_files(run_dir, [state])
    return {"terminal": _state_summary(state)}


def _run_branch(cfg: RunConfig, run_dir: Path) -> dict:
    rows = branch_sweep(
        cfg.container,
        cfg.branch_Q_values,
        cfg.branch_seeds,
        N=cfg.nodes,
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
    )
    with open(run_dir / "branch.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Q", "seed", "status", "equivalent_radius", "area", "kind", "margin"])
        for row in rows:
            writer.writerow(
                [
                    f"{row['Q']:.12g}",
                    row["seed"],
                    row["status"],
                    f"{row['equivalent_radius']:.12g}",
                    f"{row['area']:.12g}",
                    row["kind"],
                    f"{row['margin']:.6e}",
                ]
            )
    converged = sum(1 for r in rows if r["status"] == "Converged")
    return {"rows": rows, "converged_rows": converged, "total_rows": len(rows)}


def _run_flow_mode(cfg: RunConfig, run_dir: Path) -> dict:
    domain = AnnularDomain.create(cfg.container, cfg.initial_curve, cfg.nodes, cfg.nodes)
    state0 = newton_correct(
        eval_F(domain, cfg.schedule, 0.0),
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
    )
    opts = FlowOptions(
        case=cfg.flow_case,
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
        moment_kmax=cfg.k_max,
        **cfg.flow_opts,
    )
    traj = run_flow(state0, cfg.schedule, cfg.flow_T, opts)
    traj.save(run_dir)
    return {
        "terminal": _state_summary(traj.terminal),
        "halt_reason": traj.halt_reason,
        "steps": len(traj.times) - 1,
        "final_time": traj.times[-1],
    }


def _run_oracle(cfg: RunConfig, run_dir: Path) -> dict:
    from .radial import radial_branch_roots

    rows = []
    for q in cfg.oracle_Q_values:
        roots = radial_branch_roots(q, cfg.oracle_n)
        if roots is None:
            rows.append({"Q": q, "r_lower": None, "r_upper": None})
        elif isinstance(roots, tuple):
            rows.append({"Q": q, "r_lower": roots[0].r, "r_upper": roots[1].r})
        else:
            rows.append({"Q": q, "r_lower": roots.r, "r_upper": roots.r})
    with open(run_dir / "oracle.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Q", "r_lower", "r_upper"])
        for row in rows:
            writer.writerow(
                [
                    f"{row['Q']:.12g}",
                    "" if row["r_lower"] is None else f"{row['r_lower']:.12g}",
                    "" if row["r_upper"] is None else f"{row['r_upper']:.12g}",
                ]
            )
    return {"rows": rows}


def _run_moments(cfg: RunConfig, run_dir: Path) -> dict:
    domain = AnnularDomain.create(cfg.container, cfg.initial_curve, cfg.nodes, cfg.nodes)
    state = eval_F(domain, cfg.schedule, 0.0)
    basis = harmonic_test_basis(cfg.k_max)
    mv = moments(state, basis)
    _write_state_files(run_dir, [state])
    return {
        "moments": mv.as_dict(),
        "max_quadrature_residual": max_quadrature_residual(state, basis),
        "residual_norm": state.residual_norm,
    }


def run_config(config_path: str | Path, out_dir: str | Path, verbose: bool = False) -> int:
    """Execute one configured run; returns the process exit status."""
    run_dir = Path(out_dir)
    started = time.monotonic()
    summary: dict = {"status": "ok", "error": None}
    status = 0
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        cfg = load_config(config_path)
        summary["mode"] = cfg.mode
        (run_dir / "config-echo.json").write_text(
            json.dumps(cfg.raw, indent=1, sort_keys=True)
        )
        log.info("mode=%s nodes=%s out=%s", cfg.mode, cfg.nodes, run_dir)
        if cfg.mode in ("solve", "classify"):
            summary.update(_run_solve(cfg, run_dir, do_classify=cfg.mode == "classify"))
        elif cfg.mode == "branch":
            summary.update(_run_branch(cfg, run_dir))
        elif cfg.mode == "flow":
            summary.update(_run_flow_mode(cfg, run_dir))
        elif cfg.mode == "oracle":
            summary.update(_run_oracle(cfg, run_dir))
        elif cfg.mode == "moments":
            summary.update(_run_moments(cfg, run_dir))
    except ConfigError as exc:
        summary.update({"status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}})
        status = 2
    except SolverError as exc:
        summary.update({"status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}})
        status = 3
    except OSError as exc:
        summary.update({"status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}})
        status = 4

    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "summary.json").write_text(
            json.dumps(_plain(summary), indent=1, sort_keys=True)
        )
        (run_dir / "timing.json").write_text(
            json.dumps({"wall_time_s": time.monotonic() - started})
        )
    except OSError:
        return 4
    if status:
        log.error("run failed: %s", summary["error"])
    return status


def _plain(obj):
    """Recursively convert numpy scalars for deterministic JSON output."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj]
    return obj


def emit_plot_data(run_dir: str | Path) -> list[Path]:
    """Derive plot-ready CSV files (curves, branch, drift) from a run."""
    run_dir = Path(run_dir)
    if not (run_dir / "summary.json").exists():
        raise MissingArtifacts(f"{run_dir} has no summary.json")
    written: list[Path] = []

    state_files = sorted((run_dir / "states").glob("*.json"))
    if state_files:
        path = run_dir / "curves.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["snapshot", "t", "theta", "x", "y"])
            for i, sf in enumerate(state_files):
                record = json.loads(sf.read_text())
                curve = BoundaryCurve.from_dict(record["curve"])
                theta = np.linspace(0.0, 2 * np.pi, 181)
                pts = curve.points(theta)
                for th, (x, y) in zip(theta, pts):
                    writer.writerow(
                        [i, f"{record['t']:.12g}", f"{th:.10g}", f"{x:.12g}", f"{y:.12g}"]
                    )
        written.append(path)

    diag = run_dir / "diagnostics.csv"
    if diag.exists():
        path = run_dir / "drift.csv"
        with open(diag) as fh:
            rows = list(csv.DictReader(fh))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "drift"])
            for row in rows:
                writer.writerow([row["t"], row["drift"]])
        written.append(path)

    if (run_dir / "branch.csv").exists():
        written.append(run_dir / "branch.csv")

    if not written:
        raise MissingArtifacts(f"{run_dir} has no states, diagnostics or branch table")
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bernoulli-fbp",
        description="Free-boundary solver, classifier and family tracer",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a {mode} config")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--verbose", action="store_true")
    p = sub.add_parser("report", help="emit plot CSVs and figures for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--verbose", action="store_true")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )

    if args.command == "report":
        from .report import render_report

        try:
            written = render_report(args.run)
        except MissingArtifacts as exc:
            log.error("%s", exc)
            return 3
        except OSError as exc:
            log.error("%s", exc)
            return 4
        for path in written:
            log.info("wrote %s", path)
        return 0

    try:
        cfg_mode = json.loads(Path(args.config).read_text()).get("mode")
    except (OSError, json.JSONDecodeError):
        cfg_mode = None
    if cfg_mode is not None and cfg_mode != args.command:
        log.error("config mode %r does not match subcommand %r", cfg_mode, args.command)
        return 2
    return run_config(args.config, args.out, verbose=getattr(args, "verbose", False))


if __name__ == "__main__":
    sys.exit(main())
