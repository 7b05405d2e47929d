"""Command-line runner and CSV persistence.

    phasecontrol <simulate|optimize|audit|gradient-check> --config FILE
                 [--out DIR] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 audit failure.  All CSV output is deterministic for a fixed config and
seed: rows are ordered time-major then by flat node index, and floats are
written with shortest round-trip formatting.  PHASECONTROL_LOG_LEVEL
controls logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, parse_config
from .errors import ConfigurationError, PhaseControlError
from .grids import Field, TimeField, Trajectory
from .optimizer import classify_bang_bang, optimize
from .state import solve_state
from .verify import AuditReport, fd_gradient_oracle, run_standard_audits, smooth_direction

log = logging.getLogger("phasecontrol")


def _fmt(value: float) -> str:
    return repr(float(value))


def export_field_csv(field: Field, path, t: float = 0.0):
    """One row per node: t, coordinates, value."""
    coords = field.grid.coords(field.kind)
    header = "t,x,value" if field.grid.dim == 1 else "t,x,y,value"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(field.values.size):
            cols = [_fmt(t)] + [_fmt(c[i]) for c in coords] + [_fmt(field.values[i])]
            fh.write(",".join(cols) + "\n")


def export_time_field_csv(tf: TimeField, path):
    """All levels, time-major then node index."""
    coords = tf.grid.coords(tf.kind)
    header = "t,x,value" if tf.grid.dim == 1 else "t,x,y,value"
    times = tf.grid.times
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for n in range(tf.n_levels):
            trep = _fmt(times[n])
            row = tf.values[n]
            for i in range(row.size):
                cols = [trep] + [_fmt(c[i]) for c in coords] + [_fmt(row[i])]
                fh.write(",".join(cols) + "\n")


def export_history_csv(history, path):
    cols = (
        "iteration,cost,interface_cost,temperature_cost,residual,"
        "step_size,backtracks,newton_iterations"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cols + "\n")
        for rec in history:
            fh.write(
                ",".join(
                    [
                        str(rec.iteration),
                        _fmt(rec.cost),
                        _fmt(rec.interface_cost),
                        _fmt(rec.temperature_cost),
                        _fmt(rec.residual),
                        _fmt(rec.step_size),
                        str(rec.backtracks),
                        str(rec.newton_iterations),
                    ]
                )
                + "\n"
            )


def export_report_csv(reports: list[AuditReport], path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("name,value,threshold,passed,runtime_seconds,seed,details\n")
        for r in reports:
            details = r.details.replace(",", ";")
            fh.write(
                f"{r.name},{_fmt(r.value)},{_fmt(r.threshold)},{int(r.passed)},"
                f"{_fmt(r.runtime_seconds)},{r.seed},{details}\n"
            )


def export_matrix(tf: TimeField, path):
    """Gnuplot nonuniform-matrix layout (1D fields): row 0 holds the node
    coordinates, then one row per time level prefixed by its time."""
    if tf.grid.dim != 1:
        raise ConfigurationError("matrix export is for 1D space-time fields")
    xs = tf.grid.coords(tf.kind)[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(" ".join([str(xs.size)] + [_fmt(v) for v in xs]) + "\n")
        for n in range(tf.n_levels):
            fh.write(
                " ".join([_fmt(tf.grid.times[n])] + [_fmt(v) for v in tf.values[n]])
                + "\n"
            )


def export_csv(obj, path, **kwargs):
    """Type-dispatching convenience wrapper used by the run modes."""
    if isinstance(obj, Trajectory):
        base = Path(path)
        export_time_field_csv(obj.theta, base / "theta.csv")
        export_time_field_csv(obj.phi, base / "phi.csv")
        export_time_field_csv(obj.xi, base / "xi.csv")
        return
    if isinstance(obj, TimeField):
        export_time_field_csv(obj, path)
    elif isinstance(obj, Field):
        export_field_csv(obj, path, **kwargs)
    elif isinstance(obj, list) and obj and isinstance(obj[0], AuditReport):
        export_report_csv(obj, path)
    elif isinstance(obj, list):
        export_history_csv(obj, path)
    else:
        raise ConfigurationError(f"no CSV exporter for {type(obj).__name__}")


def _write_manifest(out_dir: Path, scenario: Scenario, mode: str, artifacts):
    import scipy

    manifest = {
        "mode": mode,
        "config_path": scenario.config.path,
        "config_sha256": scenario.config.sha256,
        "seed": scenario.seed,
        "artifacts": sorted(artifacts),
        "versions": {
            "phasecontrol": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mode_simulate(scenario: Scenario, out_dir: Path) -> int:
    traj = solve_state(scenario.problem, scenario.newton, scenario.u)
    export_csv(traj, out_dir)
    artifacts = ["theta.csv", "phi.csv", "xi.csv"]
    if scenario.grid.dim == 1:
        export_matrix(traj.phi, out_dir / "phi_matrix.dat")
        artifacts.append("phi_matrix.dat")
    _write_manifest(out_dir, scenario, "simulate", artifacts)
    log.info("forward solve finished: %d steps", scenario.grid.n_time_steps)
    return 0


def _mode_optimize(scenario: Scenario, out_dir: Path) -> int:
    result = optimize(
        scenario.problem,
        scenario.objective,
        scenario.box,
        scenario.pg,
        scenario.u_init,
        scenario.newton,
    )
    export_history_csv(result.history, out_dir / "history.csv")
    export_time_field_csv(result.u, out_dir / "u_opt.csv")
    export_csv(result.trajectory, out_dir)
    export_time_field_csv(result.adjoint.p, out_dir / "adjoint_p.csv")
    report = classify_bang_bang(
        scenario.box, result.u, result.adjoint, scenario.problem, scenario.pg.tol_p
    )
    with open(out_dir / "bangbang.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"classified={report.n_classified} violations={report.n_violations} "
            f"fraction={_fmt(report.violation_fraction)}\n"
        )
    _write_manifest(
        out_dir,
        scenario,
        "optimize",
        [
            "history.csv",
            "u_opt.csv",
            "theta.csv",
            "phi.csv",
            "xi.csv",
            "adjoint_p.csv",
            "bangbang.txt",
        ],
    )
    print(
        f"status={result.status} iterations={len(result.history)} "
        f"cost={result.final_cost:.8e} residual={result.final_residual:.3e}"
    )
    return 0 if result.status == "converged" else 3


def _mode_gradient_check(scenario: Scenario, out_dir: Path) -> int:
    rng = np.random.default_rng(scenario.seed)
    h = smooth_direction(scenario.grid, rng)
    s = scenario.tolerances.get("gradient_fd_step", 1e-3)
    table = fd_gradient_oracle(
        scenario.problem,
        scenario.objective,
        scenario.u,
        h,
        [4 * s, 2 * s, s],
        scenario.newton,
    )
    with open(out_dir / "gradient_check.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,fd_value,adjoint_value,rel_error,note\n")
        for row in table.rows:
            fh.write(
                f"{_fmt(row.s)},{_fmt(row.fd_value)},{_fmt(row.adjoint_value)},"
                f"{_fmt(row.rel_error)},{row.note}\n"
            )
    _write_manifest(out_dir, scenario, "gradient-check", ["gradient_check.csv"])
    ratios = table.remainder_ratios()
    print(f"rel_error={table.rows[-1].rel_error:.3e} richardson_ratios={ratios}")
    return 0


def _mode_audit(scenario: Scenario, out_dir: Path) -> int:
    checks = scenario.checks or ["duality", "gradient", "energy", "contdep"]
    reports = run_standard_audits(scenario, checks, scenario.seed, scenario.tolerances)
    export_report_csv(reports, out_dir / "audit_report.csv")
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"[{status}] {r.name}: value={r.value:.6g} threshold={r.threshold:.6g} "
            f"({r.runtime_seconds:.2f}s) {r.details}"
        )
    summary = "\n".join(lines) + "\n"
    with open(out_dir / "audit_summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary)
    _write_manifest(out_dir, scenario, "audit", ["audit_report.csv", "audit_summary.txt"])
    print(summary, end="")
    return 0 if all(r.passed for r in reports) else 4


_MODES = {
    "simulate": _mode_simulate,
    "optimize": _mode_optimize,
    "gradient-check": _mode_gradient_check,
    "audit": _mode_audit,
}


def run_scenario(config, mode: str, out_dir=None, seed=None) -> int:
    """Execute one run mode for a parsed configuration; returns the exit code."""
    try:
        scenario = config.build()
        if seed is not None:
            scenario.seed = int(seed)
        target = Path(out_dir if out_dir is not None else scenario.output_dir)
        target.mkdir(parents=True, exist_ok=True)
        return _MODES[mode](scenario, target)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PhaseControlError as exc:
        print(f"solver failure in mode {mode}: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phasecontrol",
        description="Optimal control of a two-field phase transition model",
    )
    parser.add_argument("mode", choices=sorted(_MODES))
    parser.add_argument("--config", required=True, help="scenario TOML file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("PHASECONTROL_LOG_LEVEL", "WARNING"))

    try:
        config = parse_config(args.config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run_scenario(config, args.mode, out_dir=args.out, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
