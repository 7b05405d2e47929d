import json
from pathlib import Path

import numpy as np
import pytest

from phasecontrol.cli import (
    export_field_csv,
    export_matrix,
    export_time_field_csv,
    main,
)
from phasecontrol.config import FieldExpression, load_field_csv, parse_config
from phasecontrol.errors import ConfigurationError
from phasecontrol.grids import DIRICHLET, NEUMANN, Field, TimeField, build_grid

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "phasecontrol" / "scenarios"


def demo_text():
    return (SCENARIOS / "demo.toml").read_text()


@pytest.mark.parametrize("name", ["demo.toml", "logarithmic.toml", "obstacle.toml"])
def test_shipped_scenarios_parse(name):
    config = parse_config(SCENARIOS / name)
    scenario = config.build()
    assert scenario.grid.n_time_steps >= 1
    assert scenario.u.values.shape[0] == scenario.grid.n_time_steps + 1


def write_config(tmp_path, text):
    path = tmp_path / "case.toml"
    path.write_text(text)
    return path


def test_negative_kappa_rejected(tmp_path):
    bad = demo_text().replace("kappa = 0.0", "kappa = -1.0")
    with pytest.raises(ConfigurationError):
        parse_config(write_config(tmp_path, bad))


def test_bounds_ordering_rejected(tmp_path):
    bad = demo_text().replace("u_min = -5.0", "u_min = 6.0")
    with pytest.raises(ConfigurationError):
        parse_config(write_config(tmp_path, bad))


def test_unknown_key_rejected(tmp_path):
    bad = demo_text().replace("kappa = 0.0", "kappa = 0.0\nshiny = 1")
    with pytest.raises(ConfigurationError, match="shiny"):
        parse_config(write_config(tmp_path, bad))


def test_missing_key_named(tmp_path):
    bad = demo_text().replace("t_final = 1.0\n", "")
    with pytest.raises(ConfigurationError, match="t_final"):
        parse_config(write_config(tmp_path, bad))


def test_expression_whitelist():
    expr = FieldExpression("sin(pi*x) * cos(2.0*t) + 0.5")
    xs = np.array([0.0, 0.5, 1.0])
    vals = expr(0.0, (xs,))
    assert vals == pytest.approx([0.5, 1.5, 0.5], abs=1e-14)
    box = FieldExpression("box(0.25, 0.75, 0.25, 0.75)")
    assert box(0.5, (np.array([0.5]),))[0] == 1.0
    assert box(0.1, (np.array([0.5]),))[0] == 0.0
    ball = FieldExpression("ball(0.0, 1.0, 0.5, 0.2)")
    assert ball(0.5, (np.array([0.6]),))[0] == 1.0
    assert ball(0.5, (np.array([0.9]),))[0] == 0.0


@pytest.mark.parametrize(
    "text",
    [
        "__import__('os').system('true')",
        "x.__class__",
        "lambda: 1",
        "open('x')",
        "t if x else 0",
    ],
)
def test_expression_rejects_unsafe(text):
    with pytest.raises(ConfigurationError):
        FieldExpression(text)


def test_field_csv_round_trip(tmp_path):
    grid = build_grid(1.0, 8, 4, 1.0)
    rng = np.random.default_rng(53)
    tf = TimeField(grid, NEUMANN, np.pi * rng.standard_normal((5, 9)))
    path = tmp_path / "field.csv"
    export_time_field_csv(tf, path)
    loaded = load_field_csv(path, grid, NEUMANN)
    assert np.array_equal(loaded.values, tf.values)

    f = Field(grid, DIRICHLET, rng.standard_normal(7) / 3.0)
    path2 = tmp_path / "static.csv"
    export_field_csv(f, path2)
    loaded2 = load_field_csv(path2, grid, DIRICHLET)
    assert np.array_equal(loaded2.values, f.values)


def test_matrix_export_shape(tmp_path):
    grid = build_grid(1.0, 8, 4, 1.0)
    tf = TimeField.full(grid, NEUMANN, 2.0)
    path = tmp_path / "phi.dat"
    export_matrix(tf, path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 1 + 5  # coordinate row plus one row per level
    assert len(lines[0].split()) == 1 + 9
    assert len(lines[1].split()) == 1 + 9


def _stationary_config(tmp_path, out_name):
    text = demo_text().replace("phi0 = 0.25", "phi0 = 1.0")
    text = text.replace('u = "sin(pi*x)*cos(2.0*t)"', 'u = 0.0')
    text = text.replace("n_cells = 64", "n_cells = 8").replace(
        "n_time_steps = 64", "n_time_steps = 4"
    )
    text = text.replace('directory = "out_demo"', f'directory = "{out_name}"')
    return write_config(tmp_path, text)


def test_cli_simulate_stationary(tmp_path, capsys):
    path = _stationary_config(tmp_path, "outA")
    out = tmp_path / "outA"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    phi_rows = (out / "phi.csv").read_text().strip().split("\n")
    assert phi_rows[0] == "t,x,value"
    values = {row.split(",")[2] for row in phi_rows[1:]}
    assert values == {"1.0"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["mode"] == "simulate"
    assert len(manifest["config_sha256"]) == 64


def test_cli_deterministic_outputs(tmp_path):
    path = _stationary_config(tmp_path, "outB")
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["simulate", "--config", str(path), "--out", str(out1)]) == 0
    assert main(["simulate", "--config", str(path), "--out", str(out2)]) == 0
    for name in ("theta.csv", "phi.csv", "xi.csv", "phi_matrix.dat"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_config_error_exit_code(tmp_path):
    missing = tmp_path / "nope.toml"
    assert main(["simulate", "--config", str(missing)]) == 2
    bad = write_config(tmp_path, demo_text().replace("kappa = 0.0", "kappa = -2.0"))
    assert main(["simulate", "--config", str(bad)]) == 2


def test_cli_gradient_check(tmp_path):
    text = demo_text().replace("n_cells = 64", "n_cells = 16").replace(
        "n_time_steps = 64", "n_time_steps = 16"
    )
    path = write_config(tmp_path, text)
    out = tmp_path / "gc"
    assert main(["gradient-check", "--config", str(path), "--out", str(out)]) == 0
    rows = (out / "gradient_check.csv").read_text().strip().split("\n")
    assert rows[0].startswith("s,fd_value,adjoint_value,rel_error")
    last = rows[-1].split(",")
    assert float(last[3]) <= 1e-6


def test_cli_audit_failure_exit_code(tmp_path):
    # an unattainable tolerance must flip the audit to FAIL and exit 4
    text = demo_text().replace("n_cells = 64", "n_cells = 16").replace(
        "n_time_steps = 64", "n_time_steps = 16"
    )
    text = text.replace(
        'checks = ["duality", "gradient", "energy", "contdep", "mms", "theta_linf"]',
        'checks = ["energy"]\nenergy_defect = 1e-30',
    )
    path = write_config(tmp_path, text)
    out = tmp_path / "audit"
    assert main(["audit", "--config", str(path), "--out", str(out)]) == 4
    report = (out / "audit_report.csv").read_text()
    assert "energy" in report


def test_cli_audit_passes_small(tmp_path):
    text = demo_text().replace("n_cells = 64", "n_cells = 16").replace(
        "n_time_steps = 64", "n_time_steps = 16"
    )
    text = text.replace(
        'checks = ["duality", "gradient", "energy", "contdep", "mms", "theta_linf"]',
        'checks = ["duality", "energy"]',
    )
    path = write_config(tmp_path, text)
    out = tmp_path / "audit_ok"
    assert main(["audit", "--config", str(path), "--out", str(out)]) == 0
    summary = (out / "audit_summary.txt").read_text()
    assert summary.count("[PASS]") == 2


def test_file_field_spec(tmp_path):
    grid = build_grid(1.0, 8, 4, 1.0)
    chi = TimeField.full(grid, NEUMANN, 0.25)
    export_time_field_csv(chi, tmp_path / "chi.csv")
    text = demo_text().replace("n_cells = 64", "n_cells = 8").replace(
        "n_time_steps = 64", "n_time_steps = 4"
    )
    text = text.replace('chi = "box(0.25, 0.75, 0.25, 0.75)"', 'chi = "file:chi.csv"')
    path = write_config(tmp_path, text)
    scenario = parse_config(path).build()
    assert np.array_equal(scenario.objective.chi.values, chi.values)


def test_scenario_on_grid_rebuilds():
    config = parse_config(SCENARIOS / "demo.toml")
    scenario = config.build()
    finer = build_grid(1.0, 128, 64, 1.0)
    rebuilt = scenario.on_grid(finer)
    assert rebuilt.grid.n_cells == (128,)
    assert rebuilt.problem.phi0.values.shape == (129,)


def test_cli_two_dimensional_simulate(tmp_path):
    text = demo_text().replace("length = 1.0", "length = [1.0, 1.0]")
    text = text.replace("n_cells = 64", "n_cells = [6, 6]").replace(
        "n_time_steps = 64", "n_time_steps = 4"
    )
    text = text.replace(
        'u = "sin(pi*x)*cos(2.0*t)"', 'u = "sin(pi*x)*sin(pi*y)*cos(2.0*t)"'
    )
    text = text.replace(
        'chi = "box(0.25, 0.75, 0.25, 0.75)"',
        'chi = "box(0.25, 0.75, 0.25, 0.75, 0.25, 0.75)"',
    )
    path = write_config(tmp_path, text)
    out = tmp_path / "out2d"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    header = (out / "phi.csv").read_text().split("\n", 1)[0]
    assert header == "t,x,y,value"


def test_audit_theta_linf_refinement(tmp_path):
    text = demo_text().replace("n_cells = 64", "n_cells = 16").replace(
        "n_time_steps = 64", "n_time_steps = 16"
    )
    text = text.replace(
        'checks = ["duality", "gradient", "energy", "contdep", "mms", "theta_linf"]',
        'checks = ["theta_linf"]',
    )
    path = write_config(tmp_path, text)
    out = tmp_path / "linf"
    assert main(["audit", "--config", str(path), "--out", str(out)]) == 0
    assert "[PASS] theta_linf" in (out / "audit_summary.txt").read_text()


def test_seed_override_changes_gradient_check(tmp_path):
    text = demo_text().replace("n_cells = 64", "n_cells = 8").replace(
        "n_time_steps = 64", "n_time_steps = 4"
    )
    path = write_config(tmp_path, text)
    out1, out2, out3 = tmp_path / "s1", tmp_path / "s2", tmp_path / "s3"
    assert main(["gradient-check", "--config", str(path), "--out", str(out1), "--seed", "1"]) == 0
    assert main(["gradient-check", "--config", str(path), "--out", str(out2), "--seed", "2"]) == 0
    assert main(["gradient-check", "--config", str(path), "--out", str(out3), "--seed", "1"]) == 0
    a = (out1 / "gradient_check.csv").read_bytes()
    b = (out2 / "gradient_check.csv").read_bytes()
    c = (out3 / "gradient_check.csv").read_bytes()
    assert a != b and a == c
