"""Scenario configuration.

Run configurations are TOML files with the sections

    [grid] [potential] [problem] [objective] [box]
    [optimizer] [newton] [audit] [output] [run]

Unknown keys are rejected.  Data fields (m, theta0, phi0, u, chi, theta_q,
u_min, u_max, u_init) accept a number (constant), an expression string over
``t, x, y, pi`` using ``sin cos exp sqrt tanh abs`` plus the indicator
helpers ``box(t0,t1,x0,x1[,y0,y1])`` and ``ball(t0,t1,cx[,cy],r)``, or
``file:path.csv`` pointing at a previously exported field file.  The full
schema is documented in the README.
"""

from __future__ import annotations

import ast
import hashlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .grids import DIRICHLET, NEUMANN, Field, Grid, TimeField, build_grid
from .objective import ObjectiveSpec
from .optimizer import ControlBox, PGSettings
from .potentials import PotentialSpec
from .state import NewtonSettings, StateProblem
from .verify import DEFAULT_TOLERANCES

_ALLOWED_KEYS = {
    "grid": {"length", "n_cells", "n_time_steps", "t_final", "max_space_time_nodes"},
    "potential": {"kind", "c", "eps_yosida", "domain_margin"},
    "problem": {"ell", "m", "theta0", "phi0", "u"},
    "objective": {"kappa", "eps_g", "lambda_g", "chi", "theta_q", "g_mode"},
    "box": {"u_min", "u_max"},
    "optimizer": {
        "step0",
        "armijo_slope",
        "backtrack_factor",
        "max_backtracks",
        "max_iterations",
        "tol_stationarity",
        "tol_p",
        "u_init",
    },
    "newton": {"tol_residual", "max_iter", "damping", "max_backtracks", "domain_guard"},
    "audit": {"checks"} | set(DEFAULT_TOLERANCES),
    "output": {"directory", "formats"},
    "run": {"seed"},
}
_REQUIRED = {
    "grid": {"length", "n_cells", "n_time_steps", "t_final"},
    "potential": {"kind"},
    "problem": {"ell", "m", "theta0", "phi0"},
    "objective": {"kappa", "eps_g", "lambda_g", "chi", "theta_q"},
    "box": {"u_min", "u_max"},
}

# -- expression mini-language ------------------------------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
}
_NAMES = {"x", "y", "t", "pi"}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _validate_expr(node: ast.AST, text: str):
    if isinstance(node, ast.Expression):
        return _validate_expr(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return
    elif isinstance(node, ast.Name):
        if node.id in _NAMES:
            return
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _validate_expr(node.left, text)
        _validate_expr(node.right, text)
        return
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _validate_expr(node.operand, text)
        return
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id in _FUNCS or node.func.id in ("box", "ball"):
            if node.keywords:
                raise ConfigurationError(f"no keyword arguments in {text!r}")
            for arg in node.args:
                _validate_expr(arg, text)
            return
    raise ConfigurationError(f"disallowed construct in field expression {text!r}")


class FieldExpression:
    """Compiled whitelisted expression, evaluable on grid coordinates."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"cannot parse field expression {text!r}: {exc}")
        _validate_expr(tree, text)
        self._code = compile(tree, "<field expression>", "eval")

    def __call__(self, t, coords):
        dim = len(coords)
        x = coords[0]
        y = coords[1] if dim == 2 else 0.0

        def box(*args):
            if len(args) != 2 + 2 * dim:
                raise ConfigurationError(
                    f"box() takes {2 + 2 * dim} arguments in {dim}D"
                )
            inside = (t >= args[0]) & (t <= args[1]) & (x >= args[2]) & (x <= args[3])
            if dim == 2:
                inside = inside & (y >= args[4]) & (y <= args[5])
            return np.where(inside, 1.0, 0.0)

        def ball(*args):
            if len(args) != 3 + dim:
                raise ConfigurationError(
                    f"ball() takes {3 + dim} arguments in {dim}D (t0, t1, center.., r)"
                )
            if dim == 1:
                t0, t1, cx, r = args
                dist2 = (x - cx) ** 2
            else:
                t0, t1, cx, cy, r = args
                dist2 = (x - cx) ** 2 + (y - cy) ** 2
            inside = (t >= t0) & (t <= t1) & (dist2 <= r * r)
            return np.where(inside, 1.0, 0.0)

        env = {"__builtins__": {}}
        env.update(_FUNCS)
        env.update({"x": x, "y": y, "t": t, "pi": math.pi, "box": box, "ball": ball})
        return eval(self._code, env)  # noqa: S307 - tree validated against whitelist


@dataclass
class FieldSpec:
    """Constant, expression or CSV-file description of a datum."""

    raw: object
    base_dir: Path

    def static(self, grid: Grid, kind: str) -> Field:
        if isinstance(self.raw, (int, float)):
            return Field.full(grid, kind, float(self.raw))
        if isinstance(self.raw, str) and self.raw.startswith("file:"):
            loaded = load_field_csv(self.base_dir / self.raw[5:], grid, kind)
            if isinstance(loaded, TimeField):
                return loaded.level(0)
            return loaded
        expr = FieldExpression(str(self.raw))
        coords = grid.coords(kind)
        vals = np.broadcast_to(
            np.asarray(expr(0.0, coords), dtype=float), (grid.n_nodes(kind),)
        )
        return Field(grid, kind, vals.copy())

    def time_indexed(self, grid: Grid, kind: str) -> TimeField:
        if isinstance(self.raw, (int, float)):
            return TimeField.full(grid, kind, float(self.raw))
        if isinstance(self.raw, str) and self.raw.startswith("file:"):
            loaded = load_field_csv(self.base_dir / self.raw[5:], grid, kind)
            if isinstance(loaded, Field):
                return TimeField(
                    grid, kind, np.tile(loaded.values, (grid.n_time_steps + 1, 1))
                )
            return loaded
        expr = FieldExpression(str(self.raw))
        coords = grid.coords(kind)
        n = grid.n_nodes(kind)
        rows = [
            np.broadcast_to(np.asarray(expr(t, coords), dtype=float), (n,))
            for t in grid.times
        ]
        return TimeField(grid, kind, np.array(rows))


def load_field_csv(path: Path, grid: Grid, kind: str):
    """Load a field file written by the CSV exporter (t, x[, y], value)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"field data file {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    expected_cols = 2 + grid.dim
    if len(header) != expected_cols:
        raise ConfigurationError(
            f"{path}: expected {expected_cols} columns (t, coordinates, value)"
        )
    n = grid.n_nodes(kind)
    values = np.array([float(r[-1]) for r in rows])
    times = np.array([float(r[0]) for r in rows])
    if values.size == n and np.allclose(times, times[0]):
        return Field(grid, kind, values)
    if values.size == (grid.n_time_steps + 1) * n:
        return TimeField(grid, kind, values.reshape(grid.n_time_steps + 1, n))
    raise ConfigurationError(
        f"{path}: {values.size} rows match neither one level ({n}) nor all "
        f"levels ({(grid.n_time_steps + 1) * n}) of the configured grid"
    )


# -- configuration object ----------------------------------------------


@dataclass
class Scenario:
    """Everything instantiated on a concrete grid, ready to solve."""

    config: "RunConfig"
    grid: Grid
    problem: StateProblem
    objective: ObjectiveSpec
    box: ControlBox
    pg: PGSettings
    newton: NewtonSettings
    u: TimeField
    u_init: TimeField
    checks: list[str]
    tolerances: dict
    seed: int
    output_dir: str
    formats: list[str]

    def on_grid(self, grid: Grid) -> "Scenario":
        return self.config.build(grid)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    sha256: str
    path: str = ""

    def _section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def _spec(self, section: str, key: str, default=None) -> FieldSpec:
        sec = self._section(section)
        if key not in sec:
            if default is None:
                raise ConfigurationError(f"missing mandatory key [{section}] {key}")
            return FieldSpec(default, self.base_dir)
        return FieldSpec(sec[key], self.base_dir)

    def make_grid(self) -> Grid:
        g = self._section("grid")
        return build_grid(
            g["length"],
            g["n_cells"],
            g["n_time_steps"],
            g["t_final"],
            g.get("max_space_time_nodes", 50_000_000),
        )

    def build(self, grid: Grid | None = None) -> Scenario:
        grid = grid or self.make_grid()

        p = self._section("potential")
        potential = PotentialSpec(
            p["kind"],
            c=float(p.get("c", 1.0)),
            eps_yosida=p.get("eps_yosida"),
            domain_margin=float(p.get("domain_margin", 1e-9)),
        )

        pr = self._section("problem")
        problem = StateProblem(
            grid,
            potential,
            float(pr["ell"]),
            self._spec("problem", "m").static(grid, NEUMANN),
            self._spec("problem", "theta0").static(grid, DIRICHLET),
            self._spec("problem", "phi0").static(grid, NEUMANN),
        )

        ob = self._section("objective")
        objective = ObjectiveSpec(
            float(ob["kappa"]),
            float(ob["eps_g"]),
            float(ob["lambda_g"]),
            self._spec("objective", "chi").time_indexed(grid, NEUMANN),
            self._spec("objective", "theta_q").time_indexed(grid, DIRICHLET),
            g_mode=ob.get("g_mode", "smoothed"),
        )

        box = ControlBox(
            self._spec("box", "u_min").time_indexed(grid, DIRICHLET),
            self._spec("box", "u_max").time_indexed(grid, DIRICHLET),
        )

        op = dict(self._section("optimizer"))
        u_init_spec = op.pop("u_init", None)
        pg = PGSettings(**op)
        newton = NewtonSettings(**self._section("newton"))

        u = self._spec("problem", "u", default=0.0).time_indexed(grid, DIRICHLET)
        if u_init_spec is not None:
            u_init = FieldSpec(u_init_spec, self.base_dir).time_indexed(grid, DIRICHLET)
        else:
            u_init = box.midpoint()

        au = dict(self._section("audit"))
        checks = list(au.pop("checks", []))
        tolerances = {k: float(v) for k, v in au.items()}

        out = self._section("output")
        run = self._section("run")
        return Scenario(
            self,
            grid,
            problem,
            objective,
            box,
            pg,
            newton,
            u,
            u_init,
            checks,
            tolerances,
            int(run.get("seed", 0)),
            out.get("directory", "out"),
            list(out.get("formats", ["csv"])),
        )


def _check_schema(raw: dict):
    for section, table in raw.items():
        if section not in _ALLOWED_KEYS:
            raise ConfigurationError(f"unknown configuration section [{section}]")
        if not isinstance(table, dict):
            raise ConfigurationError(f"section [{section}] must be a table")
        for key in table:
            if key not in _ALLOWED_KEYS[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
    for section, keys in _REQUIRED.items():
        if section not in raw:
            raise ConfigurationError(f"missing mandatory section [{section}]")
        for key in keys:
            if key not in raw[section]:
                raise ConfigurationError(f"missing mandatory key [{section}] {key}")


def parse_config(path) -> RunConfig:
    """Parse, schema-check and trial-build a scenario configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"configuration file {path} does not exist")
    data = path.read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}")
    _check_schema(raw)
    config = RunConfig(raw, path.parent, hashlib.sha256(data).hexdigest(), str(path))
    try:
        config.build()
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"{path}: {exc}")
    return config
