"""Plain-text scenario configuration.

Grammar: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored.  Lists are comma separated.  A constant coefficient matrix is written
row by row with ``;`` between rows (``coefficient = 1 0.5; -0.5 1``).

Keys
----
domain          square | lshape | slit_disc | cusp            (required)
resolution      positive integer                              (required)
tasks           subset of TASKS                               (required)
coefficient     preset name or matrix (default identity)
dirichlet       edge labels
robin           label:b pairs, b >= 0
dynamic         edge labels
flavor          support_away | smooth_closure | both
p               exponents >= 2 (default 2); 1 < p < 2 is the conjugate case
seed            integer (default 0)
samples         pairing samples per p (default 2000)
output          output directory (default out)
mesh.columns, mesh.grading                         cusp options
tolerance.arg, tolerance.norm                      (default 1e-9)
resolvent.radii                                    probes per ray (default 40)
semigroup.times, semigroup.args                    grid sizes (default 8, 5)
ultra.t_min, ultra.t_max, ultra.points, ultra.slope_range
hardy.resolutions                                  (default 8, 16, 32)
geometry.curve, geometry.delta, geometry.generations, geometry.mantles, geometry.epsilon
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .fem import COEFFICIENT_PRESETS
from .mesh import PRESETS

__all__ = ["Scenario", "ConfigError", "parse_config", "load_config", "TASKS", "FLAVORS"]

TASKS = ("numrange", "resolvent", "semigroup", "ultra", "hardy", "geometry", "robin", "dynamic")
FLAVORS = ("support_away", "smooth_closure")
CURVES = ("segment", "square", "dirichlet")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Scenario:
    domain: str
    resolution: int
    tasks: list
    coefficient: str = "identity"
    matrix: list | None = None
    dirichlet: list = field(default_factory=list)
    robin: dict = field(default_factory=dict)
    dynamic: list = field(default_factory=list)
    flavors: list = field(default_factory=lambda: ["support_away"])
    p: list = field(default_factory=lambda: [2.0])
    seed: int = 0
    samples: int = 2000
    output: str = "out"
    mesh_options: dict = field(default_factory=dict)
    tolerance_arg: float = 1e-9
    tolerance_norm: float = 1e-9
    resolvent_radii: int = 40
    semigroup_times: int = 8
    semigroup_args: int = 5
    ultra_t_min: float | None = None
    ultra_t_max: float = 0.1
    ultra_points: int = 12
    ultra_slope_range: list | None = None
    hardy_resolutions: list = field(default_factory=lambda: [8, 16, 32])
    geometry_curve: str = "dirichlet"
    geometry_delta: float = 0.5
    geometry_generations: int = 10
    geometry_mantles: int = 20
    geometry_epsilon: float = 0.1

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def coefficient_label(self) -> str:
        if self.matrix is None:
            return self.coefficient
        return "matrix " + "; ".join(" ".join(repr(float(x)) for x in row) for row in self.matrix)


def _list(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _int(value: str, line: int, key: str, minimum: int = 1) -> int:
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line) from None
    if out < minimum:
        raise ConfigError(f"{key} must be >= {minimum}", line)
    return out


def _float(value: str, line: int, key: str, positive: bool = False) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", line) from None
    if not math.isfinite(out) or (positive and out <= 0):
        raise ConfigError(f"{key} must be {'positive' if positive else 'finite'}", line)
    return out


def _matrix(value: str, line: int) -> list:
    rows = [r.split() for r in value.split(";")]
    try:
        A = np.array([[float(x) for x in r] for r in rows])
    except ValueError:
        raise ConfigError(f"malformed matrix {value!r}", line) from None
    if A.shape != (2, 2) or not np.all(np.isfinite(A)):
        raise ConfigError(f"malformed matrix {value!r}: need two rows of two numbers", line)
    S = 0.5 * (A + A.T)
    if np.linalg.eigvalsh(S).min() <= 0:
        raise ConfigError("coefficient matrix is not elliptic (symmetric part must be positive definite)", line)
    return A.tolist()


def _setter_table():
    def labels(s, v, n, key):
        setattr(s, key, _list(v))

    def robin(s, v, n, key):
        out = {}
        for item in _list(v):
            if ":" not in item:
                raise ConfigError(f"robin entry {item!r} must be label:b", n)
            lab, b = item.split(":", 1)
            b = _float(b, n, "robin coefficient")
            if b < 0:
                raise ConfigError("Robin coefficient must be nonnegative", n)
            out[lab.strip()] = b
        s.robin = out

    def p_list(s, v, n, key):
        ps = []
        for item in _list(v):
            p = math.inf if item in ("inf", "infinity") else _float(item, n, "p")
            if p <= 1:
                raise ConfigError(f"p must exceed 1, got {item}", n)
            if math.isinf(p):
                raise ConfigError("p = inf has no sector; use the semigroup task for l^inf contraction", n)
            if p < 2:
                raise ConfigError(f"p = {item} is covered by the conjugate exponent {p / (p - 1):g}; give p >= 2", n)
            ps.append(p)
        if not ps:
            raise ConfigError("p list is empty", n)
        s.p = ps

    def coefficient(s, v, n, key):
        if any(ch.isdigit() for ch in v) and (";" in v or " " in v.strip()):
            s.matrix = _matrix(v, n)
            s.coefficient = "matrix"
            return
        if v not in COEFFICIENT_PRESETS and not re.fullmatch(r"rot-?\d+(\.\d+)?", v):
            raise ConfigError(f"unknown coefficient {v!r}; presets: {', '.join(COEFFICIENT_PRESETS)}", n)
        s.coefficient = v

    def tasks(s, v, n, key):
        items = _list(v)
        bad = [t for t in items if t not in TASKS]
        if bad or not items:
            raise ConfigError(f"unknown task(s) {bad}; choose from {', '.join(TASKS)}", n)
        s.tasks = items

    def flavor(s, v, n, key):
        if v == "both":
            s.flavors = list(FLAVORS)
        elif v in FLAVORS:
            s.flavors = [v]
        else:
            raise ConfigError(f"flavor must be one of {FLAVORS} or both", n)

    def domain(s, v, n, key):
        if v not in PRESETS:
            raise ConfigError(f"unknown domain {v!r}; presets: {', '.join(PRESETS)}", n)
        s.domain = v

    def integer(attr, minimum=1):
        return lambda s, v, n, key: setattr(s, attr, _int(v, n, key, minimum))

    def real(attr, positive=True):
        return lambda s, v, n, key: setattr(s, attr, _float(v, n, key, positive))

    def mesh_option(name, cast):
        def f(s, v, n, key):
            s.mesh_options[name] = cast(v, n, key)
        return f

    def slope_range(s, v, n, key):
        items = [_float(x, n, key) for x in _list(v)]
        if len(items) != 2 or items[0] >= items[1]:
            raise ConfigError("ultra.slope_range needs two increasing numbers", n)
        s.ultra_slope_range = items

    def resolutions(s, v, n, key):
        items = [_int(x, n, key) for x in _list(v)]
        if len(items) < 3 or sorted(items) != items:
            raise ConfigError("hardy.resolutions needs at least three increasing integers", n)
        s.hardy_resolutions = items

    def curve(s, v, n, key):
        if v not in CURVES:
            raise ConfigError(f"geometry.curve must be one of {CURVES}", n)
        s.geometry_curve = v

    def delta(s, v, n, key):
        d = _float(v, n, key, positive=True)
        if d >= 1 or abs(1 / d - round(1 / d)) > 1e-9:
            raise ConfigError("geometry.delta must be 1/m for an integer m >= 2", n)
        s.geometry_delta = d

    return {
        "domain": domain,
        "resolution": integer("resolution"),
        "tasks": tasks,
        "coefficient": coefficient,
        "dirichlet": lambda s, v, n, k: labels(s, v, n, "dirichlet"),
        "robin": robin,
        "dynamic": lambda s, v, n, k: labels(s, v, n, "dynamic"),
        "flavor": flavor,
        "p": p_list,
        "seed": integer("seed", 0),
        "samples": integer("samples"),
        "output": lambda s, v, n, k: setattr(s, "output", v),
        "mesh.columns": mesh_option("columns", lambda v, n, k: _int(v, n, k)),
        "mesh.grading": mesh_option("grading", lambda v, n, k: _float(v, n, k, True)),
        "tolerance.arg": real("tolerance_arg"),
        "tolerance.norm": real("tolerance_norm"),
        "resolvent.radii": integer("resolvent_radii"),
        "semigroup.times": integer("semigroup_times"),
        "semigroup.args": integer("semigroup_args"),
        "ultra.t_min": real("ultra_t_min"),
        "ultra.t_max": real("ultra_t_max"),
        "ultra.points": integer("ultra_points", 2),
        "ultra.slope_range": slope_range,
        "hardy.resolutions": resolutions,
        "geometry.curve": curve,
        "geometry.delta": delta,
        "geometry.generations": integer("geometry_generations"),
        "geometry.mantles": integer("geometry_mantles", 0),
        "geometry.epsilon": real("geometry_epsilon"),
    }


_SETTERS = _setter_table()
REQUIRED = ("domain", "resolution", "tasks")


def parse_config(text: str) -> Scenario:
    """Parse and validate a scenario; errors carry the offending line number."""
    s = Scenario(domain="", resolution=0, tasks=[])
    seen: dict[str, int] = {}
    lines = text.splitlines()
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", n)
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in _SETTERS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", n)
        if not value:
            raise ConfigError(f"empty value for {key!r}", n)
        seen[key] = n
        _SETTERS[key](s, value, n, key)
    end = len(lines) + 1
    for key in REQUIRED:
        if key not in seen:
            raise ConfigError(f"missing required key {key!r}", end)
    _check_prerequisites(s, seen, end)
    return s


def _check_prerequisites(s: Scenario, seen: dict, end: int):
    def line_of(key):
        return seen.get(key, seen.get("tasks", end))

    overlap = set(s.dirichlet) & (set(s.dynamic) | set(s.robin))
    if overlap:
        raise ConfigError(f"labels {sorted(overlap)} are Dirichlet and also Robin/dynamic", line_of("dirichlet"))
    if "robin" in s.tasks and not s.robin:
        raise ConfigError("task robin requires a robin = label:b specification", line_of("tasks"))
    if "dynamic" in s.tasks and not s.dynamic:
        raise ConfigError("task dynamic requires a dynamic = labels specification", line_of("tasks"))
    if "hardy" in s.tasks and (s.domain != "square" or s.dirichlet != ["left"]):
        raise ConfigError("task hardy runs its corpus on domain = square with dirichlet = left", line_of("tasks"))
    if "geometry" in s.tasks and s.geometry_curve == "dirichlet" and not s.dirichlet:
        raise ConfigError("geometry.curve = dirichlet needs a Dirichlet part", line_of("geometry.curve"))
    if s.mesh_options and s.domain != "cusp":
        raise ConfigError("mesh.* options apply to the cusp domain only", line_of("mesh.columns"))
    if s.ultra_t_min is not None and s.ultra_t_min >= s.ultra_t_max:
        raise ConfigError("ultra.t_min must be below ultra.t_max", line_of("ultra.t_min"))


def load_config(path) -> Scenario:
    return parse_config(Path(path).read_text())
