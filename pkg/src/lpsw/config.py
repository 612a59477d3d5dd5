"""Run configuration files (TOML or JSON) for the solver and shallow water commands.

Every key is declared with a default and a validator.  Parsing collects all
violations (unknown keys, wrong types, out-of-range values) and raises them
together, so one run reports everything that is wrong with a file.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .grid import Field, Grid
from .norms import BesovParams

REQUIRED = object()


@dataclass(frozen=True)
class Key:
    default: object
    convert: object
    check: object = None
    doc: str = ""


def _length(value):
    """Numbers, or strings such as "8pi" / "8*pi" / "2 pi"."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = re.fullmatch(r"\s*([0-9.eE+-]*)\s*\*?\s*pi\s*", value)
        if m:
            coef = m.group(1)
            return (float(coef) if coef else 1.0) * math.pi
        return float(value)
    raise TypeError


def _exp(value):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool):
        raise TypeError
    return float(value)


def _int(value):
    if isinstance(value, bool) or not float(value).is_integer():
        raise TypeError
    return int(value)


def _float(value):
    if isinstance(value, bool):
        raise TypeError
    return float(value)


def _bool(value):
    if not isinstance(value, bool):
        raise TypeError
    return value


def _str(value):
    if not isinstance(value, str):
        raise TypeError
    return value


def _pair(value):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise TypeError
    return [float(v) for v in value]


def _opt(convert):
    def inner(value):
        return None if value is None else convert(value)

    return inner


def _pow2(n):
    return None if n >= 16 and n & (n - 1) == 0 else "must be a power of two >= 16"


def _positive(x):
    return None if x is not None and x > 0 else "must be positive"


def _opt_positive(x):
    return None if x is None or x > 0 else "must be positive"


def _nonneg(x):
    return None if x >= 0 else "must be >= 0"


def _at_least(lo):
    return lambda x: None if x >= lo else f"must be >= {lo}"


def _one_of(*choices):
    return lambda x: None if x in choices else f"must be one of {', '.join(map(str, choices))}"


def _open_unit(x):
    return None if 0 < x < 1 else "must lie in the open interval (0, 1) (viscous regime 0 < nu < 1)"


GRID = {
    "n": Key(64, _int, _pow2, "grid points per side"),
    "length": Key("8pi", _length, _positive, "side length L of the torus"),
}

BESOV = {
    "s": Key(2.0, _float),
    "p": Key(2.0, _exp, _at_least(1)),
    "r": Key(2.0, _exp, _at_least(1)),
}

SWE_SCHEMA = {
    "seed": Key(0, _int, _nonneg),
    "nu": Key(0.5, _float, _open_unit),
    "constants": Key(None, _opt(_str), None, "path of a calibration file (or use --constants)"),
    "grid": GRID,
    "params": BESOV,
    "initial": {
        "kind": Key("random-beta", _str, _one_of("zero", "single-mode", "random-beta", "file")),
        "seed": Key(None, _opt(_int)),
        "u_norm": Key(0.006, _float, _nonneg),
        "h_norm": Key(0.004, _float, _nonneg),
        "beta": Key(3.0, _float),
        "mode": Key([1.0, 0.0], _pair),
        "u_path": Key(None, _opt(_str)),
        "h_path": Key(None, _opt(_str)),
    },
    "run": {
        "T": Key(None, _opt(_float), _opt_positive, "iteration window; default T2 from the budgets"),
        "dt": Key(None, _opt(_float), _opt_positive),
        "n_iters": Key(8, _int, _at_least(1)),
        "min_steps": Key(4, _int, _at_least(1)),
        "pressure_sign": Key(-1.0, _float, _one_of(-1.0, 1.0)),
        "eps": Key(0.05, _float, _positive),
        "horizon": Key(1.0, _float, _positive, "direct/global horizon"),
        "global_dt": Key(0.05, _float, _positive),
        "checkpoint_every": Key(0, _int, _nonneg),
        "eta": Key(None, _opt(_float), _opt_positive),
        "compare_direct": Key(True, _bool),
        "uniqueness_gap": Key(0.0, _float, _nonneg, "relative size of the perturbation for the uniqueness probe"),
    },
}

SOLVE_SCHEMA = {
    "seed": Key(0, _int, _nonneg),
    "nu": Key(0.0, _float, _nonneg),
    "T": Key(1.0, _float, _positive),
    "dt": Key(0.05, _float, _positive),
    "snapshot_every": Key(1, _int, _at_least(1)),
    "grid": GRID,
    "initial": {
        "kind": Key("random-beta", _str, _one_of("zero", "single-mode", "random-beta", "file")),
        "beta": Key(3.0, _float),
        "amplitude": Key(1.0, _float, _nonneg),
        "mode": Key([1.0, 0.0], _pair),
        "path": Key(None, _opt(_str)),
    },
    "velocity": {
        "kind": Key("shear", _str, _one_of("zero", "constant", "shear")),
        "amplitude": Key(1.0, _float),
        "mode": Key(1, _int),
        "value": Key([0.0, 0.0], _pair),
    },
    "forcing": {
        "kind": Key("zero", _str, _one_of("zero", "single-mode")),
        "amplitude": Key(0.0, _float),
        "mode": Key([1.0, 0.0], _pair),
    },
    "estimate": {
        "enabled": Key(True, _bool),
        "s": Key(2.0, _float),
        "p": Key(2.0, _exp, _at_least(1)),
        "p1": Key(2.0, _exp, _at_least(1)),
        "r": Key(2.0, _exp, _at_least(1)),
        "rho": Key("inf", _exp, _at_least(1)),
        "rho1": Key(1.0, _exp, _at_least(1)),
        "C0": Key(None, _opt(_float), _opt_positive, "defaults to the calibrated C0"),
    },
}

SCHEMAS = {"swe": SWE_SCHEMA, "solve": SOLVE_SCHEMA}


@dataclass
class RunConfig:
    kind: str
    values: dict
    source: str = "<dict>"

    def __getitem__(self, key):
        return self.values[key]


def _validate(schema, raw, prefix, problems):
    out = {}
    if not isinstance(raw, dict):
        problems.append(f"{prefix or 'config'}: expected a table")
        raw = {}
    for key in raw:
        if key not in schema:
            problems.append(f"unknown key {prefix + key!r}")
    for key, spec in schema.items():
        name = prefix + key
        if isinstance(spec, dict):
            out[key] = _validate(spec, raw.get(key, {}), name + ".", problems)
            continue
        if key not in raw:
            if spec.default is REQUIRED:
                problems.append(f"missing required key {name!r}")
                continue
            value = spec.default
        else:
            value = raw[key]
        try:
            value = spec.convert(value)
        except (TypeError, ValueError):
            problems.append(f"{name}={raw.get(key)!r} has the wrong type")
            continue
        if spec.check is not None:
            msg = spec.check(value)
            if msg:
                problems.append(f"{name}={raw.get(key, value)!r} {msg}")
                continue
        out[key] = value
    return out


def load_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: cannot parse: {exc}") from exc


def parse_config(source, kind: str) -> RunConfig:
    """Validate a mapping or a TOML/JSON file against the schema of ``kind``."""
    if kind not in SCHEMAS:
        raise ConfigurationError(f"unknown config kind {kind!r}")
    raw = source if isinstance(source, dict) else load_mapping(source)
    problems = []
    values = _validate(SCHEMAS[kind], raw, "", problems)
    if problems:
        raise ConfigurationError(
            f"{len(problems)} problem(s) in {kind} config: " + "; ".join(problems), problems
        )
    return RunConfig(kind, values, "<dict>" if isinstance(source, dict) else str(source))


def defaults(kind: str) -> dict:
    return parse_config({}, kind).values


# ---------------------------------------------------------------------------
# builders


def build_grid(values) -> Grid:
    return Grid(values["grid"]["n"], values["grid"]["length"])


def build_sw_config(cfg: RunConfig, constants, seed_override=None):
    from .iteration import SWConfig, make_initial_data
    from .partition import build_partition

    v = cfg.values
    grid = build_grid(v)
    P = build_partition(grid)
    params = BesovParams(**v["params"])
    seed = v["seed"] if seed_override is None else seed_override
    init = v["initial"]
    u0, h0 = make_initial_data(
        P, params, init["kind"], init["seed"] if init["seed"] is not None else seed,
        init["u_norm"], init["h_norm"], init["beta"], tuple(init["mode"]), init["u_path"], init["h_path"],
    )
    run = v["run"]
    sw = SWConfig(
        grid, v["nu"], params, u0, h0, constants, T=run["T"], dt=run["dt"], n_iters=run["n_iters"],
        seed=seed, pressure_sign=run["pressure_sign"], min_steps=run["min_steps"], eps=run["eps"],
    )
    object.__setattr__(sw, "_partition", P)
    return sw


def build_linear_problem(cfg: RunConfig, seed_override=None):
    from .grid import read_field
    from .lab import RandomFieldSpec, random_field
    from .linear import LinearProblem, shear_velocity
    from .partition import build_partition

    v = cfg.values
    grid = build_grid(v)
    P = build_partition(grid)
    seed = v["seed"] if seed_override is None else seed_override
    init = v["initial"]
    kind = init["kind"]
    if kind == "zero":
        f0 = Field.zeros(grid)
    elif kind == "file":
        if init["path"] is None:
            raise ConfigurationError("initial.kind='file' needs initial.path")
        f0 = read_field(init["path"])
        if f0.grid != grid:
            raise ConfigurationError(f"initial field is on {f0.grid}, config grid is {grid}")
    elif kind == "single-mode":
        m = init["mode"]
        f0 = Field.from_function(grid, lambda x1, x2: init["amplitude"] * _cos_mode(grid, m, x1, x2))
    else:
        f0 = random_field(P, RandomFieldSpec(init["beta"], seed, init["amplitude"]), 0, 0)

    vel = v["velocity"]
    if vel["kind"] == "zero":
        velocity = None
    elif vel["kind"] == "constant":
        velocity = np.broadcast_to(np.asarray(vel["value"])[:, None, None], (2, *grid.shape)).copy()
    else:
        velocity = shear_velocity(grid, vel["amplitude"], vel["mode"])

    frc = v["forcing"]
    forcing = None
    if frc["kind"] == "single-mode":
        forcing = Field.from_function(grid, lambda x1, x2: frc["amplitude"] * _cos_mode(grid, frc["mode"], x1, x2))
    prob = LinearProblem(f0, velocity, forcing, v["nu"], v["T"], v["dt"], v["snapshot_every"])
    return prob, P


def _cos_mode(grid, mode, x1, x2):
    return np.cos(2 * math.pi * (mode[0] * x1 + mode[1] * x2) / grid.length)
