"""L^p, Besov, Sobolev and Chemin-Lerner norms computed from grid data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, CoverageError
from .grid import Field, Grid
from .partition import DyadicPartition

INF = math.inf
COVERAGE_TOL = 1e-10


def _exponent(value, name):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "oo"):
            return INF
        value = float(value)
    value = float(value)
    if not value >= 1:
        raise ConfigurationError(f"{name}={value} must lie in [1, inf]")
    return value


def encode_exponent(value: float):
    return "inf" if math.isinf(value) else value


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    r: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "p", _exponent(self.p, "p"))
        object.__setattr__(self, "r", _exponent(self.r, "r"))

    def shifted(self, ds: float) -> "BesovParams":
        return BesovParams(self.s + ds, self.p, self.r)

    def to_dict(self):
        return {"s": self.s, "p": encode_exponent(self.p), "r": encode_exponent(self.r)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["s"], d["p"], d["r"])


def lr_aggregate(values, r: float) -> float:
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0
    if math.isinf(r):
        return float(values.max())
    top = values.max()
    if top == 0:
        return 0.0
    # scale by the max so that large r does not overflow
    return float(top * np.sum((values / top) ** r) ** (1.0 / r))


def _pointwise_magnitude(values: np.ndarray, vector: bool) -> np.ndarray:
    if vector:
        return np.sqrt(np.sum(values**2, axis=-3))
    return np.abs(values)


def lp_array(grid: Grid, values: np.ndarray, p: float, vector: bool = False) -> np.ndarray:
    """L^p norm over the last two axes (and the component axis when ``vector``)."""
    p = _exponent(p, "p")
    mag = _pointwise_magnitude(values, vector)
    if math.isinf(p):
        return mag.max(axis=(-2, -1))
    if p == 2:
        return np.sqrt(grid.cell_area * np.sum(mag * mag, axis=(-2, -1)))
    top = mag.max(axis=(-2, -1), keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    scaled = np.sum((mag / safe) ** p, axis=(-2, -1))
    return np.squeeze(safe, axis=(-2, -1)) * (grid.cell_area * scaled) ** (1.0 / p)


def lp_norm(f: Field, p) -> float:
    return float(lp_array(f.grid, f.values, p, f.is_vector))


def check_coverage(P: DyadicPartition, coeffs: np.ndarray, tol: float = COVERAGE_TOL) -> None:
    leak = P.out_of_coverage(coeffs)
    if leak > tol:
        raise CoverageError(
            f"field has relative spectral mass {leak:.3e} above the top annulus "
            f"(|k| > {P.coverage_radius:g}); refine the grid or band-limit the data"
        )


def block_norms(P: DyadicPartition, f: Field, p, check: bool = True) -> np.ndarray:
    """||Delta_j f||_{L^p} for j = -1..j_max."""
    if f.grid != P.grid:
        raise ConfigurationError(f"grid mismatch: field on {f.grid}, partition on {P.grid}")
    coeffs = f.spectrum
    if check:
        check_coverage(P, coeffs)
    return lp_array(P.grid, P.blocks(coeffs), p, f.is_vector)


def besov_from_blocks(P: DyadicPartition, norms: np.ndarray, s: float, r: float) -> float:
    weights = P.weights**s
    return lr_aggregate(weights * norms, r)


@dataclass
class NormReport:
    params: BesovParams
    per_block: list
    total: float
    kind: str = "besov"

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "per_block": [[int(j), float(v)] for j, v in self.per_block],
            "total": float(self.total),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            BesovParams.from_dict(d["params"]),
            [(int(j), float(v)) for j, v in d["per_block"]],
            float(d["total"]),
            d.get("kind", "besov"),
        )


def besov_norm(P: DyadicPartition, f: Field, params: BesovParams) -> NormReport:
    norms = block_norms(P, f, params.p)
    ladder = P.weights**params.s * norms
    per_block = [(j, float(v)) for j, v in zip(P.block_indices, ladder)]
    return NormReport(params, per_block, lr_aggregate(ladder, params.r))


def besov(P: DyadicPartition, f: Field, s, p=2.0, r=2.0) -> float:
    """Shorthand returning only the ell^r total."""
    return besov_from_blocks(P, block_norms(P, f, p), s, _exponent(r, "r"))


def sobolev_norm(f: Field, s: float) -> float:
    g = f.grid
    weight = (1.0 + g.k2) ** s
    energy = np.sum(weight * np.abs(f.spectrum) ** 2)
    return float(math.sqrt(g.length**2 * energy))


# ---------------------------------------------------------------------------
# time-space norms


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if t.size > 1:
        dt = np.diff(t)
        w[:-1] += dt / 2
        w[1:] += dt / 2
    return w


def time_norm(values: np.ndarray, times, rho: float, axis: int = 0) -> np.ndarray:
    """Trapezoid L^rho in time along ``axis``; rho = inf takes the max."""
    rho = _exponent(rho, "rho")
    values = np.abs(np.asarray(values, dtype=float))
    if math.isinf(rho):
        return values.max(axis=axis)
    w = trapezoid_weights(times)
    shape = [1] * values.ndim
    shape[axis] = -1
    return np.sum(w.reshape(shape) * values**rho, axis=axis) ** (1.0 / rho)


def _unpack(trajectory):
    if hasattr(trajectory, "times") and hasattr(trajectory, "fields"):
        times, fields = list(trajectory.times), list(trajectory.fields)
    else:
        pairs = list(trajectory)
        times = [t for t, _ in pairs]
        fields = [f for _, f in pairs]
    if not fields:
        raise ConfigurationError("empty trajectory")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ConfigurationError("trajectory times must be strictly increasing")
    return times, fields


def block_norm_series(P: DyadicPartition, fields: Sequence[Field], p, check: bool = True) -> np.ndarray:
    """Array (time, block) of ||Delta_j f(t)||_{L^p}."""
    return np.stack([block_norms(P, f, p, check) for f in fields])


@dataclass
class TrajectoryNorm:
    rho: float
    params: BesovParams
    per_block_time: list
    total: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": "chemin_lerner",
            "rho": encode_exponent(self.rho),
            "params": self.params.to_dict(),
            "per_block_time": [[int(j), float(v)] for j, v in self.per_block_time],
            "total": float(self.total),
        }


def chemin_lerner_from_series(P, times, series, rho, params: BesovParams) -> TrajectoryNorm:
    per_block = time_norm(series, times, rho, axis=0)
    total = besov_from_blocks(P, per_block, params.s, params.r)
    return TrajectoryNorm(
        _exponent(rho, "rho"), params, [(j, float(v)) for j, v in zip(P.block_indices, per_block)], total
    )


def chemin_lerner_norm(P: DyadicPartition, trajectory, rho, params: BesovParams) -> TrajectoryNorm:
    """||2^{js} ||Delta_j u||_{L^rho_T(L^p)}||_{ell^r}: time norm per block, then ell^r."""
    times, fields = _unpack(trajectory)
    series = block_norm_series(P, fields, params.p)
    return chemin_lerner_from_series(P, times, series, rho, params)


def bochner_norm(P: DyadicPartition, trajectory, rho, params: BesovParams) -> float:
    """||u||_{L^rho_T(B^s_{p,r})}: Besov norm at each time, then L^rho in time."""
    times, fields = _unpack(trajectory)
    series = block_norm_series(P, fields, params.p)
    per_time = np.array([besov_from_blocks(P, row, params.s, params.r) for row in series])
    return float(time_norm(per_time, times, rho))
