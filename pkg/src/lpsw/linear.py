"""Transport and transport-diffusion solvers and their a-priori estimate checks.

Both equations are advanced by a pseudo-spectral Lawson (integrating factor)
RK4 scheme: the diffusion -nu*|k|^2 is applied exactly through exp(-nu|k|^2 dt)
and the advection and forcing are explicit RK4 stages.  With nu = 0 the
scheme is classical RK4.  The same stepping routine drives the nonlinear
shallow water solver, so a frozen-coefficient solve and a fully coupled solve
perform identical arithmetic when their stage inputs coincide.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CFLError, ConfigurationError, DivergenceError, PreconditionError
from .grid import Field, Grid, product_coeffs, spectral_gradient
from .norms import (
    INF,
    BesovParams,
    _exponent,
    besov_from_blocks,
    block_norms,
    lp_array,
    lr_aggregate,
)
from .partition import DyadicPartition

CFL_SAFETY = 0.5
STAGE_OFFSETS = (0.0, 0.5, 0.5, 1.0)


# ---------------------------------------------------------------------------
# time samplers


class Sampler:
    """Supplies a field at time ``t``; ``key = (step, stage)`` identifies RK stages."""

    interpolation = "exact"
    spectral = False

    def __call__(self, t: float, key=None) -> np.ndarray:
        raise NotImplementedError


class ConstantSampler(Sampler):
    def __init__(self, values, spectral=False):
        self.values = np.asarray(values)
        self.spectral = spectral

    def __call__(self, t, key=None):
        return self.values


class FunctionSampler(Sampler):
    interpolation = "analytic"

    def __init__(self, fn: Callable[[float], np.ndarray]):
        self.fn = fn

    def __call__(self, t, key=None):
        return np.asarray(self.fn(t), dtype=float)


class InterpolatedSampler(Sampler):
    """Piecewise-linear interpolation between stored snapshots."""

    interpolation = "linear"

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = [np.asarray(v) for v in values]
        if len(self.times) != len(self.values) or len(self.times) == 0:
            raise ConfigurationError("interpolated sampler needs matching non-empty times and values")

    def __call__(self, t, key=None):
        times = self.times
        if t <= times[0]:
            return self.values[0]
        if t >= times[-1]:
            return self.values[-1]
        i = bisect.bisect_right(times, t) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        if w == 0.0:
            return self.values[i]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


class StageSampler(Sampler):
    """Replays the exact RK stage values recorded by a previous solve on the same step grid.

    ``fn`` maps a recorded stage (a spectrum) to the sampled array, e.g. ``grid.ifft``.
    """

    interpolation = "stage"

    def __init__(self, stages, times, fn=None):
        self.stages = stages  # stages[step][stage] -> array
        self.times = np.asarray(times, dtype=float)
        self.fn = fn

    def _raw(self, t, key):
        if key is None:
            i = int(np.argmin(np.abs(self.times - t)))
            if i < len(self.stages):
                return self.stages[i][0]
            return self.stages[-1][3]
        step, stage = key
        return self.stages[step][stage]

    def __call__(self, t, key=None):
        raw = self._raw(t, key)
        return raw if self.fn is None else self.fn(raw)


def as_sampler(obj, grid: Grid, components: int) -> Sampler:
    if obj is None:
        shape = grid.shape if components == 1 else (components, *grid.shape)
        return ConstantSampler(np.zeros(shape))
    if isinstance(obj, Sampler):
        return obj
    if isinstance(obj, Field):
        return ConstantSampler(obj.values)
    if isinstance(obj, np.ndarray):
        return ConstantSampler(obj)
    if callable(obj):
        return FunctionSampler(obj)
    raise ConfigurationError(f"cannot build a time sampler from {type(obj).__name__}")


# ---------------------------------------------------------------------------
# problem and trajectory


@dataclass
class LinearProblem:
    initial: Field
    velocity: object = None
    forcing: object = None
    nu: float = 0.0
    T: float = 1.0
    dt: float = 0.01
    snapshot_every: int = 1
    cfl_safety: float = CFL_SAFETY

    @property
    def grid(self) -> Grid:
        return self.initial.grid

    def velocity_sampler(self) -> Sampler:
        return as_sampler(self.velocity, self.grid, 2)

    def forcing_sampler(self) -> Sampler:
        return as_sampler(self.forcing, self.grid, self.initial.components)


@dataclass
class Trajectory:
    times: list
    fields: list
    metadata: dict = field(default_factory=dict)
    stages: Optional[list] = None
    step_times: Optional[list] = None

    def __post_init__(self):
        if len(self.times) != len(self.fields):
            raise ConfigurationError("trajectory times and fields differ in length")
        if np.any(np.diff(np.asarray(self.times, dtype=float)) <= 0):
            raise ConfigurationError("trajectory times must be strictly increasing")

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    def __len__(self):
        return len(self.times)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def difference(self, other: "Trajectory") -> "Trajectory":
        if len(self) != len(other) or not np.allclose(self.times, other.times, rtol=0, atol=1e-14):
            raise ConfigurationError("trajectories sampled at different times")
        return Trajectory(list(self.times), [a - b for a, b in zip(self.fields, other.fields)])


def step_count(T: float, dt: float) -> int:
    if not (T >= 0 and dt > 0):
        raise ConfigurationError(f"need T >= 0 and dt > 0 (got T={T}, dt={dt})")
    return max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0


# ---------------------------------------------------------------------------
# the shared stepping routine


def lawson_rk4(
    grid: Grid,
    states: list,
    nus: list,
    rhs,
    dt: float,
    nsteps: int,
    snapshot_every: int = 1,
    record_stages: bool = False,
    before_step=None,
    t0: float = 0.0,
):
    """Advance spectral states with integrating-factor RK4.

    ``rhs(t, key, stage_coeffs, stage_values)`` returns the explicit right-hand
    side spectra.  Returns (snapshot times, snapshot spectra, recorded stage spectra).
    """
    k2 = grid.k2
    e_half = [np.exp(-nu * k2 * (dt / 2)) if nu else 1.0 for nu in nus]
    e_full = [np.exp(-nu * k2 * dt) if nu else 1.0 for nu in nus]
    F = [np.array(s, dtype=complex) for s in states]
    times = [t0]
    snaps = [[f.copy() for f in F]]
    stages = [] if record_stages else None
    half = dt / 2

    def evaluate(t, key, Y):
        if record_stages:
            stages[-1].append(Y)
        return rhs(t, key, Y, [grid.ifft(y) for y in Y])

    for k in range(nsteps):
        t = t0 + k * dt
        if before_step is not None:
            before_step(t, k, F)
        if record_stages:
            stages.append([])
        k1 = evaluate(t, (k, 0), F)
        Y = [eh * (f + half * a) for eh, f, a in zip(e_half, F, k1)]
        k2_ = evaluate(t + half, (k, 1), Y)
        Y = [eh * f + half * b for eh, f, b in zip(e_half, F, k2_)]
        k3 = evaluate(t + half, (k, 2), Y)
        Y = [ef * f + dt * (eh * c) for ef, eh, f, c in zip(e_full, e_half, F, k3)]
        k4 = evaluate(t + dt, (k, 3), Y)
        F = [
            ef * f + (dt / 6) * (ef * a + 2 * (eh * (b + c)) + d)
            for ef, eh, f, a, b, c, d in zip(e_full, e_half, F, k1, k2_, k3, k4)
        ]
        for f in F:
            if not np.all(np.isfinite(f)):
                raise DivergenceError(f"non-finite values after step {k + 1} (t={t + dt:.6g})")
        if (k + 1) % snapshot_every == 0 or k + 1 == nsteps:
            times.append(t0 + (k + 1) * dt)
            snaps.append([f.copy() for f in F])
    return times, snaps, stages


def advect_coeffs(grid: Grid, velocity: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Dealiased spectrum of (v . grad) f for scalar or vector f given by its spectrum."""
    grads = grid.ifft(spectral_gradient(grid, coeffs))  # (2, ...) with derivative axis first
    if coeffs.ndim == 2:
        return product_coeffs(grid, velocity[0], grads[0]) + product_coeffs(grid, velocity[1], grads[1])
    return product_coeffs(grid, velocity[0][None], grads[0]) + product_coeffs(grid, velocity[1][None], grads[1])


def cfl_limit(grid: Grid, vmax: float, safety: float = CFL_SAFETY) -> float:
    return math.inf if vmax == 0 else safety * grid.spacing / vmax


def _solve_linear(prob: LinearProblem, record_stages=False) -> Trajectory:
    grid = prob.grid
    vel = prob.velocity_sampler()
    force = prob.forcing_sampler()
    nsteps = step_count(prob.T, prob.dt)
    dt = prob.T / nsteps if nsteps else prob.dt
    f0 = grid.truncate(prob.initial.spectrum)

    def before_step(t, k, F):
        vmax = float(np.max(np.sqrt(np.sum(np.asarray(vel(t, (k, 0))) ** 2, axis=0))))
        limit = cfl_limit(grid, vmax, prob.cfl_safety)
        if dt > limit * (1 + 1e-12):
            raise CFLError(
                f"dt={dt:.4g} violates the advective CFL condition dt <= {prob.cfl_safety} * spacing / |v|_inf "
                f"= {limit:.4g} at t={t:.4g}",
                required_dt=limit,
            )

    def rhs(t, key, Y, phys):
        g = force(t, key)
        gc = g if force.spectral else grid.truncate(grid.fft(g))
        return [gc - advect_coeffs(grid, vel(t, key), Y[0])]

    times, snaps, stages = lawson_rk4(
        grid, [f0], [prob.nu], rhs, dt, nsteps, prob.snapshot_every, record_stages, before_step
    )
    fields = [Field(grid, grid.ifft(s[0])) for s in snaps]
    meta = {
        "scheme": "lawson-rk4" if prob.nu else "rk4",
        "dt": dt,
        "steps": nsteps,
        "nu": prob.nu,
        "velocity_interpolation": vel.interpolation,
    }
    stage_list = [[st[0] for st in step] for step in stages] if stages is not None else None
    step_times = [k * dt for k in range(nsteps + 1)]
    return Trajectory(times, fields, meta, stage_list, step_times)


def solve_transport(prob: LinearProblem, record_stages: bool = False) -> Trajectory:
    if prob.nu != 0:
        raise ConfigurationError("solve_transport needs nu = 0; use solve_transport_diffusion")
    return _solve_linear(prob, record_stages)


def solve_transport_diffusion(prob: LinearProblem, record_stages: bool = False) -> Trajectory:
    if not prob.nu > 0:
        raise ConfigurationError(f"solve_transport_diffusion needs nu > 0, got {prob.nu}")
    return _solve_linear(prob, record_stages)


# ---------------------------------------------------------------------------
# a-priori estimates


@dataclass
class TransportEstimateReport:
    name: str
    lhs: float
    rhs: float
    terms: dict
    V: float
    V_series: list
    C0: float
    branch: str
    satisfied: bool
    slack: float
    required_C0: float
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "terms": self.terms,
            "V": self.V,
            "V_series": list(self.V_series),
            "C0": self.C0,
            "branch": self.branch,
            "satisfied": self.satisfied,
            "slack": self.slack,
            "required_C0": self.required_C0,
            "params": self.params,
        }


def transport_condition(s, p, p1, r, divergence_free=False):
    """Check the (s, p, p1, r) admissibility condition; returns True when it holds with equality."""
    p, p1, r = _exponent(p, "p"), _exponent(p1, "p1"), _exponent(r, "r")
    if not p <= p1:
        raise PreconditionError(f"need 1 <= p <= p1 <= inf (got p={p}, p1={p1})")
    p_dual = INF if p == 1 else (1.0 if math.isinf(p) else p / (p - 1))
    bound = -2.0 * min(1.0 / p1, 1.0 / p_dual)
    if divergence_free:
        bound -= 1.0
    if s < bound or (s == bound and r < INF):
        kind = "strict inequality (r < inf)" if r < INF else "inequality"
        raise PreconditionError(
            f"regularity condition violated: s={s} must satisfy s >= {bound:g} with {kind} "
            f"(p={p:g}, p1={p1:g})"
        )
    return s == bound


def velocity_branch(s, p1, r, equality=False):
    """Which norm of grad v feeds V'_{p1}(t)."""
    crit = 1.0 + 2.0 / p1
    if equality and math.isinf(r):
        return "B^{2/p1}_{p1,1}"
    if s > crit or (s == crit and r == 1):
        return "B^{s-1}_{p1,r}"
    if s < crit:
        return "B^{2/p1}_{p1,inf} + L^inf"
    return "B^{s-1}_{p1,r} + L^inf"


def _tensor(values):
    # d_k v^i stored (k, i, n, n) -> (4, n, n) so the pointwise magnitude is Frobenius
    return values.reshape(-1, *values.shape[-2:])


def velocity_gradient_norm(P: DyadicPartition, v: np.ndarray, s, p1, r, branch) -> float:
    grid = P.grid
    grad = _tensor(grid.ifft(spectral_gradient(grid, grid.fft(v))))
    coeffs = grid.fft(grad)
    norms = lp_array(grid, P.blocks(coeffs), p1, vector=True)
    if branch == "B^{2/p1}_{p1,1}":
        return besov_from_blocks(P, norms, 2.0 / p1, 1.0)
    if branch == "B^{s-1}_{p1,r}":
        return besov_from_blocks(P, norms, s - 1.0, r)
    linf = float(lp_array(grid, grad, INF, vector=True))
    if branch == "B^{2/p1}_{p1,inf} + L^inf":
        return besov_from_blocks(P, norms, 2.0 / p1, INF) + linf
    return besov_from_blocks(P, norms, s - 1.0, r) + linf


def _cumtrapz(values, times):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(t)[:, None] * (v[1:] + v[:-1]).reshape(len(t) - 1, -1), axis=0).reshape(
            v[1:].shape
        )
    return out


def _V_series(P, prob, times, s, p1, r, branch):
    vel = prob.velocity_sampler()
    dv = np.array([velocity_gradient_norm(P, np.asarray(vel(t, None)), s, p1, r, branch) for t in times])
    return dv, _cumtrapz(dv, times)


def _forcing_series(P, prob, times, params: BesovParams):
    force = prob.forcing_sampler()
    grid = P.grid
    out = []
    for t in times:
        g = force(t, None)
        coeffs = g if force.spectral else grid.fft(g)
        norms = lp_array(grid, P.blocks(coeffs), params.p, vector=coeffs.ndim == 3)
        out.append(norms)
    return np.stack(out)


def _bisect_c0(ok, hi=1.0):
    """Smallest C0 >= 0 with ok(C0) true, or inf."""
    if ok(0.0):
        return 0.0
    while not ok(hi):
        hi *= 2
        if hi > 1e6:
            return math.inf
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def check_transport_estimate(
    P: DyadicPartition, traj: Trajectory, prob: LinearProblem, s, p, p1, r, C0, divergence_free=False
) -> TransportEstimateReport:
    """Evaluate both sides of the transport estimate at every snapshot time."""
    params = BesovParams(s, p, r)
    p1 = _exponent(p1, "p1")
    equality = transport_condition(params.s, params.p, p1, params.r, divergence_free)
    branch = velocity_branch(params.s, p1, params.r, equality)
    times = np.asarray(traj.times, dtype=float)
    series = np.stack([block_norms(P, f, params.p) for f in traj.fields])
    running = np.maximum.accumulate(series, axis=0)
    w = P.weights**params.s
    lhs = np.array([lr_aggregate(w * row, params.r) for row in running])
    f0 = besov_from_blocks(P, series[0], params.s, params.r)
    _, V = _V_series(P, prob, times, params.s, p1, params.r, branch)
    g_blocks = _forcing_series(P, prob, times, params)
    g_norm = np.array([lr_aggregate(w * row, params.r) for row in g_blocks])

    def rhs_for(c0):
        integrand = np.exp(-c0 * V) * g_norm
        return (f0 + _cumtrapz(integrand, times)) * np.exp(c0 * V)

    tol = 1e-12

    def ok(c0):
        return bool(np.all(lhs <= rhs_for(c0) * (1 + tol) + tol * f0))

    rhs = rhs_for(C0)
    return TransportEstimateReport(
        name="transport",
        lhs=float(lhs[-1]),
        rhs=float(rhs[-1]),
        terms={"initial": f0, "forcing_integral": float(_cumtrapz(np.exp(-C0 * V) * g_norm, times)[-1])},
        V=float(V[-1]),
        V_series=[float(x) for x in V],
        C0=float(C0),
        branch=branch,
        satisfied=ok(C0),
        slack=float(np.min(rhs - lhs)),
        required_C0=_bisect_c0(ok),
        params={"s": params.s, "p": params.p, "p1": p1, "r": params.r},
    )


def check_smoothing_estimate(
    P: DyadicPartition, traj: Trajectory, prob: LinearProblem, s, p, p1, r, rho, rho1, C0, divergence_free=False
) -> TransportEstimateReport:
    """Evaluate the transport-diffusion smoothing estimate for every snapshot horizon."""
    params = BesovParams(s, p, r)
    p1 = _exponent(p1, "p1")
    rho, rho1 = _exponent(rho, "rho"), _exponent(rho1, "rho1")
    if not rho1 <= rho:
        raise PreconditionError(f"need 1 <= rho1 <= rho <= inf (got rho1={rho1}, rho={rho})")
    nu = prob.nu
    if not nu > 0:
        raise PreconditionError("the smoothing estimate needs nu > 0")
    equality = transport_condition(params.s, params.p, p1, params.r, divergence_free)
    branch = velocity_branch(params.s, p1, params.r, equality)
    times = np.asarray(traj.times, dtype=float)
    inv_rho = 0.0 if math.isinf(rho) else 1.0 / rho
    inv_rho1 = 0.0 if math.isinf(rho1) else 1.0 / rho1

    series = np.stack([block_norms(P, f, params.p) for f in traj.fields])
    w_lhs = P.weights ** (params.s + 2 * inv_rho)
    if math.isinf(rho):
        per_block = np.maximum.accumulate(series, axis=0)
    else:
        per_block = _cumtrapz(series**rho, times) ** inv_rho
    lhs = nu**inv_rho * np.array([lr_aggregate(w_lhs * row, params.r) for row in per_block])

    f0 = besov_from_blocks(P, series[0], params.s, params.r)
    g_blocks = _forcing_series(P, prob, times, params)
    if math.isinf(rho1):
        g_time = np.maximum.accumulate(g_blocks, axis=0)
    else:
        g_time = _cumtrapz(g_blocks**rho1, times) ** inv_rho1
    w_g = P.weights ** (params.s - 2 + 2 * inv_rho1)
    g_norm = np.array([lr_aggregate(w_g * row, params.r) for row in g_time])
    _, V = _V_series(P, prob, times, params.s, p1, params.r, branch)
    growth = (1 + nu * times) ** inv_rho

    def rhs_for(c0):
        data = growth * f0 + (1 + nu * times) ** (1 + inv_rho - inv_rho1) * nu ** (inv_rho1 - 1) * g_norm
        return c0 * np.exp(c0 * growth * V) * data

    # t = 0 carries no information when rho < inf (both sides vanish or the lhs is an empty integral)
    idx = slice(1, None) if len(times) > 1 else slice(None)
    tol = 1e-12

    def ok(c0):
        return bool(np.all(lhs[idx] <= rhs_for(c0)[idx] * (1 + tol) + tol * f0))

    rhs = rhs_for(C0)
    return TransportEstimateReport(
        name="smoothing",
        lhs=float(lhs[-1]),
        rhs=float(rhs[-1]),
        terms={"initial": f0, "forcing": float(g_norm[-1])},
        V=float(V[-1]),
        V_series=[float(x) for x in V],
        C0=float(C0),
        branch=branch,
        satisfied=ok(C0),
        slack=float(np.min(rhs[idx] - lhs[idx])),
        required_C0=_bisect_c0(ok),
        params={"s": params.s, "p": params.p, "p1": p1, "r": params.r, "rho": rho, "rho1": rho1},
    )


def shear_velocity(grid: Grid, amplitude: float = 1.0, mode: int = 1) -> np.ndarray:
    """v = (A sin(2 pi m x2 / L), 0): steady and divergence free."""
    x2 = grid.coords[1]
    return np.stack([amplitude * np.sin(2 * math.pi * mode * x2 / grid.length), np.zeros(grid.shape)])
