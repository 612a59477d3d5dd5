"""Viscous shallow water: successive approximations, a direct solver and global runs.

The system for the velocity u and the height perturbation h (mean depth 1) is

    u_t + (u . grad) u - nu Lap u - nu (grad ln(1+h) . grad) u + grad h = 0,
    h_t + div((1 + h) u) = 0.

The successive-approximation scheme freezes the transporting velocity and the
forcing at the previous iterate (u_n, h_n) and solves two linear problems for
(u_{n+1}, h_{n+1}).  Both the iterates and the direct solver use
:func:`lpsw.linear.lawson_rk4` with the same right-hand-side functions, and the
frozen iterate is replayed at the exact Runge-Kutta stage values of its own
solve, so the fixed point of the discrete iteration is the direct solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import lambertw

from .errors import ConfigurationError, PreconditionError, RegimeExitError
from .grid import Field, Grid, compose, product_coeffs, read_field, spectral_gradient
from .lab import Calibration, RandomFieldSpec, random_field
from .linear import CFL_SAFETY, advect_coeffs, lawson_rk4, step_count
from .norms import (
    INF,
    BesovParams,
    besov,
    besov_from_blocks,
    block_norms,
    chemin_lerner_from_series,
    encode_exponent,
    lp_array,
    sobolev_norm,
)
from .partition import DyadicPartition, build_partition

REGIME_FLOOR = 0.5  # 1 + h must stay >= 1/2
PRESSURE_SIGN = -1.0  # u_t = ... - grad h
MIN_WINDOW_STEPS = 4
DEFAULT_CFL_MARGIN = 0.8
ITERATION_SCHEMA = "lpsw.iteration/1"
GLOBAL_SCHEMA = "lpsw.global/1"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SWConfig:
    grid: Grid
    nu: float
    params: BesovParams
    u0: Field
    h0: Field
    constants: Calibration
    T: Optional[float] = None
    dt: Optional[float] = None
    n_iters: int = 8
    seed: int = 0
    pressure_sign: float = PRESSURE_SIGN
    min_steps: int = MIN_WINDOW_STEPS
    cfl_safety: float = CFL_SAFETY
    eps: float = 0.05
    oversample: int = 4

    def __post_init__(self):
        problems = []
        if not 0 < self.nu < 1:
            problems.append(f"nu={self.nu} must lie in the open interval (0, 1)")
        if self.u0.grid != self.grid or self.h0.grid != self.grid:
            problems.append("initial data live on a different grid")
        if not self.u0.is_vector:
            problems.append("u0 must be a vector field")
        if self.h0.is_vector:
            problems.append("h0 must be a scalar field")
        if self.n_iters < 1:
            problems.append(f"n_iters={self.n_iters} must be >= 1")
        if self.pressure_sign not in (-1.0, 1.0):
            problems.append(f"pressure_sign={self.pressure_sign} must be -1 or +1")
        if self.T is not None and not self.T > 0:
            problems.append(f"T={self.T} must be positive")
        if self.dt is not None and not self.dt > 0:
            problems.append(f"dt={self.dt} must be positive")
        if not self.h0.is_vector and float(np.max(np.abs(self.h0.values))) >= 1:
            problems.append("||h0||_inf must be < 1 so that the depth 1 + h0 stays positive")
        if problems:
            raise ConfigurationError("invalid shallow water configuration", problems)

    @property
    def partition(self) -> DyadicPartition:
        P = getattr(self, "_partition", None)
        if P is None:
            P = build_partition(self.grid)
            object.__setattr__(self, "_partition", P)
        return P

    def summary(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "nu": self.nu,
            "params": self.params.to_dict(),
            "n_iters": self.n_iters,
            "seed": self.seed,
            "pressure_sign": self.pressure_sign,
            "T": self.T,
            "dt": self.dt,
            "min_steps": self.min_steps,
            "eps": self.eps,
            "constants": {"C0": self.constants.C0, "C_sp": self.constants.C_sp, "seed": self.constants.seed},
        }


def make_initial_data(P: DyadicPartition, params: BesovParams, kind: str = "random-beta", seed: int = 0,
                      u_norm: float = 0.006, h_norm: float = 0.004, beta: float = 3.0, mode=(1, 0),
                      u_path=None, h_path=None):
    """Named presets: zero, single-mode, random-beta, file.  Norms are B^s_{p,r} targets."""
    grid = P.grid
    if kind == "zero":
        return Field.zeros(grid, 2), Field.zeros(grid)
    if kind == "file":
        if u_path is None or h_path is None:
            raise ConfigurationError("file initial data need both u_path and h_path")
        u0, h0 = read_field(u_path), read_field(h_path)
        if u0.grid != grid or h0.grid != grid:
            raise ConfigurationError(f"initial data files are on {u0.grid} / {h0.grid}, config grid is {grid}")
        return u0, h0
    if kind == "single-mode":
        m = np.asarray(mode, dtype=float)
        if not np.any(m):
            raise ConfigurationError("single-mode initial data need a nonzero mode")
        phase = 2 * math.pi * np.tensordot(m, grid.coords, axes=1) / grid.length
        direction = np.array([-m[1], m[0]]) / np.linalg.norm(m)  # divergence free
        u0 = Field(grid, direction[:, None, None] * np.cos(phase)[None])
        h0 = Field(grid, np.cos(phase))
    elif kind == "random-beta":
        spec = RandomFieldSpec(beta=beta, seed=seed, amplitude=1.0)
        u0 = random_field(P, spec, 0, 0, components=2)
        h0 = random_field(P, spec, 0, 1)
    else:
        raise ConfigurationError(f"unknown initial data preset {kind!r} (zero, single-mode, random-beta, file)")

    def scale(f, target):
        norm = besov(P, f, params.s, params.p, params.r)
        return f * (target / norm) if norm > 0 else f

    return scale(u0, u_norm), scale(h0, h_norm)


# ---------------------------------------------------------------------------
# budgets


@dataclass
class IterationBudget:
    E1: float
    E2: float
    T1: float
    T2: float
    conditions_T1: dict
    conditions_T2: dict

    def to_dict(self):
        return {
            "E1": self.E1,
            "E2": self.E2,
            "T1": self.T1,
            "T2": self.T2,
            "conditions_T1": self.conditions_T1,
            "conditions_T2": self.conditions_T2,
        }


def big_norm_conditions(T, E1, C0, C_sp, nu) -> dict:
    return {
        "T<=1": T <= 1.0,
        "exp(C0^2 E1 T)<=2": math.exp(C0**2 * E1 * T) <= 2.0,
        "exp(2 C0 C_sp E1 T)<=2": math.exp(2 * C0 * C_sp * E1 * T) <= 2.0,
        "(1+nu T)^(3/2)<=2": (1 + nu * T) ** 1.5 <= 2.0,
    }


def contraction_conditions(T, E1, E2, C, s, p) -> dict:
    ip = 0.0 if math.isinf(p) else 1.0 / p
    a = T ** (s / 2 - ip) + T**0.5 + T ** ((s - 1) / 2)
    b = T**0.5 + T ** (s - 2 * ip) + T ** ((s - 1) / 2)
    return {
        "c1": C * (1 + E1 + E1 * E2 + E1 * E2**2) * a <= 1 / 12,
        "c2": C * (E1 + E2) * b <= 1 / 12,
        "c3": C * (1 + E2) * T**0.5 <= 1 / 12,
        "c4": C * E1 * T**0.5 <= 1 / 12,
    }


def _largest(ok, upper):
    """Largest T in (0, upper] with ok(T), for ok monotone (true below a threshold)."""
    if ok(upper):
        return upper
    hi = upper
    lo = hi
    while not ok(lo):
        lo /= 2
        if lo < 1e-300:
            raise PreconditionError("no positive time window satisfies the window conditions")
    hi = 2 * lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def compute_budgets(cfg: SWConfig) -> IterationBudget:
    P, prm = cfg.partition, cfg.params
    if not prm.s > max(1.0, 2.0 / prm.p):
        raise PreconditionError(f"the iteration needs s > max(1, 2/p) (got s={prm.s}, p={prm.p})")
    C0, C_sp = cfg.constants.C0, cfg.constants.C_sp
    u_norm = besov(P, cfg.u0, prm.s, prm.p, prm.r)
    h_norm = besov(P, cfg.h0, prm.s, prm.p, prm.r)
    limit = 1.0 / (8 * C0 * C_sp)
    if h_norm > limit:
        raise PreconditionError(
            f"height smallness violated: ||h0||_B^s = {h_norm:.4g} > 1/(8 C0 C_sp) = {limit:.4g}"
        )
    E1 = 8.0 / cfg.nu * C0 * u_norm
    E2 = 4.0 * C0 * h_norm
    # every big-norm condition is an explicit upper bound on T
    bounds = [1.0, (2 ** (2 / 3) - 1) / cfg.nu]
    if E1 > 0:
        bounds += [math.log(2) / (C0**2 * E1), math.log(2) / (2 * C0 * C_sp * E1)]
    T1 = min(bounds)
    while not all(big_norm_conditions(T1, E1, C0, C_sp, cfg.nu).values()):
        T1 = math.nextafter(T1, 0.0)
    T2 = _largest(lambda T: all(contraction_conditions(T, E1, E2, C0, prm.s, prm.p).values()), T1)
    return IterationBudget(
        E1, E2, T1, T2,
        big_norm_conditions(T1, E1, C0, C_sp, cfg.nu),
        contraction_conditions(T2, E1, E2, C0, prm.s, prm.p),
    )


# ---------------------------------------------------------------------------
# right-hand sides shared by the iteration and the direct solver


def u_forcing(grid: Grid, U, H, nu, sign=PRESSURE_SIGN, oversample=4):
    """Spectrum of nu (grad ln(1+h) . grad) u + sign * grad h, dealiased."""
    h = Field(grid, grid.ifft(H))
    L = compose(h, np.log1p, oversample).spectrum
    dL = grid.ifft(spectral_gradient(grid, L))  # (2, n, n)
    du = grid.ifft(spectral_gradient(grid, U))  # (2 deriv, 2 comp, n, n)
    visc = product_coeffs(grid, dL[0][None], du[0]) + product_coeffs(grid, dL[1][None], du[1])
    return nu * visc + sign * spectral_gradient(grid, H)


def h_forcing(grid: Grid, U, H):
    """Spectrum of -div u - h div u, dealiased."""
    div = np.sum(1j * grid.wavevector * U, axis=0)
    return -div - product_coeffs(grid, grid.ifft(H), grid.ifft(div))


def _sw_dt(cfg: SWConfig, T):
    nsteps = max(cfg.min_steps, step_count(T, cfg.dt) if cfg.dt else cfg.min_steps)
    return T / nsteps, nsteps


def wave_speed(grid, U, H):
    u = grid.ifft(U)
    return float(np.max(np.sqrt(np.sum(u * u, axis=0)))) + math.sqrt(1 + float(np.max(np.abs(grid.ifft(H)))))


def check_regime(grid, H, t):
    low = 1.0 + float(np.min(grid.ifft(H)))
    if low < REGIME_FLOOR:
        raise RegimeExitError(f"regime exit at t={t:.6g}: min(1 + h) = {low:.4g} < {REGIME_FLOOR}", time=t)


def _guards(cfg, dt):
    grid = cfg.grid

    def before_step(t, k, F):
        check_regime(grid, F[1], t)
        limit = cfg.cfl_safety * grid.spacing / wave_speed(grid, F[0], F[1])
        if dt > limit * (1 + 1e-12):
            from .errors import CFLError

            raise CFLError(
                f"dt={dt:.4g} exceeds the wave CFL limit {limit:.4g} "
                f"(0.5 * spacing / (|u|_inf + sqrt(1 + |h|_inf))) at t={t:.4g}",
                required_dt=limit,
            )

    return before_step


# ---------------------------------------------------------------------------
# iterates


@dataclass
class IterationState:
    """Iterate n on the window: spectra at every step time and the RK stage spectra of its solve."""

    n: int
    times: list
    u: list
    h: list
    stages: list  # stages[step][stage] = (U, H)
    norms: dict = field(default_factory=dict)
    delta: Optional[float] = None


def initial_truncation(cfg: SWConfig, n: int):
    """S_{n+2}(u0, h0); n = -1 and n = 0 both give S_2."""
    if n < -1:
        raise ConfigurationError(f"initial truncation index n={n} must be >= -1")
    P = cfg.partition
    tab = P.cutoff_table(max(n, 0) + 2)
    return cfg.grid.truncate(tab * cfg.u0.spectrum), cfg.grid.truncate(tab * cfg.h0.spectrum)


def _fields(grid, spectra):
    return [Field(grid, grid.ifft(S)) for S in spectra]


def iterate_norms(cfg: SWConfig, state: IterationState) -> dict:
    P, prm, grid = cfg.partition, cfg.params, cfg.grid
    us = np.stack([block_norms(P, f, prm.p) for f in _fields(grid, state.u)])
    hs = np.stack([block_norms(P, f, prm.p) for f in _fields(grid, state.h)])
    return {
        "u_linf": chemin_lerner_from_series(P, state.times, us, INF, prm).total,
        "u_l2": chemin_lerner_from_series(P, state.times, us, 2.0, prm.shifted(1.0)).total,
        "h_linf": chemin_lerner_from_series(P, state.times, hs, INF, prm).total,
    }


def difference_norm(cfg: SWConfig, a: IterationState, b: IterationState) -> float:
    """||u_a - u_b||_{L~inf B^{s-1}} + ||u_a - u_b||_{L~2 B^s} + ||h_a - h_b||_{L~inf B^{s-1}}."""
    P, prm, grid = cfg.partition, cfg.params, cfg.grid
    du = np.stack([block_norms(P, f, prm.p) for f in _fields(grid, [x - y for x, y in zip(a.u, b.u)])])
    dh = np.stack([block_norms(P, f, prm.p) for f in _fields(grid, [x - y for x, y in zip(a.h, b.h)])])
    return (
        chemin_lerner_from_series(P, a.times, du, INF, prm.shifted(-1.0)).total
        + chemin_lerner_from_series(P, a.times, du, 2.0, prm).total
        + chemin_lerner_from_series(P, a.times, dh, INF, prm.shifted(-1.0)).total
    )


def first_iterate(cfg: SWConfig, T: float) -> IterationState:
    """(u_1, h_1) = S_2(u0, h0), constant in time."""
    dt, nsteps = _sw_dt(cfg, T)
    U, H = initial_truncation(cfg, 0)
    times = [k * dt for k in range(nsteps + 1)]
    stages = [[(U, H)] * 4 for _ in range(nsteps)]
    state = IterationState(1, times, [U] * (nsteps + 1), [H] * (nsteps + 1), stages)
    state.norms = iterate_norms(cfg, state)
    return state


def picard_step(state: IterationState, cfg: SWConfig, budget: Optional[IterationBudget] = None) -> IterationState:
    """Solve the two frozen-coefficient linear problems for iterate n + 1."""
    grid = cfg.grid
    nsteps = len(state.stages)
    dt = state.times[1] - state.times[0] if nsteps else 0.0
    for k, step in enumerate(state.stages):
        for _, H in step:
            check_regime(grid, H, state.times[k])
    U0, H0 = initial_truncation(cfg, state.n)
    frozen = state.stages
    nu, sign, over = cfg.nu, cfg.pressure_sign, cfg.oversample

    def u_rhs(t, key, Y, phys):
        Un, Hn = frozen[key[0]][key[1]]
        return [u_forcing(grid, Un, Hn, nu, sign, over) - advect_coeffs(grid, grid.ifft(Un), Y[0])]

    def h_rhs(t, key, Y, phys):
        Un, Hn = frozen[key[0]][key[1]]
        return [h_forcing(grid, Un, Hn) - advect_coeffs(grid, grid.ifft(Un), Y[0])]

    _, u_snaps, u_st = lawson_rk4(grid, [U0], [nu], u_rhs, dt, nsteps, 1, True)
    _, h_snaps, h_st = lawson_rk4(grid, [H0], [0.0], h_rhs, dt, nsteps, 1, True)
    stages = [[(us[0], hs[0]) for us, hs in zip(u_step, h_step)] for u_step, h_step in zip(u_st, h_st)]
    new = IterationState(state.n + 1, list(state.times), [s[0] for s in u_snaps], [s[0] for s in h_snaps], stages)
    new.norms = iterate_norms(cfg, new)
    new.delta = difference_norm(cfg, new, state)
    return new


def direct_spectral(cfg: SWConfig, T: float, dt: Optional[float] = None, snapshot_every: int = 1,
                    observer=None, initial=None, n_steps: Optional[int] = None):
    """Coupled solve; returns (times, [(U, H)] snapshots, dt)."""
    grid = cfg.grid
    U0, H0 = initial if initial is not None else initial_truncation(cfg, cfg.n_iters)
    if n_steps is None:
        if dt is None:
            dt, n_steps = _sw_dt(cfg, T)
            # default steps also respect the wave CFL limit at t = 0, with headroom for growth
            limit = DEFAULT_CFL_MARGIN * cfg.cfl_safety * grid.spacing / wave_speed(grid, U0, H0)
            if dt > limit:
                n_steps = step_count(T, limit)
                dt = T / n_steps
        else:
            n_steps = step_count(T, dt)
            dt = T / n_steps
    else:
        dt = T / n_steps
    nu, sign, over = cfg.nu, cfg.pressure_sign, cfg.oversample

    def rhs(t, key, Y, phys):
        Fu = u_forcing(grid, Y[0], Y[1], nu, sign, over)
        Fh = h_forcing(grid, Y[0], Y[1])
        return [Fu - advect_coeffs(grid, phys[0], Y[0]), Fh - advect_coeffs(grid, phys[0], Y[1])]

    guard = _guards(cfg, dt)

    def before_step(t, k, F):
        guard(t, k, F)
        if observer is not None:
            observer(t, k, F)

    times, snaps, _ = lawson_rk4(grid, [U0, H0], [nu, 0.0], rhs, dt, n_steps, snapshot_every, False, before_step)
    if observer is not None:
        observer(times[-1], n_steps, snaps[-1])
    check_regime(grid, snaps[-1][1], times[-1])
    return times, snaps, dt


def direct_solve(cfg: SWConfig, horizon: float, dt: Optional[float] = None, snapshot_every: int = 1):
    """Trajectories (u, h) of the coupled nonlinear system on [0, horizon]."""
    from .linear import Trajectory

    times, snaps, dt = direct_spectral(cfg, horizon, dt, snapshot_every)
    grid = cfg.grid
    meta = {"scheme": "lawson-rk4", "dt": dt, "nu": cfg.nu}
    u = Trajectory(times, [Field(grid, grid.ifft(s[0])) for s in snaps], dict(meta))
    h = Trajectory(times, [Field(grid, grid.ifft(s[1])) for s in snaps], dict(meta))
    return u, h


def mass(grid: Grid, H) -> float:
    """Integral of h over the torus (exact for the trapezoid rule on a periodic grid)."""
    return float(H[0, 0].real) * grid.length**2


def fixed_point_residual(cfg: SWConfig, state: IterationState) -> float:
    """One-step defect of the coupled scheme on the iterate, per unit time, in L~inf_T B^{s-2}."""
    grid, P, prm = cfg.grid, cfg.partition, cfg.params
    if len(state.times) < 2:
        return 0.0
    dt = state.times[1] - state.times[0]
    worst = np.zeros(P.num_blocks)
    for k in range(len(state.times) - 1):
        _, snaps, _ = direct_spectral(cfg, dt, initial=(state.u[k], state.h[k]), n_steps=1)
        du = Field(grid, grid.ifft((snaps[-1][0] - state.u[k + 1]) / dt))
        dh = Field(grid, grid.ifft((snaps[-1][1] - state.h[k + 1]) / dt))
        worst = np.maximum(worst, block_norms(P, du, prm.p) + block_norms(P, dh, prm.p))
    return besov_from_blocks(P, worst, prm.s - 2, prm.r)


# ---------------------------------------------------------------------------
# the iteration run


def fit_ratio(deltas: dict, lo: int = 2, hi: int = 8):
    """q = 10^slope of a least-squares line through log10 delta_n over nonzero n in [lo, hi]."""
    pts = [(n, d) for n, d in deltas.items() if lo <= n <= hi and d > 0]
    if len(pts) < 2:
        # exact convergence (all later differences vanish) counts as q = 0
        return 0.0
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.log10([p[1] for p in pts])
    slope = np.polyfit(n, y, 1)[0]
    return float(10.0**slope)


@dataclass
class IterationReport:
    config: dict
    budget: dict
    window: float
    dt: float
    steps: int
    iterates: list
    q: float
    contraction: bool
    residual: float
    gap_direct: Optional[float]
    gap_bound: Optional[float]
    gap_ok: Optional[bool]
    mass_drift: Optional[float] = None

    @property
    def chi_ok(self) -> bool:
        return all(it["in_chi"] for it in self.iterates)

    def to_dict(self):
        return {
            "schema": ITERATION_SCHEMA,
            "config": self.config,
            "budget": self.budget,
            "window": self.window,
            "dt": self.dt,
            "steps": self.steps,
            "iterates": self.iterates,
            "chi_ok": self.chi_ok,
            "q": self.q,
            "contraction": self.contraction,
            "residual": self.residual,
            "gap_direct": self.gap_direct,
            "gap_bound": self.gap_bound,
            "gap_ok": self.gap_ok,
        }


def run_iteration(cfg: SWConfig, compare_direct: bool = True) -> IterationReport:
    budget = compute_budgets(cfg)
    T = cfg.T if cfg.T is not None else budget.T2
    state = first_iterate(cfg, T)
    history = [state]
    for _ in range(cfg.n_iters - 1):
        state = picard_step(state, cfg, budget)
        history.append(state)
    rows = []
    for st in history:
        nrm = st.norms
        rows.append({
            "n": st.n,
            "u_linf": nrm["u_linf"],
            "u_l2": nrm["u_l2"],
            "h_linf": nrm["h_linf"],
            "in_chi": bool(nrm["u_linf"] <= budget.E1 and nrm["u_l2"] <= budget.E1 and nrm["h_linf"] <= budget.E2),
            "delta": st.delta,
            "min_depth": 1.0 + min(float(np.min(cfg.grid.ifft(H))) for H in st.h),
        })
    deltas = {st.n: st.delta for st in history if st.delta is not None}
    q = fit_ratio(deltas, 2, cfg.n_iters)
    gap = bound = ok = None
    if compare_direct:
        times, snaps, _ = direct_spectral(cfg, T, n_steps=len(state.stages))
        direct = IterationState(-1, times, [s[0] for s in snaps], [s[1] for s in snaps], [])
        P, prm, grid = cfg.partition, cfg.params, cfg.grid
        du = np.stack([block_norms(P, f, prm.p) for f in _fields(grid, [a - b for a, b in zip(state.u, direct.u)])])
        gap = chemin_lerner_from_series(P, times, du, INF, prm.shifted(-1.0)).total
        last = deltas.get(state.n, 0.0)
        bound = 10.0 * last
        # when the iteration has reached its fixed point exactly, the gap must vanish exactly
        ok = bool(gap < bound or (gap == 0.0 and bound == 0.0))
    dt = T / len(state.stages) if state.stages else 0.0
    return IterationReport(
        config=cfg.summary(),
        budget=budget.to_dict(),
        window=T,
        dt=dt,
        steps=len(state.stages),
        iterates=rows,
        q=q,
        contraction=q < 1.0,
        residual=fixed_point_residual(cfg, state),
        gap_direct=gap,
        gap_bound=bound,
        gap_ok=ok,
    )


# ---------------------------------------------------------------------------
# continuity in the data


@dataclass
class DivergenceReport:
    gaps: list  # initial data gap per probe
    trajectory_gaps: list  # sup-in-time gap at the horizon per probe
    ratios: list
    horizon: float
    control: Optional[dict] = None

    def to_dict(self):
        return {
            "gaps": self.gaps,
            "trajectory_gaps": self.trajectory_gaps,
            "ratios": self.ratios,
            "horizon": self.horizon,
            "control": self.control,
        }


def _trajectory_gap(cfg, a, b):
    P, prm, grid = cfg.partition, cfg.params, cfg.grid
    times, sa = a
    _, sb = b
    du = np.stack([block_norms(P, Field(grid, grid.ifft(x[0] - y[0])), prm.p) for x, y in zip(sa, sb)])
    dh = np.stack([block_norms(P, Field(grid, grid.ifft(x[1] - y[1])), prm.p) for x, y in zip(sa, sb)])
    low = prm.shifted(-1.0)
    return (chemin_lerner_from_series(P, times, du, INF, low).total
            + chemin_lerner_from_series(P, times, dh, INF, low).total)


def uniqueness_probe(cfg: SWConfig, other: SWConfig, horizon: float, dt: Optional[float] = None,
                     levels: int = 3) -> DivergenceReport:
    """Run the base data against base + 2^-k (other - base) for k = 0..levels-1."""
    if other.grid != cfg.grid or other.nu != cfg.nu:
        raise ConfigurationError("uniqueness probe configs must differ only in their initial data")
    P, prm = cfg.partition, cfg.params
    base = direct_spectral(cfg, horizon, dt)
    du0 = other.u0 - cfg.u0
    dh0 = other.h0 - cfg.h0
    gaps, traj_gaps = [], []
    for k in range(levels):
        w = 2.0**-k
        probe = replace(cfg, u0=cfg.u0 + du0 * w, h0=cfg.h0 + dh0 * w)
        run = direct_spectral(probe, horizon, dt)
        gaps.append(besov(P, du0 * w, prm.s - 1, prm.p, prm.r) + besov(P, dh0 * w, prm.s - 1, prm.p, prm.r))
        traj_gaps.append(_trajectory_gap(cfg, base[:2], run[:2]))
    ratios = [traj_gaps[i] / traj_gaps[i + 1] if traj_gaps[i + 1] > 0 else math.inf for i in range(levels - 1)]
    return DivergenceReport(gaps, traj_gaps, ratios, horizon)


# ---------------------------------------------------------------------------
# long-time runs


@dataclass
class GlobalReport:
    times: list
    u_besov: list
    h_besov: list
    u_hs1: list
    u_l2hs1: list
    mass: list
    s1: float
    envelope_C: float
    fit_until: float
    below_envelope: bool
    regime_exit: Optional[float]
    dt: float
    horizon: float
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema": GLOBAL_SCHEMA,
            "config": self.config,
            "horizon": self.horizon,
            "dt": self.dt,
            "s1": self.s1,
            "envelope_C": self.envelope_C,
            "fit_until": self.fit_until,
            "below_envelope": self.below_envelope,
            "regime_exit": self.regime_exit,
            "sup_norm": max((a + b for a, b in zip(self.u_besov, self.h_besov)), default=0.0),
            "mass_drift": mass_drift(self.mass, self.config["grid"]["length"] ** 2 if self.config else 1.0),
            "series": {
                "t": self.times,
                "u_besov": self.u_besov,
                "h_besov": self.h_besov,
                "u_hs1": self.u_hs1,
                "u_l2hs1": self.u_l2hs1,
                "mass": self.mass,
            },
        }


def mass_drift(masses, area: float = 1.0) -> float:
    """max |m(t) - m(0)| relative to |m(0)|.

    When m(0) is at roundoff level (below 1e-12 * area) the drift is reported
    per unit area instead, so a zero-mean height does not divide by noise.
    """
    if not masses:
        return 0.0
    ref = abs(masses[0])
    dev = max(abs(m - masses[0]) for m in masses)
    return dev / ref if ref > 1e-12 * area else dev / area


def fit_envelope(times, values, fit_fraction=0.25):
    """Smallest C with M(t) <= C e^{Ct} on the first ``fit_fraction`` of the horizon.

    M is the running supremum of ``values``.  C e^{Ct} >= M is equivalent to
    C >= W(M t) / t for t > 0 (W the principal Lambert function) and C >= M(0).
    Returns (C, fit_until, holds_on_the_rest).
    """
    t = np.asarray(times, dtype=float)
    M = np.maximum.accumulate(np.asarray(values, dtype=float))
    if t.size == 0:
        return 0.0, 0.0, True
    cut = t[0] + fit_fraction * (t[-1] - t[0])
    fit = t <= cut
    C = float(M[0])
    pos = fit & (t > 0)
    if np.any(pos):
        C = max(C, float(np.max(lambertw(M[pos] * t[pos]).real / t[pos])))
    rest = ~fit
    holds = bool(np.all(M[rest] <= C * np.exp(C * t[rest]) * (1 + 1e-12)))
    return C, float(cut), holds


def global_run(cfg: SWConfig, horizon: float, dt: Optional[float] = None, checkpoint_every: int = 0,
               checkpoint=None, eta: Optional[float] = None) -> GlobalReport:
    """Direct solve over a long horizon with per-step norm logging and the exponential envelope fit."""
    P, prm, grid = cfg.partition, cfg.params, cfg.grid
    if prm.p > 2:
        raise PreconditionError(f"global runs need p <= 2 (got p={prm.p})")
    s1 = prm.s - 2.0 / prm.p + 1.0 - cfg.eps
    if not 2.0 / prm.p < prm.s - cfg.eps:
        raise PreconditionError(f"need 2/p < s - eps (got s={prm.s}, p={prm.p}, eps={cfg.eps})")
    size = besov(P, cfg.u0, prm.s, prm.p, prm.r) + besov(P, cfg.h0, prm.s, prm.p, prm.r)
    if eta is not None and size > eta * (1 + 1e-12):
        raise PreconditionError(f"||u0||_B^s + ||h0||_B^s = {size:.4g} exceeds the small-data threshold eta={eta}")
    log = {"t": [], "u": [], "h": [], "hs": [], "hs1": [], "mass": []}

    def observer(t, k, F):
        U, H = F[0], F[1]
        log["t"].append(t)
        log["u"].append(besov(P, Field(grid, grid.ifft(U)), prm.s, prm.p, prm.r))
        log["h"].append(besov(P, Field(grid, grid.ifft(H)), prm.s, prm.p, prm.r))
        uf = Field(grid, grid.ifft(U))
        log["hs"].append(sobolev_norm(uf, s1))
        log["hs1"].append(sobolev_norm(uf, s1 + 1) ** 2)
        log["mass"].append(mass(grid, H))
        if checkpoint is not None and checkpoint_every and k % checkpoint_every == 0:
            checkpoint(t, k, U, H)

    exit_time = None
    step_dt = dt if dt is not None else 0.05
    try:
        _, _, step_dt = direct_spectral(cfg, horizon, step_dt, snapshot_every=max(1, step_count(horizon, step_dt)),
                                        observer=observer)
    except RegimeExitError as exc:
        exit_time = exc.time
    times = log["t"]
    cum = np.zeros(len(times))
    if len(times) > 1:
        tt = np.asarray(times)
        vals = np.asarray(log["hs1"])
        cum[1:] = np.cumsum(0.5 * np.diff(tt) * (vals[1:] + vals[:-1]))
    total = [a + b for a, b in zip(log["u"], log["h"])]
    C, cut, holds = fit_envelope(times, total)
    return GlobalReport(
        times=[float(t) for t in times],
        u_besov=log["u"],
        h_besov=log["h"],
        u_hs1=log["hs"],
        u_l2hs1=[float(math.sqrt(c)) for c in cum],
        mass=log["mass"],
        s1=s1,
        envelope_C=C,
        fit_until=cut,
        below_envelope=holds and exit_time is None,
        regime_exit=exit_time,
        dt=step_dt,
        horizon=horizon,
        config=cfg.summary(),
    )
