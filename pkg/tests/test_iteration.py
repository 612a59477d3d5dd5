"""Shallow water Picard iteration, direct solver, uniqueness probe and global runs."""

import math
from dataclasses import replace

import numpy as np
import pytest

from lpsw.errors import ConfigurationError, PreconditionError, RegimeExitError
from lpsw.grid import Field, Grid, spectral_gradient
from lpsw.iteration import (
    SWConfig,
    big_norm_conditions,
    compute_budgets,
    contraction_conditions,
    direct_solve,
    fit_envelope,
    fit_ratio,
    global_run,
    initial_truncation,
    make_initial_data,
    mass_drift,
    run_iteration,
    u_forcing,
    uniqueness_probe,
)
from lpsw.lab import Calibration
from lpsw.norms import BesovParams, besov
from lpsw.partition import build_partition

C0, C_SP = 1.4758535929284744, 0.1671870508253717
PARAMS = BesovParams(2.0, 2.0, 2.0)


def constants(c0=C0, c_sp=C_SP):
    return Calibration(c0, c_sp, {}, {}, 0, 0, {})


@pytest.fixture(scope="module")
def P():
    return build_partition(Grid(32, 8 * math.pi))


def make_cfg(P, kind="random-beta", seed=0, nu=0.5, c0=C0, u_norm=0.006, h_norm=0.004, **kw):
    u0, h0 = make_initial_data(P, PARAMS, kind, seed, u_norm, h_norm)
    cfg = SWConfig(P.grid, nu, PARAMS, u0, h0, constants(c0), **kw)
    object.__setattr__(cfg, "_partition", P)
    return cfg


class TestConfig:
    @pytest.mark.parametrize("nu", [0.0, 1.0, 1.5, -0.1])
    def test_rejects_nu_outside_unit_interval(self, P, nu):
        with pytest.raises(ConfigurationError) as info:
            make_cfg(P, nu=nu)
        assert any("nu" in v for v in info.value.violations)

    def test_lists_every_violation(self, P):
        u0, h0 = make_initial_data(P, PARAMS, "zero")
        with pytest.raises(ConfigurationError) as info:
            SWConfig(P.grid, 2.0, PARAMS, h0, u0, constants(), n_iters=0, pressure_sign=0.0)
        assert len(info.value.violations) == 5

    def test_rejects_deep_height(self, P):
        g = P.grid
        with pytest.raises(ConfigurationError, match="invalid"):
            SWConfig(g, 0.5, PARAMS, Field.zeros(g, 2), Field(g, np.full(g.shape, -1.2)), constants())

    def test_unknown_preset(self, P):
        with pytest.raises(ConfigurationError, match="preset"):
            make_initial_data(P, PARAMS, "vortex")

    def test_preset_norms(self, P):
        u0, h0 = make_initial_data(P, PARAMS, "random-beta", 3, 0.01, 0.02)
        assert besov(P, u0, 2, 2, 2) == pytest.approx(0.01, rel=1e-12)
        assert besov(P, h0, 2, 2, 2) == pytest.approx(0.02, rel=1e-12)

    def test_single_mode_is_divergence_free(self, P):
        u0, _ = make_initial_data(P, PARAMS, "single-mode", mode=(2, 1))
        g = P.grid
        div = np.sum(1j * g.wavevector * u0.spectrum, axis=0)
        assert np.max(np.abs(div)) < 1e-14


class TestBudgets:
    def test_zero_data(self, P):
        b = compute_budgets(make_cfg(P, "zero"))
        assert b.E1 == 0.0 and b.E2 == 0.0
        assert b.T1 == pytest.approx(min(1.0, (2 ** (2 / 3) - 1) / 0.5), rel=1e-15)
        assert all(b.conditions_T1.values()) and all(b.conditions_T2.values())
        assert 0 < b.T2 <= b.T1

    def test_e1_closed_form(self, P):
        b = compute_budgets(make_cfg(P, c0=1.0, u_norm=0.01))
        assert b.E1 == pytest.approx(0.16, rel=1e-12)
        assert b.E2 == pytest.approx(4 * 0.004, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_windows_satisfy_conditions(self, P, seed):
        cfg = make_cfg(P, seed=seed, u_norm=0.05, h_norm=0.02)
        b = compute_budgets(cfg)
        assert b.T2 <= b.T1
        assert all(big_norm_conditions(b.T1, b.E1, C0, C_SP, 0.5).values())
        assert all(contraction_conditions(b.T2, b.E1, b.E2, C0, 2.0, 2.0).values())
        # T2 is the largest admissible window up to bisection resolution
        if b.T2 < b.T1:
            assert not all(contraction_conditions(b.T2 * (1 + 1e-9), b.E1, b.E2, C0, 2.0, 2.0).values())

    def test_height_smallness(self, P):
        limit = 1 / (8 * C0 * C_SP)
        with pytest.raises(PreconditionError, match="smallness"):
            compute_budgets(make_cfg(P, h_norm=1.1 * limit))

    def test_needs_enough_regularity(self, P):
        u0, h0 = make_initial_data(P, PARAMS, "zero")
        cfg = SWConfig(P.grid, 0.5, BesovParams(1.0, 2, 2), u0, h0, constants())
        with pytest.raises(PreconditionError):
            compute_budgets(cfg)


class TestIteration:
    def test_initial_truncation(self, P):
        cfg = make_cfg(P)
        for n in (-1, 0):
            U, H = initial_truncation(cfg, n)
            np.testing.assert_array_equal(U, P.grid.truncate(P.cutoff_table(2) * cfg.u0.spectrum))
        U, _ = initial_truncation(cfg, 5)
        np.testing.assert_allclose(U, cfg.u0.spectrum, atol=1e-16)
        with pytest.raises(ConfigurationError):
            initial_truncation(cfg, -2)

    def test_zero_data(self, P):
        rep = run_iteration(make_cfg(P, "zero"))
        assert all(it["u_linf"] == 0 and it["h_linf"] == 0 for it in rep.iterates)
        assert rep.residual == 0.0 and rep.q == 0.0 and rep.contraction
        assert rep.gap_direct == 0.0 and rep.gap_ok and rep.chi_ok

    def test_small_data_contracts(self, P):
        rep = run_iteration(make_cfg(P, seed=1))
        assert rep.chi_ok and rep.contraction and rep.q <= 0.75
        assert rep.gap_ok
        assert rep.iterates[0]["delta"] is None
        assert [it["n"] for it in rep.iterates] == list(range(1, 9))
        assert rep.to_dict()["schema"] == "lpsw.iteration/1"

    def test_fixed_window(self, P):
        rep = run_iteration(make_cfg(P, seed=2, T=0.01, n_iters=3), compare_direct=False)
        assert rep.window == 0.01 and rep.gap_direct is None and len(rep.iterates) == 3

    def test_fit_ratio(self):
        assert fit_ratio({2: 1.0, 3: 0.1, 4: 0.01}) == pytest.approx(0.1)
        assert fit_ratio({2: 1.0, 3: 0.0}) == 0.0


class TestDirect:
    def test_rest_state_is_steady(self, P):
        g = P.grid
        cfg = SWConfig(g, 0.5, PARAMS, Field.zeros(g, 2), Field(g, np.full(g.shape, 0.2)), constants())
        u, h = direct_solve(cfg, 1.0)
        assert np.max(np.abs(u.final.values)) < 1e-14
        np.testing.assert_allclose(h.final.values, 0.2, atol=1e-14)

    def test_mass_conserved(self, P):
        cfg = make_cfg(P, seed=4, u_norm=0.2, h_norm=0.2)
        _, h = direct_solve(cfg, 1.0, dt=0.05)
        area = P.grid.length ** 2
        masses = [P.grid.cell_area * float(np.sum(f.values)) for f in h.fields]
        assert mass_drift(masses, area) < 1e-9

    def test_default_steps_respect_cfl(self, P):
        cfg = make_cfg(P, seed=3, min_steps=1)
        u, _ = direct_solve(cfg, 2.0)
        limit = 0.5 * P.grid.spacing / (1 + float(np.max(np.abs(cfg.u0.values))))
        assert u.metadata["dt"] <= limit

    def test_regime_exit(self, P):
        g = P.grid
        cfg = make_cfg(P, "single-mode")
        cfg = replace(cfg, h0=Field(g, 0.9 * np.cos(2 * math.pi * g.coords[0] / g.length)),
                      u0=Field(g, np.stack([np.full(g.shape, 0.0), 0.9 * np.sin(2 * math.pi * g.coords[0] / g.length)])))
        with pytest.raises(RegimeExitError) as info:
            direct_solve(cfg, 40.0, dt=0.05)
        assert info.value.time is not None

    def test_pressure_sign(self, P):
        g = P.grid
        H = g.fft(np.cos(2 * math.pi * g.coords[0] / g.length) * 0.1)
        U = np.zeros((2, *g.shape), dtype=complex)
        for sign in (-1.0, 1.0):
            np.testing.assert_allclose(u_forcing(g, U, H, 0.5, sign), sign * spectral_gradient(g, H), atol=1e-16)

    def test_mass_drift_reference(self):
        assert mass_drift([2.0, 2.0, 2.002]) == pytest.approx(1e-3)
        assert mass_drift([1e-15, 3e-15], area=100.0) == pytest.approx(2e-17)
        assert mass_drift([]) == 0.0


class TestUniqueness:
    def test_gap_shrinks_with_data(self, P):
        base = make_cfg(P, seed=5, u_norm=0.05, h_norm=0.05)
        du, dh = make_initial_data(P, PARAMS, "random-beta", 6, 0.01, 0.01)
        other = replace(base, u0=base.u0 + du, h0=base.h0 + dh)
        rep = uniqueness_probe(base, other, 0.5, dt=0.05)
        assert all(r >= 1.5 for r in rep.ratios)
        assert rep.gaps[0] == pytest.approx(2 * rep.gaps[1])

    def test_configs_must_match(self, P):
        a = make_cfg(P, seed=0)
        with pytest.raises(ConfigurationError):
            uniqueness_probe(a, replace(a, nu=0.3), 0.1)


class TestGlobal:
    def test_zero_data(self, P):
        rep = global_run(make_cfg(P, "zero"), 2.0, dt=0.1)
        assert rep.below_envelope and rep.regime_exit is None
        assert max(rep.u_besov) == 0.0 and max(rep.h_besov) == 0.0
        assert rep.to_dict()["mass_drift"] == 0.0

    def test_small_data(self, P):
        rep = global_run(make_cfg(P, seed=7, u_norm=0.05, h_norm=0.05), 4.0, dt=0.1)
        assert rep.below_envelope
        assert rep.times[-1] == pytest.approx(4.0)
        assert rep.u_l2hs1 == sorted(rep.u_l2hs1)

    def test_eta_threshold(self, P):
        with pytest.raises(PreconditionError, match="eta"):
            global_run(make_cfg(P, u_norm=0.5), 1.0, eta=0.1)

    def test_checkpoints(self, P):
        seen = []
        global_run(make_cfg(P, seed=8), 1.0, dt=0.1, checkpoint_every=5, checkpoint=lambda t, k, U, H: seen.append(k))
        assert seen == [0, 5, 10]

    def test_envelope(self):
        t = np.linspace(0, 4, 41)
        C, cut, holds = fit_envelope(t, 0.1 * np.ones_like(t))
        assert C == pytest.approx(0.1) and cut == pytest.approx(1.0) and holds
        C, _, holds = fit_envelope(t, np.exp(2 * t))
        assert not holds
