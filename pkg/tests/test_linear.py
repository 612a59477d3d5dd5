"""Transport and transport-diffusion solvers and their a-priori estimates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_band_field
from lpsw.errors import CFLError, ConfigurationError, PreconditionError
from lpsw.grid import Field, Grid
from lpsw.linear import (
    InterpolatedSampler,
    LinearProblem,
    Trajectory,
    check_smoothing_estimate,
    check_transport_estimate,
    shear_velocity,
    solve_transport,
    solve_transport_diffusion,
    step_count,
    transport_condition,
    velocity_branch,
)
from lpsw.norms import INF, lp_norm
from lpsw.partition import build_partition


def const_velocity(grid, c):
    return np.stack([np.full(grid.shape, c[0]), np.full(grid.shape, c[1])])


def l2_rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestTransport:
    def test_zero_velocity_is_identity(self, P32):
        f = random_band_field(P32, 0)
        traj = solve_transport(LinearProblem(f, T=1.0, dt=0.1))
        np.testing.assert_allclose(traj.final.values, f.values, atol=1e-13)

    @pytest.mark.parametrize("c", [(0.5, -0.3), (1.0, 0.0), (-0.2, 0.7)])
    def test_constant_velocity_translates(self, P32, c):
        g = P32.grid
        f = random_band_field(P32, 1)
        traj = solve_transport(LinearProblem(f, velocity=const_velocity(g, c), T=1.0, dt=0.01))
        expected = oracles.evaluate_trig(f.spectrum, g.length, (c[0], c[1]))
        assert l2_rel(traj.final.values, expected) < 1e-8

    def test_divergence_free_conserves_mass(self, P32):
        g = P32.grid
        f = random_band_field(P32, 2)
        traj = solve_transport(LinearProblem(f, velocity=shear_velocity(g, 0.8), T=2.0, dt=0.05))
        m0 = g.cell_area * np.sum(f.values)
        for h in traj.fields:
            assert abs(g.cell_area * np.sum(h.values) - m0) < 1e-12 * g.length**2

    def test_l2_conserved_for_shear(self, P32):
        g = P32.grid
        f = random_band_field(P32, 3)
        traj = solve_transport(LinearProblem(f, velocity=shear_velocity(g, 0.5), T=1.0, dt=0.02))
        assert lp_norm(traj.final, 2) == pytest.approx(lp_norm(f, 2), rel=1e-6)

    def test_snapshots(self, P32):
        f = random_band_field(P32, 0)
        traj = solve_transport(LinearProblem(f, T=1.0, dt=0.1, snapshot_every=3))
        assert traj.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
        assert traj.metadata["steps"] == 10 and traj.metadata["scheme"] == "rk4"

    def test_fourth_order_convergence(self, P32):
        g = P32.grid
        f = random_band_field(P32, 4)
        v = shear_velocity(g, 1.0)

        def run(dt):
            return solve_transport(LinearProblem(f, velocity=v, T=2.0, dt=dt)).final.values

        ref = run(0.00625)
        errors = [np.linalg.norm(run(dt) - ref) for dt in (0.2, 0.1, 0.05)]
        rates = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert min(rates) > 3.7

    @given(st.integers(0, 10_000), st.floats(-2.0, 2.0))
    @settings(max_examples=10)
    def test_linearity(self, seed, a):
        P = build_partition(Grid(32, 8 * math.pi))
        v = shear_velocity(P.grid, 0.7)
        f, h = random_band_field(P, seed), random_band_field(P, seed + 1)

        def run(x):
            return solve_transport(LinearProblem(x, velocity=v, T=0.5, dt=0.05)).final.values

        combo = run(f * a + h)
        scale = max(1.0, np.max(np.abs(combo)))
        assert np.max(np.abs(combo - (a * run(f) + run(h)))) < 1e-10 * scale

    def test_cfl_violation(self, P32):
        g = P32.grid
        f = random_band_field(P32, 0)
        with pytest.raises(CFLError) as info:
            solve_transport(LinearProblem(f, velocity=const_velocity(g, (4.0, 0.0)), T=1.0, dt=0.5))
        assert info.value.required_dt == pytest.approx(0.5 * g.spacing / 4.0)

    def test_rejects_diffusion(self, P32):
        with pytest.raises(ConfigurationError):
            solve_transport(LinearProblem(random_band_field(P32, 0), nu=0.1))

    def test_time_dependent_velocity(self, P32):
        g = P32.grid
        f = random_band_field(P32, 5)
        c = np.array([0.4, 0.2])
        # v(t) = c t moves the profile by c T^2 / 2
        traj = solve_transport(LinearProblem(f, velocity=lambda t: const_velocity(g, c * t), T=1.0, dt=0.01))
        expected = oracles.evaluate_trig(f.spectrum, g.length, tuple(c / 2))
        assert l2_rel(traj.final.values, expected) < 1e-8


class TestTransportDiffusion:
    @pytest.mark.parametrize("nu", [0.05, 0.5])
    def test_heat_decay(self, P32, nu):
        g = P32.grid
        m = (3, 2)
        kmag = g.k_unit * math.hypot(*m)
        f = Field(g, oracles.cos_mode(32, g.length, m, 0.7))
        traj = solve_transport_diffusion(LinearProblem(f, nu=nu, T=1.0, dt=0.1))
        for t, h in traj:
            expected = oracles.heat_mode(0.7, nu, kmag, t) * oracles.cos_mode(32, g.length, m)
            assert np.max(np.abs(h.values - expected)) < 1e-9

    def test_duhamel(self, P32):
        g = P32.grid
        m = (2, 1)
        kmag = g.k_unit * math.hypot(*m)
        forcing = oracles.cos_mode(32, g.length, m, 0.3)
        traj = solve_transport_diffusion(LinearProblem(Field.zeros(g), forcing=forcing, nu=0.2, T=2.0, dt=0.01))
        expected = oracles.duhamel_mode(0.3, 0.2, kmag, 2.0) * oracles.cos_mode(32, g.length, m)
        assert np.max(np.abs(traj.final.values - expected)) < 1e-9

    def test_maximum_principle(self, P32):
        g = P32.grid
        f = random_band_field(P32, 6)
        traj = solve_transport_diffusion(
            LinearProblem(f, velocity=shear_velocity(g, 0.6), nu=0.1, T=2.0, dt=0.05)
        )
        sup0 = np.max(np.abs(f.values))
        assert all(np.max(np.abs(h.values)) <= sup0 + 1e-6 for h in traj.fields)

    def test_metadata(self, P32):
        traj = solve_transport_diffusion(LinearProblem(random_band_field(P32, 0), nu=0.1, T=0.2, dt=0.1))
        assert traj.metadata["scheme"] == "lawson-rk4"

    def test_rejects_zero_viscosity(self, P32):
        with pytest.raises(ConfigurationError):
            solve_transport_diffusion(LinearProblem(random_band_field(P32, 0)))


class TestTrajectory:
    def test_length_mismatch(self, grid16):
        with pytest.raises(ConfigurationError):
            Trajectory([0.0, 1.0], [Field.zeros(grid16)])

    def test_times_increasing(self, grid16):
        z = Field.zeros(grid16)
        with pytest.raises(ConfigurationError):
            Trajectory([0.0, 0.0], [z, z])

    @pytest.mark.parametrize("T,dt,n", [(1.0, 0.1, 10), (1.0, 0.3, 4), (0.0, 0.1, 0), (1.0, 2.0, 1)])
    def test_step_count(self, T, dt, n):
        assert step_count(T, dt) == n

    def test_interpolated_sampler(self):
        s = InterpolatedSampler([0.0, 1.0], [np.zeros(2), np.ones(2)])
        np.testing.assert_allclose(s(0.25), 0.25)
        np.testing.assert_allclose(s(-1.0), 0.0)
        np.testing.assert_allclose(s(5.0), 1.0)


class TestConditions:
    @pytest.mark.parametrize(
        "s,p,p1,r,equality",
        [(1.0, 2, 2, 2, False), (-0.5, 2, 2, 1, False), (-1.0, 2, 2, INF, True), (0.5, 1, INF, 2, False)],
    )
    def test_admissible(self, s, p, p1, r, equality):
        assert transport_condition(s, p, p1, r) is equality

    @pytest.mark.parametrize("s,p,p1,r", [(-1.5, 2, 2, 2), (-1.0, 2, 2, 2), (0.0, 1, INF, 2), (1.0, 4, 2, 2)])
    def test_rejected(self, s, p, p1, r):
        with pytest.raises(PreconditionError):
            transport_condition(s, p, p1, r)

    def test_divergence_free_relaxes(self):
        assert transport_condition(-1.5, 2, 2, 2, divergence_free=True) is False

    @pytest.mark.parametrize(
        "s,p1,r,equality,branch",
        [
            (3.0, 2, 2, False, "B^{s-1}_{p1,r}"),
            (2.0, 2, 1, False, "B^{s-1}_{p1,r}"),
            (2.0, 2, 2, False, "B^{s-1}_{p1,r} + L^inf"),
            (1.0, 2, 2, False, "B^{2/p1}_{p1,inf} + L^inf"),
            (-1.0, 2, INF, True, "B^{2/p1}_{p1,1}"),
        ],
    )
    def test_branch(self, s, p1, r, equality, branch):
        assert velocity_branch(s, p1, r, equality) == branch


class TestEstimates:
    @pytest.mark.parametrize("which", ["zero", "constant"])
    def test_trivial_velocity_satisfied(self, P32, which):
        g = P32.grid
        v = None if which == "zero" else const_velocity(g, (0.3, 0.1))
        f = random_band_field(P32, 7)
        prob = LinearProblem(f, velocity=v, T=1.0, dt=0.05, snapshot_every=4)
        rep = check_transport_estimate(P32, solve_transport(prob), prob, 1.0, 2, 2, 2, C0=1.0)
        assert rep.satisfied and rep.V == pytest.approx(0.0, abs=1e-12)
        assert rep.required_C0 == 0.0 or which == "constant"

    def test_shear_transport_estimate(self, P32):
        g = P32.grid
        prob = LinearProblem(random_band_field(P32, 8), velocity=shear_velocity(g, 0.5), T=2.0, dt=0.05)
        rep = check_transport_estimate(P32, solve_transport(prob), prob, 2.0, 2, 2, 2, C0=5.0)
        assert rep.V > 0 and rep.satisfied
        assert 0 <= rep.required_C0 <= 5.0
        assert len(rep.V_series) == 41
        again = check_transport_estimate(P32, solve_transport(prob), prob, 2.0, 2, 2, 2, C0=rep.required_C0)
        assert again.satisfied

    def test_forcing_enters(self, P32):
        g = P32.grid
        forcing = oracles.cos_mode(32, g.length, (2, 1), 0.3)
        prob = LinearProblem(Field.zeros(g), forcing=forcing, T=1.0, dt=0.05)
        rep = check_transport_estimate(P32, solve_transport(prob), prob, 1.0, 2, 2, 2, C0=1.0)
        assert rep.terms["initial"] == 0.0 and rep.terms["forcing_integral"] > 0
        assert rep.satisfied

    def test_smoothing_estimate(self, P32):
        g = P32.grid
        prob = LinearProblem(random_band_field(P32, 9), velocity=shear_velocity(g, 0.4), nu=0.3, T=1.0, dt=0.05)
        traj = solve_transport_diffusion(prob)
        rep = check_smoothing_estimate(P32, traj, prob, 1.0, 2, 2, 2, rho=1, rho1=1, C0=10.0)
        assert rep.satisfied and rep.required_C0 <= 10.0
        assert rep.params["rho"] == 1.0

    def test_smoothing_order_of_exponents(self, P32):
        prob = LinearProblem(random_band_field(P32, 0), nu=0.3, T=0.2, dt=0.1)
        traj = solve_transport_diffusion(prob)
        with pytest.raises(PreconditionError):
            check_smoothing_estimate(P32, traj, prob, 1.0, 2, 2, 2, rho=1, rho1=2, C0=1.0)

    def test_report_dict(self, P32):
        prob = LinearProblem(random_band_field(P32, 0), T=0.2, dt=0.1)
        rep = check_transport_estimate(P32, solve_transport(prob), prob, 1.0, 2, 2, 2, C0=1.0)
        d = rep.to_dict()
        assert d["name"] == "transport" and d["branch"] == rep.branch
