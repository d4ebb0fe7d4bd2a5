import math

import numpy as np
import pytest
from scipy import stats

from shellab.errors import DomainError
from shellab.ldp import (
    MCResult,
    OptimizerConfig,
    Oscillatory,
    RandomSignFlips,
    RateProblem,
    TerminalBall,
    TerminalCoordinate,
    adjoint_gradient,
    control_inner,
    cost,
    level_set_probe,
    mc_probability,
    minimize_rate,
    weak_convergence_experiment,
)
from shellab.ldp import _forward_with_stages
from shellab.noise import (
    Control,
    CovarianceSpec,
    constant_diagonal,
    linear_diagonal,
    saturated_nemytskii,
)
from shellab.spectral import ModelParams, ShellState


def decoupled_problem(m=3, g=1.0, qval=1.0, x=1.0, horizon=1.0, shell=1, k0=0.5):
    params = ModelParams("GOY", a=0.0, b=0.0, mu=2.0, k0=k0, m=m)
    q = CovarianceSpec.uniform(m, qval)
    sigma = constant_diagonal(q, gains=g, params=params)
    return RateProblem(
        params=params,
        sigma=sigma,
        covariance=q,
        xi=ShellState.zeros(params),
        T=horizon,
        target=TerminalCoordinate(shell=shell, threshold=x),
        M_cap=50.0,
    )


def coupled_problem(rng, family="linear", m=5, horizon=0.4):
    params = ModelParams("GOY", a=1.0, b=-1.25, mu=2.0, k0=0.7, m=m)
    q = CovarianceSpec.geometric(m, first=1.0, ratio=0.5)
    maker = {
        "constant": constant_diagonal,
        "linear": linear_diagonal,
        "saturated": saturated_nemytskii,
    }[family]
    sigma = maker(q, gains=0.8, params=params)
    phases = np.exp(2j * math.pi * rng.uniform(size=m))
    xi = ShellState((0.3 + 0.2 * rng.uniform(size=m)) * phases / params.shell_wavenumbers(), params)
    return RateProblem(
        params=params,
        sigma=sigma,
        covariance=q,
        xi=xi,
        T=horizon,
        target=TerminalCoordinate(shell=2, threshold=0.6),
        M_cap=100.0,
    )


def random_control(prob, rng, n_cells=8, scale=0.3):
    vals = scale * (rng.standard_normal((n_cells, prob.params.m))
                    + 1j * rng.standard_normal((n_cells, prob.params.m)))
    return Control(prob.T, vals, prob.covariance)


class TestCost:
    def test_zero(self):
        prob = decoupled_problem()
        assert cost(Control.zero(prob.T, 4, prob.covariance)) == 0.0

    def test_single_shell_closed_form(self):
        # constant h_n = x/T: cost = x^2 / (2 q_n T)
        for x, qv, horizon in [(1.0, 1.0, 1.0), (0.5, 2.0, 3.0), (2.0, 0.5, 0.7)]:
            q = CovarianceSpec.uniform(3, qv)
            vec = np.zeros(3, dtype=complex)
            vec[0] = x / horizon
            h = Control.constant(horizon, q, vec, n_cells=4)
            assert cost(h) == pytest.approx(x**2 / (2 * qv * horizon), rel=1e-12)

    def test_quadratic_scaling(self, rng):
        prob = decoupled_problem()
        h = random_control(prob, rng)
        assert cost(h.scaled(2.0)) == pytest.approx(4 * cost(h), rel=1e-12)

    def test_convexity_quadratic_identity(self, rng):
        # exact parallelogram form of a quadratic: cost(l h + (1-l) g)
        # = l cost(h) + (1-l) cost(g) - l (1-l) cost(h - g)
        prob = decoupled_problem()
        h, g = random_control(prob, rng), random_control(prob, rng)
        for lam in (0.2, 0.5, 0.9):
            mix = Control(h.horizon, lam * h.values + (1 - lam) * g.values, h.q)
            expect = lam * cost(h) + (1 - lam) * cost(g) - lam * (1 - lam) * cost(
                Control(h.horizon, h.values - g.values, h.q)
            )
            assert cost(mix) == pytest.approx(expect, rel=1e-10)
            assert cost(mix) <= lam * cost(h) + (1 - lam) * cost(g) + 1e-12


class TestAdjointGradient:
    def test_gradient_zero_when_target_met_at_zero_control(self):
        prob = decoupled_problem(x=-1.0)  # threshold below zero: already met
        h = Control.zero(prob.T, 8, prob.covariance)
        g, J = adjoint_gradient(prob, h, penalty_weight=100.0, steps=64)
        assert J == 0.0
        assert np.all(g.values == 0)

    @pytest.mark.parametrize("family", ["constant", "linear", "saturated"])
    def test_gradient_matches_central_differences(self, family, rng):
        prob = coupled_problem(rng, family=family)
        h = random_control(prob, rng, n_cells=8, scale=0.25)
        d = random_control(prob, rng, n_cells=8, scale=1.0)
        g, J0 = adjoint_gradient(prob, h, penalty_weight=3.0, steps=128)
        analytic = control_inner(g, d)
        eps = 1e-5

        def j_at(t):
            hh = Control(h.horizon, h.values + t * d.values, h.q)
            _, J = adjoint_gradient(prob, hh, penalty_weight=3.0, steps=128)
            return J

        fd = (j_at(eps) - j_at(-eps)) / (2 * eps)
        assert abs(fd - analytic) <= 1e-5 * max(abs(analytic), 1e-8)

    def test_gradient_affine_in_linear_problem(self, rng):
        # a=b=0 with constant gains: the state map is affine in h, so the
        # gradient of the quadratic objective is affine in h
        prob = decoupled_problem()
        h1, h2 = random_control(prob, rng), random_control(prob, rng)
        lam = 0.3
        mix = Control(h1.horizon, lam * h1.values + (1 - lam) * h2.values, h1.q)
        g1, _ = adjoint_gradient(prob, h1, 5.0, steps=64)
        g2, _ = adjoint_gradient(prob, h2, 5.0, steps=64)
        gm, _ = adjoint_gradient(prob, mix, 5.0, steps=64)
        np.testing.assert_allclose(
            gm.values, lam * g1.values + (1 - lam) * g2.values, rtol=1e-9, atol=1e-12
        )

    def test_step_cell_alignment_required(self, rng):
        prob = decoupled_problem()
        h = random_control(prob, rng, n_cells=6)
        with pytest.raises(DomainError):
            adjoint_gradient(prob, h, 1.0, steps=64)


class TestMinimizeRate:
    def test_closed_form_rate_unit_gains(self):
        # sigma = identity: rate = x^2 / (2 q_n T)
        for x, qv, horizon in [(1.0, 1.0, 1.0), (0.8, 2.0, 0.5), (1.5, 0.5, 2.0)]:
            prob = decoupled_problem(x=x, qval=qv, horizon=horizon)
            res = minimize_rate(prob, OptimizerConfig(steps=128, n_cells=8, restarts=2, seed=1))
            expect = x**2 / (2 * qv * horizon)
            assert res.converged
            assert res.rate_value == pytest.approx(expect, rel=1e-6)

    def test_closed_form_rate_general_gains(self):
        # gains g on the target shell: rate = x^2 / (2 g^2 q T)
        g, qv, x, horizon = 1.7, 0.8, 0.9, 1.3
        prob = decoupled_problem(g=g, qval=qv, x=x, horizon=horizon)
        res = minimize_rate(prob, OptimizerConfig(steps=128, n_cells=8, restarts=2, seed=2))
        assert res.rate_value == pytest.approx(x**2 / (2 * g**2 * qv * horizon), rel=1e-6)

    def test_doubling_q_halves_rate(self):
        r1 = minimize_rate(decoupled_problem(qval=1.0), OptimizerConfig(steps=64, n_cells=4, restarts=1))
        r2 = minimize_rate(decoupled_problem(qval=2.0), OptimizerConfig(steps=64, n_cells=4, restarts=1))
        assert r2.rate_value == pytest.approx(r1.rate_value / 2, rel=1e-6)

    def test_zero_cost_for_reachable_ball(self, rng):
        # ball centered at the uncontrolled skeleton endpoint: rate 0, h* = 0
        prob0 = coupled_problem(rng, family="constant")
        base = Control.zero(prob0.T, 8, prob0.covariance)
        u_T, _, _, _ = _forward_with_stages(prob0, base, 128)
        prob = RateProblem(
            params=prob0.params, sigma=prob0.sigma, covariance=prob0.covariance,
            xi=prob0.xi, T=prob0.T,
            target=TerminalBall(center=u_T, radius=0.1),
            M_cap=prob0.M_cap,
        )
        res = minimize_rate(prob, OptimizerConfig(steps=128, n_cells=8, restarts=2, seed=4))
        assert res.rate_value == pytest.approx(0.0, abs=1e-12)
        assert res.terminal_residual == 0.0
        assert np.all(res.h_star.values == 0)

    def test_rate_monotone_in_radius(self, rng):
        prob0 = coupled_problem(rng, family="constant")
        center = np.zeros(prob0.params.m, dtype=complex)
        center[1] = 1.2
        rates = []
        for radius in (0.4, 0.8):
            prob = RateProblem(
                params=prob0.params, sigma=prob0.sigma, covariance=prob0.covariance,
                xi=prob0.xi, T=prob0.T,
                target=TerminalBall(center=center, radius=radius),
                M_cap=prob0.M_cap,
            )
            rates.append(minimize_rate(prob, OptimizerConfig(steps=128, n_cells=8, restarts=2, seed=5)).rate_value)
        assert rates[1] <= rates[0] + 1e-9

    def test_energy_cap_saturation_reported(self):
        prob = decoupled_problem(x=4.0)  # needs rate 8 > M/2 when M = 2
        prob = RateProblem(
            params=prob.params, sigma=prob.sigma, covariance=prob.covariance,
            xi=prob.xi, T=prob.T, target=prob.target, M_cap=2.0,
        )
        res = minimize_rate(prob, OptimizerConfig(steps=64, n_cells=4, restarts=1))
        assert res.saturated
        assert not res.converged
        assert res.rate_value == pytest.approx(1.0, rel=1e-9)  # capped at M/2
        assert res.terminal_residual > 0


def gaussian_tail_oracle(prob, nu, steps=None):
    """Exact terminal law of the decoupled constant-gain dynamics."""
    n = prob.target.shell - 1
    k2 = prob.params.shell_wavenumbers()[n] ** 2
    g = prob.sigma.gains[n]
    qv = prob.covariance.q[n]
    var = g**2 * qv * (1 - math.exp(-2 * nu * k2 * prob.T)) / (2 * k2)
    return float(stats.norm.sf(prob.target.threshold / math.sqrt(var)))


class TestMonteCarlo:
    def test_whole_space_event(self):
        prob0 = decoupled_problem()
        prob = RateProblem(
            params=prob0.params, sigma=prob0.sigma, covariance=prob0.covariance,
            xi=prob0.xi, T=prob0.T,
            target=TerminalBall(center=np.zeros(prob0.params.m), radius=1e9),
            M_cap=prob0.M_cap,
        )
        res = mc_probability(prob, nu_grid=[0.5], n_paths=200, seed=0, steps=64)
        assert res.rows[0].p_hat == 1.0
        assert res.rows[0].stderr == 0.0

    def test_plain_matches_gaussian_tail(self):
        prob = decoupled_problem(x=0.6)
        nu = 0.2
        res = mc_probability(prob, nu_grid=[nu], n_paths=4000, seed=7, steps=256)
        row = res.rows[0]
        p_exact = gaussian_tail_oracle(prob, nu)
        se = math.sqrt(p_exact * (1 - p_exact) / row.n_paths)
        assert abs(row.p_hat - p_exact) <= 4 * se

    def test_tilted_unbiased_and_lower_variance(self):
        prob = decoupled_problem(x=1.0)
        nu = 0.05
        opt = minimize_rate(prob, OptimizerConfig(steps=128, n_cells=8, restarts=1))
        plain = mc_probability(prob, [nu], n_paths=20000, seed=3, steps=128)
        tilt = mc_probability(prob, [nu], n_paths=4000, seed=4, steps=128, tilt=opt.h_star)
        p_exact = gaussian_tail_oracle(prob, nu)
        pr, tr = plain.rows[0], tilt.rows[0]
        assert abs(tr.p_hat - p_exact) <= 4 * tr.stderr
        joint = math.hypot(pr.stderr, tr.stderr)
        assert abs(tr.p_hat - pr.p_hat) <= 4 * joint
        assert tr.stderr < pr.stderr  # variance reduction despite 5x fewer paths

    def test_zero_hits_flagged_with_infinite_rate(self):
        prob = decoupled_problem(x=5.0)
        res = mc_probability(prob, nu_grid=[0.01], n_paths=200, seed=1, steps=64)
        row = res.rows[0]
        assert row.zero_hits and row.p_hat == 0.0
        assert math.isinf(row.rate_estimate)

    def test_path_count_precondition(self):
        prob = decoupled_problem()
        with pytest.raises(DomainError):
            mc_probability(prob, [0.1], n_paths=50, seed=0)

    def test_chunking_invariance(self):
        prob = decoupled_problem(x=0.4)
        a = mc_probability(prob, [0.3], n_paths=300, seed=9, steps=64, chunk_size=64)
        b = mc_probability(prob, [0.3], n_paths=300, seed=9, steps=64, chunk_size=300)
        assert a.rows[0].p_hat == b.rows[0].p_hat


class TestWeakConvergence:
    @pytest.mark.parametrize("pert", [Oscillatory(amplitude=0.4), RandomSignFlips(amplitude=0.4)])
    def test_sup_error_decreases(self, pert, rng):
        prob = coupled_problem(rng, family="constant", m=5, horizon=0.5)
        base = np.zeros((8, prob.params.m), dtype=complex)
        base[:, 0] = 0.4
        h = Control(prob.T, base, prob.covariance)
        rows = weak_convergence_experiment(
            prob, h, pert, nu_grid=[1e-1, 1e-2, 1e-3], seeds=range(4), steps=1024
        )
        errs = [r.mean_sup_err for r in rows]
        assert errs[2] < errs[0]
        assert all(2.0 * cost_row <= prob.M_cap * (1 + 1e-9) for cost_row in
                   [r.control_energy2 / 2 for r in rows])

    def test_unperturbed_deterministic_limit_rate(self, rng):
        # no perturbation, no noise: pure viscosity error, O(nu)
        prob = coupled_problem(rng, family="constant", m=5, horizon=0.5)
        zero_gain = constant_diagonal(prob.covariance, gains=0.0, params=prob.params)
        prob0 = RateProblem(
            params=prob.params, sigma=zero_gain, covariance=prob.covariance,
            xi=prob.xi, T=prob.T, target=prob.target, M_cap=prob.M_cap,
        )
        h = Control.zero(prob.T, 8, prob.covariance)

        class NoOp:
            def build(self, hh, nu, steps, rng):
                return Control(hh.horizon, hh.on_step_grid(steps), hh.q)

        rows = weak_convergence_experiment(
            prob0, h, NoOp(), nu_grid=[4e-3, 2e-3, 1e-3], seeds=[0], steps=1024
        )
        e = [r.mean_sup_err for r in rows]
        assert e[0] / e[1] == pytest.approx(2.0, rel=0.2)
        assert e[1] / e[2] == pytest.approx(2.0, rel=0.2)


class TestLevelSet:
    def test_zero_cap_collapses_diameter(self, rng):
        prob = coupled_problem(rng, family="constant", m=5, horizon=0.4)
        rep = level_set_probe(prob, M=1e-20, n_controls=3, seed=0, steps=256, n_cells=8)
        assert rep.diameter <= 1e-8
        assert rep.mollify_modulus <= 1e-8

    def test_cap_growth_keeps_bound_finite(self, rng):
        prob = coupled_problem(rng, family="constant", m=5, horizon=0.4)
        r1 = level_set_probe(prob, M=0.5, n_controls=3, seed=1, steps=256, n_cells=8)
        r2 = level_set_probe(prob, M=1.0, n_controls=3, seed=1, steps=256, n_cells=8)
        assert np.isfinite(r2.uniform_bound)
        assert r2.uniform_bound >= r1.uniform_bound - 1e-12

    def test_mollification_bounded_by_modulus(self, rng):
        prob = coupled_problem(rng, family="constant", m=5, horizon=0.4)
        rep = level_set_probe(prob, M=0.5, n_controls=4, seed=2, steps=256, n_cells=8)
        assert all(d <= rep.mollify_modulus + 1e-15 for d in rep.mollify_distances)
        assert rep.mollify_modulus < rep.uniform_bound + 1.0  # sane scale


class TestProblemValidation:
    def test_alpha_range(self):
        prob = decoupled_problem()
        with pytest.raises(DomainError):
            RateProblem(
                params=prob.params, sigma=prob.sigma, covariance=prob.covariance,
                xi=prob.xi, T=prob.T, target=prob.target, M_cap=1.0, alpha=0.4,
            )
        ok = RateProblem(
            params=prob.params, sigma=prob.sigma, covariance=prob.covariance,
            xi=prob.xi, T=prob.T, target=prob.target, M_cap=1.0, alpha=0.4,
            allow_alpha_probe=True,
        )
        assert ok.alpha == 0.4

    def test_target_dims_checked(self):
        prob = decoupled_problem()
        with pytest.raises(DomainError):
            RateProblem(
                params=prob.params, sigma=prob.sigma, covariance=prob.covariance,
                xi=prob.xi, T=prob.T,
                target=TerminalCoordinate(shell=9, threshold=1.0), M_cap=1.0,
            )
