import dataclasses

import numpy as np
import pytest

from shellab.errors import DomainError
from shellab.noise import (
    Control,
    CovarianceSpec,
    RkhsVector,
    apply_sigma,
    compose_sigma_nu,
    constant_diagonal,
    linear_diagonal,
    lq_norm,
    rkhs_inner,
    rkhs_norm,
    sample_wiener,
    saturated_nemytskii,
    verify_conditions,
    wiener_stream,
)
from shellab.spectral import ModelParams, ShellState


def params(m=4):
    return ModelParams("GOY", a=1.0, b=-1.25, mu=2.0, k0=1.0, m=m)


class TestRkhs:
    def test_single_shell(self):
        q = CovarianceSpec(np.array([4.0, 1.0, 1.0]))
        assert rkhs_norm(RkhsVector.basis(3, 1), q) == pytest.approx(0.5)

    def test_zero(self):
        q = CovarianceSpec.uniform(3)
        assert rkhs_norm(RkhsVector.zeros(3), q) == 0.0

    def test_mixed(self):
        q = CovarianceSpec.uniform(2)
        h = RkhsVector(np.array([1.0, 2.0j]))
        assert rkhs_norm(h, q) == pytest.approx(np.sqrt(5.0))

    def test_isometry_with_covariance_root(self, rng):
        # |Q^{1/2} x|_0 = |x| for every x
        q = CovarianceSpec(rng.uniform(0.1, 3.0, 6))
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        h = np.sqrt(q.q) * x
        assert rkhs_norm(h, q) == pytest.approx(float(np.sqrt(np.sum(np.abs(x) ** 2))))

    def test_bad_covariance(self):
        with pytest.raises(DomainError):
            CovarianceSpec(np.array([1.0, 0.0]))
        with pytest.raises(DomainError):
            CovarianceSpec(np.array([1.0, -2.0]))


class TestLq:
    def test_identity_gives_trace(self):
        q = CovarianceSpec(np.array([1.0, 2.0, 3.0]))
        assert lq_norm(np.eye(3), q) == pytest.approx(np.sqrt(6.0))

    def test_zero_and_scaled_diag(self):
        q = CovarianceSpec.uniform(3)
        assert lq_norm(np.zeros((3, 3)), q) == 0.0
        assert lq_norm(2.0 * np.eye(3), q) == pytest.approx(np.sqrt(12.0))

    def test_relabeling_invariance(self, rng):
        qv = rng.uniform(0.2, 2.0, 5)
        mat = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        perm = rng.permutation(5)
        a = lq_norm(mat, CovarianceSpec(qv))
        b = lq_norm(mat[:, perm], CovarianceSpec(qv[perm]))
        assert a == pytest.approx(b)


class TestWiener:
    def test_bit_exact_reproducibility(self):
        q = CovarianceSpec.geometric(4)
        p1 = sample_wiener(seed=42, steps=64, dt=0.01, q=q)
        p2 = sample_wiener(seed=42, steps=64, dt=0.01, q=q)
        assert np.array_equal(p1.increments, p2.increments)
        p3 = sample_wiener(seed=43, steps=64, dt=0.01, q=q)
        assert not np.array_equal(p1.increments, p3.increments)

    def test_streams_disjoint(self):
        q = CovarianceSpec.uniform(3)
        a = sample_wiener(seed=1, steps=16, dt=0.1, q=q, stream=0)
        b = sample_wiener(seed=1, steps=16, dt=0.1, q=q, stream=1)
        assert not np.array_equal(a.increments, b.increments)

    def test_moments(self):
        # per-component variance is q_j * dt; Monte Carlo check at 1e5 draws
        q = CovarianceSpec(np.array([0.7, 2.0, 0.1]))
        dt = 0.02
        path = sample_wiener(seed=9, steps=10**5, dt=dt, q=q)
        re = path.increments.real
        mean = re.mean(axis=0)
        se = re.std(axis=0) / np.sqrt(re.shape[0])
        assert np.all(np.abs(mean) <= 4 * se)
        var = re.var(axis=0)
        np.testing.assert_allclose(var, q.q * dt, rtol=0.05)
        var_im = path.increments.imag.var(axis=0)
        np.testing.assert_allclose(var_im, q.q * dt, rtol=0.05)

    def test_validation(self):
        q = CovarianceSpec.uniform(2)
        with pytest.raises(DomainError):
            sample_wiener(seed=0, steps=0, dt=0.1, q=q)
        with pytest.raises(DomainError):
            sample_wiener(seed=0, steps=4, dt=-1.0, q=q)


class TestSigmaFamilies:
    def test_constant_identity_action(self):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        spec = constant_diagonal(q, gains=1.0, params=p)
        h = RkhsVector.basis(p.m, 1)
        out = apply_sigma(spec, 0.3, ShellState.zeros(p), h)
        np.testing.assert_array_equal(out.components, h.coefficients)

    def test_linear_gain(self):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        spec = linear_diagonal(q, gains=1.0, params=p)
        u = ShellState.basis(p, 1)
        out = apply_sigma(spec, 0.0, u, RkhsVector.basis(p.m, 1))
        assert out.components[0] == pytest.approx(2.0)  # 1 + |u_1|

    def test_saturated_vanishes_at_origin(self, rng):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        spec = saturated_nemytskii(q, gains=1.0, saturation=0.7, params=p)
        h = RkhsVector(rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m))
        out = apply_sigma(spec, 0.5, ShellState.zeros(p), h)
        assert np.all(out.components == 0)

    def test_composition_at_zero_is_sigma(self):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        sig = constant_diagonal(q, gains=1.0, params=p)
        bar = linear_diagonal(q, gains=0.5, params=p)
        assert compose_sigma_nu(sig, bar, 0.0) is sig

    def test_composition_action(self, rng):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        sig = constant_diagonal(q, gains=1.0, params=p)
        bar = constant_diagonal(q, gains=0.0, params=p)
        comp = compose_sigma_nu(sig, bar, 1.0)
        u = rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m)
        h = rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m)
        np.testing.assert_allclose(comp.apply(0.1, u, h), sig.apply(0.1, u, h))

    def test_composition_constants_table(self):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        sig = linear_diagonal(q, gains=1.0, params=p)
        bar = linear_diagonal(q, gains=0.3, params=p)
        comp = compose_sigma_nu(sig, bar, 0.5)
        kb0 = max(sig.constants.Kb0, bar.constants.Kb0)
        assert comp.constants.K0 == pytest.approx(4 * kb0)
        assert comp.constants.Kt0 == pytest.approx(4 * kb0)
        assert comp.constants.K1 == pytest.approx(2 * sig.constants.Kb1)
        assert comp.constants.L1 == pytest.approx(2 * sig.constants.Lb1)
        assert comp.constants.KtH == pytest.approx(2 * bar.constants.KbH)
        assert comp.constants.Kt2 == pytest.approx(2 * bar.constants.Kb2)
        assert comp.constants.Lt2 == pytest.approx(2 * bar.constants.Lb2)

    def test_composition_continuity_rate(self, rng):
        # |(sigma_nu - sigma)(t,u) h| = sqrt(nu) |sigma_bar(t,u) h| exactly
        p = params()
        q = CovarianceSpec.uniform(p.m)
        sig = constant_diagonal(q, gains=1.0, params=p)
        bar = linear_diagonal(q, gains=0.4, params=p)
        u = rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m)
        h = rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m)
        base = np.linalg.norm(bar.apply(0.2, u, h))
        for nu in (1e-1, 1e-2, 1e-4):
            comp = compose_sigma_nu(sig, bar, nu)
            diff = np.linalg.norm(comp.apply(0.2, u, h) - sig.apply(0.2, u, h))
            assert diff == pytest.approx(np.sqrt(nu) * base, rel=1e-12)

    def test_negative_nu_rejected(self):
        p = params()
        q = CovarianceSpec.uniform(p.m)
        sig = constant_diagonal(q, params=p)
        with pytest.raises(DomainError):
            compose_sigma_nu(sig, sig, -0.1)


class TestVerifyConditions:
    def test_constant_family_passes_with_zero_lipschitz(self):
        p = params(m=5)
        q = CovarianceSpec.geometric(p.m)
        spec = constant_diagonal(q, gains=1.0, params=p)
        assert spec.constants.L1 == 0.0
        rep = verify_conditions(spec, samples=100, nu_grid=(0.0, 0.5), seed=1)
        assert rep.passed
        assert rep.entry("lip_trace@nu=0").empirical_max == 0.0

    def test_understated_constant_fails(self):
        # large states make the |u|^2 growth term bind, exposing a K~_1 lie
        p = params(m=5)
        q = CovarianceSpec.uniform(p.m)
        spec = linear_diagonal(q, gains=1.0, params=p)
        ok = verify_conditions(spec, samples=100, seed=2, state_scale=100.0)
        assert ok.passed
        bad = spec.with_constants(Kt1=spec.constants.Kt1 * 1e-4)
        rep = verify_conditions(bad, samples=100, seed=2, state_scale=100.0)
        assert not rep.passed
        assert not all(e.passed for e in rep.entries if e.name.startswith("growth_op"))

    @pytest.mark.parametrize("maker", [linear_diagonal, saturated_nemytskii])
    def test_state_dependent_families_pass(self, maker):
        p = params(m=6)
        q = CovarianceSpec.geometric(p.m)
        spec = maker(q, gains=0.8, params=p, time_amp=0.5, time_exponent=0.5)
        rep = verify_conditions(spec, samples=300, nu_grid=(0.0, 0.2, 1.0), seed=3)
        assert rep.passed, [e for e in rep.entries if not e.passed]

    def test_composed_family_passes(self):
        p = params(m=5)
        q = CovarianceSpec.geometric(p.m)
        sig = linear_diagonal(q, gains=1.0, params=p)
        bar = saturated_nemytskii(q, gains=0.5, params=p)
        comp = compose_sigma_nu(sig, bar, 0.3)
        rep = verify_conditions(comp, samples=200, nu_grid=(0.3,), seed=4)
        assert rep.passed, [e for e in rep.entries if not e.passed]

    def test_saturated_lipschitz_below_derivative_bound(self, rng):
        # independent oracle: the saturation profile s r / (s + r) has
        # derivative bound s^2/(s+r)^2 <= 1, so the scalar Lipschitz constant
        # of the gain is max_n g_n sqrt(q_n) (time factor 1 at amp = 0)
        p = params(m=4)
        q = CovarianceSpec.uniform(p.m, 0.5)
        spec = saturated_nemytskii(q, gains=1.5, saturation=0.9, params=p)
        bound = np.sqrt(np.max(spec.gains**2 * q.q))
        worst = 0.0
        for _ in range(200):
            u = rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m)
            v = u + 0.1 * (rng.standard_normal(p.m) + 1j * rng.standard_normal(p.m))
            dg = spec.gain(0.0, u) - spec.gain(0.0, v)
            num = np.sqrt(np.sum(dg**2 * q.q))
            den = np.sqrt(np.sum(np.abs(u - v) ** 2))
            worst = max(worst, num / den)
        assert worst <= bound * (1 + 1e-12)
        assert spec.constants.L1 == pytest.approx(bound**2)


class TestControl:
    def test_energy_quadrature(self):
        q = CovarianceSpec(np.array([2.0, 1.0, 1.0]))
        # constant single-shell control h_1 = x/T: energy = x^2 / (2 q_1 T)
        x, horizon = 1.5, 2.0
        vec = np.zeros(3, dtype=complex)
        vec[0] = x / horizon
        h = Control.constant(horizon, q, vec, n_cells=8)
        assert h.energy == pytest.approx(x**2 / (2 * q.q[0] * horizon))

    def test_energy_additive_and_quadratic(self, rng):
        q = CovarianceSpec.uniform(3)
        vals = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        h = Control(1.2, vals, q)
        top = Control(0.6, vals[:3], q)
        bot = Control(0.6, vals[3:], q)
        assert h.energy == pytest.approx(top.energy + bot.energy)
        assert h.scaled(3.0).energy == pytest.approx(9.0 * h.energy)

    def test_energy_ball_membership(self):
        q = CovarianceSpec.uniform(2)
        h = Control.constant(1.0, q, np.array([1.0, 0.0]), n_cells=4)
        assert h.in_energy_ball(2 * h.energy)
        assert not h.in_energy_ball(2 * h.energy * 0.99)

    def test_step_grid_alignment(self):
        q = CovarianceSpec.uniform(2)
        h = Control(1.0, np.ones((4, 2), dtype=complex), q)
        grid = h.on_step_grid(8)
        assert grid.shape == (8, 2)
        with pytest.raises(DomainError):
            h.on_step_grid(10)

    def test_rkhs_inner_matches_norm(self, rng):
        q = CovarianceSpec(rng.uniform(0.5, 2.0, 4))
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        assert rkhs_inner(x, x, q) == pytest.approx(rkhs_norm(x, q) ** 2)


def test_constants_record_roundtrip():
    p = params()
    q = CovarianceSpec.uniform(p.m)
    spec = linear_diagonal(q, gains=1.0, params=p)
    d = spec.constants.as_dict()
    assert set(d) == set(spec.constants.__dataclass_fields__)
    clone = dataclasses.replace(spec.constants, **d)
    assert clone == spec.constants


def test_wiener_stream_is_counter_based():
    g0 = wiener_stream(7, 0)
    g1 = wiener_stream(7, 1)
    assert g0.standard_normal() != g1.standard_normal()
