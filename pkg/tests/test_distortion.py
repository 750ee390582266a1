import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaugecd import distortion as ds
from gaugecd import lq_models as lq

TWO_PI = 2 * math.pi


def heis_display(d, t, th):
    """Heisenberg coefficient written directly from its half-angle form."""
    a, b = t * th / 2, th / 2
    num = math.sin(a) ** (2 * d - 1) * (math.sin(a) - a * math.cos(a))
    den = math.sin(b) ** (2 * d - 1) * (math.sin(b) - b * math.cos(b))
    return t * num / den


class TestMakeBeta:
    def setup_method(self):
        self.beta = ds.make_beta(ds.heisenberg_s(1))

    def test_small_theta_is_power(self):
        assert self.beta(0.5, 1e-6) == pytest.approx(0.5 ** 5, rel=1e-6)
        assert self.beta(0.5, 0.0) == 0.5 ** 5

    def test_endpoints(self):
        assert self.beta(1.0, 1.0) == 1.0
        assert self.beta(0.0, 3.0) == 0.0

    def test_beyond_first_zero(self):
        assert math.isinf(self.beta(0.5, TWO_PI + 1))
        assert math.isinf(self.beta(0.5, TWO_PI))
        assert self.beta(1.0, TWO_PI + 1) == 1.0

    def test_corrupt_model(self):
        s = ds.ModelFunction(lambda th: np.cos(np.asarray(th)), 1.0, 10.0)
        with pytest.raises(ds.CorruptModelError):
            ds.make_beta(s)(0.5, 2.0)

    def test_t_range(self):
        with pytest.raises(ValueError):
            self.beta(1.5, 1.0)

    def test_vector_dispatch(self):
        s = ds.three_d_model(0.0)
        beta = ds.make_beta(s)
        assert math.isinf(beta(0.5, np.array([7.0, 0.0])))
        assert beta(1.0, np.array([1.0, 1.0])) == 1.0
        assert beta(0.5, np.zeros(2)) == 0.5 ** 5

    def test_array_arguments(self):
        out = self.beta(np.array([0.2, 0.5]), np.array([1.0, 2.0]))
        assert out.shape == (2,)
        assert out[1] == pytest.approx(heis_display(1, 0.5, 2.0), rel=1e-12)


class TestHeisenberg:
    def test_pi_half(self):
        # 40-digit value of the trigonometric form
        assert ds.beta_heisenberg(1, 0.5, math.pi) == pytest.approx(0.053650459150637922596, rel=1e-13)

    def test_frozen_second(self):
        assert ds.beta_heisenberg(1, 0.3, 5.0) == pytest.approx(0.017452987224770938024, rel=1e-13)

    def test_limit(self):
        assert ds.beta_heisenberg(1, 0.4, 0.0) == 0.4 ** 5
        assert ds.beta_heisenberg(1, 0.4, 1e-9) == pytest.approx(0.4 ** 5, rel=1e-9)

    def test_unit_time(self):
        assert ds.beta_heisenberg(1, 1.0, math.pi) == 1.0

    def test_infinite_beyond(self):
        assert math.isinf(ds.beta_heisenberg(2, 0.5, 7.0))

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_half_angle_form(self, d):
        for t in (0.1, 0.5, 0.9):
            for th in (0.3, 2.0, 6.0):
                assert ds.beta_heisenberg(d, t, th) == pytest.approx(heis_display(d, t, th), rel=1e-10)

    @given(st.floats(0.01, TWO_PI - 0.01))
    def test_trig_identity(self, x):
        lhs = 2 - 2 * math.cos(x) - x * math.sin(x)
        rhs = 4 * math.sin(x / 2) * (math.sin(x / 2) - (x / 2) * math.cos(x / 2))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)

    @given(st.floats(0.0, 1.0), st.floats(0.0, TWO_PI - 1e-3))
    def test_bounded_below_by_power(self, t, th):
        assert ds.beta_heisenberg(1, t, th) >= t ** 5 - 1e-12

    def test_order(self):
        assert ds.fit_order(ds.heisenberg_s(1)) == pytest.approx(5.0, abs=0.02)

    def test_rejects_bad_d(self):
        with pytest.raises(ValueError):
            ds.beta_heisenberg(0, 0.5, 1.0)


class TestClassical:
    @pytest.mark.parametrize("kind", ["sigma", "tau"])
    def test_flat(self, kind):
        assert ds.beta_classical(kind, 0.0, 3.0, 0.4, 2.0) == pytest.approx(0.4 ** 3)

    def test_sigma_beyond(self):
        th = math.pi * math.sqrt(2) * (1 + 1e-9)
        assert math.isinf(ds.beta_classical("sigma", 1.0, 2.0, 0.5, th))

    def test_sigma_positive(self):
        c = 1.0 / math.sqrt(2)
        ref = (math.sin(0.5 * c) / math.sin(c)) ** 2
        assert ds.beta_classical("sigma", 1.0, 2.0, 0.5, 1.0) == pytest.approx(ref)

    def test_tau_negative(self):
        c = 2.0 * math.sqrt(1 / 2)
        ref = 0.3 * (math.sinh(0.3 * c) / math.sinh(c)) ** 2
        assert ds.beta_classical("tau", -1.0, 3.0, 0.3, 2.0) == pytest.approx(ref)

    def test_invalid_kind(self):
        with pytest.raises(ValueError):
            ds.beta_classical("rho", 0.0, 2.0, 0.5, 1.0)

    @pytest.mark.parametrize("kind", ["sigma", "tau"])
    def test_model_reproduces_coefficient(self, kind):
        beta = ds.make_beta(ds.classical_model(kind, 1.0, 3.0))
        for t, th in [(0.3, 1.0), (0.7, 2.5)]:
            assert beta(t, th) == pytest.approx(ds.beta_classical(kind, 1.0, 3.0, t, th), rel=1e-12)


class TestFindNprime:
    ts = np.linspace(0, 1, 51)

    def test_heisenberg(self):
        ths = np.linspace(0, TWO_PI - 0.01, 80)
        Np, deficit = ds.find_Nprime(ds.make_beta(ds.heisenberg_s(1)), self.ts, ths)
        assert Np == pytest.approx(5.0, abs=0.01)
        assert deficit >= -1e-12

    def test_flat_sigma(self):
        Np, _ = ds.find_Nprime(ds.make_beta(ds.classical_model("sigma", 0.0, 4.0)), self.ts, np.linspace(0, 3, 20))
        assert Np == pytest.approx(4.0)

    def test_positive_curvature_sigma(self):
        # sin is concave on [0, pi], so the ratio dominates the flat one
        beta = ds.make_beta(ds.classical_model("sigma", 1.0, 3.0))
        Np, deficit = ds.find_Nprime(beta, self.ts, np.linspace(0, 5.0, 30))
        assert Np == pytest.approx(3.0)
        assert deficit >= -1e-15

    def test_negative_curvature_needs_more(self):
        # sinh is convex, so sinh(tc)/sinh(c) < t and the exponent must grow
        beta = ds.make_beta(ds.classical_model("sigma", -1.0, 3.0))
        ths = np.linspace(0, 4.0, 30)
        Np, deficit = ds.find_Nprime(beta, self.ts, ths)
        assert Np > 3.0 and deficit >= -1e-12
        T, TH = np.meshgrid(self.ts[1:-1], ths, indexing="ij")
        worst = np.max(np.log(beta(T, TH)) / np.log(T))
        assert Np - 0.01 < worst <= Np

    def test_unbounded(self):
        beta = ds.DistortionCoefficient(lambda t, th: np.where((t > 0) & (t < 1), 0.0, t), None)
        with pytest.raises(ds.UnboundedExponentError):
            ds.find_Nprime(beta, self.ts, np.array([1.0]), base=1.0)


class TestFat:
    @pytest.mark.parametrize("n,k", [(3, 2), (5, 4), (7, 4)])
    def test_order(self, n, k):
        s = ds.compose_fat_s(n, k, 0.5, 0.3, 1.0, -0.2)
        assert s.order == 3 * n - 2 * k
        assert ds.fit_order(s) == pytest.approx(3 * n - 2 * k, abs=0.05)

    def test_flat_pure_power(self):
        s = ds.compose_fat_s(3, 2, 0.0, 0.0, 0.0, 0.0)
        th = np.array([0.5, 1.0, 2.0])
        vals = s(th)
        np.testing.assert_allclose(vals / th ** 5, vals[0] / 0.5 ** 5, rtol=1e-9)

    def test_first_zero_is_min_of_conjugate_times(self):
        s = ds.compose_fat_s(5, 4, 1.0, 0.0, 1.0, 1.0)
        # kappa_c = 1 vanishes at pi, the (1, 0) two-row factor at 2 pi
        assert s.first_zero == pytest.approx(math.pi, abs=1e-6)
        assert s(math.pi - 0.01) > 0

    def test_exponent_omitted(self):
        s = ds.compose_fat_s(3, 2, 0.0, 0.0, 1.0, 50.0)
        assert s.first_zero == pytest.approx(TWO_PI, abs=1e-6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ds.compose_fat_s(5, 2, 0, 0, 0, 0)


class TestDom:
    def test_flat_K(self):
        phi, dirs = ds.dom_directions(8)
        D = ds.dom_region(ds.three_d_model(0.0), dirs)
        finite = np.cos(phi) > 1e-12
        np.testing.assert_allclose(D[finite], TWO_PI / np.cos(phi[finite]), rtol=1e-6)
        assert math.isinf(D[-1])

    def test_negative_K_vertical(self):
        assert math.isinf(ds.dom_region(ds.three_d_model(-1.0), [[0.0, 1.0]])[0])

    def test_zero_kappa(self):
        kb = lq.VectorKappa(2, (lambda th: 0.0, lambda th: 0.0))
        s = ds.vector_model(2, kb)
        assert all(math.isinf(v) for v in ds.dom_region(s, [[1, 0], [0.6, 0.8]]))

    def test_radial_zero_agrees(self):
        s = ds.three_d_model(1.0)
        u = np.array([0.6, 0.8])
        assert ds.radial_first_zero(s, u, r_max=10, n=2000) == pytest.approx(s.boundary(u), rel=1e-6)

    def test_kappa_conjugate_time_scale(self):
        assert ds.kappa_conjugate_time([4 * math.pi ** 2, 0.0]) == pytest.approx(1.0, abs=1e-8)
        assert math.isinf(ds.kappa_conjugate_time([0.0, 0.0]))


class TestBeta3D:
    def test_flat_K_sasakian_in_theta1(self):
        for th2 in (0.0, 1.0, 5.0):
            ref = 0.4 * lq.closed_form_s("sasakian", [1.44], 0.4) / lq.closed_form_s("sasakian", [1.44], 1.0)
            assert ds.beta_3d_model(0.0, 0.4, 1.2, th2) == pytest.approx(ref, rel=1e-12)

    def test_unit_time(self):
        assert ds.beta_3d_model(1.0, 1.0, 1.0, 1.0) == 1.0

    def test_lq_oracle(self):
        ref = 0.5 * lq.beta_lq(lq.build_row_model(2, [2.0, 0.0]), 0.5)
        assert ds.beta_3d_model(1.0, 0.5, 1.0, 1.0) == pytest.approx(ref, rel=1e-8)

    def test_outside_domain(self):
        assert math.isinf(ds.beta_3d_model(1.0, 0.5, 6.0, 3.0))

    def test_matches_vector_model(self):
        beta = ds.make_beta(ds.three_d_model(0.5))
        th = np.array([1.0, 2.0])
        assert beta(0.6, th) == pytest.approx(ds.beta_3d_model(0.5, 0.6, *th), rel=1e-8)


class TestProperties:
    @given(st.floats(0.1, 1.0), st.floats(0.0, TWO_PI - 0.05))
    def test_positive_on_bounded_sets(self, t, th):
        assert ds.beta_heisenberg(1, t, th) > 0

    @given(st.floats(0.05, 0.95), st.floats(0.0, 6.0), st.floats(1e-3, 0.2))
    def test_continuity(self, t, th, delta):
        # along theta_j = theta + delta / 2^j the differences shrink geometrically
        a = ds.beta_heisenberg(1, t, th)
        diffs = [abs(ds.beta_heisenberg(1, t, th + delta / 2 ** j) - a) for j in range(12)]
        for d0, d1 in zip(diffs[4:], diffs[5:]):
            assert d1 <= 0.6 * d0 + 1e-14
        assert diffs[-1] <= 1e-3 * max(diffs[0], 1e-12) + 1e-14

    @given(st.floats(0.0, 1.0))
    def test_interpolation_endpoints(self, t):
        b0 = ds.make_beta(ds.heisenberg_s(1))
        b1 = ds.make_beta(ds.classical_model("sigma", 0.0, 3.0))
        for w, ref in ((0.0, b0), (1.0, b1)):
            assert ds.interpolate_betas(b0, b1, w)(t, 1.0) == pytest.approx(float(ref(t, 1.0)))
        mid = ds.interpolate_betas(b0, b1, 0.5)(t, 1.0)
        assert math.isfinite(mid)

    def test_radial_monotonicity(self):
        assert ds.radial_monotonicity(lambda th: float(np.linalg.norm(th)), [1.0, 0.0], 2.0) == "nondecreasing"
        assert ds.radial_monotonicity(lambda th: 1.0, [1.0, 0.0], 2.0) == "constant"
