import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_control.kernels import (
    BernsteinMeasure,
    FiniteSpectrumKernel,
    Kernel,
    KernelError,
    LogarithmicKernel,
    ResolventBlowUpError,
    RiemannLiouvilleKernel,
    SampledKernel,
    ShiftedKernel,
    cm_diagnostic,
    eta_star,
    eval_kernel,
    integrate_from_zero,
    kernel_from_json,
    kernel_to_json,
    primitive_and_ratio,
    read_kernel_csv,
    resolvent_kernel,
    resolvent_matrix_exponential,
    write_kernel_csv,
)

# high-precision reference values (mpmath, 30 digits)
INV_GAMMA_075 = 0.816048939098262981
RL_SQUARE_PRIMITIVE_1 = 1.331871742006801048
LOG_SQUARE_PRIMITIVE_1 = 2.605840094684629286
RL_RESOLVENT_C_MINUS1 = {0.5: 0.445936256842064131, 1.0: 0.232237720100961432}

RL = RiemannLiouvilleKernel(0.75)
EXP1 = FiniteSpectrumKernel(weights=(1.0,), rates=(1.0,))
ALL_KERNELS = [
    RL,
    RiemannLiouvilleKernel(0.6),
    RiemannLiouvilleKernel(0.9, beta=0.7),
    LogarithmicKernel(),
    EXP1,
    FiniteSpectrumKernel(c0=0.3, weights=(1.0, 0.5, 2.0), rates=(0.5, 3.0, 40.0)),
    FiniteSpectrumKernel(c0=2.0),
    ShiftedKernel(RL, 0.05),
    ShiftedKernel(LogarithmicKernel(), 0.2),
]


class TestEvalKernel:
    def test_riemann_liouville_at_one(self):
        assert eval_kernel(RL, 1.0) == pytest.approx(INV_GAMMA_075, rel=1e-14)

    def test_constant_kernel(self):
        k = FiniteSpectrumKernel(c0=2.0)
        assert eval_kernel(k, 0.0) == 2.0
        assert eval_kernel(k, 7.3) == 2.0

    def test_single_exponential(self):
        assert eval_kernel(EXP1, math.log(2.0)) == pytest.approx(0.5, rel=1e-15)

    def test_singular_family_rejects_zero(self):
        with pytest.raises(KernelError):
            eval_kernel(RL, 0.0)
        with pytest.raises(KernelError):
            eval_kernel(LogarithmicKernel(), np.array([1.0, 0.0]))

    def test_negative_time_rejected(self):
        with pytest.raises(KernelError):
            eval_kernel(EXP1, -1.0)

    def test_vectorized(self):
        t = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(eval_kernel(EXP1, t), np.exp(-t), rtol=1e-15)

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.family)
    def test_matches_numeric_laplace_of_measure(self, kernel):
        meas = kernel.measure
        for t in (1e-3, 0.01, 0.5, 3.0):
            direct = kernel(t)
            laplace = kernel.k_infinity + meas.laplace(t)
            assert direct == pytest.approx(laplace, rel=1e-8)

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.family)
    def test_nonnegative_and_nonincreasing(self, kernel):
        t = np.geomspace(1e-4, 10, 200)
        v = kernel(t)
        assert np.all(v >= 0)
        assert np.all(np.diff(v) <= 1e-15 * np.abs(v[:-1]))


class TestConstruction:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 0.3, 1.2])
    def test_rl_alpha_range(self, alpha):
        with pytest.raises(KernelError):
            RiemannLiouvilleKernel(alpha)

    def test_rl_negative_beta(self):
        with pytest.raises(KernelError):
            RiemannLiouvilleKernel(0.75, beta=-0.1)

    def test_shifted_needs_positive_eps(self):
        with pytest.raises(KernelError):
            ShiftedKernel(RL, 0.0)

    def test_finite_spectrum_validation(self):
        with pytest.raises(KernelError):
            FiniteSpectrumKernel(weights=(1.0,), rates=(1.0, 2.0))
        with pytest.raises(KernelError):
            FiniteSpectrumKernel(weights=(-1.0,), rates=(1.0,))
        with pytest.raises(KernelError):
            FiniteSpectrumKernel(weights=(1.0, 1.0), rates=(1.0, 1.0))

    def test_measure_atoms_sorted_and_positive(self):
        with pytest.raises(KernelError):
            BernsteinMeasure(atoms=((2.0, 1.0), (1.0, 1.0)))
        with pytest.raises(KernelError):
            BernsteinMeasure(atoms=((0.0, 1.0),))
        with pytest.raises(KernelError):
            BernsteinMeasure(atoms=((1.0, 0.0),))

    def test_density_must_be_locally_integrable(self):
        with pytest.raises(KernelError):
            BernsteinMeasure(regular=lambda x: 1.0, singularity=1.0)

    def test_finite_spectrum_measure_is_sorted(self):
        k = FiniteSpectrumKernel(weights=(2.0, 1.0), rates=(3.0, 1.0))
        assert k.measure.atoms == ((1.0, 1.0), (3.0, 2.0))


class TestPrimitive:
    def test_rl_ratio_is_alpha(self):
        t = np.geomspace(1e-4, 10, 50)
        _, ratio = primitive_and_ratio(RL, t)
        np.testing.assert_allclose(ratio, 0.75, rtol=1e-13)

    def test_constant_ratio_is_one(self):
        ik, ratio = primitive_and_ratio(FiniteSpectrumKernel(c0=2.0), 3.0)
        assert ik == pytest.approx(6.0)
        assert ratio == pytest.approx(1.0, abs=1e-15)

    def test_exponential_values(self):
        ik, ratio = primitive_and_ratio(EXP1, 1.0)
        assert ik == pytest.approx(0.632120558828557678, rel=1e-14)
        assert ratio == pytest.approx(0.581976706869326424, rel=1e-14)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(KernelError):
            primitive_and_ratio(EXP1, 0.0)

    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.family)
    def test_closed_forms_match_quadrature(self, kernel):
        f = lambda s: float(kernel._eval(np.float64(s)))
        for t in (1e-3, 0.4, 2.5):
            assert kernel.primitive(t) == pytest.approx(integrate_from_zero(f, t, kernel.singularity), rel=1e-10)
            assert kernel.square_primitive(t) == pytest.approx(
                integrate_from_zero(lambda s: f(s) ** 2, t, 2 * kernel.singularity), rel=1e-10)

    @pytest.mark.parametrize("kernel", ALL_KERNELS[:6], ids=lambda k: k.family)
    def test_moment_and_self_convolution_match_generic(self, kernel):
        for t in (0.05, 1.3):
            assert kernel.first_moment(t) == pytest.approx(Kernel.first_moment(kernel, t), rel=1e-10)
            assert kernel.self_convolution(t) == pytest.approx(Kernel.self_convolution(kernel, t), rel=1e-9)

    def test_frozen_square_primitives(self):
        assert RL.square_primitive(1.0) == pytest.approx(RL_SQUARE_PRIMITIVE_1, rel=1e-14)
        assert LogarithmicKernel().square_primitive(1.0) == pytest.approx(LOG_SQUARE_PRIMITIVE_1, rel=1e-10)
        assert LogarithmicKernel().primitive(1.0) == pytest.approx(2 * math.log(2.0), rel=1e-15)
        assert LogarithmicKernel().first_moment(1.0) == pytest.approx(0.5, rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(t=st.floats(1e-4, 10.0), idx=st.integers(0, len(ALL_KERNELS) - 1))
    def test_growth_lemma(self, t, idx):
        _, ratio = primitive_and_ratio(ALL_KERNELS[idx], t)
        assert 0.0 <= ratio <= 1.0 + 1e-12


class TestEtaStar:
    def test_values(self):
        assert eta_star(RL) == pytest.approx(0.25)
        assert eta_star(LogarithmicKernel()) == 0.0
        assert eta_star(EXP1) == -math.inf
        assert eta_star(ShiftedKernel(RL, 0.1)) == -math.inf

    def test_sampled_unknown(self):
        k = SampledKernel(np.array([1.0, 2.0]), np.array([1.0, 0.5]))
        assert eta_star(k) is None


class TestShifted:
    @pytest.mark.parametrize("base", [RL, LogarithmicKernel(), EXP1], ids=lambda k: k.family)
    def test_exact_shift(self, base):
        k = ShiftedKernel(base, 0.3)
        t = np.geomspace(1e-3, 5, 40)
        assert np.array_equal(k(t), base(t + 0.3))

    def test_shifted_rl_allows_zero(self):
        assert ShiftedKernel(RL, 0.25)(0.0) == pytest.approx(RL(0.25))


class TestResolvent:
    def test_c_zero_reproduces_kernel_bitwise(self):
        grid = np.geomspace(0.01, 2, 30)
        res = resolvent_kernel(RL, 0.0, grid)
        assert np.array_equal(res.values, RL(grid))

    def test_single_exponential_c_minus_one(self):
        res = resolvent_kernel(EXP1, -1.0, np.array([0.25, 0.5, 1.0]))
        assert res(0.5) == pytest.approx(math.exp(-1.0), rel=1e-6)
        np.testing.assert_allclose(res.values, np.exp(-2 * res.times), rtol=1e-6)

    @pytest.mark.parametrize("c", [-0.5, 0.3])
    def test_two_atoms_vs_matrix_exponential(self, c):
        k = FiniteSpectrumKernel(weights=(1.0, 0.5), rates=(1.0, 3.0))
        grid = np.linspace(0.1, 2.0, 25)
        res = resolvent_kernel(k, c, grid)
        np.testing.assert_allclose(res.values, res.meta["exact"], rtol=1e-6)

    def test_matrix_exponential_with_constant_part(self):
        k = FiniteSpectrumKernel(c0=0.5, weights=(1.0,), rates=(2.0,))
        grid = np.array([0.2, 1.0])
        res = resolvent_kernel(k, -0.7, grid)
        np.testing.assert_allclose(res.values, resolvent_matrix_exponential(k, -0.7, grid), rtol=1e-6)

    def test_rl_mittag_leffler(self):
        res = resolvent_kernel(RL, -1.0, np.array([0.5, 1.0]))
        for t, ref in RL_RESOLVENT_C_MINUS1.items():
            assert res(t) == pytest.approx(ref, rel=2e-5)

    def test_negative_c_is_cm(self):
        grid = np.geomspace(0.01, 2, 60)
        res = resolvent_kernel(RL, -1.0, grid)
        rep = cm_diagnostic(res.times, res.values, order=3)
        assert rep.monotone and rep.alternating

    def test_blow_up_detected(self):
        with pytest.raises(ResolventBlowUpError):
            resolvent_kernel(EXP1, 2.0, np.linspace(0.1, 5.0, 10))

    def test_singular_grid_must_be_positive(self):
        with pytest.raises(KernelError):
            resolvent_kernel(RL, -1.0, np.array([0.0, 1.0]))


class TestCMDiagnostic:
    def test_exponential_passes(self):
        t = np.geomspace(0.01, 10, 50)
        rep = cm_diagnostic(t, np.exp(-t), order=3)
        assert rep.monotone and rep.alternating
        assert rep.max_violation == 0.0

    def test_constant_passes(self):
        t = np.linspace(0.1, 1, 10)
        rep = cm_diagnostic(t, np.full(10, 3.0))
        assert rep.passed and rep.max_violation == 0.0

    def test_increasing_fails(self):
        t = np.linspace(0.1, 1, 10)
        rep = cm_diagnostic(t, t)
        assert not rep.monotone

    def test_sine_not_alternating(self):
        t = np.linspace(0.1, 6, 60)
        rep = cm_diagnostic(t, 2 + np.cos(t) * np.exp(-t))
        assert not rep.alternating

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            cm_diagnostic([1.0, 2.0, 3.0], [3.0, 2.0, 1.0], order=3)


class TestSampled:
    def test_power_law_exact(self):
        t = np.geomspace(0.01, 10, 20)
        k = SampledKernel(t, RL(t))
        probe = np.geomspace(1e-4, 10, 30)
        np.testing.assert_allclose(k(probe), RL(probe), rtol=1e-12)
        np.testing.assert_allclose(k.primitive(probe), RL.primitive(probe), rtol=1e-10)
        np.testing.assert_allclose(k.square_primitive(probe), RL.square_primitive(probe), rtol=1e-10)

    def test_exponential_interpolation(self):
        t = np.geomspace(0.01, 3, 200)
        k = SampledKernel(t, np.exp(-t))
        assert k.primitive(2.0) == pytest.approx(1 - math.exp(-2.0), rel=1e-4)

    def test_validation(self):
        with pytest.raises(KernelError):
            SampledKernel(np.array([1.0, 0.5]), np.array([1.0, 2.0]))
        with pytest.raises(KernelError):
            SampledKernel(np.array([1.0, 2.0]), np.array([1.0, 0.0]))


class TestSerialization:
    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: k.family)
    def test_json_roundtrip(self, kernel):
        back = kernel_from_json(kernel_to_json(kernel))
        t = np.array([0.1, 1.0])
        np.testing.assert_array_equal(back(t), kernel(t))

    def test_csv_roundtrip(self, tmp_path):
        t = np.geomspace(0.01, 2, 17)
        write_kernel_csv(tmp_path / "k.csv", t, RL)
        assert (tmp_path / "k.csv").read_text().splitlines()[0] == "t,K"
        back = read_kernel_csv(tmp_path / "k.csv")
        np.testing.assert_array_equal(back.values, RL(t))
