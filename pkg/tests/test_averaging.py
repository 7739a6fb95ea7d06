import math
import warnings

import numpy as np
import pytest

from sharpflat.algebra import ExpTrigPoly, FrequencyVector
from sharpflat.averaging import (EpsSeries, MatrixSeries, MicroMacroDecomposition, SharpFlatField,
                                 bound_constants, c_I, corollary_w_bound, epsilon_threshold, iterate,
                                 lambda_op, verify_bounds, warn_if_beyond)
from sharpflat.errors import ClosureError
from sharpflat.harness import get_problem
from sharpflat.integrators import initial_state
from sharpflat.models import ToyConfig, toy_exact, toy_field

F1 = FrequencyVector.from_omega([math.pi])
TOY_3F = ToyConfig(omega=(1.0, math.pi, math.sqrt(5) * math.pi))


class TestEpsSeries:
    def setup_method(self):
        self.c = ExpTrigPoly.cos(F1, 0)
        self.one = ExpTrigPoly.identity(F1)

    def test_trailing_zeros_trimmed(self):
        s = EpsSeries([self.one, self.c, ExpTrigPoly.zero(F1)])
        assert s.degree == 1

    def test_convolution(self):
        s = EpsSeries([self.one, self.c])
        sq = s @ s
        assert sq.degree == 2
        assert sq[1].allclose(self.c * 2)
        assert sq[2].allclose(self.c @ self.c)

    def test_at_and_shift(self):
        s = EpsSeries([self.one, self.c]).shift(2)
        assert s[0].is_zero() and s[1].is_zero()
        assert np.allclose(s.at(0.1).evaluate(0.0), 0.01 + 0.001)

    def test_average_is_matrix_series(self):
        avg = EpsSeries([self.one, self.c @ self.c]).average()
        assert isinstance(avg, MatrixSeries)
        assert np.allclose(avg.at(0.2), [[1 + 0.2 * 0.5]])

    def test_round_trip(self):
        s = EpsSeries([self.one, self.c])
        assert EpsSeries.from_dict(s.to_dict()).max_coeff_diff(s) == 0.0


class TestLambdaOperator:
    def test_rejects_unclosed_input(self):
        a = toy_field(ToyConfig()).a
        with pytest.raises(ClosureError):
            lambda_op(ExpTrigPoly.identity(F1) * 2, a)

    def test_identity_input(self):
        a = toy_field(ToyConfig()).a
        lam = lambda_op(ExpTrigPoly.identity(F1), a)
        assert lam.allclose(a - a.mean_part(), 1e-15)
        assert np.allclose(lam.average(), 0)


class TestConstants:
    def test_c_I_mono_frequency(self):
        assert c_I(0.3, F1) == 1.0
        assert c_I(0.3, FrequencyVector.from_omega([0.5])) == 2.0

    def test_c_I_grows_as_width_shrinks(self):
        F3 = TOY_3F.frequency_vector()
        assert c_I(0.1, F3) > c_I(0.5, F3)

    def test_threshold_mono_frequency_with_flat(self):
        fld = toy_field(ToyConfig(gamma=1.0))
        # M = 1 + e (cos weighted by e^mu) + 1 (flat), c_I = 1, N_c = 3.75
        assert fld.M == pytest.approx(2 + math.e)
        assert epsilon_threshold(fld, 1) == pytest.approx(0.5 / (3.75 * (2 + math.e)), rel=1e-14)

    def test_threshold_three_frequencies(self):
        fld = toy_field(TOY_3F)
        c_D = fld.freq.c_D
        expected = 0.5 / ((6 / math.e) ** 2 / c_D * 3.75 * (1 + math.e))
        assert epsilon_threshold(fld, 2) == pytest.approx(expected, rel=1e-13)

    def test_constants_ladder(self):
        k = bound_constants(toy_field(ToyConfig()), 2, 0.5)
        assert k["N_c"] == 3.75 and k["L_c"] == 4.0
        assert k["mu_ladder"] == pytest.approx([1.0, 2 / 3, 1 / 3])

    def test_invalid_c(self):
        with pytest.raises(ValueError):
            bound_constants(toy_field(ToyConfig()), 1, 1.0)

    def test_field_M_must_dominate_norm(self):
        a = toy_field(ToyConfig()).a
        with pytest.raises(ValueError):
            SharpFlatField(a, M=0.5)


@pytest.mark.parametrize("name", ["toy-3F-flat", "bloch-1F", "bloch-3F"])
@pytest.mark.parametrize("n", [0, 1, 2])
def test_decomposition_identities(name, n):
    field = get_problem(name).field
    dec = iterate(field, n)
    eye = np.eye(field.dim)
    for phi in dec.phis:
        assert np.allclose(phi.average().at(0.01), eye, atol=1e-12)
    # eps * zmp(delta) telescopes to Phi^(n) - Phi^(n+1)
    tele = dec.delta.zero_mean_primitive().shift(1) - (dec.phis[n] - dec.phis[n + 1])
    assert all(c.sup_bound() < 1e-12 for c in tele.coeffs)
    eps = dec.eps_n / 2
    phi, A, delta = dec.at(eps)
    residual = phi.derivative() * (1 / eps) - (field.a @ phi - phi @ A) - delta
    assert residual.sup_bound() <= 1e-10 * max(1.0, phi.derivative().sup_bound() / eps)
    assert np.allclose(delta.average(), 0, atol=1e-13)


def test_order_zero_is_plain_averaging():
    field = get_problem("bloch-1F").field
    dec = iterate(field, 0)
    assert np.allclose(dec.A.at(0.3), field.a.average())
    assert dec.phi.degree == 0


def test_decomposition_round_trip(tmp_path):
    dec = iterate(get_problem("bloch-3F").field, 2)
    path = tmp_path / "dec.json"
    dec.save(path)
    back = MicroMacroDecomposition.load(path)
    assert back.n == 2 and back.eps_n == dec.eps_n
    assert back.delta.max_coeff_diff(dec.delta) == 0.0
    assert all(b.max_coeff_diff(p) == 0.0 for b, p in zip(back.phis, dec.phis))
    assert np.array_equal(back.A.at(0.1), dec.A.at(0.1))


def test_verify_bounds_rejects_large_eps():
    field = get_problem("toy-1F").field
    dec = iterate(field, 1)
    with pytest.raises(ValueError):
        verify_bounds(dec, field, 2 * dec.eps_n)


def test_verify_bounds_report():
    field = get_problem("toy-3F").field
    dec = iterate(field, 2)
    report = verify_bounds(dec, field, dec.eps_n / 4)
    assert report.passed
    assert [c.name for c in report.checks] == ["near_identity", "averaged_matrix", "defect",
                                                "defect_integral", "defect_derivatives"]
    assert "PASS" in report.summary()


def test_warning_beyond_threshold():
    dec = iterate(get_problem("toy-1F").field, 1)
    with pytest.warns(RuntimeWarning):
        warn_if_beyond(dec, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        warn_if_beyond(dec, dec.eps_n / 2)


def test_micro_bound_dominates_exact_micro_part():
    cfg = ToyConfig(gamma=1.0)
    field = toy_field(cfg)
    dec = iterate(field, 1)
    eps = dec.eps_n / 2
    t = np.linspace(0, 2, 201)
    v0 = initial_state(dec, [1.0], eps).v[0]
    w = toy_exact(cfg, eps, t) - dec.at(eps)[0].evaluate(t / eps)[:, 0, 0] * np.exp(-t) * v0
    assert np.all(np.abs(w) <= corollary_w_bound(dec, field, eps, t, 1.0))


def test_zero_field_has_unbounded_threshold():
    field = SharpFlatField(ExpTrigPoly.zero(F1, 2))
    dec = iterate(field, 1)
    assert dec.eps_n == math.inf
    assert verify_bounds(dec, field, 0.1).passed
