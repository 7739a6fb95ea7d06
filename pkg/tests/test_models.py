import math

import numpy as np
import pytest

import oracles
from sharpflat.models import (PRESET_NAMES, BlochConfig, ToyConfig, bloch_field, bloch_psi, bloch_psi_average,
                              bloch_psi_inf, bloch_psi_quadrature, bloch_RS, bloch_rate_field, config_from_dict,
                              config_to_dict, load_config, preset_config, real_part, save_config, toy_exact,
                              toy_field, toy_limit)

OMEGA_3F = (1.0, math.pi, math.sqrt(5) * math.pi)


class TestToy:
    @pytest.mark.parametrize("cfg", [ToyConfig(), ToyConfig(omega=OMEGA_3F, gamma=1.0)])
    def test_exact_solution_solves_the_equation(self, cfg):
        field = toy_field(cfg)
        eps, h = 0.03, 1e-6
        t = np.linspace(0.1, 3.0, 50)
        du = (toy_exact(cfg, eps, t + h) - toy_exact(cfg, eps, t - h)) / (2 * h)
        rhs = field.a.evaluate(t / eps)[:, 0, 0].real * toy_exact(cfg, eps, t)
        assert np.allclose(du, rhs, rtol=1e-7, atol=1e-8)

    def test_exact_matches_oracle(self):
        cfg = ToyConfig(omega=OMEGA_3F, gamma=1.0, u0=2.0)
        t = np.linspace(0, cfg.T, 101)
        assert np.allclose(toy_exact(cfg, 0.01, t), oracles.toy_solution(cfg.omega, 1.0, 2.0, 0.01, t),
                           rtol=1e-15)

    def test_limit(self):
        cfg = ToyConfig()
        t = np.linspace(0, 2, 11)
        assert np.allclose(toy_exact(cfg, 1e-9, t), toy_limit(cfg, t), rtol=1e-8)

    def test_field_norm(self):
        # -1 + cos(pi tau): coefficients 1 and two halves weighted by e
        assert toy_field(ToyConfig()).M == pytest.approx(1 + math.e)

    def test_validation(self):
        with pytest.raises(ValueError):
            ToyConfig(omega=(0.0,))
        with pytest.raises(ValueError):
            ToyConfig(T=0)
        with pytest.raises(ValueError):
            toy_exact(ToyConfig(), 0.0, [1.0])


class TestBloch:
    def test_rs_coefficients(self):
        Om = -1 - 2j
        R, S = bloch_RS(0.0, math.pi, Om)
        assert (R, S) == pytest.approx(oracles.rs_coefficients(math.pi, Om))
        R1, S1 = bloch_RS(0.5, math.pi, Om)
        expected = np.exp(Om * 0.5) / (math.pi ** 2 + Om ** 2)
        assert R1 == pytest.approx((math.pi * expected).real)
        assert S1 == pytest.approx(-(Om * expected).real)

    def test_rate_matrix_is_symmetric_with_zero_diagonal(self):
        psi = bloch_psi(BlochConfig())
        vals = psi.evaluate(np.linspace(0, 5, 41)).real
        assert np.allclose(vals, vals.transpose(0, 2, 1), atol=1e-15)
        assert np.all(vals[:, [0, 1, 2], [0, 1, 2]] == 0)

    @pytest.mark.parametrize("variant", ["with_flat", "osc_only"])
    def test_field_columns_sum_to_zero(self, variant):
        field = bloch_field(BlochConfig(omega=OMEGA_3F, variant=variant))
        assert np.abs(field.a.coef.sum(axis=1)).max() < 1e-15

    def test_rate_field_structure(self):
        psi = bloch_psi_inf(BlochConfig())
        a = bloch_rate_field(psi).a.evaluate(0.7).real
        P = psi.evaluate(0.7).real
        assert a[0, 1] == pytest.approx(P[1, 0])
        assert a[2, 2] == pytest.approx(-(P[0, 2] + P[1, 2]))

    def test_flat_part_vanishes_at_long_times(self):
        cfg = BlochConfig()
        tau = np.array([40.0, 41.3])
        assert np.allclose(bloch_psi(cfg).evaluate(tau), bloch_psi_inf(cfg).evaluate(tau), atol=1e-15)
        assert bloch_psi(cfg).flat.decay_rate == pytest.approx(1.0)

    def test_average(self):
        cfg = BlochConfig(omega=OMEGA_3F)
        ref = oracles.psi_average(cfg.energies, cfg.gamma, cfg.dipole, cfg.omega, cfg.E0)
        assert np.allclose(bloch_psi_average(cfg), ref, rtol=1e-14)
        assert np.allclose(bloch_psi(cfg).average().real, ref, rtol=1e-13, atol=1e-16)

    def test_quadrature_helper_agrees_with_oracle(self):
        cfg = BlochConfig()
        q = bloch_psi_quadrature(cfg, 2.3, 0, 2)
        ref = oracles.psi_quadrature(cfg.energies, cfg.gamma, cfg.dipole, cfg.omega, cfg.E0, 2.3, 0, 2)
        assert q == pytest.approx(ref, abs=1e-11)

    def test_scaled_drive(self):
        base = bloch_psi(BlochConfig()).evaluate(1.1)
        doubled = bloch_psi(BlochConfig(E0=2.0)).evaluate(1.1)
        assert np.allclose(doubled, 4 * base)

    @pytest.mark.parametrize("kwargs", [
        dict(gamma=((0, 1, 1), (1, 0, 1), (1, 2, 0))),
        dict(rho_init=(0.5, 0.0, 0.0)),
        dict(dipole=((0, 1j, 1), (1j, 0, 1), (1, 1, 0))),
        dict(variant="other"),
        dict(energies=(0.0, 1.0)),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            BlochConfig(**kwargs)


class TestConfigFiles:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_presets_round_trip(self, name, tmp_path):
        cfg = preset_config(name)
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        assert load_config(path) == cfg
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_complex_dipole_round_trip(self):
        cfg = BlochConfig(dipole=((0, 1j, 1), (-1j, 0, 1), (1, 1, 0)))
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            preset_config("nope")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            config_from_dict({"kind": "other"})


def test_real_part():
    assert np.array_equal(real_part(np.array([1 + 1e-14j])), [1.0])
    with pytest.raises(ValueError):
        real_part(np.array([1 + 1e-3j]))
