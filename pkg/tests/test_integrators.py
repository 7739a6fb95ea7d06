import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

import oracles
from sharpflat.algebra import ExpTrigPoly, FrequencyVector
from sharpflat.averaging import SharpFlatField, iterate
from sharpflat.errors import StabilityError
from sharpflat.harness import compute_error, get_decomposition, get_problem
from sharpflat.integrators import (MicroMacroState, Scheme, Trajectory, direct_matrices, initial_state,
                                   reconstruct, solve_direct, solve_micro_macro, step)
from sharpflat.models import ToyConfig, toy_field

F1 = FrequencyVector.from_omega([math.pi])


def constant_field(value):
    return SharpFlatField(ExpTrigPoly.constant(F1, [[value]]))


def toy_a(tau, gamma=0.0):
    return -1.0 + np.cos(math.pi * tau) + gamma * np.exp(-tau)


def test_scheme_properties():
    assert Scheme("EE").order == 1 and not Scheme.EE.integral
    assert Scheme.RK2int.order == 2 and Scheme.RK2int.integral
    with pytest.raises(ValueError):
        Scheme("RK4")


@pytest.mark.parametrize("scheme, factor", [("EE", 0.9), ("EEint", 0.9), ("RK2", 1 - 0.1 + 0.005),
                                            ("RK2int", 1 - 0.1 + 0.005)])
def test_constant_field_amplification(scheme, factor):
    traj = solve_direct(constant_field(-1.0), [1.0], 1.0, 10, 0.1, scheme)
    assert traj.u[-1, 0].real == pytest.approx(factor ** 10, rel=1e-13)


@pytest.mark.parametrize("eps", [0.01, 0.3])
def test_direct_single_steps_match_hand_formulas(eps):
    field = toy_field(ToyConfig(gamma=1.0))
    h, t0 = 0.07, 0.21
    at0 = toy_a(t0 / eps, 1.0)
    amid = toy_a((t0 + h / 2) / eps, 1.0)
    integ = lambda w: quad(lambda s: toy_a(s / eps, 1.0), t0, t0 + w, limit=400, epsabs=1e-14)[0]
    expected = {
        "EE": 1 + h * at0,
        "EEint": 1 + integ(h),
        "RK2": 1 + h * amid * (1 + 0.5 * h * at0),
        "RK2int": 1 + integ(h) * (1 + integ(h / 2)),
    }
    for scheme, value in expected.items():
        G = direct_matrices(scheme, [t0], h, eps, field.a)[0, 0, 0]
        assert G.real == pytest.approx(value, abs=1e-11), scheme


def test_micro_macro_single_step_matches_hand_formula():
    """One EE step of the order-1 toy system written out with closed-form a, delta."""
    cfg = ToyConfig()
    field = toy_field(cfg)
    dec = iterate(field, 1)
    eps, h = 0.02, 0.02
    freq = field.freq
    delta1 = oracles.toy_delta1(freq, cfg.omega, cfg.gamma)
    state = initial_state(dec, [1.0], eps)
    v0 = 1.0 / (1.0 + eps * oracles.toy_C1(freq, cfg.omega, cfg.gamma).evaluate(0.0)[0, 0])
    assert state.v[0] == pytest.approx(v0, rel=1e-14)
    new = step(state, dec, field, eps, h, "EE")
    assert new.v[0] == pytest.approx((1 - h) * v0, rel=1e-14)
    assert new.w[0] == pytest.approx(-h * eps * delta1.evaluate(0.0)[0, 0] * v0, abs=1e-15)
    assert new.t == pytest.approx(h)


def test_steps_compose_to_solver():
    problem = get_problem("bloch-1F")
    dec = get_decomposition("bloch-1F", 1)
    eps, L = 0.003, 16
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        state = initial_state(dec, problem.u0, eps)
        for _ in range(L):
            state = step(state, dec, problem.field, eps, problem.T / L, "RK2int")
        traj = solve_micro_macro(dec, problem.field, problem.u0, problem.T, L, eps, "RK2int")
    assert np.allclose(state.v, traj.v[-1], atol=1e-13)
    assert np.allclose(state.w, traj.w[-1], atol=1e-13)


def test_reconstruction_at_start_is_initial_value():
    problem = get_problem("bloch-3F")
    dec = get_decomposition("bloch-3F", 2)
    eps = dec.eps_n / 2
    state = initial_state(dec, problem.u0, eps)
    assert np.allclose(reconstruct(dec, state, eps), problem.u0, atol=1e-14)
    assert np.array_equal(state.w, np.zeros(3))


def test_zero_eps_initial_state_is_limit():
    dec = get_decomposition("toy-3F", 2)
    state = initial_state(dec, [2.0], 0.0)
    assert state.v[0] == 2.0


def test_stride_matches_full_run():
    problem = get_problem("toy-3F-flat")
    dec = get_decomposition("toy-3F-flat", 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        full = solve_micro_macro(dec, problem.field, problem.u0, problem.T, 400, 0.01, "RK2")
        sub = solve_micro_macro(dec, problem.field, problem.u0, problem.T, 400, 0.01, "RK2", record_stride=8)
    assert sub.t.size == 51
    assert np.allclose(sub.u, full.u[::8], rtol=1e-12, atol=1e-14)


def test_runs_are_deterministic():
    problem = get_problem("bloch-1F")
    first = solve_direct(problem.field, problem.u0, problem.T, 300, 0.01, "RK2")
    second = solve_direct(problem.field, problem.u0, problem.T, 300, 0.01, "RK2")
    assert np.array_equal(first.u, second.u)
    assert first.to_csv() == second.to_csv()


def test_direct_fine_solution_is_accurate():
    problem = get_problem("toy-1F-flat")
    traj = solve_direct(problem.field, problem.u0, problem.T, 20000, 0.05, "RK2")
    assert compute_error(traj, lambda t: problem.exact(0.05, t)) < 1e-6


def test_macro_only_drops_micro_part():
    problem = get_problem("toy-3F")
    dec = get_decomposition("toy-3F", 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        full = solve_micro_macro(dec, problem.field, problem.u0, problem.T, 100, 0.01, "RK2")
        macro = solve_micro_macro(dec, problem.field, problem.u0, problem.T, 100, 0.01, "RK2", drop_w=True)
    assert np.allclose(full.u - macro.u, full.w)


def test_blowup_is_reported_with_step():
    with pytest.raises(StabilityError) as info:
        solve_direct(constant_field(50.0), [1.0], 10.0, 10, 0.1, "EE")
    assert info.value.step == 8


@pytest.mark.parametrize("kwargs", [dict(eps=0.0), dict(eps=-1.0), dict(L=0)])
def test_invalid_arguments(kwargs):
    args = dict(eps=0.1, L=10)
    args.update(kwargs)
    with pytest.raises(ValueError):
        solve_direct(constant_field(-1.0), [1.0], 1.0, args["L"], args["eps"], "EE")


def test_stride_must_divide_steps():
    with pytest.raises(ValueError):
        solve_direct(constant_field(-1.0), [1.0], 1.0, 10, 0.1, "EE", record_stride=3)


def test_state_shapes_checked():
    with pytest.raises(ValueError):
        MicroMacroState([1.0, 2.0], [0.0])


def test_trajectory_csv(tmp_path):
    problem = get_problem("toy-1F")
    dec = get_decomposition("toy-1F", 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = solve_micro_macro(dec, problem.field, problem.u0, 1.0, 4, 0.01, "EE")
    path = tmp_path / "traj.csv"
    text = traj.to_csv(path)
    assert path.read_text() == text
    lines = text.splitlines()
    assert "# scheme=EE" in lines
    header = [line for line in lines if not line.startswith("#")][0]
    assert header == "t,re_v0,im_v0,re_w0,im_w0,re_u0,im_u0"
    assert len(lines) - lines.index(header) - 1 == 5
    assert isinstance(traj, Trajectory) and traj.steps == 4 and traj.dt == 0.25
