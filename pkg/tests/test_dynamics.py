import math

import numpy as np
import pytest

from svosim import dynamics
from svosim.errors import InvalidParameterError


def series_discretize(A, B, D, dt, terms=25):
    """Truncated-series evaluation of the exact ZOH matrices.

    Ad = sum_k (A dt)^k / k!,  Bd = (sum_k A^k dt^(k+1) / (k+1)!) B,
    same integral form for Dd.  Independent of the implementation route.
    """
    n = A.shape[0]
    Ad = np.zeros((n, n))
    S = np.zeros((n, n))  # integral of the exponential
    term = np.eye(n)
    for k in range(terms):
        Ad += term * dt**k / math.factorial(k)
        S += term * dt**(k + 1) / math.factorial(k + 1)
        term = term @ A
    return Ad, S @ B, S @ D


def euler_rollout(cont, x0, u, v_prec, dt, substeps=20000):
    """Fine-step explicit Euler over one ZOH interval."""
    h = dt / substeps
    x = np.array(x0, dtype=float)
    for _ in range(substeps):
        x = x + h * (cont.A @ x + cont.B * u + cont.D * v_prec)
    return x


def test_build_continuous_matches_model_form():
    cont = dynamics.build_continuous(0.45)
    assert np.allclose(cont.A, [[0, -1, 0], [0, 0, 1], [0, 0, -1 / 0.45]])
    assert np.allclose(cont.B, [0, 0, 1 / 0.45])
    assert np.allclose(cont.D, [1, 0, 0])
    assert cont.rho == 0.45


@pytest.mark.parametrize("rho,dt", [(0.45, 0.1), (0.45, 0.5), (0.2, 0.05),
                                    (1.3, 0.1), (0.45, 2.0)])
def test_zoh_matches_series_oracle(rho, dt):
    cont = dynamics.build_continuous(rho)
    disc = dynamics.discretize_zoh(cont, dt)
    Ad, Bd, Dd = series_discretize(cont.A, cont.B, cont.D, dt)
    assert np.max(np.abs(disc.Ad - Ad)) <= 1e-9
    assert np.max(np.abs(disc.Bd - Bd)) <= 1e-9
    assert np.max(np.abs(disc.Dd - Dd)) <= 1e-9


def test_zoh_closed_form_entries():
    # lag row decouples: accel decays by exp(-dt/rho); the held predecessor
    # speed enters the gap linearly by dt
    rho, dt = 0.45, 0.1
    disc = dynamics.discretize_zoh(dynamics.build_continuous(rho), dt)
    assert math.isclose(disc.Ad[2][2], math.exp(-dt / rho), rel_tol=0, abs_tol=1e-12)
    assert abs(disc.Ad[2][2] - 0.800737) < 1e-6
    assert math.isclose(disc.Dd[0], dt, rel_tol=0, abs_tol=1e-12)
    assert disc.Dd[1] == 0.0 and disc.Dd[2] == 0.0
    assert math.isclose(disc.Bd[2], 1.0 - math.exp(-dt / rho), rel_tol=0, abs_tol=1e-12)
    assert math.isclose(disc.Bd[1], dt - rho * (1.0 - math.exp(-dt / rho)),
                        rel_tol=0, abs_tol=1e-12)
    assert math.isclose(disc.Ad[0][1], -dt, rel_tol=0, abs_tol=1e-12)


def test_step_trailing_gap_example():
    disc = dynamics.discretize_zoh(dynamics.build_continuous(0.45), 0.1)
    x = dynamics.LongitudinalState(gap=20.0, speed=10.0, accel=0.0)
    nxt = dynamics.step(disc, x, u=0.0, v_prec=12.0)
    assert math.isclose(nxt.gap, 20.2, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(nxt.speed, 10.0, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(nxt.accel, 0.0, rel_tol=0, abs_tol=1e-12)


def test_step_fixed_point_constant_platoon():
    disc = dynamics.discretize_zoh(dynamics.build_continuous(0.45), 0.1)
    x = dynamics.LongitudinalState(gap=31.0, speed=17.5, accel=0.0)
    nxt = x
    for _ in range(50):
        nxt = dynamics.step(disc, nxt, u=0.0, v_prec=17.5)
    assert math.isclose(nxt.gap, 31.0, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(nxt.speed, 17.5, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(nxt.accel, 0.0, rel_tol=0, abs_tol=1e-9)


def test_step_matches_fine_euler():
    cont = dynamics.build_continuous(0.45)
    disc = dynamics.discretize_zoh(cont, 0.1)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x0 = rng.uniform([-5, 0, -3], [50, 30, 3])
        u = rng.uniform(-4, 4)
        vp = rng.uniform(0, 30)
        got = dynamics.step(disc, dynamics.LongitudinalState(*x0), u, vp)
        ref = euler_rollout(cont, x0, u, vp, 0.1)
        assert np.max(np.abs(got.as_array() - ref)) < 1e-5


def test_discretize_semigroup():
    cont = dynamics.build_continuous(0.45)
    d1 = dynamics.discretize_zoh(cont, 0.1)
    d2 = dynamics.discretize_zoh(cont, 0.2)
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = dynamics.LongitudinalState(*rng.uniform([-5, 0, -3], [50, 30, 3]))
        u = rng.uniform(-4, 4)
        vp = rng.uniform(0, 30)
        twice = dynamics.step(d1, dynamics.step(d1, x, u, vp), u, vp)
        once = dynamics.step(d2, x, u, vp)
        assert np.max(np.abs(twice.as_array() - once.as_array())) < 1e-10


def test_step_is_linear_in_state_and_inputs():
    disc = dynamics.discretize_zoh(dynamics.build_continuous(0.45), 0.1)
    rng = np.random.default_rng(11)
    for _ in range(5):
        xa = rng.uniform(-10, 40, 3)
        xb = rng.uniform(-10, 40, 3)
        ua, ub = rng.uniform(-4, 4, 2)
        va, vb = rng.uniform(0, 30, 2)
        lhs = dynamics.step(disc, dynamics.LongitudinalState(*(xa + xb)),
                            ua + ub, va + vb).as_array()
        rhs = (dynamics.step(disc, dynamics.LongitudinalState(*xa), ua, va).as_array()
               + dynamics.step(disc, dynamics.LongitudinalState(*xb), ub, vb).as_array())
        assert np.max(np.abs(lhs - rhs)) < 1e-10
        lam = rng.uniform(-2, 2)
        lhs = dynamics.step(disc, dynamics.LongitudinalState(*(lam * xa)),
                            lam * ua, lam * va).as_array()
        rhs = lam * dynamics.step(disc, dynamics.LongitudinalState(*xa),
                                  ua, va).as_array()
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_invalid_parameters_rejected():
    with pytest.raises(InvalidParameterError):
        dynamics.build_continuous(0.0)
    with pytest.raises(InvalidParameterError):
        dynamics.build_continuous(-0.45)
    cont = dynamics.build_continuous(0.45)
    with pytest.raises(InvalidParameterError):
        dynamics.discretize_zoh(cont, 0.0)
    with pytest.raises(InvalidParameterError):
        dynamics.discretize_zoh(cont, -0.1)


def test_horizon_maps_match_iterated_step():
    disc = dynamics.discretize_zoh(dynamics.build_continuous(0.45), 0.1)
    n = 12
    maps = dynamics.build_horizon_maps(disc, n)
    rng = np.random.default_rng(19)
    for _ in range(4):
        x0 = dynamics.LongitudinalState(*rng.uniform([0, 0, -2], [40, 25, 2]))
        u = rng.uniform(-4, 4, n)
        vp = rng.uniform(0, 28, n)
        gaps, speeds, accels = maps.rollout(x0, u, vp)
        x = x0
        for j in range(n):
            x = dynamics.step(disc, x, u[j], vp[j])
            assert math.isclose(gaps[j], x.gap, rel_tol=0, abs_tol=1e-10)
            assert math.isclose(speeds[j], x.speed, rel_tol=0, abs_tol=1e-10)
            assert math.isclose(accels[j], x.accel, rel_tol=0, abs_tol=1e-10)


def test_horizon_maps_cached_and_validated():
    disc = dynamics.discretize_zoh(dynamics.build_continuous(0.45), 0.1)
    a = dynamics.build_horizon_maps(disc, 30)
    b = dynamics.build_horizon_maps(disc, 30)
    assert a is b
    with pytest.raises(InvalidParameterError):
        dynamics.build_horizon_maps(disc, 0)
