import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp, solve_ivp
from scipy.interpolate import CubicSpline

from kppbbm.wave import (NumericsError, WaveSolution, eval_G, eval_U,
                         eval_zbar0, normalize_wave, solve_wave, tail_fit,
                         wave_identity_checks)


def test_identities_fine_grid(wave_fine):
    c = wave_identity_checks(wave_fine)
    assert c["residual_mass"] < 1e-4
    assert c["residual_first_moment"] < 1e-3


def test_identity_residuals_shrink_with_h():
    r = {}
    for h in (0.02, 0.01):
        c = wave_identity_checks(normalize_wave(solve_wave(h=h)))
        r[h] = (c["residual_mass"], c["residual_first_moment"])
    assert r[0.02][0] / r[0.01][0] >= 3.0
    assert r[0.02][1] / r[0.01][1] >= 3.0


def test_k0_anchor(wave_fine):
    assert wave_fine.normalized
    assert abs(wave_fine.k0 + 1.9524234038) < 1e-7
    assert abs(wave_fine.tail_A - 1.0) < 1e-6
    assert wave_fine.ode_residual_norm < 1e-10


def test_normalize_idempotent(wave_fine):
    again = normalize_wave(wave_fine)
    assert np.abs(again.U - wave_fine.U).max() < 1e-8
    assert abs(again.k0 - wave_fine.k0) < 1e-8


def test_k0_domain_invariance():
    wA = normalize_wave(solve_wave(h=0.01))
    wB = normalize_wave(solve_wave(x_min=-42.0, x_max=42.0, h=0.01))
    assert abs(wA.k0 - wB.k0) < 5e-6


def test_collocation_oracle(wave_fine):
    """Adaptive collocation with Dirichlet data from the computed wave and a
    tanh interior guess; everything between the endpoints is independent."""
    xm = np.linspace(-30.0, 20.0, 801)
    ua, ub = eval_U(wave_fine, -30.0), eval_U(wave_fine, 20.0)
    guess = np.vstack([0.5 * (1.0 - np.tanh(0.45 * xm)),
                       -0.225 / np.cosh(0.45 * xm) ** 2])
    sol = solve_bvp(lambda x, y: np.vstack([y[1], -2.0 * y[1] - y[0] + y[0] ** 2]),
                    lambda ya, yb: np.array([ya[0] - ua, yb[0] - ub]),
                    xm, guess, tol=1e-10, max_nodes=200000)
    assert sol.status == 0
    xs = np.linspace(-28.0, 18.0, 1001)
    assert np.abs(sol.sol(xs)[0] - eval_U(wave_fine, xs)).max() < 1e-7


def test_shooting_oracle(wave_fine):
    # rightward is the stable integration direction through the front
    sp = CubicSpline(wave_fine.x, wave_fine.U)
    ic = [float(sp(-10.0)), float(sp(-10.0, 1))]
    sol = solve_ivp(lambda x, y: [y[1], -2.0 * y[1] - y[0] + y[0] ** 2],
                    (-10.0, 10.0), ic, rtol=1e-12, atol=1e-14,
                    dense_output=True)
    xg = np.linspace(-10.0, 8.0, 401)
    assert np.abs(sol.sol(xg)[0] - eval_U(wave_fine, xg)).max() < 1e-9


def test_synthetic_tail_algebra():
    xg = np.arange(20.0, 40.0 + 1e-9, 0.01)
    A0, q0 = 1.7, -0.3
    U = A0 * (xg + q0) * np.exp(-xg)
    A, B, resid = tail_fit(WaveSolution(x=xg, U=U, h=0.01))
    assert abs(A - A0) < 1e-9
    assert abs(B - A0 * q0) < 1e-9
    assert resid < 1e-9
    w = normalize_wave(WaveSolution(x=xg, U=U, h=0.01, tail_A=A, tail_B=B,
                                    tail_residual=resid))
    assert abs(w.k0 - (math.log(A0) + q0)) < 1e-9
    assert abs(w.tail_A - 1.0) < 1e-8


def test_zbar0_branches(wave_fine):
    k0 = wave_fine.k0
    # left: zbar0 ~ e^x with a genuine O(e^(sqrt(2)-1)x) defect
    dev = eval_zbar0(wave_fine, -25.0) / math.exp(-25.0) - 1.0
    assert abs(dev + 4.44e-5) < 3e-6
    # right: zbar0 ~ x + k0 on the grid and on the fitted tail beyond it
    assert abs(eval_zbar0(wave_fine, 20.0) / (20.0 + k0) - 1.0) < 1e-6
    assert abs(eval_zbar0(wave_fine, 45.0) - (45.0 + k0)) < 1e-6
    assert eval_U(wave_fine, -45.0) == 1.0    # beyond the grid: saturated
    assert abs(eval_U(wave_fine, -35.0) - 1.0) < 1e-6


def test_G_routes_and_tail(wave_fine):
    k0 = wave_fine.k0
    prev = math.inf
    for q in (2.0, 6.0, 12.0):
        gd = eval_G(wave_fine, q, "direct")
        gs = eval_G(wave_fine, q, "split")
        assert abs(gd - gs) < 1e-6
        gap = gd - (q - k0)
        assert 0.0 < gap < prev
        prev = gap
    assert gap < 2.0 * math.exp(-12.0)
    assert abs(eval_G(wave_fine, 2.0) - 4.031840784) < 1e-6


def test_error_paths(wave_fine):
    raw = solve_wave(h=0.02)
    with pytest.raises(NumericsError):
        wave_identity_checks(raw)
    with pytest.raises(NumericsError):
        eval_G(raw, 2.0)
    with pytest.raises(NumericsError):
        eval_G(wave_fine, 50.0)
    with pytest.raises(ValueError):
        eval_G(wave_fine, 2.0, method="bogus")
    with pytest.raises(NumericsError):
        solve_wave(x_min=-20.0)
