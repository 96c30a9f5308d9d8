import math

import numpy as np
import pytest

from kppbbm.constants import ExpansionConstants, assemble_constants
from kppbbm.expansion import (fluctuation_target_slope, laplace_extremal,
                              laplace_fluctuation_target, laplace_stable,
                              laplace_wave_dual, level_correction,
                              r_infinity_expansion, shift_full_expansion,
                              shift_leading_order)
from kppbbm.profiles import box_profile
from kppbbm.wave import NumericsError, solve_wave

BOX10 = box_profile(-1.0, 0.0)


def consts_with(cbar, cbar1, m1=0.0):
    return ExpansionConstants(cbar=cbar, cbar1=cbar1, g_inf=0.0, k0=0.0,
                              m1=m1, tol=0.0, truncation_points={})


def test_leading_order_substitution():
    c = consts_with(1.0, 0.0)
    assert abs(shift_leading_order(math.exp(-10.0), c) - (10.0 - math.log(10.0))) < 1e-12
    c2 = consts_with(2.0, 0.0)
    delta = shift_leading_order(math.exp(-10.0), c) - shift_leading_order(math.exp(-10.0), c2)
    assert abs(delta - math.log(2.0)) < 1e-12


def test_full_expansion_terms():
    c = consts_with(1.0, 0.0, m1=0.0)
    eps = math.exp(-10.0)
    lead = shift_leading_order(eps, c)
    full = shift_full_expansion(eps, c)
    assert abs(full - (lead - 2.0 * math.log(10.0) / 10.0)) < 1e-12


def test_r_infinity_expansion_orders():
    c = consts_with(1.0, 0.0, m1=0.0)
    assert abs(r_infinity_expansion(math.e, c) - (math.e + 2.0)) < 1e-12
    rng = np.random.default_rng(2)
    for _ in range(10):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        ell = rng.uniform(2.0, 80.0)
        cc = consts_with(cb, cb1, m1)
        v0 = r_infinity_expansion(ell, cc, order=0)
        v1 = r_infinity_expansion(ell, cc, order=1)
        v2 = r_infinity_expansion(ell, cc, order=2)
        assert abs(v0 - cb * ell) < 1e-12
        assert abs(v1 - v0 - 2.0 * cb * math.log(ell)) < 1e-12
        assert abs(v2 - v1 - (m1 * cb + cb1 - cb * math.log(cb))) < 1e-12


def test_log_coefficient_limit():
    # (value - cbar*ell)/log ell approaches 2 cbar from the constant side
    c = consts_with(0.7, 0.2, m1=-0.5)
    r4 = (r_infinity_expansion(1e4, c) - 0.7e4) / math.log(1e4)
    r8 = (r_infinity_expansion(1e8, c) - 0.7e8) / math.log(1e8)
    assert abs(r8 - 1.4) < abs(r4 - 1.4)
    assert abs(r8 - 1.4) < 0.01


def test_translation_cancellation():
    """Moving the data by L changes the shift by exactly -L: the two 1/ell
    coefficients cancel, so the identity is exact at every eps."""
    rng = np.random.default_rng(5)
    for _ in range(25):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        L = rng.uniform(-2.0, 2.0)
        eps = math.exp(-rng.uniform(3.0, 60.0))
        base = shift_full_expansion(eps, consts_with(cb, cb1, m1))
        moved = shift_full_expansion(
            eps, consts_with(math.exp(L) * cb,
                             math.exp(L) * cb1 + L * math.exp(L) * cb, m1))
        assert abs(moved - base + L) < 1e-11


def test_amplitude_scaling():
    # scaling the data by lam: -log lam at leading order, +log lam / ell after
    rng = np.random.default_rng(6)
    for _ in range(25):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        lam = rng.uniform(0.2, 5.0)
        ell = rng.uniform(3.0, 60.0)
        eps = math.exp(-ell)
        base = shift_full_expansion(eps, consts_with(cb, cb1, m1))
        scaled = shift_full_expansion(eps, consts_with(lam * cb, lam * cb1, m1))
        assert abs(scaled - base + math.log(lam) - math.log(lam) / ell) < 1e-11


def test_leading_vs_full_gap():
    rng = np.random.default_rng(8)
    for _ in range(20):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        ell = rng.uniform(3.0, 60.0)
        eps = math.exp(-ell)
        c = consts_with(cb, cb1, m1)
        gap = abs(shift_leading_order(eps, c) - shift_full_expansion(eps, c))
        bound = (2.0 * math.log(ell) + abs(m1 - math.log(cb) + cb1 / cb)) / ell
        assert gap <= bound + 1e-12


def test_eps_route_vs_ell_route(wave_fine):
    # the two ways of writing the same asymptotics differ by the curvature
    # of the log, which is quadratically small in log(ell)/ell
    c = assemble_constants(BOX10, wave_fine)
    prev = math.inf
    for ell in (20.0, 40.0):
        diff = (ell - math.log(r_infinity_expansion(ell, c))
                - shift_full_expansion(math.exp(-ell), c))
        assert 0.0 < diff < (2.0 * math.log(ell) / ell) ** 2
        assert diff < prev
        prev = diff


def test_expansion_guards():
    c = consts_with(1.0, 0.0)
    with pytest.raises(ValueError):
        shift_leading_order(0.2, c)          # eps too large
    with pytest.raises(ValueError):
        shift_full_expansion(-0.1, c)
    with pytest.raises(ValueError):
        shift_leading_order(1e-4, consts_with(0.0, 0.0))
    with pytest.raises(ValueError):
        r_infinity_expansion(1.0, c)
    with pytest.raises(ValueError):
        r_infinity_expansion(10.0, c, order=3)


def test_laplace_wave_dual(wave_fine):
    assert laplace_wave_dual(30.0, wave_fine) > 1.0 - 1e-10
    assert 0.0 <= laplace_wave_dual(-30.0, wave_fine) < 1e-4
    ys = np.linspace(-8.0, 8.0, 33)
    vals = [laplace_wave_dual(float(y), wave_fine) for y in ys]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(NumericsError):
        laplace_wave_dual(0.0, solve_wave(h=0.02))


def test_laplace_extremal_closes_duality(wave_fine):
    s_hat = 1.234
    assert laplace_extremal(BOX10, s_hat, wave_fine) == laplace_wave_dual(s_hat, wave_fine)
    with pytest.raises(ValueError):
        laplace_extremal(box_profile(0.0, 1.0, 0.0), 1.0, wave_fine)


def test_fluctuation_target_values(wave_fine):
    c = assemble_constants(BOX10, wave_fine)
    Z = 0.8
    mu, nu = c.cbar, c.cbar1
    v1 = laplace_fluctuation_target(1.0, BOX10, Z, c)
    assert abs(v1 - math.exp(Z * (mu * math.log(mu) - c.m1 * mu - nu))) < 1e-14
    assert laplace_fluctuation_target(0.7, BOX10, 0.0, c) == 1.0
    assert laplace_fluctuation_target(0.0, BOX10, Z, c) == 1.0
    with pytest.raises(ValueError):
        laplace_fluctuation_target(0.5, box_profile(0.0, 1.0, 0.0), Z, c)
    with pytest.raises(ValueError):
        laplace_fluctuation_target(-0.5, BOX10, Z, c)


def test_fluctuation_target_log_convex(wave_fine):
    c = assemble_constants(BOX10, wave_fine)
    Z = 0.8
    lam = np.linspace(0.05, 4.0, 80)
    logf = np.array([math.log(laplace_fluctuation_target(float(x), BOX10, Z, c))
                     for x in lam])
    d2 = np.diff(logf, 2)
    assert np.all(d2 >= 0.0)
    # curvature of the exponent is exactly Z mu / lam; check it away from
    # the origin where the second difference is not swamped by its own
    # O(h^2 / lam^3) truncation error
    lam = np.linspace(0.5, 4.0, 80)
    h = lam[1] - lam[0]
    logf = np.array([math.log(laplace_fluctuation_target(float(x), BOX10, Z, c))
                     for x in lam])
    mid = np.diff(logf, 2) / h**2
    ref = Z * c.cbar / lam[1:-1]
    assert np.abs(mid / ref - 1.0).max() < 1e-2


def test_fluctuation_slope(wave_fine):
    c = assemble_constants(BOX10, wave_fine)
    Z = 0.8
    lam, d = 0.7, 1e-6
    fd = (laplace_fluctuation_target(lam + d, BOX10, Z, c)
          - laplace_fluctuation_target(lam - d, BOX10, Z, c)) / (2.0 * d)
    an = fluctuation_target_slope(lam, BOX10, Z, c)
    assert abs(fd - an) < 1e-7 * abs(an)
    # near zero the slope is log-steep
    f1 = laplace_fluctuation_target(1e-6, BOX10, Z, c)
    f2 = laplace_fluctuation_target(2e-6, BOX10, Z, c)
    steep = (f2 - f1) / 1e-6
    assert abs(steep / (c.cbar * Z * math.log(1e-6)) - 1.0) < 0.1
    with pytest.raises(ValueError):
        fluctuation_target_slope(0.0, BOX10, Z, c)


def test_laplace_stable():
    assert laplace_stable(0.5, 0.0) == 1.0
    assert laplace_stable(1.0, 3.0) == 1.0
    assert laplace_stable(0.0, 3.0) == 1.0
    assert abs(laplace_stable(math.e, 1.0) - math.exp(math.e)) < 1e-12
    rng = np.random.default_rng(9)
    for _ in range(10):
        lam = rng.uniform(0.1, 3.0)
        s, t = rng.uniform(0.0, 4.0, 2)
        assert abs(laplace_stable(lam, s) * laplace_stable(lam, t)
                   - laplace_stable(lam, s + t)) < 1e-12 * laplace_stable(lam, s + t)
    with pytest.raises(ValueError):
        laplace_stable(-0.1, 1.0)
    with pytest.raises(ValueError):
        laplace_stable(1.0, -1.0)


def test_level_correction():
    assert level_correction(1) == 0.0
    for n in (2, 5, 17, 100, 1000):
        x = 2.0 * math.log(n) / n
        assert abs(level_correction(n) - x) <= 0.5 * x * x
    with pytest.raises(ValueError):
        level_correction(0)
