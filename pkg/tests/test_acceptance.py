"""Acceptance battery: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
Full battery is ~15 minutes single-worker; the moving-frame runs at
ell = 40 dominate.  Every check prints its measured numbers before
asserting, so a failing criterion still reports its analysis.
"""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from kppbbm.bbm import centering
from kppbbm.constants import (SQRT_PI, assemble_constants, compute_psibar,
                              g_infinity_schemes, mu_of, ExpansionConstants)
from kppbbm.expansion import (laplace_fluctuation_target,
                              fluctuation_target_slope, r_infinity_expansion,
                              shift_full_expansion)
from kppbbm.experiments import (duality_check, extremal_mass_trend,
                                martingale_suite, mckean_check,
                                run_experiment, run_from_manifest,
                                shift_routes)
from kppbbm.pde import (decompose_r_infinity, linear_dirichlet_diagnostics,
                        r_infinity, x_eps_selfsimilar)
from kppbbm.profiles import box_profile, step_profile
from kppbbm.wave import normalize_wave, solve_wave, wave_identity_checks

BOX10 = box_profile(-1.0, 0.0)
ELLS = (10.0, 20.0, 40.0)


@pytest.fixture(scope="module")
def consts(wave_fine):
    return assemble_constants(BOX10, wave_fine)


@pytest.fixture(scope="module")
def battery():
    # the expensive moving-frame runs, shared by all AC4 parts
    out = {}
    for ell in ELLS:
        est = r_infinity(ell, BOX10, h=0.02)
        out[ell] = (est, decompose_r_infinity(ell, BOX10, rinf=est))
    return out


def test_ac1_wave_identities(wave_fine):
    fine = wave_identity_checks(wave_fine)
    coarse = wave_identity_checks(normalize_wave(solve_wave(h=0.01)))
    s_mass = coarse["residual_mass"] / fine["residual_mass"]
    s_mom = coarse["residual_first_moment"] / fine["residual_first_moment"]
    ok = (fine["residual_mass"] <= 1e-4
          and fine["residual_first_moment"] <= 1e-3
          and s_mass >= 3.0 and s_mom >= 3.0)
    print("AC1 %s: h=0.005 residuals mass %.3e (<=1e-4) moment %.3e (<=1e-3); "
          "halving h shrinks them %.1fx / %.1fx (>=3x)"
          % ("PASS" if ok else "FAIL", fine["residual_mass"],
             fine["residual_first_moment"], s_mass, s_mom))
    assert ok


def test_ac2_constants(consts):
    schemes = g_infinity_schemes(tol=1e-10)
    spread = schemes["spread"]
    # psibar'(0) from quadrature VALUES of psibar, via the odd/even Taylor
    # split of the half-line ODE; independent of the integrand's closed
    # form at the origin
    eta = 0.1
    p = compute_psibar(eta, tol=1e-12)
    even = 0.5 * eta**2 + eta**4 / 24.0 + eta**6 / 360.0 + eta**8 / 6720.0
    odd = eta + eta**3 / 12.0 + eta**5 / 160.0 + eta**7 / 2688.0
    dpsi = (p + even) / odd
    m1_exact = consts.m1 == 1.5 * consts.g_inf + consts.k0 + 0.5
    ok = spread <= 1e-8 and abs(dpsi - SQRT_PI) <= 1e-8 and m1_exact
    print("AC2 %s: g_inf schemes agree to %.1e (<=1e-8); psibar'(0) off "
          "sqrt(pi) by %.1e (<=1e-8); m1 identity exact: %s"
          % ("PASS" if ok else "FAIL", spread, abs(dpsi - SQRT_PI), m1_exact))
    assert ok


def test_ac3_linear_dirichlet():
    d1 = linear_dirichlet_diagnostics(h=0.02)
    d2 = linear_dirichlet_diagnostics(h=0.01)
    order = math.log2(d1["adjoint_residual"] / d2["adjoint_residual"])
    ok = (d2["steady_drift"] <= 1e-6 and d2["moment_drift"] <= 1e-6
          and order >= 1.8)
    print("AC3 %s: steady drift %.2e/unit tau (<=1e-6), moment drift %.2e "
          "relative (<=1e-6), adjoint-identity residual order %.2f (>=1.8)"
          % ("PASS" if ok else "FAIL", d2["steady_drift"],
             d2["moment_drift"], order))
    assert ok


def test_ac4a_leading_ratio(battery, consts):
    est40 = battery[40.0][0]
    rel = abs(est40.value / 40.0 - consts.cbar) / consts.cbar
    ok = rel <= 0.05
    # supplementary: the 3-parameter fit that separates the log term
    la = np.array(ELLS)
    rv = np.array([battery[e][0].value for e in ELLS])
    coef, *_ = np.linalg.lstsq(np.column_stack([la, np.log(la),
                                                np.ones(3)]), rv, rcond=None)
    print("AC4a %s: |r_inf(40)/40 - cbar|/cbar = %.4f (<=0.05). The 2 log(ell)"
          "/ell term alone contributes %.4f at ell=40, so the plain ratio "
          "cannot meet the band below ell ~ 185; fitting a*ell + b*log(ell)"
          " + c over ell in {10,20,40} gives a = %.6f, off cbar by %.2f%%"
          % ("PASS" if ok else "FAIL", rel, 2.0 * math.log(40.0) / 40.0,
             coef[0], 100.0 * abs(coef[0] - consts.cbar) / consts.cbar))
    assert ok


def test_ac4b_full_formula_residuals(battery, consts):
    res = [abs(battery[e][0].value - r_infinity_expansion(e, consts, 2))
           for e in ELLS]
    ok = res[0] > res[1] > res[2]
    print("AC4b %s: residual against the full closed-form expansion = "
          "%.4f / %.4f / %.4f at ell = 10 / 20 / 40 (strictly decreasing)"
          % ("PASS" if ok else "FAIL", *res))
    assert ok


def test_ac4c_decomposition(battery, consts):
    cb, cb1 = consts.cbar, consts.cbar1
    g, k0 = consts.g_inf, consts.k0
    E = {e: battery[e][0].value - battery[e][1]["Q_ell"] - battery[e][1]["Y_ell"]
         for e in ELLS}
    band = 0.05 * cb
    e40_ok = abs(E[40.0]) <= band
    # linear pairing against its closed-form asymptotics, gap is O(1/ell)
    q_gap = [abs(battery[e][1]["Q_ell"]
                 - (cb * e + 3.0 * cb * math.log(e) + 1.5 * g * cb + cb1))
             for e in ELLS]
    q_scaled = [gp * e for gp, e in zip(q_gap, ELLS)]
    q_ok = (q_gap[0] > q_gap[1] > q_gap[2]
            and max(q_scaled) / min(q_scaled) <= 1.5)
    # absorption term against its limit value
    y_gap = [abs(battery[e][1]["Y_ell"]
                 - (-cb * math.log(e) - cb * math.log(cb) + k0 * cb + 0.5 * cb))
             for e in ELLS]
    y_ok = y_gap[0] > y_gap[1] > y_gap[2]
    ok = e40_ok and q_ok and y_ok
    print("AC4c %s: |r_inf - Q - Y| at ell=40 is %.4f vs band 0.05*cbar = "
          "%.4f (%s); Q gap to its asymptotics %.4f/%.4f/%.4f with ell*gap "
          "%.2f/%.2f/%.2f (O(1/ell) trend %s); Y gap to its limit form "
          "%.4f/%.4f/%.4f (decreasing %s). The remainder decays like "
          "ell^(-delta) with a constant the formula does not pin down, and "
          "at ell = 40 it still dominates the 0.05*cbar band."
          % ("PASS" if ok else "FAIL", abs(E[40.0]), band,
             "ok" if e40_ok else "exceeded", *q_gap, *q_scaled,
             "ok" if q_ok else "broken", *y_gap, y_ok))
    assert ok


def test_ac5_shift_routes(wave_fine):
    res = shift_routes(1e-4, BOX10, h=0.02, T=200.0, t_min=40.0,
                       n_snapshots=24, wave=wave_fine)
    gap_ok = res["route_gap"] <= 0.1
    x_shift, _ = x_eps_selfsimilar(1e-4, BOX10.shifted(2.0), h=0.02)
    cov = abs(x_shift - (res["x_selfsimilar"] - 2.0))
    cov_ok = cov <= 0.02
    ok = gap_ok and cov_ok
    print("AC5 %s: x_eps(direct) = %.4f vs x_eps(selfsimilar) = %.4f, gap "
          "%.4f (<=0.1); shift covariance |x[phi(.-2)] - (x[phi] - 2)| = "
          "%.2e (<=0.02)"
          % ("PASS" if ok else "FAIL", res["x_direct"],
             res["x_selfsimilar"], res["route_gap"], cov))
    assert ok


def test_ac6_mckean():
    m4, _ = centering(4.0)
    grid = m4 + np.linspace(-10.0, 5.0, 30)
    rep = mckean_check(4.0, grid, 100000, 7, h=0.02)
    ok = rep["all_in_band"]
    print("AC6 %s: max over 30 grid points of |P_hat[max > x] - u(4,x)| = "
          "%.5f, worst point at %.2f of its max(3SE, 0.01) band"
          % ("PASS" if ok else "FAIL", rep["max_abs_diff"],
             rep["worst_band_ratio"]))
    assert ok


def test_ac7_duality():
    box = duality_check(BOX10, 6.0, 100000, 55, h=0.02, with_wave_limit=False)
    step = duality_check(step_profile(1.0), 6.0, 100000, 55, h=0.02,
                         with_wave_limit=False)
    ok = box["in_band"] and step["in_band"]
    print("AC7 %s: box psi empirical %.5f vs pde %.5f (z = %+.2f); "
          "step-cutoff psi empirical %.5f vs pde %.5f (z = %+.2f); both "
          "within 3 SE"
          % ("PASS" if ok else "FAIL", box["empirical"], box["pde_value"],
             box["z"], step["empirical"], step["pde_value"], step["z"]))
    assert ok


def test_ac8_martingales():
    rep = martingale_suite([2.0, 4.0, 6.0, 8.0], 100000, 101)
    zs = []
    for r in rep["rows"]:
        zs.append(max(abs(r["mean_Z"]) / r["se_Z"],
                      abs(r["mean_W"] - 1.0) / r["se_W"],
                      abs(r["mean_N"] - r["exp_t"]) / r["se_N"]))
    ok = rep["all_in_band"]
    print("AC8 %s: E[Z]=0, E[W]=1, E[N]=e^t at t=2,4,6,8 with 1e5 replicas; "
          "worst |z| per t: %.2f / %.2f / %.2f / %.2f (all <= 3)"
          % ("PASS" if ok else "FAIL", *zs))
    assert ok


def test_ac9a_extremal_mass_trend():
    rep = extremal_mass_trend(12.0, [2, 3, 4], 2000, 404)
    dists = [r["dist_to_target"] for r in rep["rows"]]
    means = [r["mean_ratio"] for r in rep["rows"]]
    roms = [r["ratio_of_means"] for r in rep["rows"]]
    ok = rep["drifts_toward_target"]
    print("AC9a %s: E[Yhat_n/Z] at t=12 is %.4f / %.4f / %.4f for n=2,3,4 "
          "against the limit %.4f; distances %.4f / %.4f / %.4f move AWAY "
          "monotonically. The proxy needs 1 << n << sqrt(4t) ~ 6.9 and no "
          "n in {2,3,4} clears both ends: the O(log n / n) corrections "
          "still dominate at n=2 while the Gaussian suppression "
          "exp(-n^2/4t) (0.92/0.83/0.72 here) already bites at n=4. The "
          "ratio-of-means reading %.4f / %.4f / %.4f crosses the target "
          "instead of approaching it."
          % ("PASS" if ok else "FAIL", *means, rep["target"], *dists, *roms))
    assert ok


def test_ac9b_fluctuation_target_shape(consts):
    Z = 0.8
    boundary = (laplace_fluctuation_target(0.0, BOX10, Z, consts) == 1.0
                and laplace_fluctuation_target(0.7, BOX10, 0.0, consts) == 1.0)
    lam = np.linspace(0.05, 4.0, 80)
    logf = np.array([math.log(laplace_fluctuation_target(float(x), BOX10,
                                                         Z, consts))
                     for x in lam])
    convex = bool(np.all(np.diff(logf, 2) >= 0.0))
    # the exponent's curvature is exactly Z mu / lam; measure it away from
    # the origin where the centered difference is accurate
    lam2 = np.linspace(0.5, 4.0, 351)
    logf2 = np.array([math.log(laplace_fluctuation_target(float(x), BOX10,
                                                          Z, consts))
                      for x in lam2])
    mid = np.diff(logf2, 2) / (lam2[1] - lam2[0]) ** 2
    curv_ok = np.abs(mid / (Z * mu_of(BOX10) / lam2[1:-1]) - 1.0).max() < 1e-2
    steep = fluctuation_target_slope(1e-8, BOX10, Z, consts)
    ok = boundary and convex and curv_ok and steep < -1.0
    print("AC9b %s: boundary values exact at lam=0 and Z=0: %s; log f convex "
          "on [0.05, 4] with curvature matching Z mu / lam to 1%%: %s; slope "
          "log-divergent near 0 (%.1f at lam=1e-8)"
          % ("PASS" if ok else "FAIL", boundary, convex and curv_ok, steep))
    assert ok


def test_ac9c_algebraic_invariances():
    def consts_with(cb, cb1, m1):
        return ExpansionConstants(cbar=cb, cbar1=cb1, g_inf=0.0, k0=0.0,
                                  m1=m1, tol=1e-10, truncation_points={})

    rng = np.random.default_rng(5)
    worst_t = 0.0
    for _ in range(200):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        L = rng.uniform(-2.0, 2.0)
        eps = math.exp(-rng.uniform(3.0, 60.0))
        base = shift_full_expansion(eps, consts_with(cb, cb1, m1))
        moved = shift_full_expansion(
            eps, consts_with(math.exp(L) * cb,
                             math.exp(L) * cb1 + L * math.exp(L) * cb, m1))
        worst_t = max(worst_t, abs(moved - base + L))
    rng = np.random.default_rng(6)
    worst_s = 0.0
    for _ in range(200):
        cb = rng.uniform(0.05, 3.0)
        cb1 = rng.uniform(-1.0, 1.0)
        m1 = rng.uniform(-2.0, 2.0)
        lam = rng.uniform(0.2, 5.0)
        ell = rng.uniform(3.0, 60.0)
        eps = math.exp(-ell)
        base = shift_full_expansion(eps, consts_with(cb, cb1, m1))
        scaled = shift_full_expansion(eps, consts_with(lam * cb, lam * cb1, m1))
        worst_s = max(worst_s,
                      abs(scaled - base + math.log(lam) - math.log(lam) / ell))
    ok = worst_t <= 1e-12 and worst_s <= 1e-12
    print("AC9c %s: translation identity (the two 1/log(1/eps) coefficients "
          "cancel) holds to %.1e and amplitude scaling (log-term coefficient "
          "-1) to %.1e over 200 random draws each (<=1e-12)"
          % ("PASS" if ok else "FAIL", worst_t, worst_s))
    assert ok


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def test_ac10_reproducibility(tmp_path, monkeypatch):
    cfg = {"t": 2.5, "replicas": 2000, "seed": 7, "h": 0.04,
           "grid_lo": -6.0, "grid_hi": 3.0, "grid_n": 12}
    d1, d2, d3 = (str(tmp_path / x) for x in "abc")
    run_experiment("mckean", cfg, d1, threads=1)
    monkeypatch.setenv("KPPBBM_THREADS", "4")
    run_from_manifest(os.path.join(d1, "manifest.json"), d2)
    monkeypatch.setenv("KPPBBM_THREADS", "2")
    run_from_manifest(os.path.join(d1, "manifest.json"), d3)
    names = ("mckean.csv", "summary.json")
    same = all(_digest(os.path.join(d1, n)) == _digest(os.path.join(d2, n))
               == _digest(os.path.join(d3, n)) for n in names)
    with open(os.path.join(d1, "manifest.json")) as fh:
        man = json.load(fh)
    hashes_ok = all(_digest(os.path.join(d1, o["name"])) == o["sha256"]
                    for o in man["outputs"])
    ok = same and hashes_ok
    print("AC10 %s: manifest re-runs with 1, 4 and 2 workers produce "
          "byte-identical CSV and summary outputs; manifest hashes match "
          "the files on disk"
          % ("PASS" if ok else "FAIL"))
    assert ok
