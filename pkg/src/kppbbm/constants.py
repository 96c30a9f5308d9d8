"""Expansion constants from exponentially weighted moments of the profile.

Everything downstream of the front-shift expansions reduces to a handful of
numbers: the weighted masses

    cbar  = (4 pi)^(-1/2) * integral e^x  phi0(x) dx,
    cbar1 = (4 pi)^(-1/2) * integral x e^x phi0(x) dx,

the universal constant g_inf defined through the half-line antiderivative

    psibar(eta) = integral_0^eta exp(z^2/4) integral_z^inf exp(-y^2/4) dy dz
                = 2 log eta + g(eta),   g(eta) -> g_inf,

and the wave-dependent offset m1 = (3/2) g_inf + k0 + 1/2 where k0 is the
additive normalization of the minimal-speed wave tail.

Box and table profiles are integrated exactly (closed-form antiderivatives
of linear * e^x pieces), so the quadrature error estimates are at rounding
level.  The inner Gaussian tail of psibar is eliminated with the identity
integral_z^inf exp(-y^2/4) dy = sqrt(pi) erfc(z/2), and the exp(z^2/4)
prefactor is absorbed into the scaled function erfcx, which keeps the
integrand bounded for every eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.integrate import quad, cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.special import erfcx

from .profiles import InitialProfile

__all__ = ["QuadratureError", "ExpansionConstants", "compute_cbar",
           "compute_cbar1", "mu_of", "nu_of", "compute_psibar",
           "compute_g_infinity", "g_infinity_schemes", "assemble_constants",
           "psibar_interpolant", "SQRT_4PI", "SQRT_PI"]

SQRT_PI = math.sqrt(math.pi)
SQRT_4PI = math.sqrt(4.0 * math.pi)


class QuadratureError(RuntimeError):
    """Requested tolerance not met; carries the achieved error estimate."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class ExpansionConstants:
    """Bundle of constants consumed by the shift expansions."""

    cbar: float
    cbar1: float
    g_inf: float
    k0: float
    m1: float
    tol: float
    truncation_points: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _segment_exp_moment(x0, x1, y0, y1, k):
    """Exact integral of (linear through (x0,y0),(x1,y1)) * x^k * e^x on [x0, x1]."""
    slope = (y1 - y0) / (x1 - x0)
    alpha = y0 - slope * x0            # value = alpha + slope * x
    # antiderivatives: e^x, (x-1)e^x, (x^2-2x+2)e^x
    def F(x):
        e = math.exp(x)
        p0 = e
        p1 = (x - 1.0) * e
        if k == 0:
            return alpha * p0 + slope * p1
        p2 = (x * x - 2.0 * x + 2.0) * e
        return alpha * p1 + slope * p2
    return F(x1) - F(x0)


def _exp_weighted_moment(profile: InitialProfile, k: int, tol: float):
    """integral x^k e^x phi(x) dx for k in {0, 1}, exactly per profile kind.

    Returns (value, error_estimate, truncation_point).  truncation_point is
    None when the integral is evaluated in closed form over the whole
    support.
    """
    if k not in (0, 1):
        raise ValueError("only moments k = 0, 1 are needed")
    if profile.kind == "box":
        a, b, h = profile.a, profile.b, profile.height
        if k == 0:
            val = h * (math.exp(b) - math.exp(a))
        else:
            val = h * ((b - 1.0) * math.exp(b) - (a - 1.0) * math.exp(a))
        scale = h * (abs(math.exp(b)) + abs(math.exp(a))) * max(1.0, abs(a), abs(b))
        return val, 8.0 * np.finfo(float).eps * scale, None
    if profile.kind == "step":
        # integral_{-inf}^0 e^x dx = 1, integral_{-inf}^0 x e^x dx = -1;
        # the e^x envelope makes the left tail exact
        val = profile.height * (1.0 if k == 0 else -1.0)
        return val, 4.0 * np.finfo(float).eps * profile.height, None
    xs, ys = profile.xs, profile.ys
    total, magnitude = 0.0, 0.0
    for i in range(xs.size - 1):
        if ys[i] == 0.0 and ys[i + 1] == 0.0:
            continue
        c = _segment_exp_moment(xs[i], xs[i + 1], ys[i], ys[i + 1], k)
        total += c
        magnitude += abs(c)
    err = 8.0 * np.finfo(float).eps * max(magnitude, 1e-300) * xs.size
    if err > tol:
        raise QuadratureError(f"weighted moment k={k} did not reach tol {tol:.1e}", err)
    return total, err, None


def compute_cbar(profile: InitialProfile, tol: float = 1e-10) -> float:
    """(4 pi)^(-1/2) integral e^x phi(x) dx; strictly positive for phi != 0."""
    val, err, _ = _exp_weighted_moment(profile, 0, tol * SQRT_4PI)
    if err / SQRT_4PI > tol:
        raise QuadratureError("cbar quadrature did not converge", err / SQRT_4PI)
    return val / SQRT_4PI


def compute_cbar1(profile: InitialProfile, tol: float = 1e-10) -> float:
    """(4 pi)^(-1/2) integral x e^x phi(x) dx."""
    val, err, _ = _exp_weighted_moment(profile, 1, tol * SQRT_4PI)
    if err / SQRT_4PI > tol:
        raise QuadratureError("cbar1 quadrature did not converge", err / SQRT_4PI)
    return val / SQRT_4PI


# The limiting intensity of the extremal process is Z * mu with
# mu(dx) = (4 pi)^(-1/2) e^x dx; the first-correction measure is
# nu(dx) = (4 pi)^(-1/2) x e^x dx.  Their actions on a profile coincide
# with cbar and cbar1.
mu_of = compute_cbar
nu_of = compute_cbar1


def _psibar_integrand(z):
    # exp(z^2/4) * integral_z^inf exp(-y^2/4) dy = sqrt(pi) * erfcx(z/2)
    return SQRT_PI * erfcx(0.5 * z)


def compute_psibar(eta: float, tol: float = 1e-10) -> float:
    """psibar(eta) for eta >= 0.

    psibar solves (eta/2) p' - p'' = 1 with p(0) = 0 and p' of Gaussian
    decay removed; its derivative is sqrt(pi) * erfcx(eta/2), which is what
    actually gets integrated.
    """
    if eta < 0:
        raise ValueError("psibar is defined for eta >= 0")
    if eta == 0.0:
        return 0.0
    val, err = quad(_psibar_integrand, 0.0, eta, epsabs=tol / 2, epsrel=1e-12,
                    limit=200)
    if err > tol:
        raise QuadratureError("psibar quadrature did not converge", err)
    return val


def _tail_series(Z: float) -> float:
    """integral_Z^inf [1/z - (sqrt(pi)/2) erfcx(z/2)] dz, asymptotic form.

    The integrand expands as 2/z^3 - 12/z^5 + 120/z^7 - ..., so the tail is
    1/Z^2 - 3/Z^4 + 20/Z^6 with the next term below 1e-18 for Z >= 200.
    """
    z2 = Z * Z
    return (1.0 - (3.0 - 20.0 / z2) / z2) / z2


def _g_tail_integrand(z):
    return 1.0 / z - 0.5 * SQRT_PI * erfcx(0.5 * z)


def _g_inf_adaptive(tol: float, Z: float = 200.0):
    p1, e1 = quad(_psibar_integrand, 0.0, 1.0, epsabs=tol / 4, epsrel=1e-13)
    p2, e2 = quad(_g_tail_integrand, 1.0, Z, epsabs=tol / 4, epsrel=1e-13,
                  limit=400)
    return p1 - 2.0 * (p2 + _tail_series(Z)), e1 + 2.0 * e2


def _composite_simpson(f, a, b, n):
    # n panels (even); classical 1-4-2-...-4-1 weights
    x = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return (b - a) / (3.0 * n) * float(w @ f(x))


def _simpson_richardson(f, a, b, n):
    s1 = _composite_simpson(f, a, b, n)
    s2 = _composite_simpson(f, a, b, 2 * n)
    return s2 + (s2 - s1) / 15.0, abs(s2 - s1) / 15.0


def _g_inf_composite(tol: float, Z: float = 200.0):
    p1, e1 = _simpson_richardson(_psibar_integrand, 0.0, 1.0, 256)
    # substitute z = e^s so the slow 2/z^3 decay becomes a smooth e^(-2s)
    p2, e2 = _simpson_richardson(lambda s: _g_tail_integrand(np.exp(s)) * np.exp(s),
                                 0.0, math.log(Z), 2048)
    return p1 - 2.0 * (p2 + _tail_series(Z)), e1 + 2.0 * e2


def g_infinity_schemes(tol: float = 1e-10, Z: float = 200.0) -> dict:
    """Both quadrature routes for g_inf plus their spread and truncation point."""
    va, ea = _g_inf_adaptive(tol, Z)
    vc, ec = _g_inf_composite(tol, Z)
    return {"adaptive": va, "composite": vc, "spread": abs(va - vc),
            "error_estimates": (ea, ec), "truncation_Z": Z}

def compute_g_infinity(tol: float = 1e-10) -> float:
    """g_inf by adaptive quadrature, cross-checked against the composite rule."""
    s = g_infinity_schemes(tol)
    if s["spread"] > max(tol, 1e-9):
        raise QuadratureError("g_inf quadrature schemes disagree", s["spread"])
    return s["adaptive"]


def psibar_interpolant(eta_max: float = 60.0, samples_per_unit: int = 1000):
    """Fast vectorized psibar on [0, inf).

    Builds a cubic spline of the cumulative integral on [0, eta_max] and
    switches to the asymptotic form 2 log eta + g_inf + 2/eta^2 - 6/eta^4
    beyond; the two branches match to ~1e-9 at eta_max = 60.
    """
    grid = np.linspace(0.0, eta_max, int(eta_max * samples_per_unit) + 1)
    vals = cumulative_trapezoid(_psibar_integrand(grid), grid, initial=0.0)
    spline = CubicSpline(grid, vals)
    g_inf = compute_g_infinity()

    def psibar(eta):
        eta = np.asarray(eta, dtype=float)
        out = np.empty_like(eta)
        inside = eta <= eta_max
        out[inside] = spline(eta[inside])
        far = ~inside
        if np.any(far):
            e = eta[far]
            out[far] = 2.0 * np.log(e) + g_inf + (2.0 - 6.0 / e**2) / e**2
        return out

    return psibar


def assemble_constants(profile: InitialProfile, wave, tol: float = 1e-10) -> ExpansionConstants:
    """All shift-expansion constants for one profile and one solved wave.

    ``wave`` only needs a ``k0`` attribute (the additive tail normalization).
    m1 is recomputed here as (3/2) g_inf + k0 + 1/2 rather than stored, so
    the identity between the pieces is preserved bit for bit.
    """
    cbar = compute_cbar(profile, tol)
    cbar1 = compute_cbar1(profile, tol)
    g_inf = compute_g_infinity(tol)
    k0 = float(wave.k0)
    m1 = 1.5 * g_inf + k0 + 0.5
    return ExpansionConstants(cbar=cbar, cbar1=cbar1, g_inf=g_inf, k0=k0, m1=m1,
                              tol=tol,
                              truncation_points={"g_inf_tail_Z": 200.0})
