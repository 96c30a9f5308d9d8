"""Closed-form evaluators for the front-shift expansions and the limiting
Laplace transforms.

Everything here is pure algebra in the constants bundle; no PDE or Monte
Carlo machinery is imported.  Keeping the evaluators free of any global
constant cache lets sensitivity experiments inject perturbed bundles.
"""

from __future__ import annotations

import math

from .constants import ExpansionConstants, mu_of, nu_of
from .profiles import InitialProfile
from .wave import WaveSolution, NumericsError, eval_U

__all__ = [
    "shift_leading_order", "shift_full_expansion", "r_infinity_expansion",
    "laplace_wave_dual", "laplace_extremal", "laplace_fluctuation_target",
    "fluctuation_target_slope", "laplace_stable", "level_correction",
]


def _check_cbar(consts: ExpansionConstants) -> float:
    if consts.cbar <= 0.0:
        raise ValueError("expansion formulas need cbar > 0")
    return consts.cbar


def _check_eps(eps: float):
    if not 0.0 < eps < math.exp(-2.0):
        raise ValueError("shift expansions hold for eps in (0, e^-2)")


def shift_leading_order(eps: float, consts: ExpansionConstants) -> float:
    """log(1/eps) - log log(1/eps) - log cbar.

    The first three terms of the front shift for data eps * phi0; precise
    enough to pin the double-log correction but blind to the profile beyond
    its exponential moment.
    """
    _check_eps(eps)
    cbar = _check_cbar(consts)
    ell = math.log(1.0 / eps)
    return ell - math.log(ell) - math.log(cbar)


def shift_full_expansion(eps: float, consts: ExpansionConstants) -> float:
    """Front shift through the O(1/log(1/eps)) corrections.

    Adds -2 log ell / ell - (m1 - log cbar + cbar1/cbar) / ell to the
    leading order, ell = log(1/eps).  The two 1/ell coefficients are tied
    to the translation convention: shifting the data moves the value by
    exactly minus the shift (see the consistency tests).
    """
    _check_eps(eps)
    cbar = _check_cbar(consts)
    ell = math.log(1.0 / eps)
    lead = ell - math.log(ell) - math.log(cbar)
    corr = consts.m1 - math.log(cbar) + consts.cbar1 / cbar
    return lead - 2.0 * math.log(ell) / ell - corr / ell


def r_infinity_expansion(ell: float, consts: ExpansionConstants,
                         order: int = 2) -> float:
    """Asymptotic first-moment limit: cbar*ell + 2 cbar log ell + const.

    order selects the truncation: 0 keeps the linear term, 1 adds the log,
    2 adds the constant m1*cbar + cbar1 - cbar log cbar.
    """
    if ell < 2.0:
        raise ValueError("expansion needs ell >= 2")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    cbar = _check_cbar(consts)
    val = cbar * ell
    if order >= 1:
        val += 2.0 * cbar * math.log(ell)
    if order >= 2:
        val += consts.m1 * cbar + consts.cbar1 - cbar * math.log(cbar)
    return val


def laplace_wave_dual(y: float, wave: WaveSolution) -> float:
    """Limiting Laplace functional of the recentered extremal point at y.

    Equals 1 - U(y): increasing from 0 to 1, the distribution function of
    the recentered front location in the dual description.
    """
    if not wave.normalized:
        raise NumericsError("laplace_wave_dual needs a normalized wave")
    return 1.0 - float(eval_U(wave, y))


def laplace_extremal(psi: InitialProfile, shift_of_psi_hat: float,
                     wave: WaveSolution) -> float:
    """Limiting Laplace functional E[e^(-X(psi))] = 1 - U(shift of psi_hat).

    The caller supplies the measured front shift of the hat-transformed
    profile 1 - e^(-psi); this evaluator only closes the duality, so both
    shift routes can be fed through the same right-hand side.
    """
    if not wave.normalized:
        raise NumericsError("laplace_extremal needs a normalized wave")
    if psi.is_zero:
        raise ValueError("psi must be a nonzero profile")
    return 1.0 - float(eval_U(wave, shift_of_psi_hat))


def _xlogx(lam: float) -> float:
    # continuous extension at 0; the Laplace exponents below all carry it
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    return 0.0 if lam == 0.0 else lam * math.log(lam)


def laplace_fluctuation_target(lam: float, phi0: InitialProfile, Z: float,
                               consts: ExpansionConstants) -> float:
    """Laplace transform of the limiting counting fluctuations at parameter lam.

    exp{ Z mu lam log lam + lam Z mu log mu - lam Z (m1 mu + nu) } with
    mu, nu the exponential moments of phi0.  Z enters as a frozen sample of
    the limit derivative martingale.
    """
    mu = mu_of(phi0)
    if mu <= 0.0:
        raise ValueError("fluctuation target needs mu(phi0) > 0")
    nu = nu_of(phi0)
    expo = Z * mu * _xlogx(lam) + lam * Z * mu * math.log(mu) \
        - lam * Z * (consts.m1 * mu + nu)
    return math.exp(expo)


def fluctuation_target_slope(lam: float, phi0: InitialProfile, Z: float,
                             consts: ExpansionConstants) -> float:
    """d/d lam of laplace_fluctuation_target; steep like log lam near 0."""
    if lam <= 0.0:
        raise ValueError("slope needs lambda > 0")
    mu = mu_of(phi0)
    if mu <= 0.0:
        raise ValueError("fluctuation target needs mu(phi0) > 0")
    nu = nu_of(phi0)
    g = Z * mu * (math.log(lam) + 1.0) + Z * mu * math.log(mu) \
        - Z * (consts.m1 * mu + nu)
    return g * laplace_fluctuation_target(lam, phi0, Z, consts)


def laplace_stable(lam: float, t: float) -> float:
    """exp(t lam log lam): the spectrally positive 1-stable transform."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    return math.exp(t * _xlogx(lam))


def level_correction(n: int) -> float:
    """log(1 + 2 log n / n), the deterministic recentering for n-term sums.

    Sits within (2 log n/n)^2 / 2 of 2 log n / n for every n >= 1.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    return math.log1p(2.0 * math.log(n) / n)
