"""Event-driven simulation of binary branching Brownian motion.

Each particle carries an exponential(1) branch clock drawn once at birth;
between events it diffuses with variance 2 per unit time, and at an event
it splits into two independent offspring at its position.  There is no
time grid, so the sampled populations are exact in distribution and any
discrepancy against a PDE reference is purely statistical.

Replicas draw from counter-based Philox streams keyed by (master seed,
replica index).  A replica is a deterministic function of its key, so
results are bit-reproducible and independent of scheduling, worker count,
or the order in which replicas run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import mu_of
from .pde import bramson_centering
from .profiles import InitialProfile

__all__ = ["PopulationCapError", "BBMPopulation", "ExtremalObservables",
           "DEFAULT_CAP", "centering", "simulate", "observables",
           "empirical_laplace_Xt"]

# expected count e^t; t ~ 14.5 at the default.  The engine never prunes,
# so the only protection against runaway memory is refusing to start.
DEFAULT_CAP = 2_000_000


class PopulationCapError(RuntimeError):
    """Population grew past the configured cap."""


def centering(t: float):
    """Front centering m(t) and whether the log term was dropped.

    Returns (2t - (3/2) log t, False) for t >= 1.  Below t = 1 the log
    term is negative and the asymptotics it comes from are meaningless,
    so the plain linear centering 2t is used and flagged.
    """
    if t >= 1.0:
        return bramson_centering(t), False
    return 2.0 * t, True


def _rng(seed: int, replica: int) -> np.random.Generator:
    for name, v in (("seed", seed), ("replica", replica)):
        if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < 2 ** 64:
            raise ValueError(f"{name} must be an integer in [0, 2^64), got {v!r}")
    return np.random.Generator(np.random.Philox(key=[int(seed), int(replica)]))


@dataclass(frozen=True)
class BBMPopulation:
    """One replica of the particle system, advanced exactly to time t.

    Attributes
    ----------
    t : float
        Simulation horizon; every particle position is at this time.
    positions : ndarray
        Particle positions, one entry per particle alive at t.
    seed, replica : int
        RNG lineage.  Identical (seed, replica, t) regenerates identical
        positions bit-for-bit.
    rng_draws : int
        Number of scalar variates consumed; the stream counter.
    branch_count : int
        Splits that occurred strictly before t.
    ancestral_lifetimes : ndarray
        Raw exponential(1) clock draws along the first-child line of
        descent, in birth order.  The last entry is the draw that
        overshot the horizon; the recorded value is the full variate,
        so the whole sequence is i.i.d. exponential(1).
    """

    t: float
    positions: np.ndarray
    seed: int
    replica: int
    rng_draws: int = 0
    branch_count: int = 0
    ancestral_lifetimes: np.ndarray = field(
        default_factory=lambda: np.empty(0), repr=False)

    @property
    def n_particles(self) -> int:
        return int(self.positions.size)


def simulate(t: float, seed: int, replica: int = 0, *,
             cap: int = DEFAULT_CAP, branching: bool = True) -> BBMPopulation:
    """Run one replica of BBM to time t.

    Per-particle next-branch times are sampled once at birth; particles
    advance by centered Gaussian increments of variance 2*dt between
    events.  With ``branching=False`` the clock never rings and the
    result is a single Brownian particle (variance 2t), the diagnostic
    used to pin the diffusion normalization.

    Raises PopulationCapError up front if the expected count e^t already
    exceeds ``cap``, and during the run if the actual population does.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if cap < 1:
        raise ValueError("cap must be positive")
    expected = math.exp(min(t, 700.0))
    if branching and expected > cap:
        raise PopulationCapError(
            f"expected population e^t ~= {expected:.4g} exceeds cap {cap}")
    rng = _rng(seed, replica)

    if t == 0.0:
        return BBMPopulation(t=0.0, positions=np.zeros(1),
                             seed=int(seed), replica=int(replica))
    if not branching:
        pos = rng.standard_normal(1) * math.sqrt(2.0 * t)
        return BBMPopulation(t=t, positions=pos, seed=int(seed),
                             replica=int(replica), rng_draws=1)

    # frontier arrays, one entry per live particle: birth time and
    # position at birth.  anc marks the single particle on the
    # first-child line whose clock draws feed the KS diagnostic.
    tb = np.zeros(1)
    x = np.zeros(1)
    anc = np.array([True])
    out = []
    anc_draws = []
    draws = 0
    branch_count = 0
    n_finished = 0
    while tb.size:
        tau = rng.exponential(size=tb.size)
        draws += tb.size
        if anc.any():
            anc_draws.append(float(tau[anc][0]))
        t_split = tb + tau
        done = t_split >= t
        k_done = int(done.sum())
        if k_done:
            dt = t - tb[done]
            out.append(x[done] + rng.standard_normal(k_done) * np.sqrt(2.0 * dt))
            draws += k_done
            n_finished += k_done
        live = ~done
        k_live = int(live.sum())
        if not k_live:
            break
        dx = rng.standard_normal(k_live) * np.sqrt(2.0 * tau[live])
        draws += k_live
        xs = x[live] + dx
        branch_count += k_live
        # children of frontier slot j land at 2j, 2j+1
        tb = np.repeat(t_split[live], 2)
        x = np.repeat(xs, 2)
        anc = np.repeat(anc[live], 2)
        anc[1::2] = False
        if n_finished + tb.size > cap:
            raise PopulationCapError(
                f"population {n_finished + tb.size} exceeded cap {cap} "
                f"(expected count e^t ~= {expected:.4g})")
    positions = np.concatenate(out) if out else np.empty(0)
    return BBMPopulation(t=t, positions=positions, seed=int(seed),
                         replica=int(replica), rng_draws=draws,
                         branch_count=branch_count,
                         ancestral_lifetimes=np.asarray(anc_draws))


@dataclass(frozen=True)
class ExtremalObservables:
    """All statistics of one population, computed in a single pass.

    Z_t and W_t are the derivative and additive martingales.  X_psi is
    the Laplace-functional argument sum psi(m(t) - x_k).  Yhat_n is the
    finite-t proxy n^-1 e^-n sum psi(m(t) - x_k - n) for the rescaled
    extremal measure; its limit (over t, then n) is Z mu(psi).  Vhat_n
    rescales the fluctuation around that limit.  Starred variants shift
    positions by log Z first, absorbing the derivative-martingale limit;
    they are NaN when the supplied Z is not positive.  The proxy bias at
    finite t is unquantified, so t travels with the record.
    """

    t: float
    m_t: float
    linear_centering: bool
    n_particles: int
    max_pos: float
    order_stats: np.ndarray
    Z_t: float
    W_t: float
    X_psi: float
    n: int
    Yhat_n: float
    Vhat_n: float
    Yhat_star_n: float
    Vhat_star_n: float
    z_shift: float


def observables(pop: BBMPopulation, psi: InitialProfile, n: int,
                Z_for_shift: float | None = None, *,
                top_k: int = 5) -> ExtremalObservables:
    """Evaluate the observable bundle for one population.

    ``Z_for_shift`` supplies the Z entering Vhat_n and the starred
    variants; by default the population's own Z_t is used.  Z_t is a
    mean-zero martingale and can be nonpositive at finite t, in which
    case log Z is undefined and the starred fields come back NaN.
    """
    if n < 1:
        raise ValueError("rescaling index n must be >= 1")
    xs = pop.positions
    t = pop.t
    m_t, linear = centering(t) if t > 0 else (0.0, True)
    gaps = 2.0 * t - xs
    w = np.exp(-gaps)
    Z_t = float(np.sum(gaps * w))
    W_t = float(np.sum(w))
    seen_from_front = m_t - xs
    X_psi = float(np.sum(psi(seen_from_front)))

    scale = math.exp(-n) / n
    Yhat = scale * float(np.sum(psi(seen_from_front - n)))
    mu = mu_of(psi)
    level = 1.0 + 2.0 * math.log(n) / n
    zshift = Z_t if Z_for_shift is None else float(Z_for_shift)
    Vhat = n * (Yhat - level * zshift * mu)
    if zshift > 0.0:
        Yhat_star = scale * float(np.sum(psi(seen_from_front + math.log(zshift) - n)))
        Vhat_star = n * (Yhat_star - level * mu)
    else:
        Yhat_star = math.nan
        Vhat_star = math.nan

    k = min(top_k, xs.size)
    order_stats = np.sort(xs)[::-1][:k].copy()
    return ExtremalObservables(
        t=t, m_t=m_t, linear_centering=linear,
        n_particles=pop.n_particles,
        max_pos=float(xs.max()), order_stats=order_stats,
        Z_t=Z_t, W_t=W_t, X_psi=X_psi,
        n=int(n), Yhat_n=Yhat, Vhat_n=Vhat,
        Yhat_star_n=Yhat_star, Vhat_star_n=Vhat_star,
        z_shift=zshift)


def empirical_laplace_Xt(psi: InitialProfile, t: float, replicas: int,
                         seed: int, *, cap: int = DEFAULT_CAP):
    """Monte Carlo mean and standard error of exp(-X_t(psi)).

    One replica per counter-based stream (seed, r), r = 0..replicas-1.
    For psi identically zero every replica contributes exactly 1.0 and
    the pair (1.0, 0.0) comes back exactly.
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    m_t, _ = centering(t) if t > 0 else (0.0, True)
    acc = 0.0
    acc2 = 0.0
    for r in range(replicas):
        pop = simulate(t, seed, r, cap=cap)
        v = math.exp(-float(np.sum(psi(m_t - pop.positions))))
        acc += v
        acc2 += v * v
    mean = acc / replicas
    if replicas == 1:
        return mean, 0.0
    var = max(0.0, (acc2 - replicas * mean * mean) / (replicas - 1))
    return mean, math.sqrt(var / replicas)
