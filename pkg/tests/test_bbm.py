import math

import numpy as np
import pytest
from scipy.stats import kstest

from kppbbm.bbm import (DEFAULT_CAP, BBMPopulation, PopulationCapError,
                        centering, empirical_laplace_Xt, observables, simulate)
from kppbbm.constants import mu_of
from kppbbm.profiles import box_profile, step_profile

BOX10 = box_profile(-1.0, 0.0)


def test_centering_switch():
    m, linear = centering(4.0)
    assert not linear
    assert abs(m - (8.0 - 1.5 * math.log(4.0))) < 1e-14
    m, linear = centering(0.5)        # log term off before t = 1
    assert linear and m == 1.0
    assert centering(1.0) == (2.0, False)


def test_single_particle_at_zero():
    pop = simulate(0.0, 123)
    assert pop.n_particles == 1 and pop.positions[0] == 0.0
    obs = observables(pop, BOX10, 1)
    assert obs.W_t == 1.0 and obs.Z_t == 0.0 and obs.max_pos == 0.0


def test_bit_reproducible():
    a = simulate(6.0, 7, 3)
    b = simulate(6.0, 7, 3)
    assert np.array_equal(a.positions, b.positions)
    assert a.n_particles == 205 and a.rng_draws == 818
    assert abs(a.positions[0] - (-6.7205106949)) < 1e-9
    c = simulate(6.0, 7, 4)           # neighboring stream differs
    assert c.n_particles != 205 or not np.array_equal(a.positions, c.positions)


def test_population_mean():
    # E[N_t] = e^t for binary splitting at rate 1
    ns = np.array([simulate(3.0, 42, r).n_particles for r in range(4000)], float)
    mean = ns.mean()
    se = ns.std(ddof=1) / math.sqrt(4000.0)
    assert abs(mean - 19.786) < 1e-3 and abs(se - 0.2986) < 1e-3
    assert abs(mean - math.exp(3.0)) <= 3.0 * se


def test_no_branching_is_plain_diffusion():
    xs = np.array([simulate(2.0, 5, r, branching=False).positions[0]
                   for r in range(10000)])
    assert xs.size == 10000
    assert abs(xs.mean() - 0.012010) < 1e-6
    assert abs(xs.var(ddof=1) - 3.954748) < 1e-6   # variance 2t = 4


def test_ancestral_lifetimes_are_exponential():
    # raw clock draws along the first-child line, overshoot included,
    # so the sample is i.i.d. exp(1); KS at 1% level
    life = []
    r = 0
    while len(life) < 10000:
        life.extend(simulate(6.0, 9, r).ancestral_lifetimes.tolist())
        r += 1
    assert r == 1416
    stat = kstest(np.array(life[:10000]), "expon").statistic
    assert abs(stat - 0.00814) < 1e-4
    assert stat < 0.0163


def test_population_caps():
    with pytest.raises(PopulationCapError, match="e\\^t"):
        simulate(10.0, 1, cap=500)            # rejected before any work
    with pytest.raises(PopulationCapError, match="exceeded cap"):
        simulate(7.0, 1, cap=1100)            # trips mid-run on this stream
    assert simulate(7.0, 1, cap=DEFAULT_CAP).n_particles == 1417


def test_argument_validation():
    with pytest.raises(ValueError):
        simulate(-1.0, 0)
    with pytest.raises(ValueError):
        simulate(1.0, 0, cap=0)
    with pytest.raises(ValueError):
        simulate(1.0, -1)
    with pytest.raises(ValueError):
        simulate(1.0, 2**64)
    with pytest.raises(ValueError):
        observables(simulate(1.0, 0), BOX10, 0)
    with pytest.raises(ValueError):
        empirical_laplace_Xt(BOX10, 1.0, 0, 0)


def test_observables_identities():
    pop = simulate(5.0, 11)
    obs = observables(pop, BOX10, 2)
    gaps = 2.0 * 5.0 - pop.positions
    assert abs(obs.W_t - np.exp(-gaps).sum()) < 1e-12
    assert abs(obs.Z_t - (gaps * np.exp(-gaps)).sum()) < 1e-12
    assert obs.max_pos == pop.positions.max()
    assert np.array_equal(obs.order_stats, np.sort(pop.positions)[::-1][:5])
    # recentering identity between the raw and centered mass statistics
    level = 1.0 + 2.0 * math.log(2.0) / 2.0
    vhat = 2.0 * (obs.Yhat_n - level * obs.Z_t * mu_of(BOX10))
    assert abs(obs.Vhat_n - vhat) < 1e-12


def test_observables_permutation_invariant():
    pop = simulate(5.0, 13)
    base = observables(pop, BOX10, 3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        perm = rng.permutation(pop.positions.size)
        shuffled = BBMPopulation(t=pop.t, positions=pop.positions[perm],
                                 seed=pop.seed, replica=pop.replica)
        obs = observables(shuffled, BOX10, 3)
        assert abs(obs.Z_t - base.Z_t) <= 1e-12 * max(1.0, abs(base.Z_t))
        assert abs(obs.W_t - base.W_t) <= 1e-12 * base.W_t
        assert abs(obs.Yhat_n - base.Yhat_n) <= 1e-12 * max(1.0, abs(base.Yhat_n))


def test_starred_statistics_need_positive_shift():
    pop = simulate(4.0, 19)
    obs = observables(pop, BOX10, 2, Z_for_shift=0.0)
    assert math.isnan(obs.Yhat_star_n) and math.isnan(obs.Vhat_star_n)
    obs = observables(pop, BOX10, 2, Z_for_shift=1.0)
    # log Z = 0: starred and plain mass statistics coincide
    assert abs(obs.Yhat_star_n - obs.Yhat_n) < 1e-15
    assert math.isfinite(obs.Vhat_star_n)


def test_laplace_of_zero_profile():
    zero = box_profile(0.0, 1.0, 0.0)
    assert empirical_laplace_Xt(zero, 2.0, 50, 3) == (1.0, 0.0)


def test_laplace_matches_indicator_cutoff():
    # a tall box makes e^(-X(psi)) an indicator of "no particle seen
    # within the window"; the two estimators must agree bit for bit
    psi = box_profile(-60.0, 0.5, 50.0)
    emp, _ = empirical_laplace_Xt(psi, 4.0, 4000, 21)
    m4, _ = centering(4.0)
    frac = np.mean([1.0 if np.all(m4 - simulate(4.0, 21, r).positions >= 0.5)
                    else 0.0 for r in range(4000)])
    assert abs(emp - 0.684250) < 1e-6
    assert abs(emp - frac) <= 1e-12


def test_laplace_against_front_value():
    # 1 - u(4, m(4)) from the lab solver at h = 0.02 with data 1 - e^(-psi)
    emp, se = empirical_laplace_Xt(BOX10, 4.0, 4000, 17)
    assert abs(emp - 0.812457) < 1e-6 and abs(se - 0.005557) < 1e-6
    assert abs(emp - 0.822862) <= 3.0 * se
