"""Branching Brownian motion against the reaction-diffusion front.

Two dual readings of the same object: the Laplace functional of the
particle cloud equals 1 - u(t, 0) for the matching initial condition, and
the law of the rightmost particle is the front profile itself.
"""

import numpy as np

from kppbbm.bbm import centering, empirical_laplace_Xt, simulate
from kppbbm.experiments import duality_check, mckean_check
from kppbbm.profiles import box_profile

t = 4.0
psi = box_profile(-1.0, 0.0)

pop = simulate(t, seed=2)
m_t, _ = centering(t)
print("one population at t = %g: %d particles, rightmost %.3f (m(t) = %.3f)"
      % (t, pop.positions.size, pop.positions.max(), m_t))

emp, se = empirical_laplace_Xt(psi, t, 20000, 11)
rep = duality_check(psi, t, 20000, 11, h=0.04)
print("E[exp(-<X_t, psi>)] = %.5f +- %.5f vs 1 - u(t,0) = %.5f  (z = %+.2f)"
      % (emp, se, rep["pde_value"], rep["z"]))

grid = m_t + np.linspace(-4.0, 3.0, 8)
mck = mckean_check(t, grid, 20000, 11, h=0.04)
print("max_x |P[max X > x] - u(t, x)| over 8 points: %.4f (in band: %s)"
      % (mck["max_abs_diff"], mck["all_in_band"]))
