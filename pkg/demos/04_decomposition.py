"""Moving-frame first moment and its three-way split.

r_inf(ell) = Q_ell + Y_ell + E_ell: a linear Dirichlet pairing that is
computable in closed form asymptotically, an absorption correction with a
finite limit shape, and a remainder that decays slowly in ell.  ell = 6
keeps the run under half a minute.
"""

import math

from kppbbm.constants import assemble_constants
from kppbbm.pde import decompose_r_infinity, r_infinity
from kppbbm.profiles import box_profile
from kppbbm.wave import normalize_wave, solve_wave

ell = 6.0
phi = box_profile(-1.0, 0.0)

est = r_infinity(ell, phi, h=0.04, plateau_tol=2e-3)
parts = decompose_r_infinity(ell, phi, rinf=est)
print("ell = %g   r_inf = %.6f  (converged: %s)" % (ell, est.value,
                                                    est.converged))
print("  Q = %+.6f   Y = %+.6f   E = %+.6f" % (parts["Q_ell"],
                                               parts["Y_ell"],
                                               parts["E_ell"]))

consts = assemble_constants(phi, normalize_wave(solve_wave(h=0.005)))
q_pred = (consts.cbar * ell + 3.0 * consts.cbar * math.log(ell)
          + 1.5 * consts.g_inf * consts.cbar + consts.cbar1)
print("  Q asymptote %.6f, gap %+.4f (shrinks like 1/ell)"
      % (q_pred, parts["Q_ell"] - q_pred))
