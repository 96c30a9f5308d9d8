"""Minimal-speed travelling wave and the expansion constants.

Solves U'' + 2U' + U - U^2 = 0 on a large interval, reads off the tail
offset k0 from U(x) ~ (x + k0) e^(-x), then assembles the constants that
drive the small-epsilon front-shift expansion for a box initial profile.
"""

from kppbbm.constants import assemble_constants, g_infinity_schemes
from kppbbm.profiles import box_profile
from kppbbm.wave import normalize_wave, solve_wave, wave_identity_checks

wave = normalize_wave(solve_wave(h=0.005))
checks = wave_identity_checks(wave)

print("travelling wave (h = 0.005)")
print("  k0                    %.10f" % wave.k0)
print("  integral identity     %.6f  (should be 1)" % checks["mass"])
print("  first-moment identity %.6f  (should be -k0)" % checks["first_moment"])
print("  residuals             %.2e / %.2e" % (checks["residual_mass"],
                                               checks["residual_first_moment"]))

schemes = g_infinity_schemes(tol=1e-10)
print("g_infinity by two quadrature schemes: %.12f vs %.12f"
      % (schemes["adaptive"], schemes["composite"]))

consts = assemble_constants(box_profile(-1.0, 0.0), wave)
print("constants for the box profile on [-1, 0]")
for k, v in consts.to_dict().items():
    if isinstance(v, float):
        print("  %-6s %+.12f" % (k, v))
print("m1 identity: m1 - (3/2 g_inf + k0 + 1/2) = %.1e"
      % (consts.m1 - (1.5 * consts.g_inf + consts.k0 + 0.5)))
