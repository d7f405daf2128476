"""Physical constants and unit helpers."""

import numpy as np
import scipy.constants as const

HBAR = const.hbar
ELEMENTARY_CHARGE = const.elementary_charge
EPSILON_0 = const.epsilon_0

# 171Yb+ (atomic mass of the neutral isotope is accurate enough here; the
# missing electron shifts eta by ~3e-6 relative).
YB171_MASS = 170.936330 * const.atomic_mass

RAMAN_WAVELENGTH = 377e-9

TWO_PI = 2.0 * np.pi


def mhz_to_angular(f_mhz):
    """Ordinary frequency in MHz -> angular frequency in rad/s."""
    return TWO_PI * 1e6 * np.asarray(f_mhz, dtype=float)


def angular_to_mhz(omega):
    """Angular frequency in rad/s -> ordinary frequency in MHz."""
    return np.asarray(omega, dtype=float) / (TWO_PI * 1e6)
