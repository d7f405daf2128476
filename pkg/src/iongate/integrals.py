"""Closed-form integrals of windowed sinusoids.

Everything the segment kernels need reduces to three primitives: the
definite integral of sin/cos with a linear phase, the triangle integral
of exp(i(p t2 + q t1)) over t0 <= t1 <= t2 <= t1_up, and the triangle
integral of sin(delta (t2 - t1)) against flat or raised-cosine windows.
All forms are numerically stable at and near every resonance (arguments
passing through zero), which adaptive quadrature confirms in the tests.
"""

import math

import numpy as np

# |q (t1-t0)| below this switches the triangle integral to its power series
_SERIES_SWITCH = 0.5
_SERIES_TERMS = 15


def sinc(x):
    """sin(x)/x with the removable singularity filled in."""
    return np.sinc(np.asarray(x) / np.pi)


def definite_sin(a, t0, t1):
    """Integral of sin(a t) over [t0, t1]; `a` may be an array."""
    d = t1 - t0
    return d * sinc(a * d / 2.0) * np.sin(a * (t0 + t1) / 2.0)


def definite_cos(a, t0, t1):
    """Integral of cos(a t) over [t0, t1]; `a` may be an array."""
    d = t1 - t0
    return d * sinc(a * d / 2.0) * np.cos(a * (t0 + t1) / 2.0)


def poly_exp_moments(n_max, z):
    """m_n(z) = integral of v^n e^{z v} over [0, 1] for n = 0..n_max.

    Taylor series for small |z|; upward recurrence otherwise (stable there
    because the n/|z| amplification stays below one for the orders used).
    """
    out = np.empty(n_max + 1, dtype=complex)
    if abs(z) <= 4.0:
        ks = np.arange(1, 40)
        powers = np.concatenate(([1.0 + 0j], np.cumprod(z / ks)))
        orders = np.arange(40)
        for n in range(n_max + 1):
            out[n] = np.sum(powers / (orders + n + 1))
    else:
        ez = np.exp(z)
        out[0] = (ez - 1.0) / z
        for n in range(1, n_max + 1):
            out[n] = (ez - n * out[n - 1]) / z
    return out


def triangle_exp(p, q, t0, t1):
    """Integral of exp(i(p t2 + q t1')) over t0 <= t1' <= t2 <= t1."""
    d = t1 - t0
    if abs(q * d) >= _SERIES_SWITCH:
        f_pq = d * np.exp(1j * (p + q) * (t0 + t1) / 2.0) * sinc((p + q) * d / 2.0)
        f_p = d * np.exp(1j * p * (t0 + t1) / 2.0) * sinc(p * d / 2.0)
        return (f_pq - np.exp(1j * q * t0) * f_p) / (1j * q)
    moments = poly_exp_moments(_SERIES_TERMS + 1, 1j * p * d)
    total = 0.0 + 0.0j
    iq_pow = 1.0 + 0.0j
    d_pow = d * d
    for n in range(_SERIES_TERMS):
        total += iq_pow * d_pow * moments[n + 1] / math.factorial(n + 1)
        iq_pow *= 1j * q
        d_pow *= d
    return np.exp(1j * (p + q) * t0) * total


def triangle_sin(p, q, t0, t1):
    """Integral of sin(p t2 + q t1') over t0 <= t1' <= t2 <= t1."""
    return triangle_exp(p, q, t0, t1).imag


def _x_minus_sin_over_x2(x):
    if abs(x) < 1e-2:
        x2 = x * x
        return x / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    return (x - math.sin(x)) / (x * x)


def triangle_sin_flat(delta, t0, t1):
    """Triangle integral of sin(delta (t2 - t1)) with a flat window."""
    d = t1 - t0
    return d * d * _x_minus_sin_over_x2(delta * d)


def triangle_sin_windowed(delta, omega, cos_sign, t0, t1):
    """Triangle integral of w(t2) w(t1) sin(delta (t2 - t1)) for the
    raised-cosine window w(t) = (1 - cos_sign * cos(omega t)) / 2."""
    d, w, c = delta, omega, cos_sign
    total = 0.25 * triangle_sin(d, -d, t0, t1)
    total -= (c / 8.0) * (
        triangle_sin(d + w, -d, t0, t1)
        + triangle_sin(d - w, -d, t0, t1)
        + triangle_sin(d, w - d, t0, t1)
        + triangle_sin(d, -w - d, t0, t1)
    )
    total += (1.0 / 16.0) * (
        triangle_sin(d + w, w - d, t0, t1)
        + triangle_sin(d + w, -w - d, t0, t1)
        + triangle_sin(d - w, w - d, t0, t1)
        + triangle_sin(d - w, -w - d, t0, t1)
    )
    return total
