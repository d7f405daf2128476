"""Linear-chain mechanics: equilibrium positions, transverse normal modes,
Lamb-Dicke parameters, and trap-parameter fitting from measured spectra.

Internally the chain problem is solved in dimensionless units (lengths in
units of the Coulomb length scale, frequencies in units of the axial
frequency); SI values only appear at the module boundary.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .constants import (
    ELEMENTARY_CHARGE,
    EPSILON_0,
    HBAR,
    RAMAN_WAVELENGTH,
    TWO_PI,
    YB171_MASS,
)


class ChainError(Exception):
    """Base class for chain-physics failures."""


class EquilibriumError(ChainError):
    """Equilibrium root solve did not converge."""

    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"equilibrium solve stalled at force residual {residual:.3e}")


class UnstableChainError(ChainError):
    """Linear configuration is not a local minimum of the potential."""

    def __init__(self, mode_index, eigenvalue):
        self.mode_index = mode_index
        self.eigenvalue = eigenvalue
        super().__init__(
            f"transverse mode {mode_index} has non-positive squared frequency "
            f"({eigenvalue:.3e} in axial units); linear chain is unstable "
            f"(zig-zag threshold exceeded)"
        )


class TrapFitError(ChainError):
    """Trap-frequency fit residual exceeds the requested tolerance."""

    def __init__(self, rms_residual, tolerance):
        self.rms_residual = rms_residual
        self.tolerance = tolerance
        super().__init__(
            f"mode-spectrum fit RMS residual {rms_residual:.3e} rad/s exceeds "
            f"tolerance {tolerance:.3e} rad/s"
        )


@dataclass(frozen=True)
class TrapConfig:
    """Static trap and laser parameters for a single-species linear chain.

    Frequencies are angular (rad/s); the transverse frequency is the
    single-ion secular frequency along the drive direction.
    """

    n_ions: int
    axial_freq: float
    transverse_freq: float
    ion_mass: float = YB171_MASS
    raman_wavelength: float = RAMAN_WAVELENGTH

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        for name in ("axial_freq", "transverse_freq", "ion_mass", "raman_wavelength"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def length_scale(self):
        """Coulomb length scale (e^2 / (4 pi eps0 M nu_ax^2))^(1/3) in meters."""
        return (
            ELEMENTARY_CHARGE**2
            / (4 * np.pi * EPSILON_0 * self.ion_mass * self.axial_freq**2)
        ) ** (1.0 / 3.0)


@dataclass(frozen=True)
class NormalModeData:
    """Transverse normal modes: frequencies (descending, rad/s) and the
    participation matrix b[j, m] (ion j, mode m; columns orthonormal)."""

    frequencies: np.ndarray
    participation: np.ndarray

    def __post_init__(self):
        freq = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        part = np.atleast_2d(np.asarray(self.participation, dtype=float))
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "participation", part)
        if freq.ndim != 1 or part.shape[1] != freq.size:
            raise ValueError("participation must be (n_ions, n_modes)")
        if np.any(np.diff(freq) > 0):
            raise ValueError("mode frequencies must be sorted descending")

    @property
    def n_ions(self):
        return self.participation.shape[0]

    @property
    def n_modes(self):
        return self.frequencies.size


@dataclass(frozen=True)
class LambDickeMatrix:
    """Dimensionless spin-motion coupling eta[j, m] per ion and mode."""

    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.atleast_2d(np.asarray(self.eta, dtype=float)))


@dataclass(frozen=True)
class TrapFitResult:
    """Outcome of a mode-spectrum fit."""

    config: TrapConfig
    rms_residual: float
    measured: np.ndarray = field(repr=False)


def _scaled_equilibrium(n):
    """Equilibrium positions in Coulomb-length units, antisymmetric ascending."""
    if n == 1:
        return np.zeros(1)
    u = np.linspace(-0.63, 0.63, n) * max(n - 1, 1) ** 0.56

    def force(u):
        d = u[:, None] - u[None, :]
        np.fill_diagonal(d, np.inf)
        return u - np.sum(np.sign(d) / d**2, axis=1)

    def jacobian(u):
        d = u[:, None] - u[None, :]
        np.fill_diagonal(d, np.inf)
        inv3 = np.abs(d) ** -3
        J = -2.0 * inv3
        np.fill_diagonal(J, 1.0 + 2.0 * np.sum(inv3, axis=1))
        return J

    converged = False
    for _ in range(200):
        f = force(u)
        if np.max(np.abs(f)) < 1e-13:
            converged = True
            break
        step = np.linalg.solve(jacobian(u), f)
        # damping keeps the ordering intact for large n
        scale = 1.0
        while np.any(np.diff(u - scale * step) <= 0):
            scale *= 0.5
            if scale < 1e-6:
                break
        u = u - scale * step

    if not converged:
        # fall back to direct potential minimization, then polish
        def potential(u):
            d = np.abs(u[:, None] - u[None, :])
            np.fill_diagonal(d, np.inf)
            return 0.5 * np.sum(u**2) + 0.5 * np.sum(1.0 / d)

        res = minimize(potential, u, method="Nelder-Mead", options={"maxiter": 20000})
        u = np.sort(res.x)
        for _ in range(100):
            f = force(u)
            if np.max(np.abs(f)) < 1e-13:
                converged = True
                break
            u = u - np.linalg.solve(jacobian(u), f)

    u = (u - u[::-1]) / 2.0  # exact antisymmetry
    residual = np.max(np.abs(force(u)))
    if residual > 1e-12:
        raise EquilibriumError(residual)
    return u


def equilibrium_positions(cfg):
    """Axial equilibrium positions in meters, sorted ascending."""
    return _scaled_equilibrium(cfg.n_ions) * cfg.length_scale


def _transverse_matrix(u, anisotropy_sq):
    """Transverse Hessian in units of the squared axial frequency."""
    n = u.size
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = d**-3
    A = inv3.copy()
    np.fill_diagonal(A, anisotropy_sq - np.sum(inv3, axis=1))
    return A


def _normalize_mode_signs(b):
    for m in range(b.shape[1]):
        col = b[:, m]
        lead = np.flatnonzero(np.abs(col) > 1e-12)
        if lead.size and col[lead[0]] < 0:
            b[:, m] = -col
    return b


def transverse_normal_modes(cfg):
    """Transverse mode frequencies and participation matrix of the chain."""
    u = _scaled_equilibrium(cfg.n_ions)
    A = _transverse_matrix(u, (cfg.transverse_freq / cfg.axial_freq) ** 2)
    lam, vecs = np.linalg.eigh(A)
    lam, vecs = lam[::-1], vecs[:, ::-1]
    bad = np.flatnonzero(lam <= 0)
    if bad.size:
        raise UnstableChainError(int(bad[0]) + 1, float(lam[bad[0]]))
    b = _normalize_mode_signs(vecs.copy())
    return NormalModeData(frequencies=cfg.axial_freq * np.sqrt(lam), participation=b)


def modes_with_measured_frequencies(cfg, measured):
    """Normal-mode data using measured frequencies with the model's
    participation matrix.

    Measured spectra are far more precise than a two-parameter trap model
    reproduces, and the constraint integrals are strongly sensitive to the
    frequencies near the drive detuning, so verification against external
    pulse schemes substitutes the measured values for the model ones.
    """
    measured = np.asarray(measured, dtype=float)
    model = transverse_normal_modes(cfg)
    if measured.size != model.n_modes:
        raise ValueError("need one measured frequency per mode")
    return NormalModeData(frequencies=measured, participation=model.participation)


def lamb_dicke_parameters(modes, cfg):
    """Lamb-Dicke matrix eta[j, m] for perpendicular Raman beams."""
    wavevector = 2.0 * np.sqrt(2.0) * np.pi / cfg.raman_wavelength
    zero_point = np.sqrt(HBAR / (2.0 * cfg.ion_mass * modes.frequencies))
    return LambDickeMatrix(eta=modes.participation * wavevector * zero_point[None, :])


def fit_trap_frequencies(measured, cfg_template, rms_tol=None):
    """Fit (axial, transverse) trap frequencies to a measured transverse
    spectrum (angular frequencies, descending).

    Returns a TrapFitResult; raises TrapFitError if ``rms_tol`` (rad/s)
    is given and exceeded.
    """
    measured = np.asarray(measured, dtype=float)
    n = cfg_template.n_ions
    if measured.size != n:
        raise ValueError(f"expected {n} measured frequencies, got {measured.size}")
    if np.any(np.diff(measured) > 0):
        raise ValueError("measured frequencies must be sorted descending")

    scale = measured[0]

    def residuals(p):
        cfg = replace(cfg_template, axial_freq=p[0] * scale, transverse_freq=p[1] * scale)
        try:
            model = transverse_normal_modes(cfg)
        except UnstableChainError:
            return np.full(n, 1e3)
        return (model.frequencies - measured) / scale

    spread = np.sqrt(max(measured[0] ** 2 - measured[-1] ** 2, (0.05 * scale) ** 2))
    best = None
    for ax0 in (0.5 * spread, spread, 0.25 * spread):
        sol = least_squares(
            residuals,
            np.array([ax0 / scale, 1.0]),
            bounds=([1e-4, 0.5], [2.0, 2.0]),
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
        )
        if best is None or sol.cost < best.cost:
            best = sol
    rms = scale * np.sqrt(np.mean(residuals(best.x) ** 2))
    if rms_tol is not None and rms > rms_tol:
        raise TrapFitError(rms, rms_tol)
    cfg = replace(
        cfg_template, axial_freq=best.x[0] * scale, transverse_freq=best.x[1] * scale
    )
    return TrapFitResult(config=cfg, rms_residual=float(rms), measured=measured)
