"""Discretely phase-modulated, amplitude-shaped drive schemes and the
constraint quantities they generate: segment kernels, scaled residual
displacements, scaled pair couplings, and time-resolved trajectories.

Conventions: angular frequencies (rad/s), times (s). The drive on ion j is
Omega_j(t) = peak_amplitudes[j] * w(t) with phase phases[j, k] held constant
on segment k; w(t) ramps with a sin^2 profile over the first and last
segment. Kernel integrals are evaluated in closed form (see ``integrals``);
adaptive quadrature serves as the test oracle only.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .integrals import (
    definite_cos,
    definite_sin,
    triangle_sin_flat,
    triangle_sin_windowed,
)
from .constants import TWO_PI


def wrap_phase(phi):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(phi, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class PulseScheme:
    """A synthesized (or externally supplied) drive scheme.

    phases: (n_ions, n_segments) rad, stored wrapped to (-pi, pi].
    peak_amplitudes: signed peak Rabi frequencies (rad/s) per ion.
    """

    detuning: float
    gate_time: float
    phases: np.ndarray
    peak_amplitudes: np.ndarray
    comment: str = ""

    def __post_init__(self):
        phases = wrap_phase(np.atleast_2d(np.asarray(self.phases, dtype=float)))
        amps = np.atleast_1d(np.asarray(self.peak_amplitudes, dtype=float))
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "peak_amplitudes", amps)
        if self.gate_time <= 0:
            raise ValueError("gate_time must be positive")
        if phases.ndim != 2 or phases.shape[1] < 1:
            raise ValueError("phases must be (n_ions, n_segments) with K >= 1")
        if amps.shape != (phases.shape[0],):
            raise ValueError("need one peak amplitude per ion")
        if not (np.all(np.isfinite(phases)) and np.all(np.isfinite(amps))):
            raise ValueError("phases and amplitudes must be finite")

    @property
    def n_ions(self):
        return self.phases.shape[0]

    @property
    def n_segments(self):
        return self.phases.shape[1]

    @property
    def segment_duration(self):
        return self.gate_time / self.n_segments

    def with_amplitudes(self, peak_amplitudes):
        return PulseScheme(
            detuning=self.detuning,
            gate_time=self.gate_time,
            phases=self.phases,
            peak_amplitudes=np.asarray(peak_amplitudes, dtype=float),
            comment=self.comment,
        )

    def subset(self, keep):
        """Zero the drive on every ion not listed in ``keep`` (0-based)."""
        keep = np.asarray(keep, dtype=int)
        if keep.size and (keep.min() < 0 or keep.max() >= self.n_ions):
            raise ValueError("subset indices out of range")
        amps = np.zeros_like(self.peak_amplitudes)
        amps[keep] = self.peak_amplitudes[keep]
        return self.with_amplitudes(amps)

    def to_json_dict(self):
        return {
            "detuning_hz": self.detuning / TWO_PI,
            "gate_time_s": self.gate_time,
            "n_segments": self.n_segments,
            "phases_pi": (self.phases / np.pi).tolist(),
            "peak_amplitudes_hz": (self.peak_amplitudes / TWO_PI).tolist(),
            "comment": self.comment,
        }

    def dumps(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, obj):
        phases_pi = np.asarray(obj["phases_pi"], dtype=float)
        if phases_pi.ndim != 2 or phases_pi.shape[1] != int(obj["n_segments"]):
            raise ValueError("phases_pi must be (n_ions, n_segments)")
        return cls(
            detuning=TWO_PI * float(obj["detuning_hz"]),
            gate_time=float(obj["gate_time_s"]),
            phases=np.pi * phases_pi,
            peak_amplitudes=TWO_PI * np.asarray(obj["peak_amplitudes_hz"], dtype=float),
            comment=str(obj.get("comment", "")),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def window_value(t, tau, tau_s):
    """Amplitude-shaping window: sin^2 ramps over the first and last
    segment, unity in between."""
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-15) or np.any(t > tau + 1e-15):
        raise ValueError("time outside [0, gate_time]")
    rise = np.sin(np.pi * t / (2.0 * tau_s)) ** 2
    fall = np.sin(np.pi * (t - tau) / (2.0 * tau_s)) ** 2
    out = np.ones_like(t)
    out = np.where(t <= tau_s, rise, out)
    out = np.where(t >= tau - tau_s, fall, out)
    # overlapping ramps (single segment): the earlier branch wins up to the
    # midpoint so the window stays continuous and <= 1
    if tau_s * 2 > tau:
        out = np.where(t <= tau / 2, rise, fall)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ShapingWindow:
    """Callable form of the amplitude-shaping window."""

    gate_time: float
    segment_duration: float

    def __call__(self, t):
        return window_value(t, self.gate_time, self.segment_duration)


def _edge_pieces(k, n_segments, tau):
    """Raised-cosine pieces [(cos_sign, t0, t1), ...] covering segment k.

    The window on an edge segment is (1 - c cos(omega t)) / 2 with
    omega = pi / tau_s; interior segments return cos_sign 0. A single
    segment (K=1) is covered by a rising and a falling half.
    """
    tau_s = tau / n_segments
    t0, t1 = k * tau_s, (k + 1) * tau_s
    if n_segments == 1:
        return [(1.0, 0.0, tau / 2.0), ((-1.0) ** n_segments, tau / 2.0, tau)]
    if k == 0:
        return [(1.0, t0, t1)]
    if k == n_segments - 1:
        return [((-1.0) ** n_segments, t0, t1)]
    return [(0.0, t0, t1)]


def _piece_sc(delta, omega, cos_sign, t0, t1):
    """(int w sin(delta t), int w cos(delta t)) over one window piece."""
    if cos_sign == 0.0:
        return definite_sin(delta, t0, t1), definite_cos(delta, t0, t1)
    s = 0.5 * definite_sin(delta, t0, t1) - (cos_sign / 4.0) * (
        definite_sin(delta + omega, t0, t1) + definite_sin(delta - omega, t0, t1)
    )
    c = 0.5 * definite_cos(delta, t0, t1) - (cos_sign / 4.0) * (
        definite_cos(delta + omega, t0, t1) + definite_cos(delta - omega, t0, t1)
    )
    return s, c


def segment_sc(delta, k, n_segments, tau, t_upper=None):
    """Windowed segment integrals (S, C) = (int w sin(delta t), int w cos)
    over segment k, optionally truncated at ``t_upper``."""
    omega = np.pi * n_segments / tau
    s_total = 0.0
    c_total = 0.0
    for cos_sign, t0, t1 in _edge_pieces(k, n_segments, tau):
        if t_upper is not None:
            if t_upper <= t0:
                continue
            t1 = min(t1, t_upper)
        s, c = _piece_sc(delta, omega, cos_sign, t0, t1)
        s_total += s
        c_total += c
    return s_total, c_total


def segment_triangle_sin(delta, k, n_segments, tau, t_upper=None):
    """Triangle integral of w(t2) w(t1) sin(delta (t2 - t1)) over segment k
    (t1 < t2 both inside the segment), optionally truncated at ``t_upper``."""
    omega = np.pi * n_segments / tau
    total = 0.0
    done = []  # earlier pieces feed cross terms when a segment is split
    for cos_sign, t0, t1 in _edge_pieces(k, n_segments, tau):
        if t_upper is not None:
            if t_upper <= t0:
                break
            t1 = min(t1, t_upper)
        if cos_sign == 0.0:
            total += triangle_sin_flat(delta, t0, t1)
        else:
            total += triangle_sin_windowed(delta, omega, cos_sign, t0, t1)
        s_up, c_up = _piece_sc(delta, omega, cos_sign, t0, t1)
        for s_lo, c_lo in done:
            total += s_up * c_lo - c_up * s_lo
        done.append((s_up, c_up))
    return total


@dataclass(frozen=True)
class SchemeKernels:
    """Precomputed constraint kernels for one (modes, scheme) pair.

    ts/tc: (n_modes, K) first-order segment integrals.
    gs/gc: (n_pairs, K, K) lower-triangular second-order kernels, with the
    Lamb-Dicke pair weights folded in. pairs lists (j, j') with j < j'.
    """

    ts: np.ndarray
    tc: np.ndarray
    gs: np.ndarray
    gc: np.ndarray
    pairs: np.ndarray
    segment_duration: float

    @property
    def n_modes(self):
        return self.ts.shape[0]

    @property
    def n_segments(self):
        return self.ts.shape[1]


def ts_tc_kernels(modes, scheme):
    """First-order kernels (ts, tc), each (n_modes, K)."""
    K = scheme.n_segments
    tau = scheme.gate_time
    ts = np.empty((modes.n_modes, K))
    tc = np.empty((modes.n_modes, K))
    for m, nu in enumerate(modes.frequencies):
        delta = nu - scheme.detuning
        for k in range(K):
            s, c = segment_sc(delta, k, K, tau)
            ts[m, k] = s
            tc[m, k] = -c
    return ts, tc


def _base_blocks(delta, n_segments, tau):
    """Per-mode lower-triangular (sin, cos) double-integral blocks."""
    K = n_segments
    ss = np.zeros((K, K))
    cc = np.zeros((K, K))
    S = np.empty(K)
    C = np.empty(K)
    for k in range(K):
        S[k], C[k] = segment_sc(delta, k, K, tau)
    for k in range(K):
        for l in range(k):
            ss[k, l] = S[k] * C[l] - C[k] * S[l]
            cc[k, l] = C[k] * C[l] + S[k] * S[l]
        ss[k, k] = segment_triangle_sin(delta, k, K, tau)
        cc[k, k] = 0.5 * (S[k] ** 2 + C[k] ** 2)
    return ss, cc


def gs_gc_kernels(eta, modes, scheme):
    """Second-order pair kernels (gs, gc, pairs); gs/gc are (P, K, K)."""
    eta_mat = np.asarray(getattr(eta, "eta", eta), dtype=float)
    n = scheme.n_ions
    K = scheme.n_segments
    blocks_s = np.empty((modes.n_modes, K, K))
    blocks_c = np.empty((modes.n_modes, K, K))
    for m, nu in enumerate(modes.frequencies):
        blocks_s[m], blocks_c[m] = _base_blocks(nu - scheme.detuning, K, scheme.gate_time)
    pairs = np.array(
        [(j, jp) for j in range(n) for jp in range(j + 1, n)], dtype=np.intp
    ).reshape(-1, 2)
    weights = eta_mat[pairs[:, 0]] * eta_mat[pairs[:, 1]] if len(pairs) else np.zeros((0, modes.n_modes))
    gs = -0.5 * np.tensordot(weights, blocks_s, axes=1)
    gc = -0.5 * np.tensordot(weights, blocks_c, axes=1)
    return gs, gc, pairs


def build_kernels(eta, modes, scheme):
    """All kernels for a scheme against a mode structure."""
    ts, tc = ts_tc_kernels(modes, scheme)
    gs, gc, pairs = gs_gc_kernels(eta, modes, scheme)
    return SchemeKernels(
        ts=ts, tc=tc, gs=np.ascontiguousarray(gs), gc=np.ascontiguousarray(gc),
        pairs=pairs, segment_duration=scheme.segment_duration,
    )


def scaled_displacements(kernels, scheme):
    """Scaled residual displacements d[j, m] (units of time); the physical
    displacement is alpha[j, m] = eta[j, m] * Omega_j * d[j, m] / 2."""
    return backend.eval_displacements(
        np.ascontiguousarray(scheme.phases), kernels.ts, kernels.tc
    )


def scaled_couplings(kernels, scheme):
    """Scaled couplings g as a symmetric (N, N) matrix with zero diagonal;
    theta[j, j'] = Omega_j * Omega_j' * g[j, j']."""
    flat = backend.eval_couplings(
        np.ascontiguousarray(scheme.phases), kernels.gs, kernels.gc, kernels.pairs
    )
    n = scheme.n_ions
    g = np.zeros((n, n))
    for (j, jp), val in zip(kernels.pairs, flat):
        g[j, jp] = g[jp, j] = val
    return g


def coupling_matrix(kernels, scheme):
    """Accumulated pair couplings theta[j, j'] (rad) at the gate time."""
    g = scaled_couplings(kernels, scheme)
    return np.outer(scheme.peak_amplitudes, scheme.peak_amplitudes) * g


def final_displacements(eta, kernels, scheme):
    """Physical residual displacements alpha[j, m] at the gate time."""
    eta_mat = np.asarray(getattr(eta, "eta", eta), dtype=float)
    d = scaled_displacements(kernels, scheme)
    return 0.5 * eta_mat * scheme.peak_amplitudes[:, None] * d


@dataclass(frozen=True)
class Trajectories:
    """Sampled phase-space and coupling accumulation curves."""

    times: np.ndarray
    alpha: np.ndarray  # (T, N, M) complex
    theta: np.ndarray  # (T, N, N) rad


def trajectory_samples(eta, modes, scheme, n_samples=16):
    """Time-resolved alpha[j, m](t) and theta[j, j'](t), sampled on a
    segment-aligned uniform grid with ``n_samples`` points per segment."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    eta_mat = np.asarray(getattr(eta, "eta", eta), dtype=float)
    n = scheme.n_ions
    K = scheme.n_segments
    tau = scheme.gate_time
    tau_s = scheme.segment_duration
    M = modes.n_modes
    deltas = modes.frequencies - scheme.detuning
    amps = scheme.peak_amplitudes
    phases = np.ascontiguousarray(scheme.phases)

    # full-segment (S, C) per mode
    S_full = np.empty((M, K))
    C_full = np.empty((M, K))
    tri_full = np.empty((M, K))
    for m in range(M):
        for k in range(K):
            S_full[m, k], C_full[m, k] = segment_sc(deltas[m], k, K, tau)
            tri_full[m, k] = segment_triangle_sin(deltas[m], k, K, tau)

    pairs = np.array(
        [(j, jp) for j in range(n) for jp in range(j + 1, n)], dtype=np.intp
    ).reshape(-1, 2)
    weights = eta_mat[pairs[:, 0]] * eta_mat[pairs[:, 1]] if len(pairs) else np.zeros((0, M))

    times = [0.0]
    for k in range(K):
        for i in range(1, n_samples + 1):
            times.append((k + i / n_samples) * tau_s)
    times = np.asarray(times)

    alpha = np.zeros((times.size, n, M), dtype=complex)
    theta = np.zeros((times.size, n, n))

    ts_part = np.zeros((M, K))
    tc_part = np.zeros((M, K))
    ss = np.zeros((M, K, K))
    cc = np.zeros((M, K, K))
    for it, t in enumerate(times):
        if t == 0.0:
            continue
        k_cur = min(int(np.floor(t / tau_s - 1e-12)), K - 1)
        ts_part[:] = 0.0
        tc_part[:] = 0.0
        ss[:] = 0.0
        cc[:] = 0.0
        for m in range(M):
            Sp = S_full[m].copy()
            Cp = C_full[m].copy()
            Sp[k_cur + 1 :] = 0.0
            Cp[k_cur + 1 :] = 0.0
            full_cur = abs(t - (k_cur + 1) * tau_s) < 1e-12 * tau
            if not full_cur:
                Sp[k_cur], Cp[k_cur] = segment_sc(deltas[m], k_cur, K, tau, t_upper=t)
            ts_part[m] = Sp
            tc_part[m] = -Cp
            for k in range(k_cur + 1):
                for l in range(k):
                    ss[m, k, l] = Sp[k] * Cp[l] - Cp[k] * Sp[l]
                    cc[m, k, l] = Cp[k] * Cp[l] + Sp[k] * Sp[l]
                if k < k_cur or full_cur:
                    ss[m, k, k] = tri_full[m, k]
                else:
                    ss[m, k, k] = segment_triangle_sin(deltas[m], k, K, tau, t_upper=t)
                cc[m, k, k] = 0.5 * (Sp[k] ** 2 + Cp[k] ** 2)
        d = backend.eval_displacements(phases, ts_part, tc_part)
        alpha[it] = 0.5 * eta_mat * amps[:, None] * d
        if len(pairs):
            gs = np.ascontiguousarray(-0.5 * np.tensordot(weights, ss, axes=1))
            gc = np.ascontiguousarray(-0.5 * np.tensordot(weights, cc, axes=1))
            g = backend.eval_couplings(phases, gs, gc, pairs)
            for p, (j, jp) in enumerate(pairs):
                theta[it, j, jp] = theta[it, jp, j] = amps[j] * amps[jp] * g[p]
    return Trajectories(times=times, alpha=alpha, theta=theta)


@dataclass(frozen=True)
class SchemeDiagnostics:
    """Verification report for a pulse scheme against a mode structure."""

    scaled_d: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    trajectories: Trajectories
    target_coupling: float = np.pi / 4
    max_displacement: float = field(init=False, default=0.0)
    max_coupling_deviation: float = field(init=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "max_displacement", float(np.max(np.abs(self.alpha), initial=0.0)))
        n = self.theta.shape[0]
        if n > 1:
            mask = ~np.eye(n, dtype=bool)
            dev = np.max(np.abs(self.theta[mask] - self.target_coupling))
            object.__setattr__(self, "max_coupling_deviation", float(dev / abs(self.target_coupling)))


def diagnose(scheme, eta, modes, n_samples=16, target_coupling=np.pi / 4):
    """Recompute every constraint quantity for a scheme from scratch."""
    kernels = build_kernels(eta, modes, scheme)
    traj = trajectory_samples(eta, modes, scheme, n_samples=n_samples)
    return SchemeDiagnostics(
        scaled_d=scaled_displacements(kernels, scheme),
        alpha=final_displacements(eta, kernels, scheme),
        theta=coupling_matrix(kernels, scheme),
        trajectories=traj,
        target_coupling=target_coupling,
    )
