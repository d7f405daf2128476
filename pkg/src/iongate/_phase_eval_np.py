"""NumPy implementation of the phase-evaluation kernels.

These four functions are the optimizer's inner loop; a Cython build of the
same contract lives in ``_phase_eval_cy`` and is preferred when available.
Shapes: phases (N, K); ts/tc (M, K); gs/gc (P, K, K) lower triangular;
pairs (P, 2) row indices with pairs[p, 0] < pairs[p, 1].
"""

import numpy as np


def eval_displacements(phases, ts, tc):
    """Scaled residual displacements d[j, m] (complex)."""
    x, y = np.cos(phases), np.sin(phases)
    real = x @ ts.T + y @ tc.T
    imag = x @ tc.T - y @ ts.T
    return real + 1j * imag


def eval_objective_and_gradient(phases, ts, tc):
    """Total squared displacement and its gradient w.r.t. every phase."""
    x, y = np.cos(phases), np.sin(phases)
    real = x @ ts.T + y @ tc.T
    imag = x @ tc.T - y @ ts.T
    value = float(np.sum(real * real + imag * imag))
    grad = 2.0 * (x * (real @ tc - imag @ ts) - y * (real @ ts + imag @ tc))
    return value, grad


def eval_couplings(phases, gs, gc, pairs):
    """Scaled coupling strengths g[p] for each ion pair."""
    x, y = np.cos(phases), np.sin(phases)
    out = np.empty(len(pairs))
    for p, (j, jp) in enumerate(pairs):
        a, b = gs[p], gc[p]
        out[p] = (
            x[j] @ a @ x[jp] + y[j] @ a @ y[jp] + x[j] @ b @ y[jp] - y[j] @ b @ x[jp]
        )
    return out


def eval_couplings_and_gradients(phases, gs, gc, pairs):
    """Couplings g[p] and gradients w.r.t. the two phase rows of each pair.

    Returns (g, dg) with dg[p, 0] = d g[p] / d phases[pairs[p, 0]] and
    dg[p, 1] the same for the second ion of the pair.
    """
    x, y = np.cos(phases), np.sin(phases)
    n_pairs = len(pairs)
    K = phases.shape[1]
    g = np.empty(n_pairs)
    dg = np.empty((n_pairs, 2, K))
    for p, (j, jp) in enumerate(pairs):
        a, b = gs[p], gc[p]
        axp, ayp = a @ x[jp], a @ y[jp]
        bxp, byp = b @ x[jp], b @ y[jp]
        atx, aty = a.T @ x[j], a.T @ y[j]
        btx, bty = b.T @ x[j], b.T @ y[j]
        g[p] = x[j] @ axp + y[j] @ ayp + x[j] @ byp - y[j] @ bxp
        dg[p, 0] = x[j] * (ayp - bxp) - y[j] * (axp + byp)
        dg[p, 1] = x[jp] * (aty + btx) + y[jp] * (bty - atx)
    return g, dg
