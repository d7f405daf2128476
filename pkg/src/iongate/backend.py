"""Selects the phase-evaluation backend at import time.

The compiled extension is used when importable; set IONGATE_DISABLE_EXTENSION
(any non-empty value) to force the NumPy fallback. Both backends implement
the contract documented in ``_phase_eval_np``.
"""

import os

from . import _phase_eval_np

if os.environ.get("IONGATE_DISABLE_EXTENSION"):
    _impl = _phase_eval_np
else:
    try:
        from . import _phase_eval_cy as _impl
    except ImportError:
        _impl = _phase_eval_np

eval_displacements = _impl.eval_displacements
eval_objective_and_gradient = _impl.eval_objective_and_gradient
eval_couplings = _impl.eval_couplings
eval_couplings_and_gradients = _impl.eval_couplings_and_gradients


def backend_name():
    """'cython' when the compiled extension is active, else 'numpy'."""
    return "cython" if _impl.__name__.endswith("_cy") else "numpy"


def available_backends():
    """Importable backend modules keyed by name (for tests and benchmarks)."""
    impls = {"numpy": _phase_eval_np}
    try:
        from . import _phase_eval_cy

        impls["cython"] = _phase_eval_cy
    except ImportError:
        pass
    return impls
