"""Pulse-scheme synthesis and verification for global entangling gates on
linear ion chains: chain normal modes, discretely phase-modulated drive
schemes with closed-form constraint kernels, a multistart constrained
optimizer, and an exact spin-register gate simulator with GHZ analysis.
"""

from .backend import backend_name
from .chain import (
    LambDickeMatrix,
    NormalModeData,
    TrapConfig,
    TrapFitResult,
    equilibrium_positions,
    fit_trap_frequencies,
    lamb_dicke_parameters,
    modes_with_measured_frequencies,
    transverse_normal_modes,
)
from .optimizer import (
    AmplitudeSolution,
    SynthesisProblem,
    SynthesisResult,
    solve_amplitudes,
    solve_phases,
    synthesize,
)
from .scheme import (
    PulseScheme,
    SchemeDiagnostics,
    SchemeKernels,
    ShapingWindow,
    build_kernels,
    coupling_matrix,
    diagnose,
    final_displacements,
    scaled_couplings,
    scaled_displacements,
    trajectory_samples,
    window_value,
)
from .simulator import (
    GateResult,
    MotionalInit,
    ResidualDisplacementSet,
    evolve_ideal,
    evolve_with_residuals,
    ghz_fidelity,
    parity_scan,
    partial_trace,
    prepare_ghz,
)

__version__ = "0.1.0"
