"""
Global solvability of D_t + c(t, D_x) on the torus at a finite frequency cutoff.

Modules
-------
spectral        grids, frequency boxes, FFT primitives, decay fits
symbol          tube-type symbols and per-frequency profiles
conditions      diophantine margins, (alpha)/(beta) constants, verdict
homogeneous     sign-change and sublevel tests for homogeneous symbols
solver          per-mode and global solution of P u = f
counterexample  forged right-hand sides witnessing non-solvability
io, config, cli files, configuration and the command line
"""

from .conditions import (
    Verdict,
    aggregate,
    alpha_star,
    beta_star,
    check_conditions,
    dio_fit,
    dio_margin,
    oscillation_constants,
)
from .counterexample import NoWitnessError, bump, forge_alpha, forge_beta, forge_dc, verify_forged
from .homogeneous import connected_all, corollary_verdict, perturbed_principal_check, sign_change, sublevel_components
from .solver import (
    ClosureError,
    LogComplex,
    apply_P,
    closure_membership,
    compat_integral,
    solve_global,
    solve_mode_nonresonant,
    solve_mode_resonant,
)
from .spectral import (
    CircleGrid,
    FourierField,
    FrequencyBox,
    ResolutionError,
    analyze,
    decay_fit,
    spectral_primitive,
    synthesize,
)
from .symbol import (
    ConstantSymbol,
    HomogeneousPlusLower,
    HomogeneousSymbol,
    ModeProfile,
    SeparableSymbol,
    TabulatedSymbol,
    evaluate,
    mode_profile,
    resonance_test,
)

__version__ = "0.1.0"

__all__ = [
    "CircleGrid",
    "ClosureError",
    "ConstantSymbol",
    "FourierField",
    "FrequencyBox",
    "HomogeneousPlusLower",
    "HomogeneousSymbol",
    "LogComplex",
    "ModeProfile",
    "NoWitnessError",
    "ResolutionError",
    "SeparableSymbol",
    "TabulatedSymbol",
    "Verdict",
    "aggregate",
    "alpha_star",
    "analyze",
    "apply_P",
    "beta_star",
    "bump",
    "check_conditions",
    "closure_membership",
    "compat_integral",
    "connected_all",
    "corollary_verdict",
    "decay_fit",
    "dio_fit",
    "dio_margin",
    "evaluate",
    "forge_alpha",
    "forge_beta",
    "forge_dc",
    "mode_profile",
    "oscillation_constants",
    "perturbed_principal_check",
    "resonance_test",
    "sign_change",
    "solve_global",
    "solve_mode_nonresonant",
    "solve_mode_resonant",
    "spectral_primitive",
    "sublevel_components",
    "synthesize",
    "verify_forged",
]
