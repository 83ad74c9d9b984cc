"""Gap-tooth (patch dynamics) macroscale modelling of 1D lattice diffusion
with a periodically repeating rough diffusivity, together with the exact
complete-domain theory used to measure its accuracy."""

__version__ = "0.1.0"

from .lattice import (
    DiffusivityProfile,
    EnsembleConfigurationSet,
    MicroField,
    VariationProfile,
    bloch_matrix,
    char_poly_bruteforce,
    full_domain_simulate,
    make_ensemble,
    micro_rhs,
)
from .theory import (
    EmergentCoefficients,
    QuadraticCoefficientTable,
    SymbolValue,
    char_coeff,
    g0_small_eta,
    lambda0_quadratic,
    lambda0_series,
    quadratic_table,
)
from .patch import (
    CouplingSpec,
    MacroField,
    PatchEnsembleState,
    PatchGeometry,
    SlowMode,
    amplitude,
    conversion_series,
    coupling_targets,
    patch_rhs_reduced,
    run_patch_simulation,
    slow_eigenvalue,
)
from .analysis import (
    CoefficientExtraction,
    SweepRecord,
    delta_dk,
    extract_coefficients,
    extract_reference_coefficients,
    figure_data,
    sweep,
)

__all__ = [
    "__version__",
    "DiffusivityProfile",
    "VariationProfile",
    "MicroField",
    "EnsembleConfigurationSet",
    "micro_rhs",
    "make_ensemble",
    "full_domain_simulate",
    "bloch_matrix",
    "char_poly_bruteforce",
    "SymbolValue",
    "EmergentCoefficients",
    "QuadraticCoefficientTable",
    "char_coeff",
    "lambda0_quadratic",
    "lambda0_series",
    "quadratic_table",
    "g0_small_eta",
    "PatchGeometry",
    "CouplingSpec",
    "PatchEnsembleState",
    "MacroField",
    "SlowMode",
    "coupling_targets",
    "patch_rhs_reduced",
    "amplitude",
    "run_patch_simulation",
    "slow_eigenvalue",
    "conversion_series",
    "CoefficientExtraction",
    "SweepRecord",
    "extract_coefficients",
    "extract_reference_coefficients",
    "delta_dk",
    "sweep",
    "figure_data",
]
