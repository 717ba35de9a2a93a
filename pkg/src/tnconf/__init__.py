"""T_N configurations, the constraint set K_a and star certificates."""
from .certificate import (
    HARD_CASES,
    StarCertificate,
    case_certificate,
    certify_points,
    classify,
    enumerate_cases,
    hard_cases,
    restrict_upper,
    scalar_sum_identities,
    sign_pattern,
    star_direct,
    star_final,
    star_intermediate,
)
from .core import (
    SpectralParams,
    TnConfiguration,
    Tolerances,
    ValidationReport,
    characterization_residual,
    characterize,
    check_characterization,
    generate_random,
    k_coefficients,
    reconstruct,
    t_vectors,
    validate_tn,
)
from .errors import (
    AmbiguousSignError,
    ConsistencyError,
    FluxDomainError,
    GenerationError,
    InputError,
    PreconditionError,
    StructureError,
    TnError,
)
from .ka import ExpFlux, ShiftedPowerFlux, TabulatedFlux, flux_from_spec, inclusion_inequality, is_in_ka, lift
from .search import FreeTarget, KaTarget, SearchProblem, multi_start, residual

__version__ = "0.1.0"
