"""Numerical toolkit for conservative flows at desk scale.

Exponent spectra via QR-renormalized tangent cocycles, the normal-bundle
cocycle and finite-time dominated splittings, suspension flows over discrete
bases, partition-refinement entropy estimates, entropy/exponent comparisons,
and 4D symplectic systems restricted to energy levels.
"""

from .dynamics import (
    BUILTIN_FIELDS,
    DEFAULT_INTEGRATOR,
    HAMILTONIAN_INTEGRATOR,
    CocycleSegment,
    Domain,
    IntegratorOptions,
    TrajectoryPoint,
    VectorField,
    builtin,
    flow,
    flow_batch,
    liouville_check,
    load_system,
    tangent_flow,
)
from .entropy import (
    EntropyEstimate,
    EntropyRunConfig,
    ExponentRunConfig,
    MapSystem,
    PartitionGrid,
    PesinReport,
    abramov_estimate,
    flow_entropy,
    map_system_from_base,
    pesin_report,
    refined_entropy,
    suspension_time_map,
    time_map,
)
from .errors import (
    AllSamplesRejected,
    CriticalLevel,
    DegenerateSplitting,
    DimensionMismatch,
    EmptyLevel,
    InsufficientSamples,
    NonFiniteState,
    NonPositiveCeiling,
    NotInvertible,
    NumericalError,
    PesinLabError,
    SingularPoint,
    StepUnderflow,
    UnknownSystem,
    ValidationError,
)
from .hamiltonian import (
    BUILTIN_HAMILTONIANS,
    EnergyLevelSample,
    HamiltonianSystem,
    LevelIntegral,
    builtin_hamiltonian,
    energy_capped_sampler,
    integrated_level_entropy,
    level_exponent,
    load_hamiltonian,
    polynomial_hamiltonian,
    sample_level,
    transversal_poincare,
)
from .lyapunov import (
    IntegratedExponent,
    LyapunovSpectrum,
    finite_n_estimator,
    integrated_exponent,
    pairing_check,
    spectrum,
)
from .poincare import (
    DominationReport,
    NormalFrame,
    PoincareCocycle,
    domination_check,
    linear_poincare,
    normal_frame,
    project_normal,
)
from .suspension import (
    BUILTIN_BASES,
    BaseSystem,
    Ceiling,
    ExpansivityReport,
    SuspensionPoint,
    SuspensionSystem,
    abramov_check,
    base_system,
    expansivity_probe,
    lift_measure_sample,
    parse_ceiling,
    suspend,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
