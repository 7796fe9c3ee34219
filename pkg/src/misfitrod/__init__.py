"""Numerical laboratory for two-well elastic rods with interfacial misfit
dislocations: truncated two-well energies, curl-constrained minimization,
explicit competitor constructions, and the scaling experiments built on them.
"""

from .material import (
    ElasticModel,
    MismatchSpec,
    dist_to_rotation_well,
    energy_density,
    energy_density_gradient,
    mismatch_to_H,
)
from .geometry import (
    CrossSection,
    DislocationSpec,
    Grid,
    build_grid,
    burgers_circuit,
    linking_loop,
    rasterize_dislocation,
)
from .fields import (
    DisplacementField,
    RescaledField,
    StrainField,
    change_of_variables,
    rescale,
    strain,
)
from .solver import (
    EndClamp,
    MinimizationResult,
    SolverConfig,
    minimize,
    total_energy,
    total_gradient,
)
from .constructions import (
    QuadrantGlueSpec,
    RampSpec,
    RecoverySpec,
    glued_quadrant_field,
    mismatch_ramp,
    recovery_sequence,
    rotation_path,
)
from .experiments import (
    ExperimentRecord,
    GammaEstimate,
    crossover_sweep,
    gamma_convergence_trend,
    gamma_dislocated,
    gamma_elastic,
    rotation_invariance_check,
)
from .estimates import (
    ProbeReport,
    pointwise_equivalence_probe,
    poincare_probe,
    rigidity_ratio_probe,
)

__version__ = "0.1.0"
