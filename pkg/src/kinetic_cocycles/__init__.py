"""Kinetic linear cocycles over suspension flows: propagation, Lyapunov
spectra, L^p distances and the perturbation that makes the spectrum simple."""

__version__ = "0.1.0"

from .baseflow import (
    GOLDEN,
    Arc,
    CircleRotation,
    FlowboxSpec,
    RoofFunction,
    Square,
    SuspensionFlow,
    SuspensionPoint,
    TorusCatMap,
    flow,
    itinerary,
    measure_of_flowbox,
    sample_mu,
)
from .cocycle import (
    Expression,
    GeneratorField,
    Kinetic,
    Rotation,
    Stretch,
    evaluate,
    liouville_logdet,
    lyapunov_spectrum,
    propagate,
    top_lyapunov,
)
from .errors import (
    AlignmentError,
    BudgetError,
    CocycleError,
    ConfigurationError,
    LookbackError,
    NumericalError,
    PipelineError,
    PropagationError,
)
from .lpmetric import LpConfig, sigma_hat_p, sigma_p, support_budget
from .mat2 import Mat2, Vec2, rotation_flow, solve_alignment_theta, stretch_flow
from .perturb import PerturbationPlan, build_A0, build_B, build_B0, run_pipeline, verify_splitting
