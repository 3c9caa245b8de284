"""Forward-reflected-backward splitting for monotone inclusions.

``0 in A(x) + B(x)`` with ``A`` accessed through its resolvent and ``B``
through forward evaluations. Submodules:

operators
    resolvent and forward oracles, the prox gallery, product-space helpers
splitting
    FoRB and its variants, baseline methods, step-size bounds
problems
    seeded test problems with certified reference solutions
diagnostics
    energy inequalities, empirical rates, the fixed-point form
cli
    JSON-driven experiment runner (``python -m monosplit``)
"""

from .diagnostics import (
    EnergyReport,
    RateEstimate,
    energy_forb,
    energy_strong,
    estimate_rate,
    fit_rate,
    fixed_point_form_check,
    inertial_lprime,
    lprime,
)
from .errors import (
    ConfigurationError,
    ConstructionError,
    DiagnosticUnavailable,
    FitError,
    MonosplitError,
    NonFiniteError,
    ParameterError,
    SamplingError,
    ShapeError,
)
from .operators import (
    Constants,
    ForwardOracle,
    ResolventOracle,
    SplitInclusion,
    estimate_lipschitz,
    natural_residual,
    product_space_embed,
    prox_gallery,
    saddle_operator,
    shifted_resolvent,
)
from .problems import (
    ProblemInstance,
    make_affine_vi,
    make_composite_min,
    make_rotation,
    make_saddle_bilinear,
    make_split_rotation,
    make_strongly_monotone,
    make_three_operator,
)
from .splitting import (
    LinesearchParams,
    SolverConfig,
    SolverRun,
    SplitMix64,
    StepPlan,
    max_stepsize,
    run_baseline,
    run_forb,
    run_forb3,
    run_forb_linesearch,
    run_relaxed_inertial,
    run_stochastic_forb,
)

__version__ = "0.1.0"
