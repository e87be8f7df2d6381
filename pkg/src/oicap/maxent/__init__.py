"""Maximum-entropy solvers and the high-SNR exponents built on them."""

from .core import (
    AffineCost,
    DualPoint,
    FminCost,
    Interval,
    MaxEntSolution,
    MomentSpec,
    QuadratureRule,
    QuadratureSettings,
    StopLossCost,
    density_eval,
    dual_objective,
    epi_lower_bound,
    log_partition,
    moments,
    quadrature,
    sample_density,
    solve_gamma_star,
    truncexp_entropy,
)
from .oic import (
    bc_dual_value,
    bc_moment_spec,
    ec_moment_spec,
    gamma_B,
    gamma_E,
    signaling_map,
    signaling_tau,
)
