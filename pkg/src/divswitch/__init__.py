"""Grid scheme for multidimensional optimal dividends with irreversible switching."""

from .grid import GridSpec, clamp_extrapolate, refine, snap_down, to_index, to_point
from .model import (
    ClaimModel,
    ClaimSource,
    ConstantPenalty,
    CustomObstacle,
    CustomPenalty,
    DeficitPenalty,
    Exponential,
    MergerObstacle,
    ModelSpec,
    NeverSwitch,
    PiecewiseEmpirical,
    SurvivorPenalty,
    ValueTable1D,
    ZeroPenalty,
    eval_R,
    eval_cdf,
    eval_obstacle,
    eval_penalty,
    growth_bound,
    total_intensity,
)
from .montecarlo import SimConfig, SimResult, sample_claim, simulate_policy
from .oned import build_merger_inputs, solve_1d
from .operators import (
    NO_ACTION,
    SWITCH,
    CoefficientTable,
    ValueField,
    apply_T,
    apply_T0,
    apply_Ti,
    apply_Ts,
    precompute_coeffs,
)
from .solver import (
    PolicyField,
    RefinementReport,
    SolveReport,
    extend_Vdelta,
    extract_policy,
    refinement_run,
    residual,
    value_iteration,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
