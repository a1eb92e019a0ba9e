"""Scale functions of spectrally negative Lévy processes and the dividend barrier problem."""

from .definetti import BarrierSolution, barrier_value, generator_apply, hjb_residual, solve
from .errors import LevyScaleError
from .gallery import GALLERY, build_model, gallery_model, load_model_file
from .levy_model import (
    AtomicJumps,
    LevyModel,
    NoJumps,
    PiecewiseExponentialDensity,
    PiecewisePowerDensity,
    drift_sign,
    ladder_exponent,
    phi_inverse,
    pi_tail,
    psi,
    upsilon_q,
    upsilon_tail,
)
from .scale_fn import ScaleGrid, compute_scale, evaluate, laplace_residual, recover_exponent
from .shape_analysis import (
    AStar,
    conjugate_tail,
    excursion_sup_tail,
    find_a_star,
    potential_density_check,
    shape_suite,
    smoothness_class,
)
from .simulation import SimEstimate, StrategySpec, compare_strategies, simulate_value

__all__ = [
    "AStar", "AtomicJumps", "BarrierSolution", "GALLERY", "LevyModel", "LevyScaleError", "NoJumps",
    "PiecewiseExponentialDensity", "PiecewisePowerDensity", "ScaleGrid", "SimEstimate", "StrategySpec",
    "barrier_value", "build_model", "compare_strategies", "compute_scale", "conjugate_tail", "drift_sign",
    "evaluate", "excursion_sup_tail", "find_a_star", "gallery_model", "generator_apply", "hjb_residual",
    "ladder_exponent", "laplace_residual", "load_model_file", "phi_inverse", "pi_tail",
    "potential_density_check", "psi", "recover_exponent", "shape_suite", "simulate_value",
    "smoothness_class", "solve", "upsilon_q", "upsilon_tail",
]
