from .chaos import ChaosSettings, chaos_ratios, chaos_sum, chaos_term
from .config import SchemeParams, load_params, parse_key_values, params_from_mapping
from .frame import BridgeFrame, FrameSolve, frame_grid, scaled_h, unscaled_h
from .montecarlo import McEstimate, feynman_kac_mc
from .physical import PotentialSolveResult, gradient_h, h_value, solve_forward

__all__ = [
    "BridgeFrame", "ChaosSettings", "FrameSolve", "McEstimate", "PotentialSolveResult", "SchemeParams",
    "chaos_ratios", "chaos_sum", "chaos_term", "feynman_kac_mc", "frame_grid", "gradient_h", "h_value",
    "load_params", "params_from_mapping", "parse_key_values", "scaled_h", "solve_forward", "unscaled_h",
]
