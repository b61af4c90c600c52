"""Kernel-based proximal causal learning for continuous treatments."""
from ._core import BACKEND
from .bridges import BridgeH, BridgeQ, MinimaxHyper, default_hyper, fit_h, fit_q, inner_max_value
from .dataset import Dataset
from .estimators import AteCurve, SmoothingConfig, bandwidth_rule, estimate_curve, pkdr, pkipw, por
from .policy import fit_kde_policy, fit_parametric_policy, reciprocal_density
from .scenarios import ScenarioSpec, apply_misspec, generate, ground_truth_mc

__version__ = "0.1.0"
