"""Certified guarantee regions for local surrogate explanations."""
from .anchor import AnchorNotFaithful, AnchorParams, AnchorRun, GuaranteeReport, explain, find_anchor
from .baselines import RadialRegion, fit_greedy_anchor, fit_radial
from .geometry import Box, intersect, log10_volume
from .kernels import BACKEND
from .maxbox import expand_box, find_max_box, search_max_box
from .oracle import (AdversarialFamily, ClassificationFaithfulness, ExternalOracle, FaithfulnessOracle,
                     HalfL1Ball, IntervalOracle, RegressionFaithfulness)
from .solver import TestScheduler, solve_restricted

__all__ = [
    "AdversarialFamily", "AnchorNotFaithful", "AnchorParams", "AnchorRun", "BACKEND", "Box",
    "ClassificationFaithfulness", "ExternalOracle", "FaithfulnessOracle", "GuaranteeReport",
    "HalfL1Ball", "IntervalOracle", "RadialRegion", "RegressionFaithfulness", "TestScheduler",
    "expand_box", "explain", "find_anchor", "find_max_box", "fit_greedy_anchor", "fit_radial",
    "intersect", "log10_volume", "search_max_box", "solve_restricted",
]
