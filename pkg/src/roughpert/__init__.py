"""Perturbations of rough paths on time grids: truncated tensors, sewing,
the lift/development bijection and the perturbation X [+] H."""
from .analysis import (
    AffineControl,
    Control,
    PVarControl,
    RegularityWitness,
    SumControl,
    beta,
    gfact,
    neoclassical_check,
)
from .functional import GridFunctional, defect, is_multiplicative, signature
from .grid import TimeGrid
from .perturb import (
    AlmostHElement,
    HElement,
    IncrementPath,
    boxplus,
    boxplus_assoc_check,
    dev,
    h_membership,
    kernel_check,
    lift,
    odot,
)
from .scenario import Scenario, generate
from .sewing import ext, sew
from .tensor import DomainError, ShapeError, TruncatedTensor
from .verify import Report, verify_all, verify_sweep

__all__ = [
    "AffineControl", "AlmostHElement", "Control", "DomainError", "GridFunctional", "HElement",
    "IncrementPath", "PVarControl", "RegularityWitness", "Report", "Scenario", "ShapeError",
    "SumControl", "TimeGrid", "TruncatedTensor", "beta", "boxplus", "boxplus_assoc_check", "defect",
    "dev", "ext", "generate", "gfact", "h_membership", "is_multiplicative", "kernel_check", "lift",
    "neoclassical_check", "odot", "sew", "signature", "verify_all", "verify_sweep",
]
