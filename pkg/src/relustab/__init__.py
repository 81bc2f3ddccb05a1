"""Numerical checks of smoothness failure for ReLU models and of a region-restricted
contraction criterion for the gradient-descent update map."""

from .model_core import DataPoint, Layout, ParamVector

__all__ = ["DataPoint", "Layout", "ParamVector"]
__version__ = "0.1.0"
