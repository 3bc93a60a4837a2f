"""Exact arithmetic for q-twisted differential calculus over truncated
coefficient rings, with verification pipelines exposed through a CLI."""

__version__ = "0.1.0"

from .base_ring import RingContext, WScalar, q_binomial, q_int, w_invert

__all__ = ["RingContext", "WScalar", "q_binomial", "q_int", "w_invert", "__version__"]
