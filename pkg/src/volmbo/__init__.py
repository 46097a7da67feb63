"""Volume-constrained MBO graph clustering with exact order-statistic solvers."""
from ._jit import backend

__version__ = "0.1.0"
__all__ = ["backend", "__version__"]
