"""Memory-based rating prediction from k-NN graphs of embedded review
sentences, with text-agnostic baselines and a ranking-aware evaluation."""

__version__ = "0.1.0"

from ._kernels import HAS_NUMBA, NUMBA_ENABLED

__all__ = ["HAS_NUMBA", "NUMBA_ENABLED", "__version__"]
