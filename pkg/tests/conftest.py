import pytest

from textknn import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so test timings measure algorithms,
    not JIT latency."""
    _kernels.warmup()
