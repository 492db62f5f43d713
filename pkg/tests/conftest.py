import pytest

from diverkit import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba lane once so timed tests measure the algorithm."""
    if kernels.HAS_NUMBA:
        kernels.warmup("numba")
