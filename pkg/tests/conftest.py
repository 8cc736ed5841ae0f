import pytest

from pactkit import kernels


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    # JIT-compile every kernel once so timed tests measure compute, not compilation
    kernels.warm_up()
