import numpy as np
import pytest

from logtriage.nn import backend


def _backend_names():
    names = ["numpy"]
    if backend.numba_available():
        names.append("numba")
    return names


@pytest.fixture(params=_backend_names())
def nn_backend(request):
    """Run a test under each available kernel backend, restoring the default after."""
    previous = backend.backend_name()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
