import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

# kernel_impl is stateless, so sharing it across generated inputs is fine
settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(params=["python", "cython"])
def kernel_impl(request):
    """Each kernel implementation in turn (the compiled one is skipped when not built)."""
    if request.param == "python":
        from geocad import _kernels_py as impl
    else:
        impl = pytest.importorskip("geocad._kernels")
    return impl
