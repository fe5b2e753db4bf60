import hypothesis
import pytest

from dyntop import sparse

# numba compilation on first use can blow the default deadline
hypothesis.settings.register_profile("dyntop", deadline=None)
hypothesis.settings.load_profile("dyntop")


@pytest.fixture(autouse=True)
def _reset_factor_counter():
    sparse.reset_factorization_count()
    yield
