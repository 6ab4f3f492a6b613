import numpy as np
import pytest

from hawkes_dt import core


@pytest.fixture
def fig4():
    return core.fig4_params()


@pytest.fixture
def erlang_const():
    return core.erlang_params(2.0, 5.0, 3.0, 4.0, core.Constant(1.0))


@pytest.fixture(params=["exp", "erlang"])
def any_params(request):
    if request.param == "exp":
        return core.fig4_params()
    return core.erlang_params(2.0, 5.0, 3.0, 4.0, core.Constant(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
