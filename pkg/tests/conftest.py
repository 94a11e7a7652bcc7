import numpy as np
import pytest

from projflat import MetricParams, NavigationBundle, SphereData

GENERAL = MetricParams(0.5, 2.0, -1.0, 0.3)
POLE_FINITE = MetricParams(0.37766389678624535, -1.3725055739643741, 1.7351940582063232, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def general_bundle():
    sphere = SphereData.from_delta(1.3, 0.3, 3, direction=(0.3, -0.2, 0.5, 0.4))
    return NavigationBundle.build(sphere, GENERAL)


@pytest.fixture(scope="session")
def square_bundles():
    out = {}
    for sign, eps in ((1, 2.0), (1, 0.0), (-1, 0.0)):
        sphere = SphereData.from_delta(1.0, 0.2, 2, direction=(0.6, 0.8, 0.0))
        out[(sign, eps)] = NavigationBundle.build(
            sphere, MetricParams(2.0 * sign, 0.0, -3.0 * sign, eps), "square")
    return out
