import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def cnoise(rng, n, dtype=np.complex128):
    return ((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)).astype(dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    """A tiny desk dataset shared by dataset/cli/train tests."""
    from dronerf import dataset

    counts = {c: 26 for c in dataset.CLASSES}
    counts["Noise"] = 52
    return dataset.build_dataset(dataset.DatasetConfig(counts=counts, seed=7))
