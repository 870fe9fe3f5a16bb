import numpy as np
import pytest

from v2gcap import ScenarioConfig
from v2gcap.distributions import RandomStream


@pytest.fixture
def reference():
    return ScenarioConfig.reference()


@pytest.fixture
def stream():
    return RandomStream(12345, 0)


def numpy_stream(seed, stream_id):
    """Independent handle on the same PCG64 stream a RandomStream uses."""
    seq = np.random.SeedSequence(seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(seq))
