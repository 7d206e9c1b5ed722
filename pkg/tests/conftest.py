import numpy as np
import pytest

from evkit.core import EventStream, SensorGeometry


def random_stream(rng: np.random.Generator, n: int, width: int = 640,
                  height: int = 480, t_max: int = 1_000_000) -> EventStream:
    """A canonical stream of n uniformly random events."""
    geometry = SensorGeometry(width=width, height=height)
    t = rng.integers(0, t_max, size=n, dtype=np.uint64)
    x = rng.integers(0, width, size=n, dtype=np.uint16)
    y = rng.integers(0, height, size=n, dtype=np.uint16)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    raw = EventStream(geometry, t, x, y, p, validate=False)
    return raw.sorted()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
