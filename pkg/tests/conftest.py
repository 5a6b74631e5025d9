import json

import numpy as np
import pytest

from fairslot.config import get_settings
from fairslot.core import instance_from_effective


@pytest.fixture
def running_instance():
    """Effective values (4, 2, 1), two slots with beta = (1, 0.5)."""
    return instance_from_effective([4.0, 2.0, 1.0], [1.0, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def write_json(tmp_path):
    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)

    return _write


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
