import logging
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

MOVIELENS_ENV = "RSVDREC_MOVIELENS"


def movielens_path() -> Path | None:
    """Location of a local MovieLens 100K ``u.data`` file, if one is available."""
    candidates = []
    if os.environ.get(MOVIELENS_ENV):
        candidates.append(Path(os.environ[MOVIELENS_ENV]))
    here = Path(__file__).parent
    candidates += [here / "data" / "u.data", here / "data" / "ml-100k" / "u.data"]
    for p in candidates:
        if p.is_file():
            return p
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_library_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="rsvdrec")
    yield
