import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

# diagnostics tests write to a throwaway SQLite file, never the working directory
os.environ.setdefault("APP_DATABASE_URL", f"sqlite:///{Path(tempfile.mkdtemp()) / 'test_runs.db'}")


@pytest.fixture()
def rng() -> np.random.Generator:
    """Provide a seeded generator so every test is reproducible."""
    return np.random.default_rng(20150904)
