import os
import time

import pytest

from chatctl.bundle import save_bundle
from chatctl.config import load_config
from chatctl.pipeline import make_engine, train_pipeline

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture(scope="session")
def data_dir() -> str:
    return os.path.abspath(DATA_DIR)


@pytest.fixture(scope="session")
def bundled_config(data_dir):
    return load_config(os.path.join(data_dir, "config.toml"))


@pytest.fixture(scope="session")
def artifacts(bundled_config):
    """Full pipeline trained once per session on the bundled corpus."""
    start = time.perf_counter()
    trained = train_pipeline(bundled_config)
    trained.training_seconds = time.perf_counter() - start
    return trained


@pytest.fixture(scope="session")
def engine(artifacts):
    return make_engine(artifacts)


@pytest.fixture(scope="session")
def bundle_dir(artifacts, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    save_bundle(artifacts, str(out))
    return str(out)
