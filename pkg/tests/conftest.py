import pytest

from tripletsim.config import builtin_config
from tripletsim.models.config import ExperimentConfig


@pytest.fixture
def reference() -> ExperimentConfig:
    return builtin_config("reference")


@pytest.fixture
def observed() -> ExperimentConfig:
    return builtin_config("observed")


@pytest.fixture
def paper_values() -> ExperimentConfig:
    return builtin_config("paper_values")
