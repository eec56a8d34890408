import sys
from pathlib import Path
from typing import List

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.synthetic import generate_dataset
from models.config_models import PipelineConfig
from models.mots_models import Sequence
from modules.model_manager import ModelManager


@pytest.fixture(autouse=True)
def isolated_runs(tmp_path, monkeypatch):
    """Every test writes its runs under its own temporary directory"""
    runs_dir = tmp_path / "runs"
    monkeypatch.setenv("MOTS_RUNS_DIR", str(runs_dir))
    monkeypatch.delenv("MOTS_PROFILE", raising=False)
    monkeypatch.delenv("MOTS_NUM_THREADS", raising=False)
    return runs_dir


@pytest.fixture(scope="session")
def tiny_config() -> PipelineConfig:
    return ModelManager().load_config("tiny")


@pytest.fixture(scope="session")
def tiny_sequences(tiny_config) -> List[Sequence]:
    return generate_dataset(tiny_config.synthetic, tiny_config.num_sequences)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
