"""
Model Manager - Pipeline profiles and network checkpoints
Profiles live in config/profiles.yaml; a user YAML file may override any key.
Checkpoints bundle the state dict with the config section it was built from.
"""

import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from core.exceptions import ConfigurationError, DataFormatError
from models.config_models import EmbedTrainConfig, PipelineConfig, SegNetConfig
from modules.embed_net import EmbedNet
from modules.seg_net import SegNet

# Load environment variables
load_dotenv()

ROOT = Path(__file__).parent.parent
PROFILE_YAML = ROOT / "config" / "profiles.yaml"
REFERENCE_YAML = ROOT / "config" / "reference_results.yaml"

SEG_KIND = "segnet"
EMBED_KIND = "embednet"

logger = logging.getLogger(__name__)


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; override values win, nested dicts merge key by key"""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping at the top level")
    return data


class ModelManager:
    """
    Resolves pipeline configuration and saves / restores the two networks.
    """

    def __init__(self, profiles_path: Optional[str] = None):
        self.profiles_path = Path(profiles_path) if profiles_path else PROFILE_YAML
        self.profiles = _read_yaml(self.profiles_path)
        self.logger = logging.getLogger(f"{__name__}.ModelManager")

    def list_profiles(self):
        return sorted(self.profiles)

    def load_config(self, profile: Optional[str] = None, overrides_path: Optional[str] = None,
                    seed: Optional[int] = None) -> PipelineConfig:
        """
        Build the PipelineConfig of a profile.

        Args:
            profile (str): Profile name; defaults to $MOTS_PROFILE or 'small'
            overrides_path (str): YAML file deep-merged on top of the profile
            seed (int): Master seed; also reseeds data generation and both trainings

        Raises:
            ConfigurationError: unknown profile, unreadable overrides or invalid values
        """
        profile = profile or os.getenv("MOTS_PROFILE", "small")
        if profile not in self.profiles:
            raise ConfigurationError(f"unknown profile '{profile}' (available: {', '.join(self.list_profiles())})")
        data = deep_merge(self.profiles[profile] or {}, {"profile": profile})
        if overrides_path:
            data = deep_merge(data, _read_yaml(Path(overrides_path)))
        if seed is not None:
            data["seed"] = seed
        if "seed" in data:
            for section in ("synthetic", "seg_train", "embed"):
                data.setdefault(section, {})
                data[section]["seed"] = data["seed"]
        try:
            config = PipelineConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"invalid configuration for profile '{profile}': {e}") from e
        self.logger.info(f"⚙️ Loaded profile '{profile}'" + (f" with overrides {overrides_path}" if overrides_path else ""))
        return config

    @staticmethod
    def load_reference_results() -> Dict[str, Any]:
        return _read_yaml(REFERENCE_YAML)

    @staticmethod
    def configure_threads():
        """Honor $MOTS_NUM_THREADS for torch intra-op parallelism"""
        threads = os.getenv("MOTS_NUM_THREADS")
        if threads:
            try:
                torch.set_num_threads(int(threads))
            except ValueError as e:
                raise ConfigurationError(f"MOTS_NUM_THREADS must be an integer, got '{threads}'") from e

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def save_checkpoint(self, model: torch.nn.Module, kind: str, config: BaseModel, path: str,
                        extra: Optional[Dict[str, Any]] = None) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save({
            "kind": kind,
            "config": config.model_dump(mode="json"),
            "state_dict": model.state_dict(),
            "extra": extra or {},
        }, path)
        self.logger.info(f"💾 {kind} checkpoint saved to: {path}")
        return path

    def _load_checkpoint(self, path: str, kind: str) -> Dict[str, Any]:
        if not os.path.exists(path):
            raise DataFormatError(f"checkpoint not found: {path}")
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as e:
            raise DataFormatError(f"cannot read checkpoint {path}: {e}") from e
        if payload.get("kind") != kind:
            raise DataFormatError(f"{path} holds a '{payload.get('kind')}' checkpoint, expected '{kind}'")
        return payload

    def load_seg_model(self, path: str) -> Tuple[SegNet, SegNetConfig]:
        payload = self._load_checkpoint(path, SEG_KIND)
        config = SegNetConfig.model_validate(payload["config"])
        return SegNet.from_state_dict(payload["state_dict"], config), config

    def load_embed_model(self, path: str) -> Tuple[EmbedNet, EmbedTrainConfig, Dict[str, Any]]:
        """Returns the model, its config and the extras stored with it (gate, S schedule)"""
        payload = self._load_checkpoint(path, EMBED_KIND)
        config = EmbedTrainConfig.model_validate(payload["config"])
        return EmbedNet.from_state_dict(payload["state_dict"], config), config, payload.get("extra", {})
