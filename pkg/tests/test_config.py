import pytest
import torch
import yaml
from pydantic import ValidationError

from core.exceptions import ConfigurationError, DataFormatError
from models.config_models import ABLATION_ROWS, AblationSpec, ClusterParams, PipelineConfig, SegNetConfig
from modules.embed_net import EmbedNet
from modules.model_manager import EMBED_KIND, SEG_KIND, ModelManager, deep_merge
from modules.seg_net import SegNet


@pytest.fixture
def manager():
    return ModelManager()


def test_profiles_resolve(manager):
    assert {"small", "tiny"} <= set(manager.list_profiles())
    config = manager.load_config("tiny")
    assert config.profile == "tiny"
    assert config.num_sequences == 5 and config.synthetic.image_height == 32
    # keys missing from the profile take model defaults
    assert config.paste.p_ped == 0.5


def test_default_profile_comes_from_environment(manager, monkeypatch):
    monkeypatch.setenv("MOTS_PROFILE", "tiny")
    assert manager.load_config().profile == "tiny"


def test_overrides_are_deep_merged(manager, tmp_path):
    path = tmp_path / "override.yaml"
    path.write_text(yaml.safe_dump({"tracker": {"max_age": 2}, "synthetic": {"sequence_length": 3}}))
    config = manager.load_config("tiny", str(path))
    assert config.tracker.max_age == 2 and config.synthetic.sequence_length == 3
    assert config.tracker.momentum == 0.9
    assert config.synthetic.image_width == 32


def test_seed_reaches_every_random_consumer(manager):
    config = manager.load_config("tiny", seed=7)
    assert config.seed == 7
    assert config.synthetic.seed == config.seg_train.seed == config.embed.seed == 7


@pytest.mark.parametrize("setup", ["unknown profile", "bad value", "missing file", "not a mapping"])
def test_configuration_errors(manager, tmp_path, setup):
    path = tmp_path / "override.yaml"
    if setup == "bad value":
        path.write_text(yaml.safe_dump({"held_out_sequences": 5}))
    elif setup == "not a mapping":
        path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        if setup == "unknown profile":
            manager.load_config("huge")
        else:
            manager.load_config("tiny", str(path))


def test_deep_merge_does_not_touch_inputs():
    base = {"a": {"b": 1, "c": 2}}
    merged = deep_merge(base, {"a": {"b": 5}, "d": 1})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 1}
    assert base == {"a": {"b": 1, "c": 2}}


def test_thread_count_must_be_integer(monkeypatch):
    monkeypatch.setenv("MOTS_NUM_THREADS", "many")
    with pytest.raises(ConfigurationError):
        ModelManager.configure_threads()


def test_ablation_rows_are_cumulative():
    assert [row.label for row in ABLATION_ROWS] == ["baseline", "2X", "2X+Sem", "2X+Sem+CP", "2X+Sem+CP+Sep"]


def test_with_ablation_switches_components():
    config = PipelineConfig(num_sequences=3, held_out_sequences=1)
    baseline = config.with_ablation(AblationSpec())
    assert baseline.segnet.upsample_factor == 1 and baseline.segnet.seed_loss == "gaussian"
    assert not baseline.seg_train.copy_paste and not baseline.embed.multistage

    full = config.with_ablation(ABLATION_ROWS[-1])
    assert full.segnet.upsample_factor == 2 and full.segnet.seed_loss == "focal"
    assert full.seg_train.copy_paste and full.embed.multistage
    assert full.ablation.label == "2X+Sem+CP+Sep"


def test_min_pixels_scale_with_input_factor():
    params = ClusterParams(min_pixels=64)
    assert params.for_scale(2).min_pixels == 64
    assert params.for_scale(1).min_pixels == 16
    assert ClusterParams(min_pixels=1).for_scale(1).min_pixels == 1


def test_split_must_leave_training_sequences():
    with pytest.raises(ValidationError):
        PipelineConfig(num_sequences=4, held_out_sequences=4)


def test_negative_focal_gamma_is_rejected():
    with pytest.raises(ValidationError):
        SegNetConfig(focal_gamma=-1.0)


def test_checkpoints_round_trip(manager, tiny_config, tmp_path):
    torch.manual_seed(0)
    seg = SegNet(tiny_config.segnet)
    path = manager.save_checkpoint(seg, SEG_KIND, tiny_config.segnet, str(tmp_path / "ckpt" / "seg.pt"))
    restored, config = manager.load_seg_model(path)
    assert config == tiny_config.segnet
    for key, value in seg.state_dict().items():
        assert torch.equal(value, restored.state_dict()[key])

    embed = EmbedNet(tiny_config.embed)
    path = manager.save_checkpoint(embed, EMBED_KIND, tiny_config.embed, str(tmp_path / "embed.pt"),
                                   extra={"max_distance": 0.8})
    _, embed_config, extra = manager.load_embed_model(path)
    assert embed_config.dim_a == tiny_config.embed.dim_a
    assert extra == {"max_distance": 0.8}


def test_checkpoint_errors(manager, tiny_config, tmp_path):
    with pytest.raises(DataFormatError):
        manager.load_seg_model(str(tmp_path / "missing.pt"))
    path = manager.save_checkpoint(SegNet(tiny_config.segnet), SEG_KIND, tiny_config.segnet, str(tmp_path / "seg.pt"))
    with pytest.raises(DataFormatError):
        manager.load_embed_model(path)
    garbage = tmp_path / "garbage.pt"
    garbage.write_bytes(b"not a checkpoint")
    with pytest.raises(DataFormatError):
        manager.load_seg_model(str(garbage))
