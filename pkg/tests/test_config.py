import json

import pytest

from spt.config import Config, apply_overrides, load_config
from spt.errors import SpecError


def test_defaults():
    cfg = load_config()
    assert cfg.seed == 7
    assert cfg.data.n_schemas == 26 and cfg.data.schema_free_ratio == 0.30
    assert cfg.model.d_model == 64 and cfg.model.n_layers == 2 and not cfg.model.tie_embeddings
    assert cfg.train.epochs == (3, 3, 2)
    assert cfg.eval.k == 5 and cfg.eval.copy_constraint and cfg.eval.soft_match_threshold == 0.5


def test_overrides_parse_json_values():
    cfg = apply_overrides(Config(), ["train.lr=1e-3", "train.epochs=[1,2,3]",
                                     "model.tie_embeddings=true", "paths.out_dir=xyz",
                                     "data.test_open_ratio=0.5"])
    assert cfg.train.lr == 1e-3 and cfg.train.epochs == (1, 2, 3)
    assert cfg.model.tie_embeddings is True and cfg.paths.out_dir == "xyz"
    assert cfg.data.test_open_ratio == 0.5


@pytest.mark.parametrize("bad", ["nokey=1", "train.nokey=1", "train=3", "model.d_model=abc",
                                 "noequals"])
def test_bad_overrides(bad):
    with pytest.raises(SpecError):
        load_config(None, [bad])


def test_validation():
    with pytest.raises(SpecError):
        load_config(None, ["train.lr=0"])
    with pytest.raises(SpecError):
        load_config(None, ["data.schema_free_ratio=1.2"])


def test_file_roundtrip_and_flag_wins(tmp_path):
    cfg = apply_overrides(Config(), ["seed=11", "eval.k=3"])
    obj = cfg.to_json()
    assert obj["format_version"] == 1
    (tmp_path / "c.json").write_text(json.dumps(obj))
    back = load_config(tmp_path / "c.json")
    assert back.to_json() == obj
    assert load_config(tmp_path / "c.json", ["eval.k=4"]).eval.k == 4


def test_unreadable_config(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(SpecError):
        load_config(tmp_path / "x.json")


def test_model_constraints_surface_as_config_errors():
    with pytest.raises(SpecError):
        load_config(None, ["model.n_heads=3"])
