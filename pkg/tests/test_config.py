import json

import pytest

from hedgelab.config import ConfigError, ExperimentConfig, content_hash, from_dict, load_config, to_dict


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert from_dict(to_dict(cfg)) == cfg
    assert cfg.train_config().seed == cfg.seed
    assert cfg.env_config("qlbs").batch_size == 256
    with pytest.raises(ConfigError):
        cfg.env_config("dqn")


def test_partial_documents_fill_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 7, "market": {"sigma": 0.3}, "calibration": {"buckets": [14, 28, 56]}}))
    cfg = load_config(p)
    assert cfg.seed == 7 and cfg.market.sigma == 0.3 and cfg.market.n_steps == 28
    assert cfg.calibration.buckets == (14, 28, 56)
    assert cfg.train_config().seed == 7


@pytest.mark.parametrize("doc,where", [
    ({"markt": {}}, "markt"),
    ({"market": {"sigmaa": 0.2}}, "market.sigmaa"),
    ({"market": {"sigma": "high"}}, "market.sigma"),
    ({"seed": 1.5}, "seed"),
    ({"cost": {"liquidate_at_expiry": 1}}, "cost.liquidate_at_expiry"),
    ({"market": {"sigma": -1.0}}, "market"),
    ({"calibration": {"buckets": 14}}, "calibration.buckets"),
])
def test_bad_documents_name_the_field(doc, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        from_dict(doc)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        from_dict([1, 2])


def test_content_hash_tracks_content():
    a = ExperimentConfig()
    assert content_hash(a) == content_hash(from_dict(to_dict(a)))
    assert content_hash(a) != content_hash(from_dict({"seed": 1}))
    assert len(content_hash(a, "qlbs")) == 16
