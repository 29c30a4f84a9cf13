import numpy as np
import pytest

from nlcsnet.config import ConfigError, ModelConfig, TrainConfig, format_config, parse_config_text
from nlcsnet.pgm import PGMError, read_pgm, to_uint8, write_pgm


def test_pgm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (13, 21)).astype(np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    back = read_pgm(tmp_path / "a.pgm")
    np.testing.assert_array_equal(to_uint8(back), img)
    assert back.min() >= 0 and back.max() <= 1


def test_pgm_header_with_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n# max\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])


@pytest.mark.parametrize("payload", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00", b""])
def test_pgm_rejects_bad_files(tmp_path, payload):
    (tmp_path / "bad.pgm").write_bytes(payload)
    with pytest.raises(PGMError):
        read_pgm(tmp_path / "bad.pgm")


def test_pgm_missing_file(tmp_path):
    with pytest.raises(PGMError):
        read_pgm(tmp_path / "absent.pgm")


def test_config_text_parsing():
    model, train = parse_config_text(
        "# comment\nrate = 0.25\nchannels = 4, 8, 16\nenable_nlf = off\n\nbatch_size=2  # inline\nbase_lr=3e-4\n"
    )
    assert model == {"rate": 0.25, "channels": (4, 8, 16), "enable_nlf": False}
    assert train == {"batch_size": 2, "base_lr": 3e-4}


@pytest.mark.parametrize("text", ["bogus = 1", "rate", "batch_size = two", "enable_nlm = maybe"])
def test_config_text_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_format_config_round_trips():
    cfg = TrainConfig(batch_size=3, model=ModelConfig.desk(rate=0.2, enable_msn=False))
    model, train = parse_config_text(format_config(cfg))
    train.pop("data_dir", None)
    assert TrainConfig(model=ModelConfig(**model), **train) == cfg


def test_every_key_has_a_default():
    text = format_config(TrainConfig())
    assert "base_lr = 0.0001" in text and "pool_factors = 16,4,1" in text


def test_learning_rate_schedule():
    cfg = TrainConfig(base_lr=1e-4, lr_decay_factor=2, lr_decay_every=30)
    for epoch in range(0, 200, 7):
        assert cfg.lr_at(epoch) == 1e-4 / 2 ** (epoch // 30)
    assert cfg.lr_at(29) == 1e-4 and cfg.lr_at(30) == 5e-5 and cfg.lr_at(60) == 2.5e-5
