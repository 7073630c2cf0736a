"""Flat key=value config grammar."""

import pytest

from hgclust.config import load_config, parse_config_text, settings_to_text
from hgclust.errors import UsageError


def test_defaults_and_overrides():
    settings = parse_config_text("alpha = 2.5\nlayers=2\ntext_mode = zeros\n")
    assert settings.train.alpha == 2.5
    assert settings.transformer.layers == 2
    assert settings.embedding.text_mode == "zeros"
    assert settings.train.beta == 0.1  # untouched default


def test_comments_and_blank_lines():
    settings = parse_config_text("# a comment\n\nk = 4  # trailing\n")
    assert settings.train.k == 4


def test_unknown_key_rejected():
    with pytest.raises(UsageError, match="mystery"):
        parse_config_text("mystery = 1\n")


def test_bad_value_type_rejected():
    with pytest.raises(UsageError, match="epochs"):
        parse_config_text("epochs = soon\n")
    with pytest.raises(UsageError, match="clustering_enabled"):
        parse_config_text("clustering_enabled = maybe\n")


def test_missing_equals_rejected():
    with pytest.raises(UsageError, match="line 1"):
        parse_config_text("alpha 3\n")


def test_invalid_combination_rejected():
    with pytest.raises(UsageError):
        parse_config_text("hidden = 10\nheads = 4\n")
    with pytest.raises(UsageError):
        parse_config_text("train_frac = 0.9\n")  # fractions no longer sum to 1
    with pytest.raises(UsageError):
        parse_config_text("text_mode = sideways\n")


def test_snapshot_roundtrip():
    settings = parse_config_text("alpha = 3\nhidden = 24\nheads = 3\nsg_lr = 0.01\n")
    text = settings_to_text(settings)
    clone = parse_config_text(text)
    assert clone.train.alpha == 3.0
    assert clone.transformer.hidden == 24
    assert clone.embedding.sg_lr == 0.01


def test_load_config_missing_file(tmp_path):
    with pytest.raises(UsageError):
        load_config(tmp_path / "absent.cfg")
