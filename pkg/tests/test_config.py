import pytest
from hypothesis import given, settings, strategies as st

from mono2d.config import RunConfig, dumps_config, parse_config
from mono2d.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.n_scales == 8 and cfg.cutoff == 0.5 and cfg.order == 10 and cfg.mode == "both"
    assert parse_config("") == cfg


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 16), mode=st.sampled_from(["phase", "asym", "both"]),
       lr=st.floats(1e-5, 1.0, exclude_min=True), eps=st.floats(1e-300, 1.0),
       seed=st.integers(0, 2**31), freeze=st.booleans(), raw=st.booleans(),
       rescale=st.sampled_from(["image", "batch", "none"]), h=st.integers(8, 128))
def test_round_trip(n, mode, lr, eps, seed, freeze, raw, rescale, h):
    cfg = RunConfig(n_scales=n, mode=mode, learning_rate=lr, epsilon=eps, seed=seed, freeze=freeze,
                    use_mono2d=not raw, rescale=rescale, height=h)
    assert parse_config(dumps_config(cfg)) == cfg


def test_comments_and_whitespace():
    cfg = parse_config("# run\n  n_scales = 4   # fewer\n\nmode=phase\nfreeze = yes\n")
    assert cfg.n_scales == 4 and cfg.mode == "phase" and cfg.freeze


@pytest.mark.parametrize("text", [
    "unknown_key = 1",
    "n_scales = 0",
    "n_scales = four",
    "mode = magnitude",
    "freeze = maybe",
    "epsilon = 0",
    "cutoff = 0.9",
    "learning_rate = 1e-6",
    "height = 4",
    "no equals sign",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_updated_ignores_none():
    cfg = RunConfig().updated(n_scales=None, mode="asym")
    assert cfg.n_scales == 8 and cfg.mode == "asym"
