import pytest
from hypothesis import given
from hypothesis import strategies as st

from arbstyle.config import RunConfig, load_config, save_config
from arbstyle.errors import ConfigError


@st.composite
def run_configs(draw):
    return RunConfig(
        model=draw(st.sampled_from(("joint", "adain"))),
        seed=draw(st.integers(0, 2**31)),
        precision=draw(st.sampled_from(("float32", "float64"))),
        transfer_channels=tuple(draw(st.lists(st.integers(1, 64), min_size=1, max_size=4))),
        residual_blocks=draw(st.integers(0, 10)),
        lambda_s=draw(st.floats(1e-6, 1e6)),
        lr=draw(st.floats(1e-8, 1.0)),
        budget=draw(st.integers(1, 10**7)),
        augment=draw(st.booleans()),
        style_corpus=draw(st.text(st.characters(min_codepoint=48, max_codepoint=122), max_size=12)),
    )


@given(run_configs())
def test_serialize_parse_round_trip(cfg):
    text = cfg.serialize()
    back = RunConfig.parse(text)
    assert back == cfg
    assert back.serialize() == text


def test_defaults_and_partial_files():
    cfg = RunConfig.parse("# comment\n\nlambda_s = 2.5  # inline\nresidual_blocks=3\n")
    assert cfg.lambda_s == 2.5 and cfg.residual_blocks == 3
    assert cfg.lr == 0.001 and cfg.beta1 == 0.9 and cfg.beta2 == 0.999 and cfg.adam_eps == 1e-8


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match="line 3") as info:
        RunConfig.parse("seed = 1\n\nlearning_rate = 0.1\n")
    assert info.value.line == 3


@pytest.mark.parametrize("text", ["seed = x", "augment = maybe", "just words", "lambda_s = 0",
                                  "model = vgg", "budget = 0"])
def test_bad_values_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_file_helpers(tmp_path):
    cfg = RunConfig(seed=9, transfer_channels=(4, 8))
    save_config(cfg, tmp_path / "run.cfg")
    assert load_config(tmp_path / "run.cfg") == cfg
