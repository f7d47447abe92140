import struct

import numpy as np
import pytest

from thermface.config import PipelineConfig, apply_overrides, format_config, load_config, parse_config
from thermface.errors import InvalidParameter, ParseError, VersionMismatch
from thermface.evaluation import fit_model
from thermface.linefeat import default_mask_bank
from thermface.modelfile import MAGIC, ModelFile, decode_model, encode_model, load_model, save_model

CFG = apply_overrides(PipelineConfig(), {"pca.k": "4", "mlp.max_epochs": "5", "mlp.hidden": "6"})


@pytest.fixture(scope="module")
def model_file():
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(12, 30))
    model = fit_model(vectors, [i % 3 for i in range(12)], 3, CFG, label_names=["ann", "bo", "cy"])
    return ModelFile(CFG, default_mask_bank(), model)


def test_byte_round_trip(model_file, tmp_path):
    data = encode_model(model_file)
    assert data.startswith(MAGIC)
    again = decode_model(data)
    assert encode_model(again) == data
    save_model(model_file, tmp_path / "m.thfm")
    assert (tmp_path / "m.thfm").read_bytes() == data
    assert load_model(tmp_path / "m.thfm").model.labels == ["ann", "bo", "cy"]


def test_decoded_model_scores_identically(model_file):
    again = decode_model(encode_model(model_file))
    x = np.random.default_rng(1).normal(size=(3, 30))
    assert np.array_equal(again.model.scores(x), model_file.model.scores(x))
    assert again.bank == model_file.bank
    assert format_config(again.config) == format_config(model_file.config)


def test_bad_magic(model_file):
    data = encode_model(model_file)
    with pytest.raises(VersionMismatch):
        decode_model(b"XXXX" + data[4:])


def test_wrong_version(model_file):
    data = bytearray(encode_model(model_file))
    data[4] = 9
    with pytest.raises(VersionMismatch):
        decode_model(bytes(data))


@pytest.mark.parametrize("cut", [3, 10, 200, -1])
def test_truncated(model_file, cut):
    data = encode_model(model_file)
    with pytest.raises(VersionMismatch):
        decode_model(data[:cut])


def test_block_length_mismatch(model_file):
    data = bytearray(encode_model(model_file))
    # first block header sits right after magic and version
    (length,) = struct.unpack("<Q", data[9:17])
    data[9:17] = struct.pack("<Q", length + 1)
    with pytest.raises(VersionMismatch):
        decode_model(bytes(data))


# ---------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------
def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.pca_k == 40 and cfg.hidden == (25,)
    assert cfg.polar.fixed_side == 128
    assert cfg.mlp_for(40, 16).layer_sizes == (40, 25, 16)


def test_config_round_trip():
    cfg = apply_overrides(PipelineConfig(), {"seed": "7", "eval.fold_sizes": "3,3,4", "polar.r_min": "2.5"})
    assert parse_config(format_config(cfg)) == cfg
    assert cfg.eval.fold_sizes == (3, 3, 4)


def test_config_file_and_missing(tmp_path):
    (tmp_path / "c.cfg").write_text("# comment\nseed = 11\neval.variant = polar\n")
    cfg = load_config(tmp_path / "c.cfg")
    assert cfg.seed == 11 and cfg.eval.variant == "polar"
    assert load_config(tmp_path / "absent.cfg") == PipelineConfig()


@pytest.mark.parametrize("text", ["seed 3\n", "nope.key = 1\n", "seed = x\n", "eval.variant = fft\n"])
def test_config_errors(text):
    with pytest.raises(ParseError):
        parse_config(text)


def test_override_unknown_key():
    with pytest.raises(InvalidParameter):
        apply_overrides(PipelineConfig(), {"pca.kk": "3"})
