import numpy as np
import pytest

from voxsem.checkpoint import load_checkpoint, save_checkpoint
from voxsem.config import HyperParams, desk_scale
from voxsem.errors import FormatError
from voxsem.networks import build_models


def build_desk(dtype=np.float64, seed=11):
    return build_models(desk_scale(), seed=seed, dtype=dtype)


def all_params(models):
    return {
        f"{net}/{name}": tensor.data
        for net, params in models.named().items()
        for name, tensor in params.items()
    }


def test_roundtrip_restores_every_parameter_bitwise(tmp_path):
    models = build_desk()
    hyper = HyperParams(learning_rate=3e-4, steps=17)
    path = tmp_path / "model.vsck"
    save_checkpoint(path, models, hyper)
    loaded, hyper_back = load_checkpoint(path)
    assert hyper_back == hyper
    assert loaded.cfg == models.cfg
    before = all_params(models)
    after = all_params(loaded)
    assert set(before) == set(after)
    for name, data in before.items():
        assert after[name].dtype == data.dtype
        assert np.array_equal(after[name], data), name


def test_float32_models_roundtrip(tmp_path):
    models = build_desk(dtype=np.float32)
    hyper = HyperParams(dtype="float32")
    path = tmp_path / "model.vsck"
    save_checkpoint(path, models, hyper)
    loaded, _ = load_checkpoint(path)
    after = all_params(loaded)
    for name, data in all_params(models).items():
        assert after[name].dtype == np.float32
        assert np.array_equal(after[name], data)


def test_bad_magic(tmp_path):
    path = tmp_path / "model.vsck"
    save_checkpoint(path, build_desk(), HyperParams())
    raw = path.read_bytes()
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncation(tmp_path):
    path = tmp_path / "model.vsck"
    save_checkpoint(path, build_desk(), HyperParams())
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 5])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path):
    path = tmp_path / "model.vsck"
    save_checkpoint(path, build_desk(), HyperParams())
    path.write_bytes(path.read_bytes() + b"\x90")
    with pytest.raises(FormatError, match="trailing"):
        load_checkpoint(path)


def test_renamed_tensor_breaks_the_load(tmp_path):
    path = tmp_path / "model.vsck"
    save_checkpoint(path, build_desk(), HyperParams())
    raw = path.read_bytes()
    target = b"depth_encoder/conv0.kernel"
    assert target in raw
    patched = raw.replace(target, b"depth_encoder/conv9.kernel", 1)
    path.write_bytes(patched)
    with pytest.raises(FormatError, match="does not match"):
        load_checkpoint(path)
