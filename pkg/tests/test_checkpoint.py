import struct

import numpy as np
import pytest

from tempora.checkpoint import (CheckpointError, describe, from_bytes, load_checkpoint,
                                save_checkpoint, to_bytes)
from tempora.rbm import RbmParams, UnitKind
from tempora.rng import RngStream
from tempora.temporal import CrbmParams, TrbmParams


def models():
    r = RngStream(3)
    return [
        RbmParams(r.normal((3, 2)), r.normal(3), r.normal(2), UnitKind.BINARY),
        TrbmParams.initialize(4, 5, 3, r.child(1), UnitKind.GAUSSIAN).with_phase("joint"),
        CrbmParams.initialize(4, 5, 2, r.child(2), UnitKind.GAUSSIAN).with_phase("ta"),
    ]


@pytest.mark.parametrize("model", models(), ids=["rbm", "trbm", "crbm"])
def test_round_trip(tmp_path, model):
    p = tmp_path / "c.bin"
    save_checkpoint(p, model, {"seed": 4, "note": "x y"}, {"NORM_MEAN": np.arange(3.0)})
    ck = load_checkpoint(p)
    assert type(ck.model) is type(model)
    for k, v in model.tensors().items():
        assert np.array_equal(ck.model.tensors()[k], v)
    assert ck.meta == {"seed": "4", "note": "x y"}
    assert np.array_equal(ck.extra["NORM_MEAN"], np.arange(3.0))
    if hasattr(model, "phase"):
        assert ck.model.phase == model.phase
    # re-saving the loaded model is byte-identical
    assert to_bytes(ck.model, ck.meta, ck.extra) == p.read_bytes()


def test_bad_magic_and_version():
    blob = to_bytes(models()[0])
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"NOTEMPOR" + blob[8:])
    bumped = blob[:8] + struct.pack("<I", 99) + blob[12:]
    with pytest.raises(CheckpointError, match="version 99"):
        from_bytes(bumped)


@pytest.mark.parametrize("cut", [4, 14, 40, -8])
def test_truncation_detected(cut):
    blob = to_bytes(models()[2])
    with pytest.raises(CheckpointError):
        from_bytes(blob[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(to_bytes(models()[1]) + b"\0")


def test_extra_name_clash_and_newlines():
    m = models()[2]
    with pytest.raises(CheckpointError):
        to_bytes(m, extra={"W": np.zeros(1)})
    with pytest.raises(CheckpointError):
        to_bytes(m, meta={"k": "a\nb"})


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "none.bin")


def test_describe(tmp_path):
    p = tmp_path / "c.bin"
    save_checkpoint(p, models()[1], {"seed": 1})
    text = describe(p)
    assert "kind=trbm" in text and "meta.seed=1" in text and "TrbmParams" in text
