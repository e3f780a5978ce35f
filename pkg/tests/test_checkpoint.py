import numpy as np
import pytest

from avinpaint.checkpoint import load_tensors, save_tensors


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.normal(size=(3, 4)), "b.c": np.array(2.5), "d": np.zeros(0), "e": rng.normal(size=(2, 1, 3))}
    save_tensors(tmp_path / "t.bin", tensors)
    back = load_tensors(tmp_path / "t.bin")
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert back[k].shape == np.shape(v)
        np.testing.assert_array_equal(back[k], np.asarray(v, dtype=np.float32))


def test_layout(tmp_path):
    save_tensors(tmp_path / "t.bin", {"w": np.array([1.0, -2.0])})
    raw = (tmp_path / "t.bin").read_bytes()
    assert raw[:4] == b"AVSI"
    assert raw[4:8] == (1).to_bytes(4, "little")
    assert raw[8:12] == (1).to_bytes(4, "little") and raw[12:13] == b"w"
    assert np.frombuffer(raw[-8:], "<f4").tolist() == [1.0, -2.0]


def test_identical_bytes(tmp_path):
    t = {"x": np.arange(6.0).reshape(2, 3)}
    save_tensors(tmp_path / "a", t)
    save_tensors(tmp_path / "b", t)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


@pytest.mark.parametrize("corrupt", [lambda b: b"XXXX" + b[4:], lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:],
                                     lambda b: b[:-3], lambda b: b[:10]])
def test_rejects_bad_files(tmp_path, corrupt):
    save_tensors(tmp_path / "t.bin", {"w": np.ones((4, 4))})
    (tmp_path / "t.bin").write_bytes(corrupt((tmp_path / "t.bin").read_bytes()))
    with pytest.raises(ValueError):
        load_tensors(tmp_path / "t.bin")
