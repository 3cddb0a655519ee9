import json

import numpy as np
import pytest

from crossrec.numcore.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint


class TestRoundTrip:
    def test_arrays_and_meta_survive(self, tmp_path):
        p = tmp_path / "m.npz"
        params = {"w": np.arange(6, dtype=float).reshape(2, 3), "b": np.array([1.5])}
        meta = {"model_kind": "test", "nested": {"a": [1, 2], "name": "séssion"}, "n": 7}
        save_checkpoint(p, params, meta)
        loaded, lmeta = load_checkpoint(p)
        assert set(loaded) == {"w", "b"}
        np.testing.assert_array_equal(loaded["w"], params["w"])
        np.testing.assert_array_equal(loaded["b"], params["b"])
        assert lmeta["model_kind"] == "test"
        assert lmeta["nested"] == {"a": [1, 2], "name": "séssion"}
        assert lmeta["format_version"] == FORMAT_VERSION

    def test_arrays_come_back_float64(self, tmp_path):
        p = tmp_path / "m.npz"
        save_checkpoint(p, {"w": np.ones(3, dtype=np.float32)}, {"model_kind": "t"})
        loaded, _ = load_checkpoint(p)
        assert loaded["w"].dtype == np.float64


class TestValidation:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope.npz")

    def test_missing_meta_rejected(self, tmp_path):
        p = tmp_path / "raw.npz"
        np.savez(p, w=np.ones(2))
        with pytest.raises(ValueError, match="missing metadata"):
            load_checkpoint(p)

    def test_wrong_version_rejected(self, tmp_path):
        p = tmp_path / "old.npz"
        meta = json.dumps({"format_version": FORMAT_VERSION + 1})
        np.savez(p, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(p)
