import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psol.errors import FormatError, TruncationError, ValidationError
from psol.geometry import BoxXYWH
from psol.tensor_io import (
    FeatureMap,
    ImageRecord,
    class_file_name,
    discover_class_files,
    load_manifest,
    load_scores,
    read_classifier_weights,
    read_pooled_features,
    read_tensor_file,
    write_classifier_weights,
    write_manifest,
    write_pooled_features,
    write_scores,
    write_tensor_file,
)


def fm(image_id, h, w, d, rng):
    return FeatureMap(image_id, rng.standard_normal((h, w, d)).astype(np.float32))


class TestTensorFile:
    def test_empty_file_is_header_only(self, tmp_path):
        path = tmp_path / "empty.tnsr"
        write_tensor_file([], path)
        assert path.stat().st_size == 16
        assert read_tensor_file(path) == []

    def test_single_record_byte_count(self, tmp_path):
        # header 16 + id-len 2 + id 1 + dims 12 + 2 floats 8
        path = tmp_path / "one.tnsr"
        write_tensor_file(
            [FeatureMap("a", np.array([[[1.0, 2.0]]], dtype=np.float32))], path
        )
        assert path.stat().st_size == 16 + (2 + 1 + 12 + 8)

    def test_layout_is_little_endian(self, tmp_path):
        path = tmp_path / "layout.tnsr"
        write_tensor_file(
            [FeatureMap("a", np.array([[[1.0, 2.0]]], dtype=np.float32))], path
        )
        blob = path.read_bytes()
        assert blob[:8] == b"PSOLTNSR"
        assert struct.unpack("<II", blob[8:16]) == (1, 1)
        assert struct.unpack("<H", blob[16:18]) == (1,)
        assert blob[18:19] == b"a"
        assert struct.unpack("<III", blob[19:31]) == (1, 1, 2)
        assert struct.unpack("<ff", blob[31:39]) == (1.0, 2.0)

    def test_round_trip_bit_exact(self, tmp_path, rng):
        maps = [
            fm(f"img{i}", int(rng.integers(1, 6)), int(rng.integers(1, 6)), 3, rng)
            for i in range(100)
        ]
        path = tmp_path / "many.tnsr"
        write_tensor_file(maps, path)
        loaded = read_tensor_file(path, require_uniform_depth=True)
        assert [m.image_id for m in loaded] == [m.image_id for m in maps]
        for a, b in zip(maps, loaded):
            assert a.values.tobytes() == b.values.tobytes()

    def test_write_read_write_identical_bytes(self, tmp_path, rng):
        maps = [fm(f"i{i}", 2, 3, 4, rng) for i in range(5)]
        p1, p2 = tmp_path / "a.tnsr", tmp_path / "b.tnsr"
        write_tensor_file(maps, p1)
        write_tensor_file(read_tensor_file(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tnsr"
        path.write_bytes(b"XXXXXXXX" + struct.pack("<II", 1, 0))
        with pytest.raises(FormatError, match="magic"):
            read_tensor_file(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.tnsr"
        path.write_bytes(b"PSOLTNSR" + struct.pack("<II", 9, 0))
        with pytest.raises(FormatError, match="version"):
            read_tensor_file(path)

    def test_truncated_mid_record_names_index(self, tmp_path, rng):
        maps = [fm("first", 2, 2, 2, rng), fm("second", 2, 2, 2, rng)]
        path = tmp_path / "t.tnsr"
        write_tensor_file(maps, path)
        clipped = tmp_path / "clipped.tnsr"
        clipped.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncationError, match="record 1") as err:
            read_tensor_file(clipped)
        assert err.value.record_index == 1

    def test_trailing_garbage_rejected(self, tmp_path, rng):
        path = tmp_path / "t.tnsr"
        write_tensor_file([fm("x", 1, 1, 1, rng)], path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            read_tensor_file(path)

    def test_mixed_depth_write_rejected(self, tmp_path, rng):
        with pytest.raises(FormatError, match="mixed"):
            write_tensor_file(
                [fm("a", 1, 1, 2, rng), fm("b", 1, 1, 3, rng)], tmp_path / "m.tnsr"
            )

    def test_mixed_depth_allowed_when_requested(self, tmp_path, rng):
        path = tmp_path / "m.tnsr"
        write_tensor_file(
            [fm("a", 1, 1, 2, rng), fm("b", 1, 1, 3, rng)],
            path,
            require_uniform_depth=False,
        )
        assert len(read_tensor_file(path)) == 2
        with pytest.raises(FormatError, match="d="):
            read_tensor_file(path, require_uniform_depth=True)

    def test_non_finite_rejected_at_construction(self):
        bad = np.ones((1, 1, 2), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            FeatureMap("bad", bad)

    def test_non_finite_rejected_at_read(self, tmp_path, rng):
        path = tmp_path / "n.tnsr"
        write_tensor_file([fm("x", 1, 1, 2, rng)], path)
        blob = bytearray(path.read_bytes())
        blob[-8:-4] = struct.pack("<f", np.inf)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValidationError, match="non-finite"):
            read_tensor_file(path)

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, tmp_path_factory, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
        n = data.draw(st.integers(0, 6))
        d = data.draw(st.integers(1, 5))
        maps = [
            fm(f"id-{i}", int(rng.integers(1, 4)), int(rng.integers(1, 4)), d, rng)
            for i in range(n)
        ]
        path = tmp_path_factory.mktemp("rt") / "f.tnsr"
        write_tensor_file(maps, path)
        loaded = read_tensor_file(path)
        assert len(loaded) == len(maps)
        for a, b in zip(maps, loaded):
            assert a.image_id == b.image_id
            assert np.array_equal(a.values, b.values)


class TestManifest:
    def line(self, **kw):
        base = {
            "image_id": "i1",
            "class_label": 0,
            "orig_width": 500,
            "orig_height": 375,
            "net_input_size": 448,
            "split": "train",
        }
        base.update(kw)
        return json.dumps(base)

    def test_parse_without_gt_box(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(self.line() + "\n")
        records = load_manifest(path)
        assert len(records) == 1
        assert records[0].gt_box is None
        assert records[0].orig_width == 500

    def test_gt_box_exceeding_width_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            self.line(gt_box={"x": 400, "y": 10, "w": 200, "h": 100}) + "\n"
        )
        with pytest.raises(ValidationError, match="line 1"):
            load_manifest(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(self.line() + "\n" + self.line() + "\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_manifest(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(self.line() + "\n{not json\n")
        with pytest.raises(FormatError, match="line 2"):
            load_manifest(path)

    def test_order_preserving_round_trip(self, tmp_path):
        records = [
            ImageRecord(f"z{i}", i % 3, 100, 80, 64, "train" if i % 2 else "test",
                        gt_box=BoxXYWH(1, 1, 10, 10))
            for i in range(20)
        ]
        path = tmp_path / "m.jsonl"
        write_manifest(records, path)
        assert load_manifest(path) == records


class TestSidecarFormats:
    def test_scores_round_trip(self, tmp_path, rng):
        scores = {f"i{i}": rng.standard_normal(7) for i in range(10)}
        path = tmp_path / "scores.jsonl"
        write_scores(scores, path)
        loaded = load_scores(path)
        assert set(loaded) == set(scores)
        for k in scores:
            assert np.allclose(loaded[k], scores[k])

    def test_scores_inconsistent_length_rejected(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text(
            json.dumps({"image_id": "a", "scores": [1.0, 2.0]})
            + "\n"
            + json.dumps({"image_id": "b", "scores": [1.0]})
            + "\n"
        )
        with pytest.raises(ValidationError, match="length"):
            load_scores(path)

    def test_classifier_weights_round_trip(self, tmp_path, rng):
        w = rng.standard_normal((5, 9)).astype(np.float32)
        path = tmp_path / "w.tnsr"
        write_classifier_weights(w, path)
        assert np.array_equal(read_classifier_weights(path), w)

    def test_pooled_round_trip(self, tmp_path, rng):
        feats = {f"i{i}": rng.standard_normal(6).astype(np.float32) for i in range(8)}
        path = tmp_path / "pooled.tnsr"
        write_pooled_features(feats, path)
        loaded = read_pooled_features(path)
        assert set(loaded) == set(feats)
        for k in feats:
            assert np.array_equal(loaded[k], feats[k])

    def test_class_file_discovery(self, tmp_path, rng):
        for label in (0, 3, 12):
            write_tensor_file([fm("x", 1, 1, 2, rng)], tmp_path / class_file_name(label))
        (tmp_path / "notes.txt").write_text("ignored")
        files = discover_class_files(tmp_path)
        assert sorted(files) == [0, 3, 12]
