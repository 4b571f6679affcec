import json
from pathlib import Path

import numpy as np
import pytest

torch = pytest.importorskip("torch")
from PIL import Image

from psol.cli import main as psol_main
from psol.tensor_io import (
    discover_class_files,
    load_manifest,
    load_scores,
    read_classifier_weights,
    read_pooled_features,
    read_tensor_file,
)
from psol_extractor.backbones import TOY_CLASSES, TOY_DEPTH, build_backbone
from psol_extractor.extract import _ddt_input, extract_features
from psol_extractor.jobs import ExtractJob, load_job


def paint_image(path: Path, size, color, box=None):
    img = Image.new("RGB", size, color)
    if box:
        x, y, w, h = box
        px = img.load()
        for i in range(x, x + w):
            for j in range(y, y + h):
                px[i, j] = (250, 80, 30)
    img.save(path)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    listing = []
    sizes = [(96, 80), (120, 96), (80, 120), (100, 100)]
    rng = np.random.default_rng(5)
    for c in range(2):
        for i in range(6):
            image_id = f"c{c}_i{i}.png"
            size = sizes[(c * 6 + i) % len(sizes)]
            bw, bh = size[0] // 3, size[1] // 3
            bx = int(rng.integers(0, size[0] - bw))
            by = int(rng.integers(0, size[1] - bh))
            paint_image(
                root / image_id, size, (20 * (c + 1), 60, 120), box=(bx, by, bw, bh)
            )
            listing.append(
                {
                    "image_id": image_id,
                    "class_label": c,
                    "split": "train" if i < 4 else "test",
                    "gt_box": {"x": bx, "y": by, "w": bw, "h": bh},
                }
            )
    listing_path = root / "listing.jsonl"
    listing_path.write_text("".join(json.dumps(x) + "\n" for x in listing))
    return root, listing_path


def make_job(dataset, out_dir, **overrides) -> ExtractJob:
    root, listing = dataset
    kwargs = dict(
        image_root=root,
        listing=listing,
        output_dir=out_dir,
        backbone="toy",
        pretrained=False,
        ddt_input_size=64,
        cls_resize=48,
        cls_input_size=32,
        batch_size=3,
    )
    kwargs.update(overrides)
    return ExtractJob(**kwargs)


class TestExtract:
    def test_grid_matches_stride_arithmetic(self, dataset, tmp_path):
        result = extract_features(make_job(dataset, tmp_path / "exp"))
        # toy backbone: two stride-2 convs -> total stride 4
        assert result.grid_size == 64 // 4
        assert result.stride == 4
        meta = json.loads((tmp_path / "exp" / "export_meta.json").read_text())
        assert meta["grid_size"] == 16
        files = discover_class_files(tmp_path / "exp" / "features" / "train")
        for path in files.values():
            for fm in read_tensor_file(path, require_uniform_depth=True):
                assert fm.values.shape == (16, 16, TOY_DEPTH)

    def test_round_trip_bit_exact_against_direct_forward(self, dataset, tmp_path):
        # rebuild the extractor's first batch exactly (same images, same
        # batch shape: conv kernels are only bit-stable for equal shapes)
        result = extract_features(make_job(dataset, tmp_path / "exp"))
        backbone = build_backbone("toy", pretrained=False)
        root, _ = dataset
        files = discover_class_files(result.output_dir / "features" / "train")
        stored = read_tensor_file(files[0])[:3]
        tensors = []
        for fm in stored:
            with Image.open(root / fm.image_id) as img:
                tensors.append(_ddt_input(img.convert("RGB"), 64))
        with torch.no_grad():
            direct = backbone.spatial(torch.stack(tensors)).permute(0, 2, 3, 1).numpy()
        for i, fm in enumerate(stored):
            assert fm.values.tobytes() == direct[i].astype(np.float32).tobytes()

    def test_deterministic_re_extraction(self, dataset, tmp_path):
        extract_features(make_job(dataset, tmp_path / "a"))
        extract_features(make_job(dataset, tmp_path / "b"))
        a_files = sorted((tmp_path / "a").rglob("*"))
        b_files = sorted((tmp_path / "b").rglob("*"))
        assert [p.name for p in a_files] == [p.name for p in b_files]
        for pa, pb in zip(a_files, b_files):
            if pa.is_file():
                assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_manifest_and_sidecars_consistent(self, dataset, tmp_path):
        result = extract_features(make_job(dataset, tmp_path / "exp"))
        records = load_manifest(result.manifest)
        assert len(records) == 12
        assert all(r.net_input_size == 64 for r in records)
        by_split = {"train": 0, "test": 0}
        for r in records:
            by_split[r.split] += 1
            assert r.gt_box is not None
        assert by_split == {"train": 8, "test": 4}

        pooled = read_pooled_features(result.output_dir / "pooled_train.tnsr")
        assert set(pooled) == {r.image_id for r in records if r.split == "train"}
        assert next(iter(pooled.values())).shape == (TOY_DEPTH,)

        scores = load_scores(result.output_dir / "scores_test.jsonl")
        weights = read_classifier_weights(result.output_dir / "classifier_weights.tnsr")
        assert weights.shape == (TOY_CLASSES, TOY_DEPTH)
        assert all(v.shape == (TOY_CLASSES,) for v in scores.values())

    def test_undecodable_image_skipped_and_logged(self, dataset, tmp_path, caplog):
        root, listing = dataset
        broken_root = tmp_path / "broken_images"
        broken_root.mkdir()
        for p in root.glob("*.png"):
            (broken_root / p.name).write_bytes(p.read_bytes())
        (broken_root / "broken.png").write_bytes(b"this is not an image")
        lines = listing.read_text().strip().split("\n")
        lines.append(
            json.dumps({"image_id": "broken.png", "class_label": 0, "split": "train"})
        )
        broken_listing = broken_root / "listing.jsonl"
        broken_listing.write_text("\n".join(lines) + "\n")
        with caplog.at_level("WARNING"):
            result = extract_features(
                make_job((broken_root, broken_listing), tmp_path / "exp")
            )
        assert result.skipped == ["broken.png"]
        assert any("broken.png" in message for message in caplog.messages)
        records = load_manifest(result.manifest)
        assert all(r.image_id != "broken.png" for r in records)

    def test_listed_file_missing_aborts(self, dataset, tmp_path):
        from psol.errors import DataError

        root, listing = dataset
        lines = listing.read_text().strip().split("\n")
        lines.append(
            json.dumps({"image_id": "ghost.png", "class_label": 0, "split": "train"})
        )
        bad_listing = tmp_path / "listing.jsonl"
        bad_listing.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="ghost.png"):
            extract_features(make_job((root, bad_listing), tmp_path / "exp"))

    def test_pipeline_consumes_export(self, dataset, tmp_path):
        result = extract_features(make_job(dataset, tmp_path / "exp"))
        assert psol_main(["generate-boxes", "--config", str(result.config)]) == 0
        boxes = (result.output_dir / "out" / "pseudo_boxes.jsonl").read_text()
        assert len(boxes.strip().split("\n")) == 8
        # CAM path works because the toy backbone exports GAP-head weights
        assert psol_main([
            "generate-boxes", "--config", str(result.config), "--method", "cam",
            "--out", str(result.output_dir / "out" / "cam_boxes.jsonl"),
        ]) == 0

    def test_job_file_round_trip(self, dataset, tmp_path):
        root, listing = dataset
        job_path = tmp_path / "job.json"
        job_path.write_text(
            json.dumps(
                {
                    "image_root": str(root),
                    "listing": str(listing),
                    "output_dir": str(tmp_path / "exp"),
                    "backbone": "toy",
                    "pretrained": False,
                    "ddt_input_size": 64,
                    "cls_resize": 48,
                    "cls_input_size": 32,
                }
            )
        )
        job = load_job(job_path)
        assert job.backbone == "toy"
        assert job.ddt_input_size == 64

    def test_unknown_backbone(self, dataset, tmp_path):
        from psol.errors import ConfigError

        with pytest.raises(ConfigError, match="unknown backbone"):
            extract_features(make_job(dataset, tmp_path / "x", backbone="alexnet"))
