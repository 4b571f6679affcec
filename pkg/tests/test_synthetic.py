import json
from pathlib import Path

import numpy as np

from oracles import dense_pca
from psol.evaluation import rank_of_label
from psol.synthetic import PlantedBoxParams, make_synthetic_fixture
from psol.tensor_io import (
    discover_class_files,
    load_manifest,
    load_scores,
    read_pooled_features,
    read_tensor_file,
)


def all_file_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_fixed_seed_reproduces_byte_identical_files(tmp_path):
    kwargs = dict(
        seed=42, n_classes=2, images_per_class=10, depth=8, grid=10,
        net_input_size=80, box_params=PlantedBoxParams(min_cells=3, max_cells=6),
    )
    make_synthetic_fixture(tmp_path / "a", **kwargs)
    make_synthetic_fixture(tmp_path / "b", **kwargs)
    a, b = all_file_bytes(tmp_path / "a"), all_file_bytes(tmp_path / "b")
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], f"{name} differs between runs"


def test_planted_direction_recoverable_by_dense_pca(small_fixture):
    with open(small_fixture.meta) as f:
        meta = json.load(f)
    directions = np.asarray(meta["directions"])
    files = discover_class_files(small_fixture.features_train_dir)
    for label, path in files.items():
        maps = read_tensor_file(path, require_uniform_depth=True)
        descriptors = np.concatenate([m.values.reshape(-1, m.d) for m in maps])
        _, leading, _ = dense_pca(descriptors)
        cos = abs(float(np.dot(leading, directions[label])))
        assert cos >= 0.99


def test_planted_box_areas_within_configured_bounds(small_fixture):
    with open(small_fixture.meta) as f:
        meta = json.load(f)
    params = meta["box_params"]
    grid = meta["grid"]
    for record in load_manifest(small_fixture.manifest):
        gt = record.gt_box
        w_cells = gt.w / record.orig_width * grid
        h_cells = gt.h / record.orig_height * grid
        assert params["min_cells"] - 1e-6 <= w_cells <= params["max_cells"] + 1e-6
        assert params["min_cells"] - 1e-6 <= h_cells <= params["max_cells"] + 1e-6
        assert gt.x + gt.w <= record.orig_width
        assert gt.y + gt.h <= record.orig_height


def test_manifest_splits_and_coverage(small_fixture):
    records = load_manifest(small_fixture.manifest)
    with open(small_fixture.meta) as f:
        meta = json.load(f)
    n_train = meta["n_train_per_class"]
    per_class_train = {}
    for r in records:
        if r.split == "train":
            per_class_train[r.class_label] = per_class_train.get(r.class_label, 0) + 1
    assert all(v == n_train for v in per_class_train.values())
    pooled_train = read_pooled_features(small_fixture.pooled_train)
    pooled_test = read_pooled_features(small_fixture.pooled_test)
    assert set(pooled_train) == {r.image_id for r in records if r.split == "train"}
    assert set(pooled_test) == {r.image_id for r in records if r.split == "test"}


def test_feature_files_cover_their_split(small_fixture):
    records = load_manifest(small_fixture.manifest)
    for split, directory in (
        ("train", small_fixture.features_train_dir),
        ("test", small_fixture.features_test_dir),
    ):
        files = discover_class_files(directory)
        for label, path in files.items():
            expected = {
                r.image_id for r in records
                if r.split == split and r.class_label == label
            }
            got = {m.image_id for m in read_tensor_file(path)}
            assert got == expected


def test_scores_accuracy_near_configured(tmp_path):
    fixture = make_synthetic_fixture(
        tmp_path / "acc",
        seed=3, n_classes=4, images_per_class=100, depth=6, grid=8,
        net_input_size=64, box_params=PlantedBoxParams(min_cells=2, max_cells=5),
        scores_top1_accuracy=0.7,
    )
    records = {r.image_id: r for r in load_manifest(fixture.manifest)}
    scores = load_scores(fixture.scores_test)
    hits = [
        rank_of_label(vec, records[image_id].class_label) == 1
        for image_id, vec in scores.items()
    ]
    assert abs(np.mean(hits) - 0.7) < 0.15
