from pathlib import Path

from psol.synthetic import make_synthetic_fixture
from psol.tensor_io import discover_class_files, read_tensor_file
from psol_extractor.cli import main


def file_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_make_fixture_cli_matches_library(tmp_path):
    code = main([
        "make-fixture", "--out", str(tmp_path / "cli"), "--seed", "11",
        "--classes", "2", "--images-per-class", "8", "--depth", "6",
        "--grid", "8", "--net-input-size", "64",
        "--min-cells", "3", "--max-cells", "6",
    ])
    assert code == 0
    from psol.synthetic import PlantedBoxParams

    make_synthetic_fixture(
        tmp_path / "lib",
        seed=11, n_classes=2, images_per_class=8, depth=6, grid=8,
        net_input_size=64, box_params=PlantedBoxParams(min_cells=3, max_cells=6),
    )
    cli_files = file_bytes(tmp_path / "cli")
    lib_files = file_bytes(tmp_path / "lib")
    assert cli_files.keys() == lib_files.keys()
    for name in cli_files:
        assert cli_files[name] == lib_files[name], name


def test_fixture_features_reread_bit_exactly(tmp_path):
    assert main([
        "make-fixture", "--out", str(tmp_path / "fx"), "--seed", "3",
        "--classes", "2", "--images-per-class", "6", "--depth", "5",
        "--grid", "8", "--net-input-size", "64",
        "--min-cells", "3", "--max-cells", "6",
    ]) == 0
    for split in ("train", "test"):
        files = discover_class_files(tmp_path / "fx" / "features" / split)
        for path in files.values():
            first = read_tensor_file(path, require_uniform_depth=True)
            second = read_tensor_file(path, require_uniform_depth=True)
            for a, b in zip(first, second):
                assert a.image_id == b.image_id
                assert a.values.tobytes() == b.values.tobytes()
