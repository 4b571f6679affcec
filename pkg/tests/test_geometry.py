import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psol.errors import ValidationError
from psol.geometry import (
    BoxXYWH,
    NormalizedBox,
    denormalize_box,
    full_image_box,
    map_box_to_image,
    normalize_box,
)


def test_box_validation():
    with pytest.raises(ValidationError):
        BoxXYWH(-1, 0, 10, 10)
    with pytest.raises(ValidationError):
        BoxXYWH(0, 0, 0, 10)
    with pytest.raises(ValidationError):
        BoxXYWH(0, 0, float("nan"), 10)
    with pytest.raises(ValidationError):
        NormalizedBox(0.5, 0.5, 1.2, 0.5)


def test_normalize_direct_division():
    nb = normalize_box(BoxXYWH(56, 56, 112, 112), 224, 224)
    assert (nb.x, nb.y, nb.w, nb.h) == (0.25, 0.25, 0.5, 0.5)


def test_normalize_full_image():
    nb = normalize_box(full_image_box(640, 480), 640, 480)
    assert (nb.x, nb.y, nb.w, nb.h) == (0.0, 0.0, 1.0, 1.0)


def test_normalize_rejects_out_of_range():
    with pytest.raises(ValidationError):
        normalize_box(BoxXYWH(200, 0, 100, 50), 224, 224)


def test_denormalize_full_image():
    box = denormalize_box(NormalizedBox(0, 0, 1, 1), 320, 200)
    assert (box.x, box.y, box.w, box.h) == (0, 0, 320, 200)


def test_denormalize_enforces_min_side():
    box = denormalize_box(NormalizedBox(0.5, 0.5, 0.0001, 0.0001), 100, 100)
    assert box.w >= 1.0 and box.h >= 1.0
    assert box.x + box.w <= 100 and box.y + box.h <= 100


def test_denormalize_clamps_overflow():
    box = denormalize_box(NormalizedBox(0.9, 0.9, 0.5, 0.5), 100, 100)
    assert box.x + box.w <= 100.0
    assert box.y + box.h <= 100.0


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0, 0.8),
    y=st.floats(0, 0.8),
    w=st.floats(0.1, 0.2),
    h=st.floats(0.1, 0.2),
    iw=st.integers(50, 2000),
    ih=st.integers(50, 2000),
)
def test_normalize_denormalize_round_trip(x, y, w, h, iw, ih):
    box = BoxXYWH(x * iw, y * ih, w * iw, h * ih)
    back = denormalize_box(normalize_box(box, iw, ih), iw, ih)
    assert abs(back.x - box.x) < 1e-6 * iw
    assert abs(back.y - box.y) < 1e-6 * ih
    assert abs(back.w - box.w) < 1e-6 * iw
    assert abs(back.h - box.h) < 1e-6 * ih


class TestMapBoxToImage:
    def test_identity_when_dims_match(self):
        box = BoxXYWH(10, 20, 30, 40)
        out = map_box_to_image(box, 448, 448, 448)
        assert out == box

    def test_pure_scaling(self):
        out = map_box_to_image(BoxXYWH(0, 0, 224, 224), 448, 896, 448)
        assert (out.x, out.y, out.w, out.h) == (0, 0, 448, 224)

    def test_border_box_stays_in_bounds(self):
        out = map_box_to_image(BoxXYWH(447, 447, 1, 1), 448, 500, 300)
        assert out.x + out.w <= 500
        assert out.y + out.h <= 300

    def test_rejects_box_outside_grid(self):
        with pytest.raises(ValidationError):
            map_box_to_image(BoxXYWH(400, 0, 100, 10), 448, 448, 448)
