"""Axis-aligned boxes and the coordinate transforms between box spaces.

Three box spaces appear in the pipeline:

* heat-map pixels (the grid a box was extracted from, side ``net_input_size``),
* original-image pixels (where ground truth lives),
* the unit square (regression targets).

Boxes are continuous rectangles ``[x, x+w] x [y, y+h]``; a box produced by
counting mask pixels (column range c0..c1 gives x=c0, w=c1-c0+1) covers the
same region under this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

# Smallest box side, in pixels, that denormalize_box will emit.
MIN_BOX_SIDE = 1.0


@dataclass(frozen=True)
class BoxXYWH:
    """Pixel-space box: top-left corner (x, y), width w, height h."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)):
            if not math.isfinite(v):
                raise ValidationError(f"box field {name} is not finite: {v!r}")
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"box origin must be >= 0, got ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box sides must be > 0, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class NormalizedBox:
    """Box with every component scaled into [0, 1] by the image dimensions."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)):
            if not math.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValidationError(
                    f"normalized box field {name} must be in [0, 1], got {v!r}"
                )


def normalize_box(box: BoxXYWH, image_w: float, image_h: float) -> NormalizedBox:
    """Divide box coordinates by the image dimensions.

    The box must lie inside [0, image_w] x [0, image_h].
    """
    if image_w <= 0 or image_h <= 0:
        raise ValidationError(f"image dims must be positive, got {image_w}x{image_h}")
    if box.x + box.w > image_w or box.y + box.h > image_h:
        raise ValidationError(
            f"box {box} exceeds image bounds {image_w}x{image_h}"
        )
    return NormalizedBox(
        x=box.x / image_w, y=box.y / image_h, w=box.w / image_w, h=box.h / image_h
    )


def denormalize_box(nb: NormalizedBox, image_w: float, image_h: float) -> BoxXYWH:
    """Scale a normalized box back to pixels and clamp it inside the image.

    Width and height are floored at MIN_BOX_SIDE so the result is always a
    valid box, then the origin is shifted so the box fits.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValidationError(f"image dims must be positive, got {image_w}x{image_h}")
    w = min(max(nb.w * image_w, min(MIN_BOX_SIDE, image_w)), image_w)
    h = min(max(nb.h * image_h, min(MIN_BOX_SIDE, image_h)), image_h)
    x = min(max(nb.x * image_w, 0.0), image_w - w)
    y = min(max(nb.y * image_h, 0.0), image_h - h)
    return BoxXYWH(x=x, y=y, w=w, h=h)


def map_box_to_image(
    box: BoxXYWH, net_input_size: float, orig_w: float, orig_h: float
) -> BoxXYWH:
    """Rescale a box from net-input pixels to original-image pixels.

    x and w scale by orig_w / net_input_size, y and h by orig_h /
    net_input_size; the corners are clipped into the image afterwards.
    """
    if net_input_size <= 0:
        raise ValidationError(f"net_input_size must be positive, got {net_input_size}")
    if box.x + box.w > net_input_size or box.y + box.h > net_input_size:
        raise ValidationError(
            f"box {box} lies outside the {net_input_size}x{net_input_size} input grid"
        )
    sx = orig_w / net_input_size
    sy = orig_h / net_input_size
    x0 = min(max(box.x * sx, 0.0), orig_w)
    y0 = min(max(box.y * sy, 0.0), orig_h)
    x1 = min(max((box.x + box.w) * sx, 0.0), orig_w)
    y1 = min(max((box.y + box.h) * sy, 0.0), orig_h)
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"box {box} collapsed while mapping to {orig_w}x{orig_h}")
    return BoxXYWH(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def full_image_box(orig_w: float, orig_h: float) -> BoxXYWH:
    return BoxXYWH(x=0.0, y=0.0, w=float(orig_w), h=float(orig_h))
