"""Masking augmentation for grayscale line images.

Random full-height spans of a line image are replaced by uniform noise; the
number of spans follows a binomial whose trial count is the image width, so
wider lines get proportionally more masking.  Three canonical settings trade
span count against span width at constant expected coverage.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_HEIGHT = 40

SETTINGS = {
    "half": (2.5e-3, (5, 80)),
    "base": (5e-3, (5, 40)),
    "double": (10e-3, (5, 20)),
}


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class LineImage:
    """H x W grayscale pixels, uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageError(f"expected a 2-d H x W image, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ImageError(f"pixels must be uint8, got {arr.dtype}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class MaskingParams:
    """Span-count probability and span-width range.

    The binomial trial count is the image width, fixed at application time.
    """

    success_probability: float
    width_range: tuple[int, int] = (5, 40)

    def __post_init__(self):
        p = float(self.success_probability)
        if not 0.0 <= p < 1.0:
            raise ImageError(f"success_probability must be in [0, 1), got {p}")
        lo, hi = self.width_range
        if not (isinstance(lo, int) and isinstance(hi, int)) or lo < 1 or lo > hi:
            raise ImageError(f"width_range must be integers 1 <= lo <= hi, got {self.width_range}")
        object.__setattr__(self, "success_probability", p)
        object.__setattr__(self, "width_range", (lo, hi))
        if p * hi >= 1.0:
            warnings.warn(
                f"success_probability {p} with max width {hi} expects to cover "
                "the whole image; masking will dominate",
                stacklevel=2,
            )


def masking_setting(name: str) -> MaskingParams:
    """The canonical half/base/double settings (equal expected coverage)."""
    try:
        p, width_range = SETTINGS[name]
    except KeyError:
        raise ImageError(f"unknown setting {name!r}, expected one of {sorted(SETTINGS)}") from None
    return MaskingParams(success_probability=p, width_range=width_range)


def draw_mask_regions(width: int, params: MaskingParams, rng) -> list[tuple[int, int]]:
    """Draw the spans one masking pass would use, as (left, span_width) pairs.

    The count comes from Binomial(width, success_probability); each span then
    draws a left edge uniform over [0, width-1] and a span width uniform over
    the width range.  Spans may overlap and may poke past the right border;
    clipping is the caller's business.
    """
    count = int(rng.binomial(width, params.success_probability))
    lo, hi = params.width_range
    return [
        (int(rng.integers(0, width)), int(rng.integers(lo, hi + 1)))
        for _ in range(count)
    ]


def mask_line(image: LineImage, params: MaskingParams, seed: int) -> LineImage:
    """Mask random spans of the image, deterministically for a given seed.

    All spans are drawn first, then each is filled in draw order with
    independent uniform noise over the full height, clipped at the right
    border.  Overlapping spans are allowed; later fills win.
    """
    rng = np.random.default_rng(seed)
    regions = draw_mask_regions(image.width, params, rng)
    if not regions:
        return LineImage(pixels=image.pixels)
    out = image.pixels.copy()
    for left, width in regions:
        stop = min(left + width, image.width)
        out[:, left:stop] = rng.integers(0, 256, size=(image.height, stop - left), dtype=np.uint8)
    return LineImage(pixels=out)


def write_pgm(image: LineImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (image.width, image.height))
        fh.write(np.ascontiguousarray(image.pixels).tobytes())


def read_pgm(path) -> LineImage:
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"^P5\s+(?:#[^\n]*\n\s*)?(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ImageError(f"{path}: not a binary PGM file")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ImageError(f"{path}: only 8-bit PGM supported, maxval {maxval}")
    payload = data[m.end() :]
    if len(payload) != width * height:
        raise ImageError(f"{path}: payload size {len(payload)} != {width}x{height}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return LineImage(pixels=arr)
