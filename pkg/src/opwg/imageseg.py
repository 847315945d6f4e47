"""Color image segmentation on CIE L*a*b* features via the streaming pipeline.

Pixels are converted to L*a*b*, streamed through the two-phase clusterer in
groups of four image rows (so memory stays bounded by the prototype count),
and finally labeled pixel by pixel against the offline model. Segmentation
uses color only; pixel positions never enter the feature vector.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .em import FitResult
from .stream import Batch, OpwgConfig, StreamState, finalize, process_batch

ROWS_PER_BATCH = 4


def row_batch_count(height: int) -> int:
    """Number of row-group batches an image of this height streams as."""
    return -(-height // ROWS_PER_BATCH)

# sRGB (IEC 61966-2-1) to XYZ, D65 white point.
_RGB_TO_XYZ = np.array(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ]
)
_WHITE = _RGB_TO_XYZ.sum(axis=1)  # XYZ of (1, 1, 1)
_DELTA = 6.0 / 29.0


def _srgb_linear(channel: np.ndarray) -> np.ndarray:
    channel = channel / 255.0
    return np.where(channel > 0.04045, ((channel + 0.055) / 1.055) ** 2.4, channel / 12.92)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Vectorized sRGB (8-bit channels) to CIE L*a*b*; any leading shape."""
    rgb = np.asarray(pixels, dtype=float)
    linear = _srgb_linear(rgb)
    xyz = linear @ _RGB_TO_XYZ.T / _WHITE
    f = _lab_f(xyz)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def srgb_to_lab(r: int, g: int, b: int) -> tuple[float, float, float]:
    """L*a*b* triple for one 8-bit sRGB color."""
    for v in (r, g, b):
        if not 0 <= v <= 255:
            raise ValueError("channels must be in [0, 255]")
    lab = rgb_to_lab(np.array([r, g, b], dtype=float))
    return float(lab[0]), float(lab[1]), float(lab[2])


def golden_palette(k: int) -> np.ndarray:
    """k visually distinct colors by golden-angle hue rotation, as uint8 RGB."""
    colors = []
    for i in range(k):
        hue = (i * 0.61803398875) % 1.0
        colors.append(colorsys.hsv_to_rgb(hue, 0.85, 0.95))
    return (np.array(colors) * 255).round().astype(np.uint8)


@dataclass
class LabelMap:
    """Per-pixel cluster indices plus a rendering palette."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) ints, each < palette length
    palette: np.ndarray  # (K, 3) uint8
    fit: FitResult | None = None

    def render(self, mode: str = "palette", image: np.ndarray | None = None) -> np.ndarray:
        """RGB rendering: palette colors, or each cluster's mean source color."""
        if mode == "palette":
            return self.palette[self.labels]
        if mode == "mean-color":
            if image is None:
                raise ValueError("mean-color rendering needs the source image")
            out = np.zeros((self.height, self.width, 3), dtype=np.uint8)
            for k in range(self.palette.shape[0]):
                mask = self.labels == k
                if mask.any():
                    out[mask] = image[mask].reshape(-1, 3).mean(axis=0).round().astype(np.uint8)
            return out
        raise ValueError(f"unknown render mode {mode!r}")

    def pixel_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def segment(image: np.ndarray, config: OpwgConfig) -> LabelMap:
    """Segment an (H, W, 3) 8-bit RGB image by color.

    The image is streamed in ROWS_PER_BATCH-row batches (shorter images form a
    single batch); after the offline fit, every pixel is re-read and labeled.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.size == 0:
        raise ValueError("image must be a non-empty (H, W, 3) array")
    height, width = image.shape[:2]

    state = StreamState(config)
    for i, start in enumerate(range(0, height, ROWS_PER_BATCH)):
        rows = image[start : start + ROWS_PER_BATCH]
        lab = rgb_to_lab(rows).reshape(-1, 3)
        process_batch(state, Batch(index=i, points=lab))

    result, label_fn = finalize(state)

    lab_all = rgb_to_lab(image).reshape(-1, 3)
    labels = label_fn(lab_all).reshape(height, width)
    return LabelMap(
        width=width,
        height=height,
        labels=labels,
        palette=golden_palette(result.model.active_k),
        fit=result,
    )


def read_image(path: str) -> np.ndarray:
    """Load a PNG (via Pillow) or binary PPM (P6) as an (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P6":
        return _read_ppm(path)
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_image(path: str, rgb: np.ndarray):
    """Save an (H, W, 3) uint8 array as PPM or PNG, chosen by extension."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if str(path).lower().endswith((".ppm", ".pnm")):
        height, width = rgb.shape[:2]
        with open(path, "wb") as fh:
            fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
            fh.write(rgb.tobytes())
        return
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path)


def _read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        # skip whitespace and '#' comments between header tokens
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError("not a binary PPM (P6) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM images are supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos)
    return pixels.reshape(height, width, 3).copy()
