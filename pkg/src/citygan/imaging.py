"""Pixel conversion and image grid assembly.

All tensors in this package store pixels as float32 in [-1, 1], shaped
(3, H, W) or (N, 3, H, W). Files on disk are 8-bit RGB.
"""

import io

import numpy as np
from PIL import Image

SEPARATOR_PX = 2


def normalize_pixels(raster):
    """Map 8-bit pixel values to [-1, 1]: v -> v / 127.5 - 1."""
    return np.asarray(raster, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)


def denormalize_pixels(values):
    """Map [-1, 1] values back to 8-bit: round((v + 1) * 127.5), clamped to [0, 255]."""
    v = (np.asarray(values, dtype=np.float32) + np.float32(1.0)) * np.float32(127.5)
    return np.clip(np.rint(v), 0, 255).astype(np.uint8)


def chw_to_hwc(image):
    return np.transpose(np.asarray(image), (1, 2, 0))


def hwc_to_chw(image):
    return np.transpose(np.asarray(image), (2, 0, 1))


def load_rgb(path):
    """Decode an image file to a (H, W, 3) uint8 array.

    Grayscale inputs are replicated to 3 channels; alpha is dropped.
    """
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_png(raster):
    """Encode a (H, W, 3) uint8 array as PNG bytes."""
    raster = np.ascontiguousarray(raster, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(raster, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(raster, path):
    with open(path, "wb") as fh:
        fh.write(encode_png(raster))


def assemble_grid(cells, separator=SEPARATOR_PX):
    """Tile normalized image cells into one 8-bit RGB raster.

    Args:
        cells: array-like of shape (rows, cols, 3, S, S) with values in [-1, 1].
        separator: width of the black border drawn between adjacent cells.

    Returns:
        (H, W, 3) uint8 array; no border on the outer edge.
    """
    cells = np.asarray(cells, dtype=np.float32)
    if cells.ndim != 5 or cells.shape[2] != 3:
        raise ValueError(f"expected (rows, cols, 3, S, S) cells, got {cells.shape}")
    rows, cols, _, height, width = cells.shape
    out_h = rows * height + (rows - 1) * separator
    out_w = cols * width + (cols - 1) * separator
    grid = np.zeros((out_h, out_w, 3), dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            y = r * (height + separator)
            x = c * (width + separator)
            grid[y:y + height, x:x + width] = chw_to_hwc(denormalize_pixels(cells[r, c]))
    return grid
