"""Heatmap rendering of variance matrices.

The matrix is drawn like an image with cell (0, 0) at the bottom-left, so
row i grows upward and column j rightward, matching the orientation the
matrices are meant to be read in.  Output is binary PPM (P6) by default so
tests can be bit-exact with no codec dependency; ``.png`` paths switch to a
minimal stdlib PNG encoding of the same pixels.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .varmat import VarianceMatrix

#: low-to-high color anchors, interpolated linearly at t = 0, .25, .5, .75, 1
COLOR_ANCHORS = np.array(
    [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
    dtype=np.float64,
)
_ANCHOR_T = np.linspace(0.0, 1.0, len(COLOR_ANCHORS))


def colormap(t: np.ndarray) -> np.ndarray:
    """Map t in [0, 1] to RGB uint8 along the anchor path."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    channels = [np.interp(t, _ANCHOR_T, COLOR_ANCHORS[:, c]) for c in range(3)]
    rgb = np.stack(channels, axis=-1)
    return np.floor(rgb + 0.5).astype(np.uint8)


def _delta(matrix) -> np.ndarray:
    return matrix.delta if isinstance(matrix, VarianceMatrix) else np.asarray(matrix, dtype=np.float64)


def matrix_pixels(matrix, scale_max: float | None = None) -> np.ndarray:
    """(n+1, n+1, 3) uint8 pixels, image row 0 at the top = matrix row n.

    Values are normalized by ``scale_max`` (default: the matrix maximum); an
    all-zero matrix maps uniformly to the low-end anchor color.
    """
    d = _delta(matrix)
    scale = float(d.max()) if scale_max is None else float(scale_max)
    t = np.zeros_like(d) if scale == 0 else d / scale
    return colormap(t[::-1, :])  # flip so matrix row 0 lands at the image bottom


def _write_ppm(pixels: np.ndarray, out: Path) -> None:
    h, w, _ = pixels.shape
    out.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes())


def _write_png(pixels: np.ndarray, out: Path) -> None:
    h, w, _ = pixels.shape
    raw = b"".join(b"\x00" + pixels[y].tobytes() for y in range(h))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)  # 8-bit RGB
    out.write_bytes(
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )


def _write_image(pixels: np.ndarray, out: str | Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".png":
        _write_png(pixels, out)
    else:
        _write_ppm(pixels, out)
    return out


def render_matrix(matrix, out: str | Path, scale_max: float | None = None) -> Path:
    """One pixel per matrix cell; deterministic bytes for equal inputs."""
    return _write_image(matrix_pixels(matrix, scale_max), out)


def render_grid(rows, out: str | Path, scale_max: float | None = None) -> Path:
    """Contact sheet: one grid row per plane, one column per model.

    ``rows`` is a list of equal-length lists of matrices, all the same
    size; cells are separated by 2-pixel black gutters.  Cells normalize
    per-matrix unless a shared ``scale_max`` is given.
    """
    if not rows or not rows[0]:
        raise ValueError("empty matrix grid")
    n_cols = len(rows[0])
    if any(len(row) != n_cols for row in rows):
        raise ValueError("ragged matrix grid")
    cells = [[matrix_pixels(m, scale_max) for m in row] for row in rows]
    size = cells[0][0].shape[0]
    if any(cell.shape[0] != size for row in cells for cell in row):
        raise ValueError("mixed matrix sizes in grid")
    gutter = 2
    height = len(rows) * size + (len(rows) - 1) * gutter
    width = n_cols * size + (n_cols - 1) * gutter
    sheet = np.zeros((height, width, 3), dtype=np.uint8)
    for r, row in enumerate(cells):
        for c, cell in enumerate(row):
            y = r * (size + gutter)
            x = c * (size + gutter)
            sheet[y : y + size, x : x + size] = cell
    return _write_image(sheet, out)
