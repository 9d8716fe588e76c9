"""Dreammap heatmap module. Writes maps as 8-bit binary PGM images, one pixel per cell."""


import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CROSS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


def heatmap_pixels(grid_map, marks=()):
    """
    Min-max scaled uint8 pixels of a map, with each marked cell drawn as an inverted cross.

    A map with zero range scales to all zeros. Cross arms falling outside the map are clipped;
    a pixel covered by several crosses is inverted once.
    """

    values = grid_map.values
    lo, hi = float(values.min()), float(values.max())

    if hi > lo:
        pixels = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pixels = np.zeros(values.shape, dtype=np.uint8)

    height, width = pixels.shape
    inverted = np.zeros(pixels.shape, dtype=bool)
    for cell in marks:
        row, col = divmod(int(cell), width)
        for dr, dc in CROSS:
            r, c = row + dr, col + dc
            if 0 <= r < height and 0 <= c < width:
                inverted[r, c] = True

    pixels[inverted] = 255 - pixels[inverted]

    return pixels


def export_heatmap(grid_map, marks, path):
    """Write a map as a binary PGM (P5) heatmap with the `marks` cells crossed."""

    pixels = heatmap_pixels(grid_map, marks)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")

    Path(path).write_bytes(header + pixels.tobytes())

    logger.debug("wrote %dx%d heatmap to %s", pixels.shape[0], pixels.shape[1], path)

    return Path(path)
