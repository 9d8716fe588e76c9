"""
Dreammap resample module. Provides align-corners bilinear upscaling of grid maps.

Output sample `o` along an axis of input length `n` and output length `m` reads the
input at the continuous coordinate `o * (n - 1) / (m - 1)`, so the first and last
samples coincide with the input's corners. The coordinate is split into an integer
part and a fraction using integer arithmetic, which makes every output sample whose
source coordinate is integral an exact copy of the input sample.
"""


import numpy as np

from .errors import ConfigError

SCALE_FACTORS = (1, 2, 4, 8, 16)


def _axis_weights(in_len, out_len):
    """Lower source index, upper source index and upper weight for each output sample."""

    out = np.arange(out_len)

    if in_len == 1:
        zeros = np.zeros(out_len, dtype=np.int64)
        return zeros, zeros, np.zeros(out_len)

    num = out * (in_len - 1)
    den = out_len - 1
    lower = num // den
    frac = (num % den) / den
    upper = np.minimum(lower + 1, in_len - 1)

    return lower, upper, frac


def bilinear_upscale(grid_map, factor):
    """Upscale a map by an integer factor from `SCALE_FACTORS` (align-corners bilinear)."""

    if factor not in SCALE_FACTORS:
        raise ConfigError(f"unsupported scale factor {factor}, expected one of {SCALE_FACTORS}")

    if factor == 1:
        return grid_map

    values = grid_map.values
    height, width = values.shape

    row_lo, row_hi, row_w = _axis_weights(height, factor * height)
    col_lo, col_hi, col_w = _axis_weights(width, factor * width)

    rows = values[row_lo, :] * (1.0 - row_w)[:, None] + values[row_hi, :] * row_w[:, None]
    out = rows[:, col_lo] * (1.0 - col_w)[None, :] + rows[:, col_hi] * col_w[None, :]

    # convex combinations can overshoot the input range by an ulp
    out = np.clip(out, values.min(), values.max())

    return grid_map.with_values(out)
