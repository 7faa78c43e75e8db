"""Separable 1-D resampling operators.

Every mode is expressed as a dense ``(n_out, n_in)`` matrix so that resizing
a frame is two matrix products and its adjoint is the transposed products.
Samples that fall outside the frame replicate the nearest edge pixel.
"""

from typing import Literal, get_args

import numpy as np

from .constants.defaults import CUBIC_A
from .errors import ConfigError

ResizeMode = Literal['bilinear', 'nearest', 'bicubic', 'area']
RESIZE_MODES: tuple[ResizeMode, ...] = get_args(ResizeMode)


def cubic_kernel(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Evaluate the Keys cubic convolution kernel.

    Args:
        x (np.ndarray): Signed distances to the sample position.
        a (float): Kernel constant; -0.5 gives the Catmull-Rom spline.

    Returns:
        np.ndarray: Kernel weights, zero for ``|x| >= 2``.
    """
    ax = np.abs(np.asarray(x, dtype=np.float64))
    inner = ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
    outer = ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def _source_positions(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centres
    return (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    ratio = n_in / n_out
    cells = np.arange(n_in, dtype=np.float64)
    for i in range(n_out):
        lo, hi = i * ratio, (i + 1) * ratio
        overlap = np.clip(np.minimum(hi, cells + 1.0) - np.maximum(lo, cells), 0.0, None)
        matrix[i] = overlap / (hi - lo)
    return matrix


def resample_matrix(n_in: int, n_out: int, mode: ResizeMode) -> np.ndarray:
    """Build the matrix that resamples a length-``n_in`` signal to ``n_out`` samples.

    Args:
        n_in (int): Input length.
        n_out (int): Output length.
        mode (str): One of ``bilinear``, ``nearest``, ``bicubic``, ``area``.

    Returns:
        np.ndarray: Float64 matrix of shape ``(n_out, n_in)`` whose rows sum to 1.

    Raises:
        ConfigError: If the mode is unknown or a length is not positive.
    """
    if n_in < 1 or n_out < 1:
        msg = f'Resample lengths must be positive, got {n_in} -> {n_out}'
        raise ConfigError(msg)
    if mode not in RESIZE_MODES:
        msg = f'Unknown resize mode {mode!r}; expected one of {", ".join(RESIZE_MODES)}'
        raise ConfigError(msg)

    if mode == 'area':
        return _area_matrix(n_in, n_out)

    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    if mode == 'nearest':
        matrix[rows, np.minimum((rows * n_in) // n_out, n_in - 1)] = 1.0
        return matrix

    src = _source_positions(n_in, n_out)
    base = np.floor(src)
    frac = src - base
    base = base.astype(np.int64)
    if mode == 'bilinear':
        taps = ((0, 1.0 - frac), (1, frac))
    else:
        taps = tuple((offset, cubic_kernel(frac - offset)) for offset in (-1, 0, 1, 2))
    for offset, weight in taps:
        np.add.at(matrix, (rows, np.clip(base + offset, 0, n_in - 1)), weight)
    return matrix


def resample_planes(planes: np.ndarray, out_h: int, out_w: int, mode: ResizeMode) -> np.ndarray:
    """Resample the last two axes of an array.

    Args:
        planes (np.ndarray): Array shaped ``(..., h, w)``.
        out_h (int): Output height.
        out_w (int): Output width.
        mode (str): Resampling mode.

    Returns:
        np.ndarray: Float64 array shaped ``(..., out_h, out_w)``.
    """
    mh = resample_matrix(planes.shape[-2], out_h, mode)
    mw = resample_matrix(planes.shape[-1], out_w, mode)
    return np.einsum('...hw,Hh,Ww->...HW', planes.astype(np.float64), mh, mw, optimize=True)
