"""Volume preprocessing: resampling, standardization, frame selection.

Resampling is separable linear interpolation with half-voxel centers:
output index i samples input coordinate (i + 0.5) * in/out - 0.5,
clamped to the valid range.  Applied along each axis in turn this is
exactly trilinear (bilinear for slices).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .volume_io import VoxelVolume

VARIANCE_FLOOR = 1e-6


def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(coords, 0.0, n_in - 1)


def _interp_axis(data: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = data.shape[axis]
    if n_in == n_out:
        return data
    coords = _axis_coords(n_in, n_out)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = coords - lo
    shape = [1] * data.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    lower = np.take(data, lo, axis=axis)
    upper = np.take(data, hi, axis=axis)
    return (1.0 - frac) * lower + frac * upper


def resize_array(data: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """Linear resample of an N-D array to target_shape."""
    if len(target_shape) != data.ndim:
        raise ConfigError(
            f"target rank {len(target_shape)} != data rank {data.ndim}")
    if any(int(s) <= 0 for s in target_shape):
        raise ConfigError(f"non-positive target shape {target_shape}")
    out = data.astype(np.float64, copy=False)
    for axis, n_out in enumerate(target_shape):
        out = _interp_axis(out, int(n_out), axis)
    return out


def standardize(data: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance scaling with a variance floor.

    Constant inputs standardize to all zeros rather than erroring.
    """
    values = data.astype(np.float64, copy=False)
    mean = values.mean()
    var = values.var()
    return (values - mean) / np.sqrt(max(var, VARIANCE_FLOOR))


def preprocess_volume(volume: VoxelVolume,
                      target_shape: tuple[int, int, int]) -> VoxelVolume:
    """Trilinear resize to target_shape, then per-volume standardization."""
    resized = resize_array(volume.voxels, tuple(target_shape))
    return VoxelVolume(voxels=standardize(resized).astype(np.float32),
                       plane=volume.plane)


def select_frames(volume: VoxelVolume | np.ndarray, n: int) -> np.ndarray:
    """The n centered depth slices, in depth order, as an (n, H, W) array."""
    vox = volume.voxels if isinstance(volume, VoxelVolume) else np.asarray(volume)
    depth = vox.shape[0]
    if n <= 0 or n > depth:
        raise ConfigError(f"cannot select {n} frames from depth {depth}")
    start = (depth - n) // 2
    return vox[start:start + n]


def resize_slice(slice_2d: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of one 2D slice."""
    slice_2d = np.asarray(slice_2d)
    if slice_2d.ndim != 2:
        raise ConfigError(f"expected a 2D slice, got {slice_2d.ndim} dims")
    return resize_array(slice_2d, (out_h, out_w))
