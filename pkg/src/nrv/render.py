"""Slice rendering shared by the HTTP service and the report command.

Slices come out as 8-bit PNGs: grayscale by default, RGB when a transfer
function maps intensity to color and opacity. Both consumers go through
the same functions so their bytes agree.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from nrv.views import TransferFunction
from nrv.volume import Volume3D

__all__ = ["AXES", "take_slice", "slice_image", "slice_png"]

AXES = {"x": 0, "y": 1, "z": 2}


def take_slice(volume: Volume3D, axis: str, index: int) -> np.ndarray:
    """2-D plane at the given index; raises IndexError outside the volume."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}, got {axis!r}")
    a = AXES[axis]
    if not 0 <= index < volume.dims[a]:
        raise IndexError(
            f"index {index} outside [0, {volume.dims[a]}) on axis {axis}")
    sel = [slice(None)] * 3
    sel[a] = index
    return volume.data[tuple(sel)]


def _intensity_scale(volume: Volume3D) -> float:
    if volume.dtype_tag == "u16":
        peak = float(volume.data.max())
        return peak if peak > 0 else 1.0
    return 1.0


def slice_image(volume: Volume3D, axis: str, index: int,
                tf: TransferFunction | None = None,
                gamma: float = 1.0) -> Image.Image:
    """Render one slice to a PIL image (rows follow the second plane axis)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    plane = take_slice(volume, axis, index).astype(np.float64)
    scale = _intensity_scale(volume)
    unit = np.clip(plane / scale, 0.0, 1.0)
    if gamma != 1.0:
        unit = unit ** gamma
    if tf is None:
        gray = np.rint(unit * 255.0).astype(np.uint8)
        return Image.fromarray(gray.T, mode="L")
    # 256-entry lookup tables keep per-pixel evaluation out of Python
    xs = np.linspace(0.0, 1.0, 256) * scale
    opacity = np.array([tf.opacity(x) for x in xs])
    color = np.array([tf.color(x) for x in xs])
    lut = np.rint(color * opacity[:, None] * 255.0).astype(np.uint8)
    idx = np.rint(unit * 255.0).astype(np.uint8)
    rgb = lut[idx]
    return Image.fromarray(np.swapaxes(rgb, 0, 1), mode="RGB")


def slice_png(volume: Volume3D, axis: str, index: int,
              tf: TransferFunction | None = None,
              gamma: float = 1.0) -> bytes:
    buf = io.BytesIO()
    slice_image(volume, axis, index, tf=tf, gamma=gamma).save(buf,
                                                              format="PNG")
    return buf.getvalue()
