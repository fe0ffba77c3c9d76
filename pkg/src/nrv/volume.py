"""Dense scalar volumes with physical spacing, the .nrv container format,
histogram analytics, and piecewise-linear intensity normalization.

Arrays are indexed ``[x, y, z]`` with shape ``(nx, ny, nz)``; voxel ``(i, j, k)``
sits at physical position ``(i*sx, j*sy, k*sz)`` micrometers. On disk the
payload is little-endian, x-fastest.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Kind",
    "Provenance",
    "Direction",
    "Volume3D",
    "HistogramSummary",
    "load_volume",
    "save_volume",
    "volume_bytes",
    "volume_from_bytes",
    "histogram",
    "nearest_rank_percentile",
    "nonlinear_rescale",
    "foreground_mask",
]

_DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4")}


class Kind(str, Enum):
    RAW = "raw"
    NORMALIZED = "normalized"


class Provenance(str, Enum):
    REAL = "real"
    PREDICTED = "predicted"
    MORPHED = "morphed"


class Direction(str, Enum):
    """Age-translation direction, shared by predictors and morphing."""

    YOUNG_TO_OLD = "young_to_old"
    OLD_TO_YOUNG = "old_to_young"


def combine_provenance(*tags: Provenance) -> Provenance:
    """Most-derived tag wins: morphed > predicted > real.

    Guarantees predicted/morphed inputs can never yield a real output.
    """
    if Provenance.MORPHED in tags:
        return Provenance.MORPHED
    if Provenance.PREDICTED in tags:
        return Provenance.PREDICTED
    return Provenance.REAL


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Immutable voxel grid. ``data`` has shape (nx, ny, nz)."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    kind: Kind
    provenance: Provenance

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got shape {data.shape}")
        if data.dtype == np.uint16:
            pass
        elif data.dtype in (np.float32, np.float64):
            data = data.astype(np.float32, copy=False)
        else:
            raise ValueError(f"unsupported dtype {data.dtype}; use uint16 or float32")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.kind == Kind.NORMALIZED:
            if data.dtype == np.uint16:
                raise ValueError("normalized volumes must be float32")
            if data.size and (float(data.min()) < 0.0 or float(data.max()) > 1.0):
                raise ValueError("normalized volume has values outside [0, 1]")
        data = data.copy(order="F")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def dtype_tag(self) -> str:
        return "u16" if self.data.dtype == np.uint16 else "f32"

    def with_data(self, data: np.ndarray, kind: Kind | None = None,
                  provenance: Provenance | None = None) -> "Volume3D":
        """New volume sharing spacing, with kind/provenance overridable."""
        return Volume3D(data, self.spacing,
                        kind if kind is not None else self.kind,
                        provenance if provenance is not None else self.provenance)


@dataclass(frozen=True)
class HistogramSummary:
    percentiles: dict[int, float] = field(repr=False)
    mean: float = 0.0
    stddev: float = 0.0
    max: float = 0.0

    def to_dict(self) -> dict:
        return {
            "percentiles": {str(p): v for p, v in self.percentiles.items()},
            "mean": self.mean,
            "stddev": self.stddev,
            "max": self.max,
        }


def _header_dict(v: Volume3D) -> dict:
    return {
        "dims": list(v.dims),
        "spacing_um": list(v.spacing),
        "dtype": v.dtype_tag,
        "kind": v.kind.value,
        "provenance": v.provenance.value,
    }


def volume_bytes(v: Volume3D) -> bytes:
    """Serialize to the nrv container: one JSON header line + raw payload."""
    header = json.dumps(_header_dict(v), separators=(",", ":")) + "\n"
    payload = np.ascontiguousarray(v.data.ravel(order="F")).astype(
        _DTYPES[v.dtype_tag], copy=False).tobytes()
    return header.encode("utf-8") + payload


def volume_from_bytes(blob: bytes) -> Volume3D:
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError("malformed header: no newline-terminated JSON line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed header: {exc}") from exc
    try:
        dims = tuple(int(n) for n in header["dims"])
        spacing = tuple(float(s) for s in header["spacing_um"])
        dtype_tag = header["dtype"]
        kind = Kind(header["kind"])
        provenance = Provenance(header["provenance"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed header: {exc}") from exc
    if len(dims) != 3:
        raise ValueError(f"malformed header: dims must have 3 entries, got {dims}")
    if dtype_tag not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype_tag!r}")
    dtype = _DTYPES[dtype_tag]
    payload = blob[nl + 1:]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"payload size mismatch: header dims {dims} need {expected} bytes, "
            f"got {len(payload)}")
    flat = np.frombuffer(payload, dtype=dtype)
    data = flat.reshape(dims, order="F")
    if dtype_tag == "f32":
        data = data.astype(np.float32, copy=False)
    return Volume3D(data, spacing, kind, provenance)


def save_volume(v: Volume3D, path: str | Path) -> None:
    Path(path).write_bytes(volume_bytes(v))


def load_volume(path: str | Path) -> Volume3D:
    return volume_from_bytes(Path(path).read_bytes())


def nearest_rank_percentile(sorted_values: np.ndarray, p: float) -> float:
    """Smallest value with at least p% of samples at or below it.

    ``sorted_values`` must be ascending and non-empty.
    """
    n = sorted_values.size
    rank = max(1, int(np.ceil(p * n / 100.0)))
    return float(sorted_values[rank - 1])


def histogram(v: Volume3D) -> HistogramSummary:
    if v.data.size == 0:
        raise ValueError("histogram of empty volume")
    flat = np.sort(v.data.ravel().astype(np.float64, copy=False))
    percentiles = {p: nearest_rank_percentile(flat, p) for p in range(101)}
    return HistogramSummary(
        percentiles=percentiles,
        mean=float(flat.mean()),
        stddev=float(flat.std()),
        max=float(flat[-1]),
    )


def nonlinear_rescale(v: Volume3D) -> Volume3D:
    """Two-segment intensity map: [0, p95] onto [0, 0.75], (p95, max] onto
    (0.75, 1.0]. Output is a normalized float volume.

    An all-zero input normalizes to all zeros (warned, not an error), so
    batch pipelines survive blank sections.
    """
    if v.kind != Kind.RAW:
        raise ValueError("nonlinear_rescale expects a raw volume")
    data = v.data.astype(np.float64, copy=False)
    vmax = float(data.max()) if data.size else 0.0
    if vmax <= 0.0:
        warnings.warn("degenerate histogram (max == 0): rescaling to all zeros")
        out = np.zeros(v.dims, dtype=np.float32)
        return Volume3D(out, v.spacing, Kind.NORMALIZED, v.provenance)
    p95 = nearest_rank_percentile(np.sort(data.ravel()), 95)
    out = np.empty(v.dims, dtype=np.float64)
    low = data <= p95
    if p95 > 0.0:
        out[low] = 0.75 * data[low] / p95
    else:
        out[low] = 0.0
    if vmax > p95:
        high = ~low
        out[high] = 0.75 + 0.25 * (data[high] - p95) / (vmax - p95)
    out = np.clip(out, 0.0, 1.0)
    return Volume3D(out.astype(np.float32), v.spacing, Kind.NORMALIZED, v.provenance)


def foreground_mask(v: Volume3D, threshold: float) -> np.ndarray:
    """Boolean mask of voxels strictly above ``threshold``."""
    if v.kind != Kind.NORMALIZED:
        raise ValueError("foreground_mask expects a normalized volume")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return v.data > threshold
