"""Synthetic tube phantoms: rasterization, a degeneration operator
(thinning + fragmentation), widefield-style blur, and predictor backends
that stand in for a trained translation network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from nrv.volume import Direction, Kind, Provenance, Volume3D, load_volume

__all__ = [
    "TubeSpec",
    "DegenerationParams",
    "PredictorBackend",
    "SyntheticOracle",
    "ExternalFile",
    "rasterize_tubes",
    "degenerate",
    "degenerate_specs",
    "widefield_blur",
    "predict",
    "tube_specs_from_obj",
    "load_tube_specs",
    "degeneration_params_from_obj",
    "load_degeneration_params",
]

# shoulder sigma is half the local radius; beyond _CUTOFF_RADII the
# contribution is < 3e-4 and skipped
_SHOULDER = 0.5
_CUTOFF_RADII = 3.0


@dataclass(frozen=True)
class TubeSpec:
    """Polyline tube in micrometer coordinates with per-vertex radius."""

    centerline: tuple[tuple[float, float, float], ...]
    radius_profile: tuple[float, ...]
    intensity: float = 1.0

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.centerline)
        radii = tuple(float(r) for r in self.radius_profile)
        if len(pts) < 2:
            raise ValueError("centerline needs at least 2 points")
        if len(radii) != len(pts):
            raise ValueError("radius_profile length must match centerline")
        if any(r <= 0 for r in radii):
            raise ValueError("radius must be positive everywhere")
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError(f"intensity must be in (0, 1], got {self.intensity}")
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "radius_profile", radii)
        if self.arclength() <= 0.0:
            raise ValueError("centerline has zero arclength")

    def arclength(self) -> float:
        pts = np.asarray(self.centerline)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


@dataclass(frozen=True)
class DegenerationParams:
    fragment_fraction: float
    gap_length_um: float
    thinning_factor: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fragment_fraction <= 1.0:
            raise ValueError("fragment_fraction must be in [0, 1]")
        if self.gap_length_um <= 0:
            raise ValueError("gap_length_um must be positive")
        if not 0.0 < self.thinning_factor <= 1.0:
            raise ValueError("thinning_factor must be in (0, 1]")


def _check_bounds(specs, dims, spacing):
    extent = tuple((n - 1) * s for n, s in zip(dims, spacing))
    for ti, tube in enumerate(specs):
        for p in tube.centerline:
            if any(c < 0 or c > e for c, e in zip(p, extent)):
                raise ValueError(
                    f"tube {ti} outside bounds: point {p} not within {extent}")


def _segment_falloff(acc, a, b, ra, rb, intensity, spacing):
    """Max-combine one segment's contribution into ``acc`` (in place)."""
    dims = acc.shape
    margin = _CUTOFF_RADII * max(ra, rb)
    lo = np.minimum(a, b) - margin
    hi = np.maximum(a, b) + margin
    i0 = [max(int(math.floor(lo[d] / spacing[d])), 0) for d in range(3)]
    i1 = [min(int(math.ceil(hi[d] / spacing[d])), dims[d] - 1) for d in range(3)]
    if any(i1[d] < i0[d] for d in range(3)):
        return
    ax = [(np.arange(i0[d], i1[d] + 1) * spacing[d]) for d in range(3)]
    dx = (ax[0] - a[0])[:, None, None]
    dy = (ax[1] - a[1])[None, :, None]
    dz = (ax[2] - a[2])[None, None, :]
    ab = b - a
    ab2 = float(ab @ ab)
    if ab2 > 0.0:
        t = np.clip((dx * ab[0] + dy * ab[1] + dz * ab[2]) / ab2, 0.0, 1.0)
    else:
        t = np.zeros((len(ax[0]), len(ax[1]), len(ax[2])))
    ex = dx - t * ab[0]
    ey = dy - t * ab[1]
    ez = dz - t * ab[2]
    dist = np.sqrt(ex * ex + ey * ey + ez * ez)
    radius = ra + t * (rb - ra)
    excess = np.maximum(dist - radius, 0.0) / (_SHOULDER * radius)
    contrib = intensity * np.exp(-0.5 * excess * excess)
    contrib[dist > _CUTOFF_RADII * radius] = 0.0
    region = acc[i0[0]:i1[0] + 1, i0[1]:i1[1] + 1, i0[2]:i1[2] + 1]
    np.maximum(region, contrib, out=region)


def rasterize_tubes(specs, dims, spacing,
                    provenance: Provenance = Provenance.REAL) -> Volume3D:
    """Render tubes into a normalized volume.

    Intensity is 1 inside the local radius with a Gaussian shoulder outside
    (sigma half the radius); overlapping tubes max-combine, so the result is
    independent of tube order.
    """
    dims = tuple(int(n) for n in dims)
    spacing = tuple(float(s) for s in spacing)
    _check_bounds(specs, dims, spacing)
    acc = np.zeros(dims, dtype=np.float64)
    for tube in specs:
        pts = [np.asarray(p, dtype=np.float64) for p in tube.centerline]
        for i in range(len(pts) - 1):
            _segment_falloff(acc, pts[i], pts[i + 1],
                             tube.radius_profile[i], tube.radius_profile[i + 1],
                             tube.intensity, spacing)
    return Volume3D(acc.astype(np.float32), spacing, Kind.NORMALIZED, provenance)


def _cut_gaps(length, target, mean_gap, rng):
    """Remove ~``target`` arclength from [0, length] as exponential-sized gaps
    at uniform positions. Returns kept intervals, ordered."""
    kept = [(0.0, length)]
    removed = 0.0
    for _ in range(10_000):
        if removed >= target - 1e-9 or not kept:
            break
        gap = min(rng.exponential(mean_gap), target - removed)
        if gap <= 0.0:
            break
        total = sum(b - a for a, b in kept)
        u = rng.uniform(0.0, total)
        for idx, (a, b) in enumerate(kept):
            if u <= (b - a) or idx == len(kept) - 1:
                start = a + min(u, b - a)
                end = min(start + gap, b)
                removed += end - start
                pieces = []
                if start - a > 1e-9:
                    pieces.append((a, start))
                if b - end > 1e-9:
                    pieces.append((end, b))
                kept[idx:idx + 1] = pieces
                break
            u -= b - a
    return kept


def _subpolyline(tube: TubeSpec, a: float, b: float) -> TubeSpec | None:
    """Extract the arclength window [a, b] of a tube, interpolating endpoints."""
    pts = [np.asarray(p, dtype=np.float64) for p in tube.centerline]
    radii = list(tube.radius_profile)
    out_pts: list[tuple[float, float, float]] = []
    out_r: list[float] = []

    def emit(p, r):
        out_pts.append(tuple(p))
        out_r.append(r)

    s = 0.0
    for i in range(len(pts) - 1):
        seg = float(np.linalg.norm(pts[i + 1] - pts[i]))
        s0, s1 = s, s + seg
        if seg > 0.0 and s1 > a and s0 < b:
            ta = max((a - s0) / seg, 0.0)
            tb = min((b - s0) / seg, 1.0)
            if not out_pts:
                emit(pts[i] + ta * (pts[i + 1] - pts[i]),
                     radii[i] + ta * (radii[i + 1] - radii[i]))
            emit(pts[i] + tb * (pts[i + 1] - pts[i]),
                 radii[i] + tb * (radii[i + 1] - radii[i]))
        s = s1
    if len(out_pts) < 2:
        return None
    return TubeSpec(tuple(out_pts), tuple(out_r), tube.intensity)


def degenerate_specs(specs, p: DegenerationParams) -> list[TubeSpec]:
    """Thin and fragment tube specs; deterministic in the seed."""
    rng = np.random.default_rng(p.seed)
    out: list[TubeSpec] = []
    for tube in specs:
        if p.fragment_fraction == 0.0:
            pieces = [tube]
        else:
            length = tube.arclength()
            kept = _cut_gaps(length, p.fragment_fraction * length,
                             p.gap_length_um, rng)
            pieces = []
            for a, b in kept:
                if b - a <= 1e-9:
                    continue
                piece = _subpolyline(tube, a, b)
                if piece is not None:
                    pieces.append(piece)
        for piece in pieces:
            out.append(TubeSpec(
                piece.centerline,
                tuple(r * p.thinning_factor for r in piece.radius_profile),
                piece.intensity))
    return out


def degenerate(v_young: Volume3D, specs, p: DegenerationParams) -> Volume3D:
    """Degenerated re-render of ``v_young``'s tubes: radii scaled by the
    thinning factor, centerline intervals removed as gaps.

    Output foreground is contained in the input foreground at any threshold
    (clamped voxelwise to guarantee it through float round-off).
    """
    old_specs = degenerate_specs(specs, p)
    raster = rasterize_tubes(old_specs, v_young.dims, v_young.spacing,
                             provenance=v_young.provenance)
    data = np.minimum(raster.data, v_young.data)
    return Volume3D(data, v_young.spacing, Kind.NORMALIZED, v_young.provenance)


def widefield_blur(v: Volume3D, sigma_xy_um: float, sigma_z_um: float) -> Volume3D:
    """Separable Gaussian blur with clamp-to-edge borders, sigmas in
    micrometers. Axial sigma must be at least the lateral one."""
    if sigma_xy_um < 0 or sigma_z_um < 0:
        raise ValueError("sigmas must be non-negative")
    if sigma_z_um < sigma_xy_um:
        raise ValueError("axial sigma must be >= lateral sigma")
    sig_vox = (sigma_xy_um / v.spacing[0], sigma_xy_um / v.spacing[1],
               sigma_z_um / v.spacing[2])
    data = v.data.astype(np.float64, copy=False)
    blurred = ndimage.gaussian_filter(data, sigma=sig_vox, mode="nearest")
    if v.kind == Kind.NORMALIZED:
        out = np.clip(blurred, 0.0, 1.0).astype(np.float32)
    else:
        out = np.clip(np.rint(blurred), 0, 65535).astype(np.uint16)
    return Volume3D(out, v.spacing, v.kind, v.provenance)


class PredictorBackend:
    """Marker base for predict() backends."""


@dataclass(frozen=True)
class SyntheticOracle(PredictorBackend):
    """Ground-truth backend: applies or undoes the degeneration operator."""

    specs: tuple[TubeSpec, ...]
    params: DegenerationParams

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))


@dataclass(frozen=True)
class ExternalFile(PredictorBackend):
    """Loads a precomputed prediction volume from disk."""

    path: str


def predict(v_in: Volume3D, direction: Direction,
            backend: PredictorBackend) -> Volume3D:
    """Age-translate a volume via the given backend; output is tagged as a
    prediction regardless of the input tag."""
    if isinstance(backend, SyntheticOracle):
        if direction == Direction.YOUNG_TO_OLD:
            out = degenerate(v_in, backend.specs, backend.params)
        else:
            out = rasterize_tubes(backend.specs, v_in.dims, v_in.spacing)
        return Volume3D(out.data, v_in.spacing, out.kind, Provenance.PREDICTED)
    if isinstance(backend, ExternalFile):
        path = Path(backend.path)
        if not path.exists():
            raise FileNotFoundError(f"prediction file not found: {path}")
        loaded = load_volume(path)
        if loaded.dims != v_in.dims:
            raise ValueError(
                f"dims mismatch: prediction {loaded.dims} vs input {v_in.dims}")
        if loaded.spacing != v_in.spacing:
            raise ValueError(
                f"spacing mismatch: prediction {loaded.spacing} vs input {v_in.spacing}")
        return Volume3D(loaded.data, loaded.spacing, loaded.kind,
                        Provenance.PREDICTED)
    raise TypeError(f"unknown predictor backend {type(backend).__name__}")


def tube_specs_from_obj(doc) -> list[TubeSpec]:
    """Parse tube specs from decoded JSON: a list of objects with
    ``centerline`` (Nx3, micrometers), ``radius`` (scalar or per-vertex
    list), and optional ``intensity``."""
    if not isinstance(doc, list):
        raise ValueError("tube specs must be a JSON list")
    specs = []
    for entry in doc:
        centerline = tuple(tuple(float(c) for c in p) for p in entry["centerline"])
        radius = entry["radius"]
        if isinstance(radius, (int, float)):
            profile = tuple(float(radius) for _ in centerline)
        else:
            profile = tuple(float(r) for r in radius)
        specs.append(TubeSpec(centerline, profile,
                              float(entry.get("intensity", 1.0))))
    return specs


def load_tube_specs(path: str | Path) -> list[TubeSpec]:
    return tube_specs_from_obj(json.loads(Path(path).read_text()))


def degeneration_params_from_obj(doc) -> DegenerationParams:
    return DegenerationParams(
        fragment_fraction=float(doc["fragment_fraction"]),
        gap_length_um=float(doc["gap_length_um"]),
        thinning_factor=float(doc["thinning_factor"]),
        seed=int(doc.get("seed", 0)),
    )


def load_degeneration_params(path: str | Path) -> DegenerationParams:
    return degeneration_params_from_obj(json.loads(Path(path).read_text()))
