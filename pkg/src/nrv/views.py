"""Surface extraction, transfer-function presets, bounded masking, and the
fiber-density metric.

Meshes carry the same domain and provenance tags as the volumes they came
from, so downstream viewers can keep the predicted-data warning attached.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
from skimage import measure

from nrv.vesselness import Domain
from nrv.volume import HistogramSummary, Kind, Provenance, Volume3D

__all__ = [
    "TriMesh",
    "TransferFunction",
    "extract_isosurface",
    "default_tf",
    "bounded_mask",
    "fiber_density",
    "percentage_difference",
    "mesh_to_obj",
]

_AREA_EPS = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with vertices in micrometers."""

    vertices: np.ndarray          # (V, 3) float64
    faces: np.ndarray             # (F, 3) int64
    domain: Domain | None = None
    provenance: Provenance | None = None

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    def _edge_multiset(self):
        edges = {}
        for tri in self.faces:
            a, b, c = (int(v) for v in tri)
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edges[key] = edges.get(key, 0) + 1
        return edges

    def euler_characteristic(self) -> int:
        return self.vertex_count - len(self._edge_multiset()) + self.face_count

    def is_closed(self) -> bool:
        """True when every edge is shared by exactly two triangles."""
        edges = self._edge_multiset()
        return bool(edges) and all(n == 2 for n in edges.values())

    def surface_area(self) -> float:
        if not self.face_count:
            return 0.0
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return float(0.5 * np.linalg.norm(cross, axis=1).sum())


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear opacity and color ramps over [0, 1] intensity.

    Duplicate intensities encode a step; evaluation is left-continuous at
    the step so the earlier point wins at the shared intensity.
    """

    opacity_points: tuple[tuple[float, float], ...]
    color_points: tuple[tuple[float, tuple[float, float, float]], ...]

    def __post_init__(self):
        if len(self.opacity_points) < 2 or len(self.color_points) < 2:
            raise ValueError("transfer function needs at least two points")
        for pts in (self.opacity_points, self.color_points):
            xs = [p[0] for p in pts]
            if any(b < a for a, b in zip(xs, xs[1:])):
                raise ValueError("control points must be sorted by intensity")
        for _, o in self.opacity_points:
            if not 0.0 <= o <= 1.0:
                raise ValueError(f"opacity {o} outside [0, 1]")

    @staticmethod
    def _segment(points, x):
        xs = [p[0] for p in points]
        if x <= xs[0]:
            return points[0], points[0], 0.0
        if x >= xs[-1]:
            # left-continuous: exact hits on a duplicated x take the
            # earlier point, so search from the left
            i = bisect.bisect_left(xs, x)
            if i < len(xs) and xs[i] == x:
                return points[i], points[i], 0.0
            return points[-1], points[-1], 0.0
        i = bisect.bisect_left(xs, x)
        if xs[i] == x:
            return points[i], points[i], 0.0
        lo, hi = points[i - 1], points[i]
        t = (x - lo[0]) / (hi[0] - lo[0])
        return lo, hi, t

    def opacity(self, x: float) -> float:
        lo, hi, t = self._segment(self.opacity_points, float(x))
        return lo[1] + (hi[1] - lo[1]) * t

    def color(self, x: float) -> tuple[float, float, float]:
        lo, hi, t = self._segment(self.color_points, float(x))
        return tuple(a + (b - a) * t for a, b in zip(lo[1], hi[1]))

    def to_dict(self) -> dict:
        return {
            "opacity": [[x, o] for x, o in self.opacity_points],
            "color": [[x, list(c)] for x, c in self.color_points],
        }


def extract_isosurface(field: Volume3D, iso: float,
                       domain: Domain | None = None) -> TriMesh:
    """Marching-cubes triangulation of the iso level, vertices in µm."""
    if field.kind != Kind.NORMALIZED:
        raise ValueError("isosurface extraction expects a normalized volume")
    if not 0.0 < iso < 1.0:
        raise ValueError(f"iso level must be inside (0, 1), got {iso}")
    data = field.data
    empty = TriMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64),
                    domain=domain, provenance=field.provenance)
    if float(data.max()) <= iso or float(data.min()) >= iso:
        return empty
    vertices, faces, _, _ = measure.marching_cubes(
        np.ascontiguousarray(data, dtype=np.float64), level=float(iso),
        spacing=field.spacing, allow_degenerate=False)
    if not len(faces):
        return empty
    tri = vertices[faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    faces = faces[areas > _AREA_EPS]
    return TriMesh(vertices, faces, domain=domain, provenance=field.provenance)


_DOMAIN_COLORS = {
    Domain.YOUNG: (0.0, 1.0, 0.0),
    Domain.OLD: (1.0, 0.0, 0.0),
}


def default_tf(domain: Domain, hist: HistogramSummary) -> TransferFunction:
    """Preset ramp: 0 to 0.75 up to the 95th percentile, 0.76 to 1 above,
    colored black to green (young) or black to red (old)."""
    p95 = float(hist.percentiles[95])
    vmax = float(hist.max)
    tint = _DOMAIN_COLORS[Domain(domain)]
    if vmax <= 0.0:
        return TransferFunction(
            opacity_points=((0.0, 0.0), (1.0, 0.75)),
            color_points=((0.0, (0.0, 0.0, 0.0)), (1.0, tint)))
    if p95 <= 0.0 or p95 >= vmax:
        opacity = ((0.0, 0.0), (vmax, 0.75))
    else:
        opacity = ((0.0, 0.0), (p95, 0.75), (p95, 0.76), (vmax, 1.0))
    return TransferFunction(
        opacity_points=opacity,
        color_points=((0.0, (0.0, 0.0, 0.0)), (vmax, tint)))


def bounded_mask(raw: Volume3D, bounds: np.ndarray) -> Volume3D:
    """Zero out everything outside the mask, keeping kind and provenance."""
    bounds = np.asarray(bounds, dtype=bool)
    if bounds.shape != raw.dims:
        raise ValueError(f"dims mismatch: {bounds.shape} vs {raw.dims}")
    data = np.where(bounds, raw.data, raw.data.dtype.type(0))
    return Volume3D(data, raw.spacing, raw.kind, raw.provenance)


def fiber_density(mask: np.ndarray) -> float:
    """Foreground fraction of the region, as a percentage."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValueError("density of an empty region is undefined")
    return float(mask.sum()) / float(mask.size) * 100.0


def percentage_difference(d_young: float, d_old: float) -> float:
    """Relative young-to-old density drop, in percent of the young value."""
    if d_young == 0:
        raise ValueError("young density must be positive")
    return (d_young - d_old) / d_young * 100.0


def mesh_to_obj(mesh: TriMesh) -> str:
    """ASCII OBJ with domain/provenance comment headers."""
    lines = []
    if mesh.domain is not None:
        lines.append(f"# domain: {mesh.domain.value}")
    if mesh.provenance is not None:
        lines.append(f"# provenance: {mesh.provenance.value}")
    lines.append(f"# vertices: {mesh.vertex_count} faces: {mesh.face_count}")
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return "\n".join(lines) + "\n"
