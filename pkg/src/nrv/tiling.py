"""Overlap tiling and seam-free stitching.

A volume's lateral plane is partitioned into d x d core regions (z is never
tiled). Each core is handed to downstream processing as a (d+2*delta)^2 input
tile, clamp-padded at the borders. Each input tile further decomposes into
four corner-anchored quadrants plus one centered tile, all (d+delta)^2; a
processed center can be reassembled from quarter crops of the four processed
quadrants. Stitching writes each core back exactly once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nrv.volume import Kind, Volume3D, combine_provenance, load_volume, save_volume

__all__ = [
    "TileSpec",
    "QuadrantSet",
    "split_tiles",
    "make_quadrants",
    "assemble_center",
    "stitch",
    "write_tile_manifest",
    "read_tile_manifest",
]


@dataclass(frozen=True)
class TileSpec:
    """Geometry of one tile: core edge d, margin delta, depth z, core origin
    (x, y) in parent coordinates, and the parent's full dims."""

    d: int
    delta: int
    z: int
    origin: tuple[int, int]
    parent_dims: tuple[int, int, int]

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("d must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.d % 2 or self.delta % 2:
            raise ValueError("d and delta must be even")
        if self.z <= 0:
            raise ValueError("z must be positive")

    @property
    def input_edge(self) -> int:
        return self.d + 2 * self.delta

    def core_slices(self) -> tuple[slice, slice]:
        """Core region clipped to the parent plane."""
        ox, oy = self.origin
        nx, ny, _ = self.parent_dims
        return (slice(ox, min(ox + self.d, nx)),
                slice(oy, min(oy + self.d, ny)))


@dataclass(frozen=True)
class QuadrantSet:
    top_left: Volume3D
    top_right: Volume3D
    bottom_left: Volume3D
    bottom_right: Volume3D
    center: Volume3D | None = None

    def corners(self) -> tuple[Volume3D, Volume3D, Volume3D, Volume3D]:
        return (self.top_left, self.top_right, self.bottom_left, self.bottom_right)


def split_tiles(v: Volume3D, d: int, delta: int) -> list[tuple[TileSpec, Volume3D]]:
    """Decompose ``v`` into overlapping input tiles whose d x d cores
    partition the lateral plane. Edge tiles are clamp-padded."""
    if d <= 0 or delta < 0 or d % 2 or delta % 2:
        raise ValueError("d must be positive and both d and delta even")
    nx, ny, nz = v.dims
    edge = d + 2 * delta
    if nx < edge or ny < edge:
        raise ValueError(
            f"volume {v.dims} smaller than one input tile ({edge}x{edge})")
    ncx = math.ceil(nx / d)
    ncy = math.ceil(ny / d)
    padded = np.pad(
        v.data,
        ((delta, ncx * d - nx + delta), (delta, ncy * d - ny + delta), (0, 0)),
        mode="edge")
    out = []
    for i in range(ncx):
        for j in range(ncy):
            spec = TileSpec(d, delta, nz, (i * d, j * d), v.dims)
            block = padded[i * d:i * d + edge, j * d:j * d + edge, :]
            out.append((spec, Volume3D(block, v.spacing, v.kind, v.provenance)))
    return out


def _crop(tile: Volume3D, x0: int, y0: int, edge: int) -> Volume3D:
    return Volume3D(tile.data[x0:x0 + edge, y0:y0 + edge, :],
                    tile.spacing, tile.kind, tile.provenance)


def make_quadrants(tile: Volume3D, d: int, delta: int) -> QuadrantSet:
    """Four corner-anchored (d+delta)^2 crops plus the centered one."""
    edge = d + 2 * delta
    if tile.dims[0] != edge or tile.dims[1] != edge:
        raise ValueError(
            f"tile edge mismatch: expected {edge}, got {tile.dims[:2]}")
    q = d + delta
    h = delta // 2
    return QuadrantSet(
        top_left=_crop(tile, 0, 0, q),
        top_right=_crop(tile, delta, 0, q),
        bottom_left=_crop(tile, 0, delta, q),
        bottom_right=_crop(tile, delta, delta, q),
        center=_crop(tile, h, h, q),
    )


def assemble_center(quads: QuadrantSet, d: int, delta: int) -> Volume3D:
    """Rebuild the (d+delta)^2 center tile from quarter crops of the four
    processed quadrants.

    Each crop is the quadrant region that coincides with one quarter of the
    center tile in parent coordinates, so identity-processed quadrants
    reassemble the center exactly.
    """
    q = d + delta
    c = q // 2
    for vol in quads.corners():
        if vol.dims[0] != q or vol.dims[1] != q:
            raise ValueError(
                f"quadrant edge mismatch: expected {q}, got {vol.dims[:2]}")
    tl, tr, bl, br = quads.corners()
    hd = delta // 2
    hc = d // 2
    nz = tl.dims[2]
    out = np.empty((q, q, nz), dtype=tl.data.dtype)
    out[0:c, 0:c, :] = tl.data[hd:hd + c, hd:hd + c, :]
    out[c:q, 0:c, :] = tr.data[hc:hc + c, hd:hd + c, :]
    out[0:c, c:q, :] = bl.data[hd:hd + c, hc:hc + c, :]
    out[c:q, c:q, :] = br.data[hc:hc + c, hc:hc + c, :]
    prov = combine_provenance(*(v.provenance for v in quads.corners()))
    return Volume3D(out, tl.spacing, tl.kind, prov)


def stitch(tiles: list[tuple[TileSpec, Volume3D]]) -> Volume3D:
    """Write every tile's central d x d core into the parent plane.

    Accepts processed tiles of any lateral edge >= d with the same center
    (edge - d must be even). Validates that cores cover the parent exactly
    once before writing anything.
    """
    if not tiles:
        raise ValueError("no tiles to stitch")
    spec0, vol0 = tiles[0]
    nx, ny, nz = spec0.parent_dims
    if spec0.z != nz:
        raise ValueError("tile depth must equal parent depth")
    coverage = np.zeros((nx, ny), dtype=np.int32)
    for spec, vol in tiles:
        if spec.parent_dims != spec0.parent_dims or spec.d != spec0.d:
            raise ValueError("tiles disagree on parent geometry")
        if vol.kind != vol0.kind or vol.data.dtype != vol0.data.dtype:
            raise ValueError("tiles disagree on kind/dtype")
        sx, sy = spec.core_slices()
        coverage[sx, sy] += 1
    if (coverage > 1).any():
        raise ValueError("coverage overlap: some voxels written more than once")
    if (coverage == 0).any():
        raise ValueError("coverage gap: some voxels never written")
    out = np.empty((nx, ny, nz), dtype=vol0.data.dtype)
    for spec, vol in tiles:
        ex, ey = vol.dims[0], vol.dims[1]
        if ex < spec.d or ey < spec.d or (ex - spec.d) % 2 or (ey - spec.d) % 2:
            raise ValueError(
                f"processed tile edge {(ex, ey)} incompatible with core {spec.d}")
        if vol.dims[2] != nz:
            raise ValueError("processed tile depth mismatch")
        mx = (ex - spec.d) // 2
        my = (ey - spec.d) // 2
        sx, sy = spec.core_slices()
        wx = sx.stop - sx.start
        wy = sy.stop - sy.start
        out[sx, sy, :] = vol.data[mx:mx + wx, my:my + wy, :]
    prov = combine_provenance(*(v.provenance for _, v in tiles))
    return Volume3D(out, vol0.spacing, vol0.kind, prov)


def write_tile_manifest(tiles, out_dir: str | Path) -> Path:
    """Save tiles as .nrv files plus a manifest.json describing the grid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec0 = tiles[0][0]
    entries = []
    for i, (spec, vol) in enumerate(tiles):
        name = f"tile_{i:04d}.nrv"
        save_volume(vol, out_dir / name)
        entries.append({"origin": list(spec.origin), "file": name})
    manifest = {
        "d": spec0.d,
        "delta": spec0.delta,
        "z": spec0.z,
        "parent_dims": list(spec0.parent_dims),
        "tiles": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_tile_manifest(path: str | Path) -> list[tuple[TileSpec, Volume3D]]:
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent
    tiles = []
    for entry in doc["tiles"]:
        spec = TileSpec(int(doc["d"]), int(doc["delta"]), int(doc["z"]),
                        tuple(entry["origin"]), tuple(doc["parent_dims"]))
        tiles.append((spec, load_volume(base / entry["file"])))
    return tiles
