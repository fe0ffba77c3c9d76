"""Static/dynamic voxel classification, shortest-path anchor assignment, and
sigma-parameterized intermediate volumes for age morphing.

Every dynamic voxel (young-only) is assigned a shortest 26-connected path
through other dynamic voxels to the static set (young-and-old). Scrubbing
sigma then switches path prefixes on or off: growth replays paths outward
from the anchors, decay retracts them. Components with no old counterpart
anchor at their mass-center voxel instead and collapse onto it.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from nrv.vesselness import Domain, NeuriteComponent, connected_components
from nrv.volume import Direction, Kind, Provenance, Volume3D, foreground_mask

__all__ = [
    "VoxelStatus",
    "ComponentPairing",
    "MorphField",
    "classify_voxels",
    "pair_components",
    "mass_center_seed",
    "assign_paths",
    "compute_morph_field",
    "intermediate_volume",
    "save_morph_field",
    "load_morph_field",
]

logger = logging.getLogger(__name__)

NOT_ASSOCIATED = 0
QUEUED = 1
ASSOCIATED = 2


class VoxelStatus:
    """Status codes used by the path assignment sweep."""

    NOT_ASSOCIATED = NOT_ASSOCIATED
    QUEUED = QUEUED
    ASSOCIATED = ASSOCIATED


_OFFSETS = [(dx, dy, dz)
            for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0)]


@dataclass(frozen=True)
class ComponentPairing:
    """A young component and the old components it overlaps (empty = null)."""

    young_id: int
    old_ids: tuple[int, ...]

    @property
    def is_null(self) -> bool:
        return not self.old_ids


@dataclass
class MorphField:
    """Assigned paths for every dynamic voxel of a young/old volume pair.

    Arrays are parallel over the N dynamic voxels. ``pred`` holds the
    compact index of the previous path voxel (-1 when the anchor precedes
    it); ``anchor`` is each voxel's path[0]. ``depth`` counts path voxels
    beyond the anchor and ``max_desc`` is the largest depth in the voxel's
    shortest-path subtree, so activation thresholds depth/max_desc allow
    O(1) sigma scrubbing. ``extra_anchors`` are mass-center seeds of
    null-paired components; they stay on at every sigma.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    threshold: float
    voxels: np.ndarray            # (N, 3) int64
    dist: np.ndarray              # (N,) float64, micrometers
    status: np.ndarray            # (N,) uint8
    pred: np.ndarray              # (N,) int64
    anchor: np.ndarray            # (N, 3) int64
    depth: np.ndarray             # (N,) int64
    max_desc: np.ndarray          # (N,) int64
    young_id: np.ndarray          # (N,) int32
    old_id: np.ndarray            # (N,) int32, -1 for null pairings
    extra_anchors: np.ndarray = field(
        default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    pairings: tuple[ComponentPairing, ...] = ()

    @property
    def count(self) -> int:
        return int(self.voxels.shape[0])

    def path(self, index: int) -> list[tuple[int, int, int]]:
        """Full path [anchor, ..., voxel] for one dynamic voxel."""
        chain = []
        cur = index
        while cur != -1:
            chain.append(tuple(int(c) for c in self.voxels[cur]))
            cur = int(self.pred[cur])
        chain.append(tuple(int(c) for c in self.anchor[index]))
        chain.reverse()
        return chain

    def activation(self) -> np.ndarray:
        """Per-voxel threshold depth/max_desc in (0, 1]."""
        return self.depth / self.max_desc


def classify_voxels(young_mask: np.ndarray,
                    old_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split young foreground into static (shared with old) and dynamic
    (young-only) masks."""
    young_mask = np.asarray(young_mask, dtype=bool)
    old_mask = np.asarray(old_mask, dtype=bool)
    if young_mask.shape != old_mask.shape:
        raise ValueError(
            f"dims mismatch: {young_mask.shape} vs {old_mask.shape}")
    return young_mask & old_mask, young_mask & ~old_mask


def _bbox_overlap(a, b) -> bool:
    return all(a[d][0] <= b[d][1] and b[d][0] <= a[d][1] for d in range(3))


def pair_components(young: list[NeuriteComponent],
                    old: list[NeuriteComponent]) -> list[ComponentPairing]:
    """Match each young component with the old components it intersects.

    Bounding boxes prefilter; actual voxel-set intersection decides. Young
    components with no partner are null-paired.
    """
    pairings = []
    old_sets = {c.id: c.voxel_set() for c in old}
    for yc in young:
        partners = []
        y_voxels = None
        for oc in old:
            if not _bbox_overlap(yc.bbox, oc.bbox):
                continue
            if y_voxels is None:
                y_voxels = yc.voxel_set()
            if y_voxels & old_sets[oc.id]:
                partners.append(oc.id)
        pairings.append(ComponentPairing(yc.id, tuple(sorted(partners))))
    return pairings


def mass_center_seed(component: NeuriteComponent,
                     spacing=(1.0, 1.0, 1.0)) -> tuple[int, int, int]:
    """Component voxel nearest the (spacing-aware) centroid, ties broken
    lexicographically."""
    vox = component.voxels
    if vox.shape[0] == 0:
        raise ValueError("empty component has no mass center")
    sp = np.asarray(spacing, dtype=np.float64)
    pos = vox.astype(np.float64) * sp
    centroid = pos.mean(axis=0)
    d2 = ((pos - centroid) ** 2).sum(axis=1)
    best = np.min(d2)
    candidates = np.nonzero(d2 == best)[0]
    # voxels are stored lexicographically sorted, so the first hit wins ties
    return tuple(int(c) for c in vox[candidates[0]])


def _edge_weights(spacing) -> list[float]:
    sx, sy, sz = spacing
    return [math.sqrt((dx * sx) ** 2 + (dy * sy) ** 2 + (dz * sz) ** 2)
            for dx, dy, dz in _OFFSETS]


def _dijkstra(static_mask, dynamic_mask, spacing, voxels, index_of):
    """Literal min-heap sweep with path exchange over the dynamic voxels.

    Seeds are dynamic voxels 26-adjacent to a static voxel, initialized with
    the connecting edge weight; popping associates a voxel, and any shorter
    arrival re-queues ("path exchange"). Returns parallel arrays.
    """
    n = voxels.shape[0]
    dims = dynamic_mask.shape
    dist = np.full(n, np.inf, dtype=np.float64)
    status = np.full(n, NOT_ASSOCIATED, dtype=np.uint8)
    pred = np.full(n, -1, dtype=np.int64)
    anchor = np.full((n, 3), -1, dtype=np.int64)
    weights = _edge_weights(spacing)

    heap: list[tuple[float, int]] = []
    for i in range(n):
        x, y, z = voxels[i]
        best_w = np.inf
        best_anchor = None
        for (dx, dy, dz), w in zip(_OFFSETS, weights):
            nx, ny, nz = x + dx, y + dy, z + dz
            if 0 <= nx < dims[0] and 0 <= ny < dims[1] and 0 <= nz < dims[2] \
                    and static_mask[nx, ny, nz]:
                if w < best_w or (w == best_w
                                  and (best_anchor is None
                                       or (nx, ny, nz) < best_anchor)):
                    best_w = w
                    best_anchor = (nx, ny, nz)
        if best_anchor is not None:
            dist[i] = best_w
            anchor[i] = best_anchor
            status[i] = QUEUED
            heapq.heappush(heap, (best_w, i))

    neighbor_idx: list[list[int]] = []
    neighbor_w: list[list[float]] = []
    for i in range(n):
        x, y, z = voxels[i]
        nbi = []
        nbw = []
        for (dx, dy, dz), w in zip(_OFFSETS, weights):
            nx, ny, nz = x + dx, y + dy, z + dz
            if 0 <= nx < dims[0] and 0 <= ny < dims[1] and 0 <= nz < dims[2]:
                j = index_of[nx, ny, nz]
                if j >= 0:
                    nbi.append(int(j))
                    nbw.append(w)
        neighbor_idx.append(nbi)
        neighbor_w.append(nbw)

    dist_l = dist.tolist()
    while heap:
        d, u = heapq.heappop(heap)
        if status[u] == ASSOCIATED:
            continue
        status[u] = ASSOCIATED
        for v, w in zip(neighbor_idx[u], neighbor_w[u]):
            nd = d + w
            if nd < dist_l[v]:
                dist_l[v] = nd
                pred[v] = u
                anchor[v] = anchor[u]
                status[v] = QUEUED
                heapq.heappush(heap, (nd, v))
    dist = np.asarray(dist_l, dtype=np.float64)
    return dist, status, pred, anchor


def _compute_depths(pred: np.ndarray, dist: np.ndarray):
    """Path voxel counts and subtree maxima from the predecessor forest."""
    n = pred.shape[0]
    depth = np.zeros(n, dtype=np.int64)
    order = np.argsort(dist, kind="stable")
    for i in order:
        p = pred[i]
        depth[i] = 1 if p < 0 else depth[p] + 1
    max_desc = depth.copy()
    for i in order[::-1]:
        p = pred[i]
        if p >= 0 and max_desc[i] > max_desc[p]:
            max_desc[p] = max_desc[i]
    return depth, max_desc


def assign_paths(static_mask: np.ndarray, dynamic_mask: np.ndarray,
                 spacing) -> MorphField:
    """Assign every dynamic voxel a shortest path to the static set.

    Dynamic voxels unreachable through dynamic-only steps fall back to the
    mass center of their own stranded region (logged), which then behaves
    like a static anchor.
    """
    static_mask = np.asarray(static_mask, dtype=bool)
    dynamic_mask = np.asarray(dynamic_mask, dtype=bool)
    if static_mask.shape != dynamic_mask.shape:
        raise ValueError("dims mismatch between static and dynamic masks")
    if (static_mask & dynamic_mask).any():
        raise ValueError("static and dynamic sets must be disjoint")
    dims = static_mask.shape
    voxels = np.argwhere(dynamic_mask).astype(np.int64)
    order = np.lexsort((voxels[:, 2], voxels[:, 1], voxels[:, 0]))
    voxels = voxels[order]
    index_of = np.full(dims, -1, dtype=np.int64)
    index_of[voxels[:, 0], voxels[:, 1], voxels[:, 2]] = np.arange(len(voxels))

    dist, status, pred, anchor = _dijkstra(static_mask, dynamic_mask, spacing,
                                           voxels, index_of)

    extra_anchors = np.empty((0, 3), dtype=np.int64)
    unreached = ~np.isfinite(dist)
    if unreached.any():
        logger.warning("%d dynamic voxels unreachable from the static set; "
                       "anchoring stranded regions at their mass centers",
                       int(unreached.sum()))
        stranded_mask = np.zeros(dims, dtype=bool)
        sv = voxels[unreached]
        stranded_mask[sv[:, 0], sv[:, 1], sv[:, 2]] = True
        anchors = []
        anchor_indices = []
        pseudo_static = np.zeros(dims, dtype=bool)
        for comp in connected_components(stranded_mask):
            seed = mass_center_seed(comp, spacing)
            anchors.append(seed)
            anchor_indices.append(int(index_of[seed]))
            pseudo_static[seed] = True
        # anchors leave the traversable set so paths never cross them
        for seed in anchors:
            index_of[seed] = -1
        d2, s2, p2, a2 = _dijkstra(pseudo_static, stranded_mask & ~pseudo_static,
                                   spacing, voxels, index_of)
        better = d2 < dist
        dist[better] = d2[better]
        status[better] = s2[better]
        pred[better] = p2[better]
        anchor[better] = a2[better]
        keep = np.ones(len(voxels), dtype=bool)
        keep[anchor_indices] = False
        extra_anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 3)
        if not keep.all():
            remap = np.full(len(voxels), -1, dtype=np.int64)
            remap[keep] = np.arange(int(keep.sum()))
            voxels = voxels[keep]
            dist = dist[keep]
            status = status[keep]
            anchor = anchor[keep]
            old_pred = pred[keep]
            pred = np.where(old_pred >= 0, remap[old_pred], -1)
            index_of = np.full(dims, -1, dtype=np.int64)
            index_of[voxels[:, 0], voxels[:, 1], voxels[:, 2]] = \
                np.arange(len(voxels))

    depth, max_desc = _compute_depths(pred, dist)
    return MorphField(
        dims=tuple(dims), spacing=tuple(float(s) for s in spacing),
        threshold=0.0, voxels=voxels, dist=dist, status=status, pred=pred,
        anchor=anchor, depth=depth, max_desc=max_desc,
        young_id=np.zeros(len(voxels), dtype=np.int32),
        old_id=np.full(len(voxels), -1, dtype=np.int32),
        extra_anchors=extra_anchors,
    )


def compute_morph_field(young: Volume3D, old: Volume3D,
                        threshold: float = 0.1) -> MorphField:
    """Classify, pair, and assign paths for a registered young/old pair."""
    if young.dims != old.dims:
        raise ValueError(f"dims mismatch: {young.dims} vs {old.dims}")
    young_fg = foreground_mask(young, threshold)
    old_fg = foreground_mask(old, threshold)
    static, dynamic = classify_voxels(young_fg, old_fg)

    young_comps = connected_components(young_fg, domain=Domain.YOUNG,
                                       provenance=young.provenance)
    old_comps = connected_components(old_fg, domain=Domain.OLD,
                                     provenance=old.provenance)
    pairings = pair_components(young_comps, old_comps)

    old_labels = np.zeros(young.dims, dtype=np.int32)
    for comp in old_comps:
        old_labels[comp.voxels[:, 0], comp.voxels[:, 1], comp.voxels[:, 2]] = comp.id

    dims = young.dims
    all_parts = []
    extra_anchors = []
    for comp, pairing in zip(young_comps, pairings):
        comp_mask = np.zeros(dims, dtype=bool)
        comp_mask[comp.voxels[:, 0], comp.voxels[:, 1], comp.voxels[:, 2]] = True
        static_c = static & comp_mask
        dynamic_c = dynamic & comp_mask
        if pairing.is_null:
            seed = mass_center_seed(comp, young.spacing)
            static_c = np.zeros(dims, dtype=bool)
            static_c[seed] = True
            dynamic_c = comp_mask.copy()
            dynamic_c[seed] = False
            extra_anchors.append(seed)
        if not dynamic_c.any():
            continue
        part = assign_paths(static_c, dynamic_c, young.spacing)
        part.young_id[:] = comp.id
        if not pairing.is_null:
            oid = old_labels[part.anchor[:, 0], part.anchor[:, 1],
                             part.anchor[:, 2]]
            part.old_id[:] = np.where(oid > 0, oid, -1)
        all_parts.append(part)
        extra_anchors.extend(tuple(int(c) for c in row)
                             for row in part.extra_anchors)

    if all_parts:
        offsets = np.cumsum([0] + [p.count for p in all_parts])
        voxels = np.concatenate([p.voxels for p in all_parts])
        dist = np.concatenate([p.dist for p in all_parts])
        status = np.concatenate([p.status for p in all_parts])
        pred = np.concatenate([
            np.where(p.pred >= 0, p.pred + off, -1)
            for p, off in zip(all_parts, offsets)])
        anchor = np.concatenate([p.anchor for p in all_parts])
        depth = np.concatenate([p.depth for p in all_parts])
        max_desc = np.concatenate([p.max_desc for p in all_parts])
        young_id = np.concatenate([p.young_id for p in all_parts])
        old_id = np.concatenate([p.old_id for p in all_parts])
    else:
        voxels = np.empty((0, 3), dtype=np.int64)
        dist = np.empty(0, dtype=np.float64)
        status = np.empty(0, dtype=np.uint8)
        pred = np.empty(0, dtype=np.int64)
        anchor = np.empty((0, 3), dtype=np.int64)
        depth = np.empty(0, dtype=np.int64)
        max_desc = np.empty(0, dtype=np.int64)
        young_id = np.empty(0, dtype=np.int32)
        old_id = np.empty(0, dtype=np.int32)

    extra = (np.asarray(extra_anchors, dtype=np.int64).reshape(-1, 3)
             if extra_anchors else np.empty((0, 3), dtype=np.int64))
    return MorphField(
        dims=dims, spacing=young.spacing, threshold=float(threshold),
        voxels=voxels, dist=dist, status=status, pred=pred, anchor=anchor,
        depth=depth, max_desc=max_desc, young_id=young_id, old_id=old_id,
        extra_anchors=extra, pairings=tuple(pairings),
    )


def intermediate_volume(field: MorphField, young: Volume3D, old: Volume3D,
                        sigma: float, direction: Direction) -> Volume3D:
    """Reconstruct the volume at morph position sigma.

    Old-domain intensities and static anchors are always present; dynamic
    voxels carry young intensity and switch with sigma: growth turns on the
    first floor(sigma*L) voxels of each path, decay retains the first
    L - ceil(sigma*L).
    """
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must be in [0, 1], got {sigma}")
    if young.dims != field.dims or old.dims != field.dims:
        raise ValueError("volume dims do not match the morph field")
    out = np.zeros(field.dims, dtype=np.float32)
    old_fg = foreground_mask(old, field.threshold)
    out[old_fg] = old.data[old_fg]
    if field.extra_anchors.shape[0]:
        ea = field.extra_anchors
        out[ea[:, 0], ea[:, 1], ea[:, 2]] = young.data[ea[:, 0], ea[:, 1],
                                                       ea[:, 2]]
    if field.count:
        thr = field.activation()
        if direction == Direction.OLD_TO_YOUNG:
            on = sigma >= thr
        else:
            on = sigma <= 1.0 - thr
        vox = field.voxels[on]
        out[vox[:, 0], vox[:, 1], vox[:, 2]] = young.data[vox[:, 0], vox[:, 1],
                                                          vox[:, 2]]
    return Volume3D(out, young.spacing, Kind.NORMALIZED, Provenance.MORPHED)


def save_morph_field(field: MorphField, path) -> None:
    """Binary sidecar so sigma scrubbing never recomputes paths."""
    np.savez_compressed(
        path,
        format=np.array(["morph-field-v1"]),
        dims=np.asarray(field.dims, dtype=np.int64),
        spacing=np.asarray(field.spacing, dtype=np.float64),
        threshold=np.asarray([field.threshold], dtype=np.float64),
        voxels=field.voxels, dist=field.dist, status=field.status,
        pred=field.pred, anchor=field.anchor, depth=field.depth,
        max_desc=field.max_desc, young_id=field.young_id, old_id=field.old_id,
        extra_anchors=field.extra_anchors,
        pairing_young=np.asarray([p.young_id for p in field.pairings],
                                 dtype=np.int32),
        pairing_old=np.asarray(
            [",".join(map(str, p.old_ids)) for p in field.pairings],
            dtype=str),
    )


def load_morph_field(path) -> MorphField:
    with np.load(path) as data:
        tag = str(data["format"][0])
        if tag != "morph-field-v1":
            raise ValueError(f"unrecognized morph field file (format {tag!r})")
        pairings = tuple(
            ComponentPairing(int(y), tuple(int(t) for t in s.split(",") if t))
            for y, s in zip(data["pairing_young"], data["pairing_old"]))
        return MorphField(
            dims=tuple(int(d) for d in data["dims"]),
            spacing=tuple(float(s) for s in data["spacing"]),
            threshold=float(data["threshold"][0]),
            voxels=data["voxels"], dist=data["dist"], status=data["status"],
            pred=data["pred"], anchor=data["anchor"], depth=data["depth"],
            max_desc=data["max_desc"], young_id=data["young_id"],
            old_id=data["old_id"], extra_anchors=data["extra_anchors"],
            pairings=pairings,
        )
