"""Planar polygon measurements, spatial predicates and a bounding-box index.

All coordinates are projected meters. Polygons are immutable; every function
here is pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely import STRtree

from .errors import GeometryError

EXCLUSION_TAGS = ("steep", "water")


def _clean_ring(coords) -> np.ndarray:
    """Close the ring and drop consecutive duplicate vertices.

    Returns an (n+1, 2) closed array. Raises on fewer than 3 distinct vertices.
    """
    arr = np.asarray(coords, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"ring must be a sequence of (x, y) pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("ring has non-finite coordinates")
    if len(arr) and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(arr) > 1:
        keep = np.ones(len(arr), dtype=bool)
        keep[1:] = np.any(arr[1:] != arr[:-1], axis=1)
        arr = arr[keep]
        while len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
            arr = arr[:-1]
    ring = np.vstack([arr, arr[:1]])
    if len(arr) < 3 or (_signed_ring_area(ring) == 0 and len(np.unique(arr, axis=0)) < 3):
        raise GeometryError("degenerate ring: fewer than 3 distinct vertices")
    return ring


def _signed_ring_area(ring: np.ndarray) -> float:
    # relative to the first vertex: projected coordinates are large
    x = ring[:, 0] - ring[0, 0]
    y = ring[:, 1] - ring[0, 1]
    return 0.5 * float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Vectorised closed-segment intersection test (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )

    def on_seg(a, b, c, d):
        return (
            (d == 0)
            & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0])
            & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1])
            & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
        )

    return proper | on_seg(q1, q2, p1, d1) | on_seg(q1, q2, p2, d2) | on_seg(p1, p2, q1, d3) | on_seg(p1, p2, q2, d4)


def _is_strictly_convex(ring: np.ndarray) -> bool:
    e = np.diff(ring, axis=0)
    nxt = np.roll(e, -1, axis=0)
    turn = e[:, 0] * nxt[:, 1] - e[:, 1] * nxt[:, 0]
    if not (np.all(turn > 0) or np.all(turn < 0)):
        return False
    # same-sign turns that wind more than once describe a star, not a convex ring
    heading = np.arctan2(e[:, 1], e[:, 0])
    total = np.sum(np.mod(np.roll(heading, -1) - heading + np.pi, 2 * np.pi) - np.pi)
    return abs(abs(total) - 2 * np.pi) < 1e-6


def _ring_is_simple(ring: np.ndarray) -> bool:
    n = len(ring) - 1
    if n == 3:
        return abs(_signed_ring_area(ring)) > 0
    if _is_strictly_convex(ring):
        return True
    a, b = ring[:-1], ring[1:]
    i, j = np.triu_indices(n, k=2)
    # the first and last edges share the closing vertex
    mask = ~((i == 0) & (j == n - 1))
    i, j = i[mask], j[mask]
    if np.any(_segments_intersect(a[i], b[i], a[j], b[j])):
        return False
    # adjacent edges may only share their common vertex, never fold back onto each other
    nxt = np.roll(b, -1, axis=0)
    collinear = _orient(a, b, nxt) == 0
    backtrack = np.einsum("ij,ij->i", b - a, nxt - b) < 0
    return not np.any(collinear & backtrack)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Polygon with an exterior ring and optional holes, as closed (n+1, 2) arrays.

    Construction repairs ring closure and duplicate vertices only; a
    self-intersecting ring raises :class:`GeometryError`.
    """

    exterior: np.ndarray
    holes: tuple[np.ndarray, ...] = ()
    _bbox: tuple[float, float, float, float] = field(init=False, repr=False)

    def __post_init__(self):
        ext = _clean_ring(self.exterior)
        holes = tuple(_clean_ring(h) for h in self.holes)
        for k, ring in enumerate((ext, *holes)):
            if not _ring_is_simple(ring):
                where = "exterior ring" if k == 0 else f"hole {k - 1}"
                raise GeometryError(f"self-intersecting {where}")
            ring.setflags(write=False)
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "holes", holes)
        lo, hi = ext.min(axis=0), ext.max(axis=0)
        object.__setattr__(self, "_bbox", (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])))
        if polygon_area(self) <= 0:
            raise GeometryError("polygon has non-positive area")

    @classmethod
    def from_coords(cls, exterior, holes: Iterable = ()) -> "Polygon":
        return cls(np.asarray(exterior, dtype=float), tuple(np.asarray(h, dtype=float) for h in holes))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return self._bbox

    @property
    def rings(self) -> tuple[np.ndarray, ...]:
        return (self.exterior, *self.holes)

    def to_shapely(self) -> shapely.Polygon:
        return shapely.Polygon(self.exterior, [h for h in self.holes])

    def __eq__(self, other):
        if not isinstance(other, Polygon) or len(self.holes) != len(other.holes):
            return NotImplemented if not isinstance(other, Polygon) else False
        return all(np.array_equal(a, b) for a, b in zip(self.rings, other.rings))

    def __hash__(self):
        return hash(tuple(r.tobytes() for r in self.rings))


@dataclass(frozen=True)
class PointM:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class ExclusionZone:
    polygon: Polygon
    tag: str

    def __post_init__(self):
        if self.tag not in EXCLUSION_TAGS:
            raise GeometryError(f"unknown exclusion tag {self.tag!r}")


class ExclusionSet(tuple):
    """Tuple of :class:`ExclusionZone` with a lazily built index for overlap tests."""

    def __new__(cls, zones: Iterable[ExclusionZone] = ()):
        return super().__new__(cls, tuple(zones))

    def counts(self) -> dict[str, int]:
        out = {t: 0 for t in EXCLUSION_TAGS}
        for z in self:
            out[z.tag] += 1
        return out

    @property
    def _tree(self):
        tree = self.__dict__.get("_tree_cache")
        if tree is None:
            geoms = np.array([z.polygon.to_shapely() for z in self], dtype=object)
            tree = (STRtree(geoms), geoms)
            self.__dict__["_tree_cache"] = tree
        return tree


def polygon_area(p: Polygon) -> float:
    """Shoelace area of the exterior minus the holes, in m²."""
    area = abs(_signed_ring_area(p.exterior))
    for h in p.holes:
        area -= abs(_signed_ring_area(h))
    return area


def _ring_length(ring: np.ndarray) -> float:
    d = np.diff(ring, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def polygon_perimeter(p: Polygon) -> float:
    # holes are deliberately excluded: compactness describes the lot outline
    return _ring_length(p.exterior)


def compactness(p: Polygon) -> float:
    area = polygon_area(p)
    if area <= 0:
        raise GeometryError("compactness undefined for zero area")
    return polygon_perimeter(p) ** 2 / area


def centroid(p: Polygon) -> PointM:
    """Area-weighted centroid; holes contribute with negative weight."""
    total_a = 0.0
    cx = cy = 0.0
    for k, ring in enumerate(p.rings):
        x0, y0 = ring[0]
        # shift to the first vertex to limit cancellation on large coordinates
        x = ring[:, 0] - x0
        y = ring[:, 1] - y0
        cross = x[:-1] * y[1:] - x[1:] * y[:-1]
        a = 0.5 * cross.sum()
        if a == 0:
            raise GeometryError("degenerate ring in centroid")
        sign = 1.0 if k == 0 else -1.0
        # orient every ring's contribution by its absolute area
        w = sign * abs(a)
        rx = ((x[:-1] + x[1:]) * cross).sum() / (6 * a) + x0
        ry = ((y[:-1] + y[1:]) * cross).sum() / (6 * a) + y0
        total_a += w
        cx += w * rx
        cy += w * ry
    if total_a <= 0:
        raise GeometryError("degenerate polygon in centroid")
    return PointM(cx / total_a, cy / total_a)


def distance_km(a: PointM, b: PointM) -> float:
    return math.hypot(a.x - b.x, a.y - b.y) / 1000.0


def _point_in_ring(pt: np.ndarray, ring: np.ndarray) -> bool:
    x, y = pt
    a, b = ring[:-1], ring[1:]
    crosses = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def point_in_polygon(pt, p: Polygon) -> bool:
    """Even-odd test; points exactly on the boundary may go either way."""
    pt = np.asarray(pt, dtype=float)
    if not _point_in_ring(pt, p.exterior):
        return False
    return not any(_point_in_ring(pt, h) for h in p.holes)


def _all_segments(p: Polygon) -> tuple[np.ndarray, np.ndarray]:
    a = np.vstack([r[:-1] for r in p.rings])
    b = np.vstack([r[1:] for r in p.rings])
    return a, b


def _point_segment_distance(pts, a, b) -> np.ndarray:
    """Distance from each point in ``pts`` (k,2) to each segment a→b (m,2); shape (k, m)."""
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("kmj,mj->km", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = pts[:, None, :] - proj
    return np.hypot(d[..., 0], d[..., 1])


def min_distance(p: Polygon, q: Polygon) -> float:
    """Minimum distance between two polygons: 0 if they touch, cross or one contains the other."""
    pa, pb = _all_segments(p)
    qa, qb = _all_segments(q)
    if np.any(_segments_intersect(pa[:, None], pb[:, None], qa[None, :], qb[None, :])):
        return 0.0
    if point_in_polygon(q.exterior[0], p) or point_in_polygon(p.exterior[0], q):
        return 0.0
    d1 = _point_segment_distance(pa, qa, qb).min()
    d2 = _point_segment_distance(qa, pa, pb).min()
    return float(min(d1, d2))


class SpatialIndex:
    """Immutable bounding-box index over a list of polygons (STR-packed R-tree)."""

    def __init__(self, polygons: Sequence[Polygon]):
        if not polygons:
            raise ValueError("cannot index an empty polygon list")
        self._bounds = np.array([p.bbox for p in polygons], dtype=float)
        self._tree = STRtree(shapely.box(*self._bounds.T))

    def __len__(self) -> int:
        return len(self._bounds)

    def query(self, bbox: tuple[float, float, float, float]) -> list[int]:
        """Indices of polygons whose bounding boxes intersect ``bbox`` (sorted)."""
        hits = self._tree.query(shapely.box(*bbox))
        return sorted(int(i) for i in hits)


def build_index(polygons: Sequence[Polygon]) -> SpatialIndex:
    return SpatialIndex(polygons)


def overlap_fraction(p: Polygon, ex: ExclusionSet) -> float:
    """Share of ``p``'s area covered by the union of the exclusion polygons."""
    if not ex:
        return 0.0
    tree, geoms = ex._tree
    sp = p.to_shapely()
    hits = tree.query(sp, predicate="intersects")
    if len(hits) == 0:
        return 0.0
    covered = shapely.intersection(sp, shapely.union_all(geoms[hits])).area
    return min(covered / polygon_area(p), 1.0)


def intersects_exclusion(p: Polygon, ex: ExclusionSet, threshold: float = 0.5) -> bool:
    """True when more than ``threshold`` of the parcel lies in steep or water zones."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"overlap threshold must be in [0, 1], got {threshold}")
    return overlap_fraction(p, ex) > threshold
