"""Parcel neighbour graph: build once, cache to disk, reload for every run.

Parcels are neighbours when their boundaries lie within ``radius`` metres of
each other and they belong to the same city. Node ``k`` of the graph is the
parcel with the k-th smallest ``parcel_id``, so the graph does not depend on
input order.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import shapely
from shapely import STRtree

from .errors import CacheFormatError, SchemaError, StaleCacheError
from .parcels import ParcelRecord

log = logging.getLogger(__name__)

MAGIC = "PCA-NG"
VERSION = "v1"
NEIGHBOR_MODES = ("boundary", "centroid")


def parcel_digest(parcels: Sequence[ParcelRecord]) -> str:
    """SHA-256 over parcels in id order: id, city, then every ring's vertices."""
    h = hashlib.sha256()
    for p in sorted(parcels, key=lambda r: r.parcel_id):
        city = str(p.city_id).encode("utf-8")
        h.update(struct.pack("<qI", p.parcel_id, len(city)))
        h.update(city)
        rings = p.polygon.rings
        h.update(struct.pack("<I", len(rings)))
        for ring in rings:
            h.update(struct.pack("<I", len(ring)))
            h.update(np.ascontiguousarray(ring, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Symmetric adjacency in CSR form: neighbours of node i are ``indices[indptr[i]:indptr[i+1]]``."""

    parcel_ids: tuple[int, ...]
    indptr: np.ndarray
    indices: np.ndarray
    radius_m: float
    digest: str

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def parcel_count(self) -> int:
        return len(self.parcel_ids)

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.parcel_count:
            raise KeyError(f"node {i} not in graph of {self.parcel_count} parcels")
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def index_of(self) -> dict[int, int]:
        return {pid: k for k, pid in enumerate(self.parcel_ids)}

    def edge_set(self) -> set[tuple[int, int]]:
        """Undirected edges as (smaller, larger) node pairs."""
        rows = np.repeat(np.arange(self.parcel_count), self.degree())
        keep = rows < self.indices
        return set(zip(rows[keep].tolist(), self.indices[keep].tolist()))

    def check(self) -> None:
        """Raise :class:`CacheFormatError` unless the graph is symmetric and loop-free."""
        n = self.parcel_count
        if len(self.indptr) != n + 1 or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise CacheFormatError("inconsistent adjacency offsets")
        if np.any(np.diff(self.indptr) < 0):
            raise CacheFormatError("inconsistent adjacency offsets")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise CacheFormatError("neighbour id out of range")
        rows = np.repeat(np.arange(n), self.degree())
        if np.any(rows == self.indices):
            raise CacheFormatError("self-loop in neighbour graph")
        fwd = rows * n + self.indices
        if np.any(np.diff(fwd) <= 0):
            raise CacheFormatError("neighbour lists must be strictly ascending")
        if not np.array_equal(np.sort(self.indices * n + rows), fwd):
            raise CacheFormatError("neighbour graph is not symmetric")

    def __eq__(self, other):
        if not isinstance(other, NeighborGraph):
            return NotImplemented
        return (
            self.parcel_ids == other.parcel_ids
            and self.radius_m == other.radius_m
            and self.digest == other.digest
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def _from_pairs(n: int, rows: np.ndarray, cols: np.ndarray, parcel_ids, radius, digest) -> NeighborGraph:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keep = rows != cols
    r = np.concatenate([rows[keep], cols[keep]])
    c = np.concatenate([cols[keep], rows[keep]])
    key = np.unique(r * n + c) if n else np.empty(0, dtype=np.int64)
    r, c = key // max(n, 1), key % max(n, 1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    g = NeighborGraph(tuple(parcel_ids), indptr, c.astype(np.int64), float(radius), digest)
    g.check()
    return g


def _city_pairs(geoms: np.ndarray, radius: float, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Local index pairs within ``radius``; each pair appears in both directions."""
    if mode == "centroid":
        geoms = shapely.centroid(geoms)
    tree = STRtree(geoms)
    # bbox pruning inside the tree, then the exact distance test in GEOS
    left, right = tree.query(geoms, predicate="dwithin", distance=radius)
    return left, right


def _city_task(args):
    members, geoms, radius, mode = args
    a, b = _city_pairs(geoms, radius, mode)
    return members[a], members[b]


def compute_neighbors(
    parcels: Sequence[ParcelRecord],
    radius: float = 500.0,
    *,
    mode: str = "boundary",
    jobs: int = 1,
) -> NeighborGraph:
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if mode not in NEIGHBOR_MODES:
        raise ValueError(f"unknown neighbour mode {mode!r}")
    ordered = sorted(parcels, key=lambda p: p.parcel_id)
    ids = [p.parcel_id for p in ordered]
    dupes = sorted({a for a, b in zip(ids, ids[1:]) if a == b})
    if dupes:
        raise SchemaError(f"duplicate parcel ids: {dupes[:10]}")
    n = len(ordered)
    by_city: dict[str, list[int]] = defaultdict(list)
    for k, p in enumerate(ordered):
        by_city[p.city_id].append(k)
    tasks = []
    for city in sorted(by_city, key=str):
        members = np.array(by_city[city], dtype=np.int64)
        geoms = np.array([ordered[k].polygon.to_shapely() for k in members], dtype=object)
        tasks.append((members, geoms, float(radius), mode))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_city_task, tasks))
    else:
        results = [_city_task(t) for t in tasks]
    rows = np.concatenate([r for r, _ in results]) if results else np.empty(0, np.int64)
    cols = np.concatenate([c for _, c in results]) if results else np.empty(0, np.int64)
    g = _from_pairs(n, rows, cols, ids, radius, parcel_digest(ordered))
    log.info("neighbour graph: %d parcels, %d edges, %d cities", n, len(g.indices) // 2, len(tasks))
    return g


def save_graph(g: NeighborGraph, path) -> None:
    lines = [f"{MAGIC} {VERSION} {g.radius_m!r} {g.parcel_count} {g.digest}"]
    for i in range(g.parcel_count):
        lines.append(f"{i}:" + ",".join(map(str, g.neighbors(i).tolist())))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def load_graph(path, parcels: Sequence[ParcelRecord]) -> NeighborGraph:
    """Read a cached graph; raises :class:`StaleCacheError` if ``parcels`` changed since it was built."""
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError:
        raise CacheFormatError(f"{path}: not UTF-8") from None
    if not text.endswith("\n"):
        raise CacheFormatError(f"{path}: truncated (no final newline)")
    lines = text[:-1].split("\n")
    head = lines[0].split(" ")
    if len(head) != 5 or head[0] != MAGIC or head[1] != VERSION:
        raise CacheFormatError(f"{path}: bad header {lines[0]!r}")
    try:
        radius = float(head[2])
        n = int(head[3])
    except ValueError:
        raise CacheFormatError(f"{path}: bad header {lines[0]!r}") from None
    digest = head[4]
    body = lines[1:] if n else [ln for ln in lines[1:] if ln]
    if len(body) != n:
        raise CacheFormatError(f"{path}: expected {n} parcel lines, found {len(body)}")
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols: list[int] = []
    for i, line in enumerate(body):
        node, sep, rest = line.partition(":")
        if not sep or node != str(i):
            raise CacheFormatError(f"{path}:{i + 2}: expected line for node {i}")
        try:
            nb = [int(v) for v in rest.split(",")] if rest else []
        except ValueError:
            raise CacheFormatError(f"{path}:{i + 2}: malformed neighbour list") from None
        cols.extend(nb)
        indptr[i + 1] = len(cols)
    current = parcel_digest(parcels)
    if current != digest:
        raise StaleCacheError(f"{path}: cached graph was built for a different parcel set")
    ids = tuple(sorted(p.parcel_id for p in parcels))
    if len(ids) != n:
        raise StaleCacheError(f"{path}: parcel count {len(ids)} differs from cached {n}")
    g = NeighborGraph(ids, indptr, np.array(cols, dtype=np.int64), radius, digest)
    g.check()
    return g
