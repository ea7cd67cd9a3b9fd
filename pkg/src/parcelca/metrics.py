"""Comparing expansion patterns and summarising simulation accounts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MetricError
from .geometry import point_in_polygon
from .parcels import ParcelRecord
from .scenarios import CityRecord


class ExpansionSet(dict):
    """Mapping of element id (parcel or grid cell) to its area in km²."""

    def __init__(self, items: Mapping | Iterable = ()):
        super().__init__(items)
        for k, a in self.items():
            if not (math.isfinite(a) and a > 0):
                raise MetricError(f"element {k!r} has non-positive area {a}")

    @property
    def area(self) -> float:
        return math.fsum(self.values())

    @classmethod
    def from_parcels(cls, parcels: Iterable[ParcelRecord], ids: Iterable[int] | None = None) -> "ExpansionSet":
        by_id = {p.parcel_id: p for p in parcels}
        keys = by_id if ids is None else ids
        return cls((pid, by_id[pid].area_km2) for pid in keys)


def overlap_precision(a: ExpansionSet, b: ExpansionSet) -> float:
    """Share of the reference pattern ``a`` that ``b`` also expands."""
    if not a:
        raise MetricError("overlap precision undefined for an empty reference pattern")
    shared = math.fsum(area for k, area in a.items() if k in b)
    return shared / a.area


def confusion_matrix(simulated: ExpansionSet, observed: ExpansionSet, universe: ExpansionSet) -> np.ndarray:
    """Area-weighted 2×2 table; rows simulated (expanded, not), columns observed (expanded, not)."""
    stray = (set(simulated) | set(observed)) - set(universe)
    if stray:
        raise MetricError(f"{len(stray)} ids are outside the universe, e.g. {sorted(stray, key=str)[:5]}")
    m = np.zeros((2, 2))
    for k, area in universe.items():
        m[0 if k in simulated else 1, 0 if k in observed else 1] += area
    return m


def confusion_precision(simulated: ExpansionSet, observed: ExpansionSet, universe: ExpansionSet) -> float:
    if not universe:
        raise MetricError("confusion precision undefined for an empty universe")
    m = confusion_matrix(simulated, observed, universe)
    return float((m[0, 0] + m[1, 1]) / m.sum())


def rasterize(ids: Iterable[int], parcels: Sequence[ParcelRecord], cell_size: float = 500.0,
              origin: tuple[float, float] = (0.0, 0.0)) -> ExpansionSet:
    """Grid cells (``(col, row)`` keys) whose centre falls inside an expanded parcel."""
    by_id = {p.parcel_id: p for p in parcels}
    ox, oy = origin
    cell_km2 = cell_size * cell_size / 1e6
    cells = {}
    for pid in ids:
        poly = by_id[pid].polygon
        x0, y0, x1, y1 = poly.bbox
        for col in range(math.floor((x0 - ox) / cell_size), math.ceil((x1 - ox) / cell_size) + 1):
            cx = ox + (col + 0.5) * cell_size
            if not x0 <= cx <= x1:
                continue
            for row in range(math.floor((y0 - oy) / cell_size), math.ceil((y1 - oy) / cell_size) + 1):
                cy = oy + (row + 0.5) * cell_size
                if y0 <= cy <= y1 and point_in_polygon((cx, cy), poly):
                    cells[(col, row)] = cell_km2
    return ExpansionSet(cells)


@dataclass
class SummaryRow:
    label: str
    n_cities: int
    initial_km2: float
    final_km2: float

    @property
    def growth_km2(self) -> float:
        return self.final_km2 - self.initial_km2

    @property
    def growth_pct(self) -> float:
        return 100.0 * self.growth_km2 / self.initial_km2 if self.initial_km2 else 0.0

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "n_cities": self.n_cities,
            "initial_km2": round(self.initial_km2, 3),
            "final_km2": round(self.final_km2, 3),
            "growth_km2": round(self.growth_km2, 3),
            "growth_pct": round(self.growth_pct, 1),
        }


def summarize(result, cities: Sequence[CityRecord], region_of: Mapping[str, str] | None = None,
              by_ua: bool = False) -> list[SummaryRow]:
    """Per-city rows, then optional region rows, then a ``TOTAL`` row.

    Initial area is the urban parcel area at the start of the run. Regions
    come from ``region_of`` (city id to region name) or, with ``by_ua``, from
    urban-agglomeration membership.
    """
    city_by_id = {c.city_id: c for c in cities}
    rows = []
    groups: dict[str, list] = {}
    for cid in sorted(result.cities):
        cr = result.cities[cid]
        rows.append(SummaryRow(cid, 1, cr.initial_area_km2, cr.final_area_km2))
        region = None
        if region_of is not None:
            region = region_of.get(cid)
        elif by_ua and cid in city_by_id:
            region = "UA" if city_by_id[cid].in_urban_agglomeration else "non-UA"
        if region is not None:
            groups.setdefault(region, []).append(cr)
    for region in sorted(groups):
        members = groups[region]
        rows.append(SummaryRow(
            f"region:{region}", len(members),
            math.fsum(c.initial_area_km2 for c in members), math.fsum(c.final_area_km2 for c in members),
        ))
    allc = list(result.cities.values())
    rows.append(SummaryRow("TOTAL", len(allc), math.fsum(c.initial_area_km2 for c in allc),
                           math.fsum(c.final_area_km2 for c in allc)))
    return rows
