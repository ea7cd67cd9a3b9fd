"""The CA cell: one land parcel with geometry, state and cached features."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING

from .geometry import Polygon, PointM, centroid, polygon_area

if TYPE_CHECKING:
    from .calibration import FeatureVector

URBAN = "urban"
NON_URBAN = "non-urban"


@dataclass(frozen=True)
class ParcelRecord:
    parcel_id: int
    city_id: str
    polygon: Polygon
    urban: bool = False
    raw_density: float = 0.0  # POIs per km²
    features: "FeatureVector | None" = None
    excluded: bool = False

    @property
    def state(self) -> str:
        return URBAN if self.urban else NON_URBAN

    @cached_property
    def area_m2(self) -> float:
        return polygon_area(self.polygon)

    @property
    def area_km2(self) -> float:
        return self.area_m2 / 1e6

    @cached_property
    def centroid(self) -> PointM:
        return centroid(self.polygon)

    def with_(self, **changes) -> "ParcelRecord":
        return replace(self, **changes)
