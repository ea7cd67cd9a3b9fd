"""Macro scenarios: one annual urban-expansion rate per city, and yearly targets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import ConfigError, DataError
from .geometry import PointM

ADMIN_LEVELS = ("MD", "SPC", "OPCC", "PLC", "CLC")

UA_RATE = 0.05
NON_UA_RATE = 0.04
# (upper bound of the 2012 urban area in km², annual rate); classes are closed above
NTU_CLASSES = ((100.0, 0.06), (200.0, 0.05), (400.0, 0.04), (math.inf, 0.03))


@dataclass(frozen=True)
class CityRecord:
    city_id: str
    name: str
    admin_level: str
    center: PointM
    urban_area_2007: float  # km²
    urban_area_2012: float  # km²
    in_urban_agglomeration: bool = False

    def __post_init__(self):
        if self.admin_level not in ADMIN_LEVELS:
            raise DataError(f"city {self.city_id}: unknown admin level {self.admin_level!r}")
        for label, value in (("2007", self.urban_area_2007), ("2012", self.urban_area_2012)):
            if not (math.isfinite(value) and value > 0):
                raise DataError(f"city {self.city_id}: urban area {label} must be positive, got {value}")


class ScenarioKind(str, Enum):
    BAU = "BAU"
    UAO = "UAO"
    NTU = "NTU"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    horizon_years: int = 5
    custom_rates: Mapping[str, float] | None = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.custom_rates is None:
            object.__setattr__(self, "custom_rates", {})
        if int(self.horizon_years) != self.horizon_years or self.horizon_years < 1:
            raise ConfigError(f"horizon_years must be a positive integer, got {self.horizon_years}")
        for cid, r in self.custom_rates.items():
            if not (math.isfinite(r) and r > -1):
                raise ConfigError(f"custom rate for city {cid} must be finite and > -1, got {r}")


def bau_rate(c: CityRecord) -> float:
    """Compound annual growth between the 2007 and 2012 urban areas."""
    if c.urban_area_2007 <= 0 or c.urban_area_2012 <= 0:
        raise DataError(f"city {c.city_id}: non-positive urban area")
    return (c.urban_area_2012 / c.urban_area_2007) ** (1 / 5) - 1


def uao_rate(c: CityRecord) -> float:
    return UA_RATE if c.in_urban_agglomeration else NON_UA_RATE


def ntu_rate(c: CityRecord) -> float:
    for upper, rate in NTU_CLASSES:
        if c.urban_area_2012 <= upper:
            return rate
    raise AssertionError("unreachable")


def resolve_rate(c: CityRecord, s: ScenarioSpec) -> float:
    if s.kind is ScenarioKind.BAU:
        return bau_rate(c)
    if s.kind is ScenarioKind.UAO:
        return uao_rate(c)
    if s.kind is ScenarioKind.NTU:
        return ntu_rate(c)
    try:
        return float(s.custom_rates[c.city_id])
    except KeyError:
        raise ConfigError(f"custom scenario has no rate for city {c.city_id}") from None


def target_areas(c: CityRecord, s: ScenarioSpec, base_area: float | None = None) -> list[float]:
    """Target urban area (km²) for years 1..horizon, compounding from the 2012 area.

    ``base_area`` replaces the 2012 table value as the compounding base.
    """
    r = resolve_rate(c, s)
    base = c.urban_area_2012 if base_area is None else base_area
    return [base * (1 + r) ** t for t in range(1, s.horizon_years + 1)]


def aggregate_growth_rates(cities) -> dict[str, float]:
    """Both readings of an "average growth rate" over 2007-2012, labelled.

    ``mean_city_rate`` averages per-city compound rates; ``aggregate_rate`` is
    the compound rate of the summed areas.
    """
    cities = list(cities)
    if not cities:
        raise DataError("no cities")
    rates = [bau_rate(c) for c in cities]
    a07 = sum(c.urban_area_2007 for c in cities)
    a12 = sum(c.urban_area_2012 for c in cities)
    return {
        "mean_city_rate": sum(rates) / len(rates),
        "aggregate_rate": (a12 / a07) ** (1 / 5) - 1,
    }
