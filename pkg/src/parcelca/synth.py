"""Synthetic countries for desk-scale runs: grid-tessellated square cities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ExclusionSet, ExclusionZone, Polygon, PointM
from .parcels import ParcelRecord
from .scenarios import ADMIN_LEVELS, CityRecord

# national city counts per admin level, used as sampling weights
LEVEL_WEIGHTS = np.array([4, 15, 17, 250, 368], dtype=float)
SYNTH_CRS = "EPSG:3857"


@dataclass(frozen=True)
class SynthSpec:
    cities: int = 1
    parcels_per_city: int = 25
    parcel_size_m: float = 200.0
    urban_seed_fraction: float = 0.2
    density_model: str = "decay"  # or "uniform"
    seed: int = 0
    exclusion_band: bool = False
    jitter: float = 0.0  # vertex displacement as a fraction of parcel size, < 0.5
    city_gap_m: float = 2000.0
    max_density: float = 10_000.0
    cities_per_row: int = 10

    def __post_init__(self):
        if self.cities < 1:
            raise ValueError("need at least one city")
        if self.parcels_per_city < 4:
            raise ValueError("need at least 4 parcels per city")
        if not 0 < self.urban_seed_fraction < 1:
            raise ValueError("urban_seed_fraction must lie in (0, 1)")
        if not 0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")
        if self.density_model not in ("decay", "uniform"):
            raise ValueError(f"unknown density model {self.density_model!r}")


@dataclass
class SyntheticCountry:
    parcels: list[ParcelRecord]
    cities: list[CityRecord]
    exclusions: ExclusionSet
    total_area_m2: float
    crs: str = SYNTH_CRS


def _shoelace(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def generate_synthetic(spec: SynthSpec) -> SyntheticCountry:
    rng = np.random.default_rng(spec.seed)
    n = spec.parcels_per_city
    size = spec.parcel_size_m
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    width, height = cols * size, rows * size
    k_urban = max(1, round(spec.urban_seed_fraction * n))

    parcels: list[ParcelRecord] = []
    cities: list[CityRecord] = []
    zones: list[ExclusionZone] = []
    ledger = 0.0
    for c in range(spec.cities):
        ox = (c % spec.cities_per_row) * (width + spec.city_gap_m)
        oy = (c // spec.cities_per_row) * (height + spec.city_gap_m)
        # shared lattice vertices keep the tessellation gap-free under jitter
        gx, gy = np.meshgrid(np.arange(cols + 1) * size + ox, np.arange(rows + 1) * size + oy)
        lattice = np.stack([gx, gy], axis=-1)
        if spec.jitter:
            lattice = lattice + rng.uniform(-spec.jitter, spec.jitter, lattice.shape) * size
        cx, cy = ox + width / 2, oy + height / 2
        cells = [(k // cols, k % cols) for k in range(n)]
        centres = np.array([(ox + (j + 0.5) * size, oy + (i + 0.5) * size) for i, j in cells])
        dist = np.hypot(centres[:, 0] - cx, centres[:, 1] - cy)
        urban = np.zeros(n, dtype=bool)
        urban[np.lexsort((np.arange(n), dist))[:k_urban]] = True
        if spec.density_model == "decay":
            frac = dist / dist.max() if dist.max() > 0 else np.zeros(n)
            density = spec.max_density ** (1.0 - frac)
        else:
            density = np.full(n, math.sqrt(spec.max_density))
        city_id = f"C{c:04d}"
        urban_m2 = 0.0
        for k, (i, j) in enumerate(cells):
            ring = np.array([lattice[i, j], lattice[i, j + 1], lattice[i + 1, j + 1], lattice[i + 1, j]])
            a = _shoelace(ring)
            ledger += a
            if urban[k]:
                urban_m2 += a
            parcels.append(ParcelRecord(c * n + k, city_id, Polygon(ring), bool(urban[k]), float(density[k])))
        rate = float(rng.uniform(0.01, 0.08))
        a12 = urban_m2 / 1e6
        cities.append(CityRecord(
            city_id=city_id,
            name=f"Synthetic {c}",
            admin_level=ADMIN_LEVELS[int(rng.choice(5, p=LEVEL_WEIGHTS / LEVEL_WEIGHTS.sum()))],
            center=PointM(cx, cy),
            urban_area_2007=a12 / (1 + rate) ** 5,
            urban_area_2012=a12,
            in_urban_agglomeration=bool(rng.random() < 0.5),
        ))
        if spec.exclusion_band:
            bx = ox + (cols * 3 // 4) * size
            band = [(bx, oy - size), (bx + size, oy - size), (bx + size, oy + height + size), (bx, oy + height + size)]
            zones.append(ExclusionZone(Polygon(np.array(band)), "water"))
    return SyntheticCountry(parcels, cities, ExclusionSet(zones), ledger)
