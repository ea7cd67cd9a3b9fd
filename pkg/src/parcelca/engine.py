"""Per-city constrained vector CA.

Each year every non-urban parcel gets a score

    local potential × neighbourhood potential × constraint × disturbance

computed from the year-start state. Parcels scoring above ``p_threshold`` are
ranked (score descending, parcel id ascending) and converted in that order
until the city's urban area first reaches the year's target. Parcels convert
whole, so the target can be overshot by at most one parcel.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calibration import Coefficients, extract_features, sigmoid
from .errors import ConfigError, DataError, StaleCacheError, StateError
from .geometry import ExclusionSet, intersects_exclusion
from .neighbors import NeighborGraph, parcel_digest
from .parcels import ParcelRecord
from .scenarios import CityRecord, ScenarioSpec, resolve_rate, target_areas

log = logging.getLogger(__name__)

QUOTA_BASES = ("table", "parcels")
# slack when comparing cumulative areas (km²) against a target
AREA_EPS = 1e-9


@dataclass(frozen=True)
class CaParams:
    coefficients: Coefficients = field(default_factory=Coefficients)
    beta: float = 1.0
    p_threshold: float = 0.01
    rng_seed: int = 0
    disturbance: bool = True
    quota_base: str = "table"
    base_year: int = 2012

    def __post_init__(self):
        if not 0.0 <= self.beta <= 10.0:
            raise ConfigError(f"beta must lie in [0, 10], got {self.beta}")
        if not 0.0 <= self.p_threshold <= 1.0:
            raise ConfigError(f"p_threshold must lie in [0, 1], got {self.p_threshold}")
        if self.quota_base not in QUOTA_BASES:
            raise ConfigError(f"quota_base must be one of {QUOTA_BASES}, got {self.quota_base!r}")


@dataclass
class Shortfall:
    city_id: str
    year: int
    target_km2: float
    realized_km2: float


@dataclass
class CityResult:
    city_id: str
    rate: float
    initial_area_km2: float
    converted: list[list[int]] = field(default_factory=list)
    realized_km2: list[float] = field(default_factory=list)
    target_km2: list[float] = field(default_factory=list)
    shortfalls: list[Shortfall] = field(default_factory=list)

    @property
    def final_area_km2(self) -> float:
        return self.realized_km2[-1] if self.realized_km2 else self.initial_area_km2


@dataclass
class SimulationResult:
    scenario: str
    horizon_years: int
    base_year: int
    rng_seed: int
    cities: dict[str, CityResult]
    initial_states: dict[int, bool]
    final_states: dict[int, bool]

    @property
    def shortfalls(self) -> list[Shortfall]:
        return [s for c in self.cities.values() for s in c.shortfalls]

    def converted_year(self) -> dict[int, int]:
        """Calendar year of conversion for every converted parcel."""
        out = {}
        for c in self.cities.values():
            for t, ids in enumerate(c.converted, start=1):
                for pid in ids:
                    out[pid] = self.base_year + t
        return out

    def to_json(self) -> str:
        """Canonical serialisation; identical runs give identical strings."""
        doc = {
            "scenario": self.scenario,
            "horizon_years": self.horizon_years,
            "base_year": self.base_year,
            "rng_seed": self.rng_seed,
            "cities": {
                cid: {
                    "rate": c.rate,
                    "initial_area_km2": c.initial_area_km2,
                    "converted": c.converted,
                    "realized_km2": c.realized_km2,
                    "target_km2": c.target_km2,
                    "shortfalls": [[s.year, s.target_km2, s.realized_km2] for s in c.shortfalls],
                }
                for cid, c in sorted(self.cities.items())
            },
            "final_urban": sorted(pid for pid, u in self.final_states.items() if u),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def prepare_parcels(
    parcels: Sequence[ParcelRecord],
    cities: Sequence[CityRecord],
    exclusions: ExclusionSet = ExclusionSet(),
    *,
    max_density: float | None = None,
    exclusion_threshold: float = 0.5,
) -> list[ParcelRecord]:
    """Attach features and the exclusion flag to every parcel.

    ``max_density`` defaults to the largest raw density in ``parcels``.
    """
    by_id = {c.city_id: c for c in cities}
    if max_density is None:
        max_density = max((p.raw_density for p in parcels), default=0.0)
    out = []
    for p in parcels:
        city = by_id.get(p.city_id)
        if city is None:
            raise DataError(f"parcel {p.parcel_id} refers to unknown city {p.city_id!r}")
        out.append(
            p.with_(
                features=extract_features(p, city, max_density),
                excluded=intersects_exclusion(p.polygon, exclusions, exclusion_threshold),
            )
        )
    return out


def neighborhood_potential(i: int, g: NeighborGraph, states) -> float:
    """Share of node ``i``'s neighbours that are urban; 0 for an isolated node."""
    nb = g.neighbors(i)
    if len(nb) == 0:
        return 0.0
    return float(np.count_nonzero(np.asarray(states)[nb])) / len(nb)


def stochastic_disturbance(gamma: float, beta: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 <= beta <= 10.0:
        raise ValueError(f"beta must lie in [0, 10], got {beta}")
    return 1.0 + (-math.log(gamma)) ** beta


def _draw_gammas(rng, size: int) -> np.ndarray:
    g = np.asarray(rng.random(size), dtype=float)
    return np.where(g == 0.0, 2.0**-53, g)


def _disturbances(gammas: np.ndarray, beta: float) -> np.ndarray:
    return 1.0 + np.power(-np.log(gammas), beta)


def transition_probability(
    i: int,
    parcels: Sequence[ParcelRecord],
    states,
    g: NeighborGraph,
    params: CaParams,
    rng,
    exclusions: ExclusionSet | None = None,
    exclusion_threshold: float = 0.5,
) -> float:
    """Score of node ``i`` (``parcels`` and ``states`` indexed by graph node).

    Not a probability: the disturbance factor is ≥ 1, so scores may exceed 1.
    With ``exclusions`` given the constraint is evaluated from geometry,
    otherwise from the parcel's ``excluded`` flag.
    """
    p = parcels[i]
    if p.features is None:
        raise StateError(f"parcel {p.parcel_id} has no cached features")
    if exclusions is not None:
        con = 0.0 if intersects_exclusion(p.polygon, exclusions, exclusion_threshold) else 1.0
    else:
        con = 0.0 if p.excluded else 1.0
    p_local = float(sigmoid(np.dot(params.coefficients.vector(), (1.0, *p.features.as_tuple()))))
    p_omega = neighborhood_potential(i, g, states)
    if params.disturbance:
        p_r = stochastic_disturbance(float(_draw_gammas(rng, 1)[0]), params.beta)
    else:
        p_r = 1.0
    return p_local * p_omega * con * p_r


@dataclass
class CityModel:
    """Dense per-city arrays, ordered by parcel id, with a local CSR neighbour list."""

    city_id: str
    parcel_ids: np.ndarray
    areas_km2: np.ndarray
    p_local: np.ndarray
    excluded: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    states: np.ndarray

    @property
    def urban_area(self) -> float:
        return float(self.areas_km2[self.states].sum())

    def neighborhood_potentials(self, states: np.ndarray) -> np.ndarray:
        deg = np.diff(self.indptr)
        rows = np.repeat(np.arange(len(deg)), deg)
        urban = np.bincount(rows, weights=states[self.indices].astype(float), minlength=len(deg))
        return np.divide(urban, deg, out=np.zeros(len(deg)), where=deg > 0)

    def scores(self, states: np.ndarray, disturbance: np.ndarray | None) -> np.ndarray:
        s = self.p_local * self.neighborhood_potentials(states) * (~self.excluded)
        if disturbance is not None:
            s = s * disturbance
        s[states] = 0.0
        return s


def build_city_models(parcels: Sequence[ParcelRecord], g: NeighborGraph, coefficients: Coefficients) -> dict[str, CityModel]:
    index = g.index_of()
    members: dict[str, list[int]] = {}
    by_node: list[ParcelRecord | None] = [None] * g.parcel_count
    for p in parcels:
        if p.features is None:
            raise StateError(f"parcel {p.parcel_id} has no cached features")
        k = index[p.parcel_id]
        by_node[k] = p
        members.setdefault(p.city_id, []).append(k)
    w = coefficients.vector()
    models = {}
    for city_id, nodes in members.items():
        nodes = np.array(sorted(nodes), dtype=np.int64)
        local = np.full(g.parcel_count, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        recs = [by_node[k] for k in nodes]
        feats = np.array([r.features.as_tuple() for r in recs], dtype=float).reshape(-1, 4)
        deg = g.degree()[nodes]
        indptr = np.zeros(len(nodes) + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        nb = np.concatenate([g.neighbors(k) for k in nodes]) if len(nodes) else np.empty(0, np.int64)
        nb_local = local[nb]
        if np.any(nb_local < 0):
            raise DataError(f"neighbour graph links city {city_id} to parcels of another city")
        models[city_id] = CityModel(
            city_id=city_id,
            parcel_ids=np.array([r.parcel_id for r in recs], dtype=np.int64),
            areas_km2=np.array([r.area_km2 for r in recs], dtype=float),
            p_local=sigmoid(w[0] + feats @ w[1:]),
            excluded=np.array([r.excluded for r in recs], dtype=bool),
            indptr=indptr,
            indices=nb_local,
            states=np.array([r.urban for r in recs], dtype=bool),
        )
    return models


def step_city(model: CityModel, states: np.ndarray, target_km2: float, params: CaParams, rng):
    """One synchronous annual update.

    Returns ``(new_states, converted_ids, shortfall)`` where ``shortfall`` is
    True when every eligible parcel converted without reaching the target.
    """
    n = len(states)
    # one draw per parcel per year, whether or not the parcel is a candidate
    disturbance = _disturbances(_draw_gammas(rng, n), params.beta) if params.disturbance and n else None
    current = float(model.areas_km2[states].sum())
    if target_km2 <= current + AREA_EPS:
        return states.copy(), [], False
    scores = model.scores(states, disturbance)
    cand = np.flatnonzero(~states & ~model.excluded & (scores > params.p_threshold))
    order = cand[np.lexsort((model.parcel_ids[cand], -scores[cand]))]
    cum = current + np.cumsum(model.areas_km2[order])
    reached = np.flatnonzero(cum >= target_km2 - AREA_EPS)
    take = order[: reached[0] + 1] if len(reached) else order
    new = states.copy()
    new[take] = True
    return new, sorted(model.parcel_ids[take].tolist()), len(reached) == 0


def city_seed(seed: int, city_id: str) -> np.random.SeedSequence:
    key = int.from_bytes(hashlib.sha256(str(city_id).encode("utf-8")).digest()[:8], "little")
    return np.random.SeedSequence([int(seed), key])


def _run_city(model: CityModel, targets: list[float], rate: float, params: CaParams) -> CityResult:
    rng = np.random.default_rng(city_seed(params.rng_seed, model.city_id))
    states = model.states.copy()
    res = CityResult(model.city_id, rate, model.urban_area)
    for t, target in enumerate(targets, start=1):
        states, converted, short = step_city(model, states, target, params, rng)
        realized = float(model.areas_km2[states].sum())
        res.converted.append(converted)
        res.realized_km2.append(realized)
        res.target_km2.append(target)
        if short:
            year = params.base_year + t
            res.shortfalls.append(Shortfall(model.city_id, year, target, realized))
            log.warning("city %s year %d: quota shortfall %.3f km²", model.city_id, year, target - realized)
    model.states = states
    return res


def _run_city_task(args):
    return _run_city(*args)


def simulate(
    cities: Sequence[CityRecord],
    parcels: Sequence[ParcelRecord],
    g: NeighborGraph,
    scenario: ScenarioSpec,
    params: CaParams,
    *,
    jobs: int = 1,
) -> SimulationResult:
    if g.digest != parcel_digest(parcels):
        raise StaleCacheError("neighbour graph does not match the parcel set; rebuild it")
    city_by_id = {c.city_id: c for c in cities}
    for p in parcels:
        if p.city_id not in city_by_id:
            raise DataError(f"parcel {p.parcel_id} refers to unknown city {p.city_id!r}")
    models = build_city_models(parcels, g, params.coefficients)
    empty = np.empty(0, dtype=np.int64)
    tasks = []
    for cid in sorted(city_by_id):
        city = city_by_id[cid]
        model = models.get(cid) or CityModel(cid, empty, np.empty(0), np.empty(0), np.empty(0, bool),
                                            np.zeros(1, np.int64), empty, np.empty(0, bool))
        base = model.urban_area if params.quota_base == "parcels" else None
        tasks.append((model, target_areas(city, scenario, base), resolve_rate(city, scenario), params))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_city_task, tasks))
    else:
        results = [_run_city_task(t) for t in tasks]
    initial = {p.parcel_id: p.urban for p in parcels}
    final = dict(initial)
    for r in results:
        for ids in r.converted:
            for pid in ids:
                final[pid] = True
    return SimulationResult(
        scenario=scenario.kind.value,
        horizon_years=scenario.horizon_years,
        base_year=params.base_year,
        rng_seed=params.rng_seed,
        cities={r.city_id: r for r in results},
        initial_states=initial,
        final_states=final,
    )
