import numpy as np
import pytest

from parcelca.geometry import polygon_area
from parcelca.neighbors import compute_neighbors
from parcelca.synth import SynthSpec, generate_synthetic


def test_urban_core_is_contiguous_block():
    c = generate_synthetic(SynthSpec(cities=1, parcels_per_city=25, urban_seed_fraction=0.2))
    urban = [p for p in c.parcels if p.urban]
    assert len(urban) == 5
    # 5x5 grid: the centre cell and its four edge neighbours
    assert sorted(p.parcel_id for p in urban) == [7, 11, 12, 13, 17]
    g = compute_neighbors(urban, 1e-6)
    # arms touch the centre along an edge and each other at corners
    assert sorted(g.degree().tolist()) == [3, 3, 3, 3, 4]


def test_deterministic():
    spec = SynthSpec(cities=3, parcels_per_city=50, jitter=0.3, seed=11, exclusion_band=True)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.parcels == b.parcels and a.cities == b.cities and a.exclusions == b.exclusions
    assert generate_synthetic(SynthSpec(cities=3, parcels_per_city=50, jitter=0.3, seed=12)).parcels != a.parcels


def test_density_decays_from_centre():
    c = generate_synthetic(SynthSpec(cities=1, parcels_per_city=49))
    d = {p.parcel_id: p.raw_density for p in c.parcels}
    assert d[24] == pytest.approx(1e4) and d[24] > d[0]
    assert d[0] == pytest.approx(1.0)


def test_area_ledger_and_city_table():
    c = generate_synthetic(SynthSpec(cities=4, parcels_per_city=30, jitter=0.4, seed=3))
    assert sum(polygon_area(p.polygon) for p in c.parcels) == pytest.approx(c.total_area_m2, rel=1e-12)
    for city in c.cities:
        urban = sum(p.area_km2 for p in c.parcels if p.city_id == city.city_id and p.urban)
        assert city.urban_area_2012 == pytest.approx(urban)
        assert 0.01 <= (city.urban_area_2012 / city.urban_area_2007) ** 0.2 - 1 <= 0.08


def test_tessellation_has_no_overlap():
    c = generate_synthetic(SynthSpec(cities=1, parcels_per_city=36, jitter=0.45, seed=1))
    from shapely import union_all

    union = union_all([p.polygon.to_shapely() for p in c.parcels])
    assert union.area == pytest.approx(c.total_area_m2, rel=1e-9)


def test_exclusion_band():
    c = generate_synthetic(SynthSpec(cities=2, exclusion_band=True))
    assert c.exclusions.counts() == {"steep": 0, "water": 2}


@pytest.mark.parametrize("kw", [dict(cities=0), dict(parcels_per_city=3), dict(urban_seed_fraction=1.0),
                                dict(jitter=0.5), dict(density_model="x")])
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)
