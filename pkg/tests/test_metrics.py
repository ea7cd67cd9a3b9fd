import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parcelca.engine import CaParams, prepare_parcels, simulate
from parcelca.errors import MetricError
from parcelca.metrics import (
    ExpansionSet,
    confusion_matrix,
    confusion_precision,
    overlap_precision,
    rasterize,
    summarize,
)
from parcelca.neighbors import compute_neighbors
from parcelca.parcels import ParcelRecord
from parcelca.scenarios import ScenarioSpec
from parcelca.synth import SynthSpec, generate_synthetic

from conftest import square

# (universe areas, simulated ids, observed ids, hand-tabulated [[TP, FP], [FN, TN]])
CONFUSION_FIXTURES = [
    ({1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0}, {1, 2}, {1, 2}, [[2, 0], [0, 2]]),
    ({1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0, 5: 1.0}, set(), {1}, [[0, 0], [1, 4]]),
    ({1: 2.0, 2: 3.0, 3: 5.0}, {1, 2}, {2, 3}, [[3, 2], [5, 0]]),
    ({1: 0.5, 2: 1.5, 3: 4.0, 4: 4.0}, {3}, {3, 4}, [[4, 0], [4, 2]]),
    ({k: float(k) for k in range(1, 11)}, {1, 2, 3, 4}, {3, 4, 5, 6}, [[7, 3], [11, 34]]),
]


def es(ids, areas):
    return ExpansionSet({k: areas[k] for k in ids})


class TestOverlap:
    def test_reported_share(self):
        a = ExpansionSet({"shared": 119.0, "ref_only": 55.0})
        b = ExpansionSet({"shared": 119.0, "other_only": 80.0})
        assert overlap_precision(a, b) == pytest.approx(0.684, abs=5e-4)

    def test_identity_and_disjoint(self):
        a = ExpansionSet({1: 2.0, 2: 3.0})
        assert overlap_precision(a, a) == 1.0
        assert overlap_precision(a, ExpansionSet({3: 1.0})) == 0.0
        assert overlap_precision(a, ExpansionSet()) == 0.0

    def test_asymmetric(self):
        a, b = ExpansionSet({1: 1.0}), ExpansionSet({1: 1.0, 2: 3.0})
        assert overlap_precision(a, b) == 1.0
        assert overlap_precision(b, a) == 0.25

    def test_empty_reference(self):
        with pytest.raises(MetricError):
            overlap_precision(ExpansionSet(), ExpansionSet({1: 1.0}))

    def test_bad_area(self):
        with pytest.raises(MetricError):
            ExpansionSet({1: 0.0})


class TestConfusion:
    @pytest.mark.parametrize("universe,sim,obs,table", CONFUSION_FIXTURES)
    def test_hand_tables(self, universe, sim, obs, table):
        u = ExpansionSet(universe)
        m = confusion_matrix(es(sim, universe), es(obs, universe), u)
        assert m.tolist() == table
        t = np.array(table, dtype=float)
        assert confusion_precision(es(sim, universe), es(obs, universe), u) == pytest.approx((t[0, 0] + t[1, 1]) / t.sum())

    def test_empty_simulation_complement(self):
        u = ExpansionSet({k: 1.0 for k in range(10)})
        assert confusion_precision(ExpansionSet(), es({0, 1}, u), u) == pytest.approx(0.8)

    def test_outside_universe(self):
        with pytest.raises(MetricError):
            confusion_matrix(ExpansionSet({99: 1.0}), ExpansionSet(), ExpansionSet({1: 1.0}))
        with pytest.raises(MetricError):
            confusion_precision(ExpansionSet(), ExpansionSet(), ExpansionSet())

    @given(st.dictionaries(st.integers(0, 40), st.floats(0.01, 100), min_size=1), st.data())
    def test_symmetric(self, universe, data):
        ids = sorted(universe)
        a = set(data.draw(st.lists(st.sampled_from(ids), unique=True)))
        b = set(data.draw(st.lists(st.sampled_from(ids), unique=True)))
        u = ExpansionSet(universe)
        assert confusion_precision(es(a, universe), es(b, universe), u) == pytest.approx(
            confusion_precision(es(b, universe), es(a, universe), u))


class TestRasterize:
    def test_cell_centres(self):
        ps = [ParcelRecord(1, "A", square(0, 0, 1000)), ParcelRecord(2, "A", square(1000, 0, 200))]
        cells = rasterize([1, 2], ps, 500)
        # parcel 2 does not reach the centre (1250, 250) of its cell
        assert set(cells) == {(0, 0), (0, 1), (1, 0), (1, 1)}
        assert cells.area == pytest.approx(1.0)

    def test_common_grid_comparison(self):
        ps = [ParcelRecord(k, "A", square(500 * k, 0, 500)) for k in range(4)]
        a, b = rasterize([0, 1, 2], ps), rasterize([1, 2, 3], ps)
        assert overlap_precision(a, b) == pytest.approx(2 / 3)


def run(kind="UAO", rates=None, cities=4):
    c = generate_synthetic(SynthSpec(cities=cities, parcels_per_city=400, seed=2))
    parcels = prepare_parcels(c.parcels, c.cities, c.exclusions)
    g = compute_neighbors(parcels, 500)
    spec = ScenarioSpec(kind, 5, rates)
    return c, parcels, simulate(c.cities, parcels, g, spec, CaParams())


class TestSummarize:
    def test_zero_rate(self):
        c, _, r = run("CUSTOM", {f"C{k:04d}": 0.0 for k in range(4)})
        rows = summarize(r, c.cities, by_ua=True)
        assert all(row.growth_km2 == 0 and row.growth_pct == 0 for row in rows)
        assert rows[-1].label == "TOTAL" and rows[-1].n_cities == 4

    def test_uao_blend(self):
        c, parcels, r = run()
        rows = {row.label: row for row in summarize(r, c.cities)}
        init = {x.city_id: x.urban_area_2012 for x in c.cities}
        ua = {x.city_id: x.in_urban_agglomeration for x in c.cities}
        expect = sum(a * (1.05 if ua[cid] else 1.04) ** 5 for cid, a in init.items())
        tol = len(init) * max(p.area_km2 for p in parcels)
        assert 0 <= rows["TOTAL"].final_km2 - expect <= tol + 1e-9
        total0 = sum(init.values())
        assert rows["TOTAL"].growth_pct == pytest.approx(100 * (expect / total0 - 1), abs=100 * tol / total0)
        for cid, a in init.items():
            pct = 100 * ((1.05 if ua[cid] else 1.04) ** 5 - 1)
            assert abs(rows[cid].growth_pct - pct) <= 100 * max(p.area_km2 for p in parcels) / a + 1e-9

    def test_regions(self):
        c, _, r = run()
        rows = summarize(r, c.cities, by_ua=True)
        labels = [row.label for row in rows]
        regions = [lbl for lbl in labels if lbl.startswith("region:")]
        assert labels[-1] == "TOTAL" and regions == sorted(regions)
        assert sum(row.n_cities for row in rows if row.label in regions) == 4
        assert sum(row.final_km2 for row in rows if row.label in regions) == pytest.approx(rows[-1].final_km2)
        custom = summarize(r, c.cities, region_of={"C0000": "north", "C0001": "north"})
        north = next(row for row in custom if row.label == "region:north")
        assert north.n_cities == 2

    def test_reporting_precision(self):
        c, _, r = run()
        d = summarize(r, c.cities)[-1].as_dict()
        assert d["final_km2"] == round(d["final_km2"], 3)
        assert d["growth_pct"] == round(d["growth_pct"], 1)
