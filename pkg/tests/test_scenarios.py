import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parcelca.errors import ConfigError, DataError
from parcelca.geometry import PointM
from parcelca.scenarios import (
    CityRecord,
    ScenarioKind,
    ScenarioSpec,
    aggregate_growth_rates,
    bau_rate,
    ntu_rate,
    resolve_rate,
    target_areas,
    uao_rate,
)


def city(a07=100.0, a12=100.0, ua=False, cid="c1", level="PLC"):
    return CityRecord(cid, "x", level, PointM(0, 0), a07, a12, ua)


def test_bau_zero_growth():
    assert bau_rate(city(50, 50)) == 0


def test_bau_four_percent():
    # 1.04 ** 5 = 1.2166529...
    assert bau_rate(city(100, 121.66529024)) == pytest.approx(0.04, abs=1e-9)


def test_national_aggregate_rate():
    # the 2007/2012 national totals compound to about 5.16 %/yr
    agg = aggregate_growth_rates([city(36_352, 46_744)])
    assert agg["aggregate_rate"] == pytest.approx(0.0516, abs=5e-4)


def test_mean_and_aggregate_differ():
    cs = [city(10, 20, cid="a"), city(1000, 1000, cid="b")]
    agg = aggregate_growth_rates(cs)
    assert agg["mean_city_rate"] == pytest.approx((2 ** 0.2 - 1) / 2)
    assert agg["aggregate_rate"] == pytest.approx((1020 / 1010) ** 0.2 - 1)


def test_uao():
    assert uao_rate(city(ua=True)) == 0.05
    assert uao_rate(city(ua=False)) == 0.04


@pytest.mark.parametrize("area,rate", [(450, 0.03), (400.0001, 0.03), (400, 0.04), (250, 0.04), (200, 0.05),
                                       (150, 0.05), (100, 0.06), (99, 0.06), (1, 0.06)])
def test_ntu_classes(area, rate):
    assert ntu_rate(city(a12=area)) == rate


def test_target_areas():
    assert target_areas(city(a12=80), ScenarioSpec(ScenarioKind.CUSTOM, 4, {"c1": 0.0})) == [80] * 4
    t = target_areas(city(a12=100), ScenarioSpec(ScenarioKind.CUSTOM, 5, {"c1": 0.06}))
    assert t[-1] == pytest.approx(133.82255776)
    assert len(t) == 5


def test_custom_missing_city():
    with pytest.raises(ConfigError):
        resolve_rate(city(), ScenarioSpec("CUSTOM", 5, {"other": 0.01}))


def test_invalid_records():
    with pytest.raises(DataError):
        city(a07=0)
    with pytest.raises(DataError):
        city(level="XYZ")
    with pytest.raises(ConfigError):
        ScenarioSpec("BAU", 0)
    with pytest.raises(ConfigError):
        ScenarioSpec("CUSTOM", 5, {"a": -1.0})


@given(st.floats(0.1, 5000), st.floats(0.1, 5000), st.booleans(), st.sampled_from(list(ScenarioKind)))
def test_every_city_resolves_to_one_finite_rate(a07, a12, ua, kind):
    c = city(a07, a12, ua)
    r = resolve_rate(c, ScenarioSpec(kind, 5, {"c1": 0.02}))
    assert math.isfinite(r) and r > -1


@given(st.floats(0.1, 5000), st.floats(0.1, 5000))
def test_ntu_monotone(a, b):
    lo, hi = sorted((a, b))
    assert ntu_rate(city(a12=lo)) >= ntu_rate(city(a12=hi))


# rates below float resolution of 1 + r are indistinguishable from zero
@given(st.one_of(st.just(0.0), st.floats(1e-9, 0.5), st.floats(-0.5, -1e-9)), st.integers(1, 15))
def test_targets_monotone_iff_positive_rate(r, horizon):
    t = target_areas(city(a12=50), ScenarioSpec("CUSTOM", horizon, {"c1": r}))
    diffs = [b - a for a, b in zip([50.0] + t, t)]
    if r > 0:
        assert all(d > 0 for d in diffs)
    elif r == 0:
        assert all(d == 0 for d in diffs)
    else:
        assert all(d < 0 for d in diffs)
