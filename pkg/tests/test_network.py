import math

import pytest
from hypothesis import given, strategies as st

from powertrip.network import (NetworkParams, bandwidth_of, comm_delay, round_comm_time,
                               site_bandwidth)
from powertrip.scenario import SiteSpec

GB15 = 1_500_000_000
NET = NetworkParams()


def site(sid="a", d=1000.0, bw="derived"):
    return SiteSpec(sid, d, 3000.0, 10, bandwidth_bps=bw, static_fraction=1.0)


def test_worked_delay_1000_miles():
    # 2*1000*1609.344/2e8 + 8*1.5e9/1e9
    assert comm_delay(site(d=1000, bw=1e9), GB15, NET) == pytest.approx(12.0160934, abs=1e-6)


def test_worked_delay_10000_miles():
    assert comm_delay(site(d=10_000, bw=1e8), GB15, NET) == pytest.approx(120.160934, abs=1e-5)


@pytest.mark.parametrize("d, expected", [(100, 10e9), (1000, 1e9), (10_000, 1e8)])
def test_derived_bandwidth(d, expected):
    assert bandwidth_of(d, NET) == pytest.approx(expected, rel=1e-12)


def test_bandwidth_floor():
    assert bandwidth_of(1e6, NET) == NET.bandwidth_floor_bps


def test_derived_matches_explicit():
    assert comm_delay(site(d=1000), GB15, NET) == comm_delay(site(d=1000, bw=1e9), GB15, NET)


def test_zero_update_is_propagation_only():
    assert comm_delay(site(d=1000, bw=1e9), 0, NET) == pytest.approx(2 * 1000 * 1609.344 / 2e8)


def test_half_duplex_doubles_transfer():
    half = NetworkParams(duplex="half")
    s = site(d=1000, bw=1e9)
    prop = 2 * 1000 * 1609.344 / 2e8
    assert comm_delay(s, GB15, half) - prop == pytest.approx(2 * (comm_delay(s, GB15, NET) - prop))


def test_round_comm_is_straggler():
    sites = [site("a", 100), site("b", 10_000), site("c", 1000)]
    assert round_comm_time(sites, GB15, NET) == comm_delay(sites[1], GB15, NET)


def test_empty_selection_rejected():
    with pytest.raises(ValueError):
        round_comm_time([], GB15, NET)


def test_nonpositive_distance_for_derived_bandwidth():
    with pytest.raises(ValueError):
        bandwidth_of(0, NET)


def test_bad_duplex():
    with pytest.raises(ValueError):
        NetworkParams(duplex="full").validate()


@given(st.floats(1, 20_000), st.floats(1, 20_000), st.integers(1, 10 ** 10))
def test_delay_nondecreasing_in_distance(d1, d2, size):
    lo, hi = sorted((d1, d2))
    assert comm_delay(site(d=lo), size, NET) <= comm_delay(site(d=hi), size, NET)


@given(st.floats(1, 20_000), st.integers(1, 10 ** 10), st.integers(1, 10 ** 10))
def test_delay_nondecreasing_in_size(d, s1, s2):
    lo, hi = sorted((s1, s2))
    assert comm_delay(site(d=d), lo, NET) <= comm_delay(site(d=d), hi, NET)


@given(st.lists(st.floats(1, 20_000), min_size=1, max_size=12))
def test_straggler_dominates_every_member(ds):
    sites = [site(f"s{i}", d) for i, d in enumerate(ds)]
    t = round_comm_time(sites, GB15, NET)
    assert all(comm_delay(s, GB15, NET) <= t for s in sites)
    assert math.isfinite(t)


def test_site_bandwidth_explicit():
    assert site_bandwidth(site(bw=5e9), NET) == 5e9
