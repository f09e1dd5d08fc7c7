import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _shared import PARAMS, slowdown_field
from oracles import exposure_geometry_mc, interference_story_mc
from vanetperf.interference import (
    LinkContext,
    NetworkParams,
    Region,
    Strategy,
    connect_prob,
    interfere_given_transmit_mpr,
    interfere_given_transmit_varpow,
    interference_prob,
    link_table,
    neighbor_regions,
    region1_q_gap,
    relay_cdf,
)
from vanetperf.traffic import homogeneous_field, mean_count

LAM = 20.0
R = 0.1
F = 10 ** 0.25


@pytest.fixture(scope="module")
def flat():
    return homogeneous_field(LAM)


# -- parameters and contexts ---------------------------------------------------------

def test_params_validation_and_derived():
    p = NetworkParams()
    assert p.range_factor == pytest.approx(10 ** 0.25)
    assert p.R_I == pytest.approx(0.177827941, rel=1e-9)
    assert NetworkParams(tau=0.25).T == 4
    for bad in (dict(R=0), dict(gamma=2.0), dict(beta=0), dict(cs_range=0.05), dict(tau=0.3), dict(tau=0)):
        with pytest.raises(ValueError):
            NetworkParams(**bad)
    with pytest.raises(ValueError):
        NetworkParams().T


def test_strategy_parse_and_context():
    assert Strategy.parse("np") is Strategy.NP
    with pytest.raises(ValueError):
        Strategy.parse("XYZ")
    with pytest.raises(ValueError):
        LinkContext(1.0, 0.0, "MPR")
    with pytest.raises(ValueError):
        LinkContext(0.02, 0.05, "MPR")
    assert LinkContext(1.0, 0.05, "mp").b == pytest.approx(0.95)


# -- connectivity and relay law -------------------------------------------------------

def test_connect_prob(flat):
    assert connect_prob(flat, PARAMS, 2.0) == pytest.approx(1 - math.exp(-LAM * R), rel=1e-12)
    assert connect_prob(flat, PARAMS, 0.0) == 0.0
    assert connect_prob(flat, PARAMS, 0.05) == pytest.approx(1 - math.exp(-LAM * 0.05), rel=1e-12)


def test_relay_cdf_closed_forms(flat):
    pc = 1 - math.exp(-LAM * R)
    r = 0.05
    mpr = (math.exp(-LAM * (R - r)) - math.exp(-LAM * R)) / pc
    np_ = (1 - math.exp(-LAM * r)) / pc
    assert abs(relay_cdf(flat, PARAMS, 2.0, r, "MPR") - mpr) < 1e-10
    assert abs(relay_cdf(flat, PARAMS, 2.0, r, "MP") - mpr) < 1e-10
    assert abs(relay_cdf(flat, PARAMS, 2.0, r, "NP") - np_) < 1e-10
    # with lam * R = 2 and r = R / 2 both reduce to logistic values
    assert relay_cdf(flat, PARAMS, 2.0, r, "MPR") == pytest.approx(1 / (1 + math.e), abs=1e-10)
    assert relay_cdf(flat, PARAMS, 2.0, r, "NP") == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-10)
    for s in ("MPR", "NP"):
        assert relay_cdf(flat, PARAMS, 2.0, 0.0, s) == pytest.approx(0.0, abs=1e-15)
        assert relay_cdf(flat, PARAMS, 2.0, R, s) == pytest.approx(1.0, abs=1e-15)


def test_relay_cdf_errors(flat):
    with pytest.raises(ValueError):
        relay_cdf(flat, PARAMS, 2.0, 0.2, "MPR")
    with pytest.raises(ValueError):
        relay_cdf(flat, PARAMS, 0.0, 0.01, "MPR")
    with pytest.raises(ValueError):
        relay_cdf(homogeneous_field(0.0), PARAMS, 2.0, 0.01, "NP")


def test_relay_cdf_matches_sampled_layouts(flat):
    rng = np.random.default_rng(5)
    far, near = [], []
    for _ in range(20_000):
        k = rng.poisson(LAM * R)
        if k == 0:
            continue
        dist = rng.uniform(0, R, k)
        far.append(dist.max())
        near.append(dist.min())
    far, near = np.array(far), np.array(near)
    for r in (0.02, 0.05, 0.08):
        for sample, s in ((far, "MPR"), (near, "NP")):
            emp = np.mean(sample <= r)
            se = math.sqrt(emp * (1 - emp) / sample.size)
            assert abs(emp - relay_cdf(flat, PARAMS, 2.0, r, s)) < 4 * se + 1e-12


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.11, 4.9), r1=st.floats(0.0, 0.1), r2=st.floats(0.0, 0.1), s=st.sampled_from(["MPR", "NP"]))
def test_relay_cdf_monotone(a, r1, r2, s):
    d = slowdown_field(15.0)
    lo, hi = sorted((r1, r2))
    assert relay_cdf(d, PARAMS, a, lo, s) <= relay_cdf(d, PARAMS, a, hi, s) + 1e-12


# -- regions ----------------------------------------------------------------------------

def test_neighbor_regions_geometry():
    RI = PARAMS.R_I
    regs = neighbor_regions(LinkContext(2.0, 0.06, "MPR"), PARAMS, 5.0)
    assert [(g.lo, g.hi, g.kind) for g in regs] == [
        pytest.approx((1.94, 1.94 + RI, 1)), pytest.approx((1.94 - RI, 1.9, 2))]
    regs = neighbor_regions(LinkContext(2.0, 0.06, "NP"), PARAMS, 5.0)
    assert [(g.lo, g.hi) for g in regs] == [pytest.approx((2.0, 1.94 + RI)), pytest.approx((1.94 - RI, 1.94))]
    # clamping at the road start
    regs = neighbor_regions(LinkContext(0.1, 0.05, "MP"), PARAMS, 5.0)
    assert regs[0].lo == pytest.approx(0.05) and len(regs) == 1


def test_neighbor_regions_csma_split():
    regs = neighbor_regions(LinkContext(2.0, 0.09, "MPR"), PARAMS, 5.0, csma=True)
    sensed = [g for g in regs if not g.hidden]
    hidden = [g for g in regs if g.hidden]
    assert all(2.0 - 0.178 - 1e-12 <= g.lo and g.hi <= 2.0 + 0.178 + 1e-12 for g in sensed)
    assert hidden and all(g.hi <= 2.0 - 0.178 + 1e-12 or g.lo >= 2.0 + 0.178 - 1e-12 for g in hidden)
    plain = neighbor_regions(LinkContext(2.0, 0.09, "MPR"), PARAMS, 5.0)
    assert sum(g.width for g in regs) == pytest.approx(sum(g.width for g in plain))
    with pytest.raises(ValueError):
        neighbor_regions(LinkContext(2.0, 0.09, "MPR"), NetworkParams(), 5.0, csma=True)


def test_region1_q_gap(flat):
    RI = PARAMS.R_I
    ctx = LinkContext(2.0, 0.06, "MPR")
    assert region1_q_gap(flat, PARAMS, ctx) == pytest.approx((1.94 + RI - 2.1) / RI, rel=1e-12)
    ctx = LinkContext(2.0, 0.06, "NP")
    assert region1_q_gap(flat, PARAMS, ctx) == pytest.approx((1.94 + RI - 2.1) / (RI - 0.06), rel=1e-12)
    # Region 1 never reaches past a + R
    assert region1_q_gap(flat, PARAMS, LinkContext(2.0, 0.09, "MPR")) == 0.0
    # empty Region 1 at the road end
    assert region1_q_gap(flat, PARAMS, LinkContext(5.0, 0.0001, "NP")) == 1.0


def test_conditional_building_blocks(flat):
    assert interfere_given_transmit_mpr(flat, PARAMS, 2.0, 1.0) == pytest.approx(1 - math.exp(-2.0))
    assert interfere_given_transmit_mpr(flat, PARAMS, 2.0, 0.0) == 1.0
    # s beyond the largest possible interference radius
    assert interfere_given_transmit_varpow(flat, PARAMS, 2.0, PARAMS.R_I + 0.01, 1.0, "MP") == 0.0
    # no backward nodes at the road start
    assert interfere_given_transmit_varpow(flat, PARAMS, 0.0, 0.01, 1.0, "NP") == 0.0
    s = 0.1
    u = s / F
    tail_mp = 1 - (math.exp(-LAM * (R - u)) - math.exp(-LAM * R)) / (1 - math.exp(-LAM * R))
    expect = (1 - math.exp(-LAM * R)) * tail_mp
    assert interfere_given_transmit_varpow(flat, PARAMS, 2.0, s, 1.0, "MP") == pytest.approx(expect, rel=1e-10)


# -- interference probability ---------------------------------------------------------------

def test_mpr_closed_form(flat):
    # homogeneous MPR: region-1 nodes beyond a+R need a backward node, everybody else transmits
    a, r = 2.5, 0.06
    RI = PARAMS.R_I
    total = LAM * (RI + (RI - (R - r)))
    hit = LAM * ((a + R) - (a - r)) + LAM * (a - r + RI - a - R) * (1 - math.exp(-LAM * R)) + LAM * (RI - (R - r)) * (1 - math.exp(-LAM * R))
    res = interference_prob(flat, PARAMS, LinkContext(a, r, "MPR"))
    assert res.value == pytest.approx(hit / total, rel=1e-8)
    assert res.exposure == pytest.approx(hit, rel=1e-8)


def test_interference_frozen_value(flat):
    assert interference_prob(flat, PARAMS, LinkContext(2.5, 0.06, "MP")).value == pytest.approx(0.5795759358389215, rel=1e-8)


def test_empty_and_edge_cases():
    empty = homogeneous_field(0.0)
    res = interference_prob(empty, PARAMS, LinkContext(2.0, 0.05, "NP"))
    assert res.value == 0.0 and res.exposure == 0.0
    with pytest.raises(ValueError):
        interference_prob(homogeneous_field(5.0), PARAMS, LinkContext(2.0, 0.05, "NP"), model="bogus")


@pytest.mark.parametrize("strategy,a,r", [("MPR", 2.5, 0.06), ("MP", 2.5, 0.08), ("NP", 2.5, 0.03)])
def test_interference_matches_story_mc(flat, strategy, a, r):
    res = interference_prob(flat, PARAMS, LinkContext(a, r, strategy))
    est, se = interference_story_mc(strategy, LAM, a, r, trials=100_000, seed=1)
    assert abs(est - res.value) <= 3 * se


@pytest.mark.parametrize("strategy,a,r", [("MPR", 2.5, 0.06), ("MP", 2.5, 0.08), ("NP", 2.5, 0.03)])
def test_exact_model_matches_full_geometry(flat, strategy, a, r):
    ex = interference_prob(flat, PARAMS, LinkContext(a, r, strategy), model="exact").exposure
    est, se = exposure_geometry_mc(strategy, LAM, a, r, trials=4000, seed=2)
    assert abs(est - ex) <= 3.5 * se


def test_models_coincide_for_mpr_on_flat_road(flat):
    ctx = LinkContext(2.5, 0.07, "MPR")
    assert interference_prob(flat, PARAMS, ctx).exposure == pytest.approx(
        interference_prob(flat, PARAMS, ctx, model="exact").exposure, rel=1e-7)


def test_csma_split_preserves_exposure(flat):
    ctx = LinkContext(2.5, 0.08, "MP")
    plain = interference_prob(flat, PARAMS, ctx).exposure
    sensed, hidden = interference_prob(flat, PARAMS, ctx, csma=True).exposure_split()
    assert hidden > 0
    assert sensed + hidden == pytest.approx(plain, rel=1e-7)


# -- vectorized table -------------------------------------------------------------------

@pytest.mark.parametrize("strategy", ["MPR", "MP", "NP"])
@pytest.mark.parametrize("model", ["independent", "exact"])
def test_table_matches_adaptive_route(strategy, model):
    d = slowdown_field(15.0)
    positions = np.array([0.07, 0.95, 1.3, 2.0, 3.02, 4.97])
    tab = link_table(d, PARAMS, strategy, positions, model=model)
    for k, a in enumerate(positions):
        assert tab.connect[k] == pytest.approx(connect_prob(d, PARAMS, a), rel=1e-12)
        for j in (0, len(tab.r[k]) // 2, len(tab.r[k]) - 1):
            ctx = LinkContext(a, tab.r[k][j], strategy)
            sensed, hidden = interference_prob(d, PARAMS, ctx, csma=True, model=model).exposure_split()
            # fixed Gauss panels against adaptive Simpson: both well inside 1e-4
            assert tab.sensed[k][j] == pytest.approx(sensed, rel=1e-4, abs=1e-7)
            assert tab.hidden[k][j] == pytest.approx(hidden, rel=1e-4, abs=1e-7)


def test_table_weights_sum_to_connectivity():
    d = slowdown_field(15.0)
    positions = np.linspace(0.0, 5.0, 21)
    for s in ("MPR", "NP"):
        tab = link_table(d, PARAMS, s, positions)
        sums = np.array([w.sum() for w in tab.weights])
        np.testing.assert_allclose(sums, tab.connect, rtol=1e-7, atol=1e-12)
        assert tab.weights[0].size == 0
