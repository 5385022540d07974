"""Concentration, diversification and replication statistics."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from phosmarket.core import FlowMatrix, MarketInstance
from phosmarket.metrics import (
    concentration,
    diversification,
    entry_floor_summary,
    global_supplier_share,
    local_share,
    market_structure_rows,
    mean_sd,
    supplier_structure_rows,
)


def instance(m, n, s, d):
    return MarketInstance(
        s=tuple(s),
        d=tuple(d),
        a=0,
        c_o=(10,) * n,
        t=tuple((0,) * n for _ in range(m)),
        mask=tuple((True,) * n for _ in range(m)),
    )


def test_concentration_monopoly_is_one():
    inst = instance(2, 1, [6, 6], [6])
    sole = FlowMatrix.from_rows([[6], [0]])
    assert concentration(0, sole, inst) == pytest.approx(1.0)
    all_local = FlowMatrix.from_rows([[0], [0]])
    assert concentration(0, all_local, inst) == pytest.approx(1.0)


def test_concentration_equal_shares_is_zero():
    inst = instance(5, 1, [1] * 5, [6])
    flows = FlowMatrix.from_rows([[1]] * 5)  # five imports plus one local unit
    assert concentration(0, flows, inst) == pytest.approx(0.0)


def test_concentration_half_local_half_single_supplier():
    inst = instance(5, 1, [5] * 5, [10])
    flows = FlowMatrix.from_rows([[5], [0], [0], [0], [0]])
    assert concentration(0, flows, inst) == pytest.approx(0.4)


@given(
    st.lists(st.integers(min_value=0, max_value=20), min_size=1, max_size=6),
    st.integers(min_value=0, max_value=20),
)
def test_concentration_stays_in_unit_interval(imports, local):
    d = sum(imports) + local
    if d == 0:
        return
    m = len(imports)
    inst = instance(m, 1, [max(q, 1) for q in imports], [d])
    flows = FlowMatrix.from_rows([[q] for q in imports])
    value = concentration(0, flows, inst)
    assert -1e-12 <= value <= 1 + 1e-12


def test_diversification_single_market_is_zero():
    inst = instance(1, 3, [4], [4, 4, 4])
    flows = FlowMatrix.from_rows([[4, 0, 0]])
    assert diversification(0, flows, inst) == pytest.approx(0.0)


def test_diversification_equal_split_is_one():
    inst = instance(1, 4, [8], [4, 4, 4, 4])
    flows = FlowMatrix.from_rows([[2, 2, 2, 2]])
    assert diversification(0, flows, inst) == pytest.approx(1.0)


def test_diversification_two_of_nine_split():
    inst = instance(1, 9, [8], [8] * 9)
    flows = FlowMatrix.from_rows([[4, 4, 0, 0, 0, 0, 0, 0, 0]])
    assert diversification(0, flows, inst) == pytest.approx(0.5625, abs=1e-12)


def test_diversification_undefined_when_unsold():
    inst = instance(1, 2, [4], [4, 4])
    flows = FlowMatrix.from_rows([[0, 0]])
    assert diversification(0, flows, inst) is None


def test_diversification_requires_two_markets():
    inst = instance(1, 1, [4], [4])
    flows = FlowMatrix.from_rows([[4]])
    with pytest.raises(ValueError):
        diversification(0, flows, inst)


def test_local_share_examples():
    inst = instance(1, 1, [4], [4])
    assert local_share(0, FlowMatrix.from_rows([[0]]), inst) == pytest.approx(1.0)
    assert local_share(0, FlowMatrix.from_rows([[4]]), inst) == pytest.approx(0.0)
    assert local_share(0, FlowMatrix.from_rows([[1]]), inst) == pytest.approx(0.75)


def test_global_share_examples():
    flows = FlowMatrix.from_rows([[0, 0], [3, 2]])
    assert global_supplier_share(0, flows, (25, 25)) == pytest.approx(0.0)
    assert global_supplier_share(1, flows, (25, 25)) == pytest.approx(0.10)
    sole = FlowMatrix.from_rows([[2, 3]])
    assert global_supplier_share(0, sole, (2, 3)) == pytest.approx(1.0)


def test_shares_account_for_all_demand():
    inst = instance(2, 2, [3, 3], [4, 5])
    flows = FlowMatrix.from_rows([[2, 1], [0, 3]])
    total = sum(inst.d)
    global_sum = sum(global_supplier_share(i, flows, inst.d) for i in range(2))
    local_weighted = sum(
        local_share(j, flows, inst) * inst.d[j] / total for j in range(2)
    )
    assert global_sum + local_weighted == pytest.approx(1.0)


def test_structure_rows_are_consistent():
    inst = instance(2, 2, [3, 3], [4, 5])
    flows = FlowMatrix.from_rows([[2, 1], [0, 3]])
    market_rows = market_structure_rows(inst, flows)
    for row in market_rows:
        assert sum(row.shares) == pytest.approx(1.0)
        assert row.shares[0] == pytest.approx(row.local_share)
    supplier_rows = supplier_structure_rows(inst, flows)
    assert supplier_rows[0].sold == 3 and supplier_rows[0].fully_utilized
    assert supplier_rows[1].sold == 3 and supplier_rows[1].fully_utilized


def test_mean_sd_conventions():
    mean, sd = mean_sd([0.5])
    assert (mean, sd) == (0.5, 0.0)
    mean, sd = mean_sd([0.10, 0.14])
    assert mean == pytest.approx(0.12)
    assert sd == pytest.approx(math.sqrt(0.0008), abs=1e-12)
    with pytest.raises(ValueError):
        mean_sd([])


def test_entry_floor_summary_two_replications():
    draws = [
        ((10, None), (14, 20)),
        ((14, None), (10, 22)),
    ]
    summary = entry_floor_summary(draws, scale=100)
    assert summary.mean[0][0] == pytest.approx(0.12)
    assert summary.sd[0][0] == pytest.approx(math.sqrt(0.0008), abs=1e-12)
    assert summary.mean[0][1] is None and summary.sd[0][1] is None
    # per-market floor: mean over draws of the cheapest open cost
    assert summary.entry_floor[0] == pytest.approx((0.10 + 0.10) / 2)
    assert summary.entry_floor[1] == pytest.approx((0.20 + 0.22) / 2)


def test_entry_floor_summary_single_replication_has_zero_sd():
    summary = entry_floor_summary([((10, 20),)], scale=100)
    assert summary.sd[0] == (0.0, 0.0)


def test_entry_floor_summary_rejects_shifting_mask():
    draws = [((10,),), ((None,),)]
    with pytest.raises(ValueError):
        entry_floor_summary(draws, scale=100)


def test_entry_floor_summary_needs_replications():
    with pytest.raises(ValueError):
        entry_floor_summary([], scale=100)
