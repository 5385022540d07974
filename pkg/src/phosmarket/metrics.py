"""Market-structure statistics computed on equilibrium flows.

Indices are computed in floating point from the exact integer flows; the
flows themselves never leave integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import FlowMatrix, MarketInstance, local_quantities


def concentration(j: int, flows: FlowMatrix, inst: MarketInstance) -> float:
    """Normalized concentration of market j over its m + 1 sources.

    Zero when all sources hold equal shares, one under monopoly.
    """
    d = inst.d[j]
    local = d - flows.market_total(j)
    shares_sq = (local / d) ** 2 + sum((flows.x[i][j] / d) ** 2 for i in range(inst.m))
    k = inst.m + 1
    return (shares_sq - 1 / k) / (1 - 1 / k)


def diversification(i: int, flows: FlowMatrix, inst: MarketInstance) -> float | None:
    """Normalized spread of supplier i's sales across markets.

    Zero when active on a single market, one for an equal n-way split of the
    full capacity; ``None`` (undefined) when the supplier sold nothing.  At
    partial utilization the raw value is reported unclamped.
    """
    if inst.n < 2:
        raise ValueError("diversification needs at least two markets")
    if flows.supplier_total(i) == 0:
        return None
    cap = inst.s[i]
    shares_sq = sum((flows.x[i][j] / cap) ** 2 for j in range(inst.n))
    return 1 - (shares_sq - 1 / inst.n) / (1 - 1 / inst.n)


def local_share(j: int, flows: FlowMatrix, inst: MarketInstance) -> float:
    """Share of market j's demand served by local suppliers."""
    return (inst.d[j] - flows.market_total(j)) / inst.d[j]


def global_supplier_share(i: int, flows: FlowMatrix, demands: Sequence[int]) -> float:
    """Supplier i's sales as a share of total demand across all markets."""
    return flows.supplier_total(i) / sum(demands)


@dataclass(frozen=True)
class MarketStructureRow:
    """Demand-side structure of one market in one equilibrium."""

    market: int
    concentration: float
    local_share: float
    shares: tuple[float, ...]  # local first, then suppliers by index


@dataclass(frozen=True)
class SupplierStructureRow:
    """Supply-side structure of one supplier in one equilibrium."""

    supplier: int
    diversification: float | None
    global_share: float
    sold: int
    fully_utilized: bool


def market_structure_rows(inst: MarketInstance, flows: FlowMatrix) -> list[MarketStructureRow]:
    local = local_quantities(flows, inst)
    rows = []
    for j in range(inst.n):
        d = inst.d[j]
        shares = (local[j] / d, *(flows.x[i][j] / d for i in range(inst.m)))
        rows.append(
            MarketStructureRow(
                market=j,
                concentration=concentration(j, flows, inst),
                local_share=local[j] / d,
                shares=shares,
            )
        )
    return rows


def supplier_structure_rows(inst: MarketInstance, flows: FlowMatrix) -> list[SupplierStructureRow]:
    rows = []
    for i in range(inst.m):
        sold = flows.supplier_total(i)
        rows.append(
            SupplierStructureRow(
                supplier=i,
                diversification=diversification(i, flows, inst) if inst.n > 1 else None,
                global_share=global_supplier_share(i, flows, inst.d),
                sold=sold,
                fully_utilized=sold == inst.s[i],
            )
        )
    return rows


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard deviation (denominator B - 1; 0.0 when B = 1)."""
    if not values:
        raise ValueError("at least one replication is required")
    b = len(values)
    mean = sum(values) / b
    if b == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (b - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class TradeCostSummary:
    """Replication statistics of sampled trade costs, in relative units.

    Masked supplier-market cells are ``None`` in both tables.  The entry
    floor of a market is the replication mean of the cheapest unmasked trade
    cost into it.
    """

    mean: tuple[tuple[float | None, ...], ...]
    sd: tuple[tuple[float | None, ...], ...]
    entry_floor: tuple[float, ...]


def entry_floor_summary(
    cost_draws: Sequence[Sequence[Sequence[int | None]]], scale: int
) -> TradeCostSummary:
    """Summarize per-cell trade-cost draws over bootstrap replications.

    ``cost_draws`` holds one m x n table per replication, in minor units with
    ``None`` exactly at masked cells; the mask must be identical across
    replications.
    """
    if not cost_draws:
        raise ValueError("at least one replication is required")
    m = len(cost_draws[0])
    n = len(cost_draws[0][0]) if m else 0
    mean_rows: list[tuple[float | None, ...]] = []
    sd_rows: list[tuple[float | None, ...]] = []
    for i in range(m):
        means: list[float | None] = []
        sds: list[float | None] = []
        for j in range(n):
            cells = [draw[i][j] for draw in cost_draws]
            if any((c is None) != (cells[0] is None) for c in cells):
                raise ValueError(f"mask differs across replications at ({i}, {j})")
            if cells[0] is None:
                means.append(None)
                sds.append(None)
            else:
                mu, sd = mean_sd([c / scale for c in cells])  # type: ignore[operator]
                means.append(mu)
                sds.append(sd)
        mean_rows.append(tuple(means))
        sd_rows.append(tuple(sds))

    floors = []
    for j in range(n):
        per_draw = []
        for draw in cost_draws:
            open_costs = [draw[i][j] for i in range(m) if draw[i][j] is not None]
            if open_costs:
                per_draw.append(min(open_costs) / scale)
        floors.append(sum(per_draw) / len(per_draw) if per_draw else math.nan)
    return TradeCostSummary(
        mean=tuple(mean_rows), sd=tuple(sd_rows), entry_floor=tuple(floors)
    )
