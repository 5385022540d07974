"""Shared domain types and exact-arithmetic conventions.

Quantities are nonnegative integers counted in goods units (one unit is a
quantum of P2O5 mass; kilotonnes by default, configurable in the pipeline).
Money values are integers in minor cost units, a fixed-point representation
of the relative cost unit (``MONEY_SCALE`` minor units equal 1.00).  Every
spending, valuation and utility value downstream is computed on these integer
grids and never rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

#: Minor cost units per relative cost unit (2-decimal precision by default).
MONEY_SCALE = 100

#: Supplier markups in minor units, one entry per international supplier.
MarkupVector = tuple[int, ...]


def quantize(value: float, unit: float) -> int:
    """Round a physical value onto the integer goods grid (half away up)."""
    if unit <= 0:
        raise ValueError("unit size must be positive")
    return int(math.floor(value / unit + 0.5))


def to_minor(value: float, scale: int = MONEY_SCALE) -> int:
    """Round a relative cost value to integer minor units (half away up)."""
    if scale <= 0:
        raise ValueError("money scale must be positive")
    if value >= 0:
        return int(math.floor(value * scale + 0.5))
    return -int(math.floor(-value * scale + 0.5))


def to_relative(minor: int, scale: int = MONEY_SCALE) -> float:
    """Express integer minor units as a relative cost value."""
    return minor / scale


@dataclass(frozen=True)
class MarketInstance:
    """One fully calibrated auction problem.

    Attributes:
        s: per-supplier annual capacities (units, each >= 1).
        d: per-market demands (units, each >= 1).
        a: inventory/congestion cost constant (minor units per unit squared).
        c_o: per-market local unit production costs (minor units, > 0).
        t: m x n unit trade costs (minor units); ``None`` exactly where the
            pair is masked out of the trade network.
        mask: m x n booleans, True where supplier -> market trade is allowed.
    """

    s: tuple[int, ...]
    d: tuple[int, ...]
    a: int
    c_o: tuple[int, ...]
    t: tuple[tuple[int | None, ...], ...]
    mask: tuple[tuple[bool, ...], ...]

    @property
    def m(self) -> int:
        return len(self.s)

    @property
    def n(self) -> int:
        return len(self.d)

    def trade_cost(self, i: int, j: int) -> int:
        """Unit trade cost for an allowed pair; raises on a masked pair."""
        cost = self.t[i][j]
        if cost is None:
            raise ValueError(f"pair (supplier {i}, market {j}) is masked")
        return cost


def validate_instance(inst: MarketInstance) -> list[str]:
    """Return the list of violated instance invariants (empty when valid)."""
    issues: list[str] = []
    m, n = inst.m, inst.n
    if m < 1:
        issues.append("instance must have at least one supplier")
    if n < 1:
        issues.append("instance must have at least one market")
    if len(inst.c_o) != n:
        issues.append("local cost vector length must equal market count")
    if len(inst.t) != m or any(len(row) != n for row in inst.t):
        issues.append("trade cost table must be m x n")
    if len(inst.mask) != m or any(len(row) != n for row in inst.mask):
        issues.append("mask must be m x n")
    for i, cap in enumerate(inst.s):
        if cap < 1:
            issues.append(f"capacity must be >= 1 (supplier {i})")
    for j, dem in enumerate(inst.d):
        if dem < 1:
            issues.append(f"demand must be >= 1 (market {j})")
    if inst.a < 0:
        issues.append("inventory cost constant must be >= 0")
    for j, cost in enumerate(inst.c_o):
        if cost <= 0:
            issues.append(f"local unit cost must be > 0 (market {j})")
    if len(inst.t) == m and len(inst.mask) == m:
        for i in range(m):
            if len(inst.t[i]) != n or len(inst.mask[i]) != n:
                continue
            for j in range(n):
                cost, allowed = inst.t[i][j], inst.mask[i][j]
                if allowed and cost is None:
                    issues.append(f"missing cost on open pair ({i}, {j})")
                elif allowed and cost is not None and cost < 0:
                    issues.append(f"negative trade cost on pair ({i}, {j})")
                elif not allowed and cost is not None:
                    issues.append(f"cost on masked pair ({i}, {j})")
    return issues


def require_valid(inst: MarketInstance) -> None:
    """Raise ``ValueError`` when the instance breaks any invariant."""
    issues = validate_instance(inst)
    if issues:
        raise ValueError("invalid market instance: " + "; ".join(issues))


@dataclass(frozen=True)
class FlowMatrix:
    """Integer goods flows from each international supplier to each market.

    Local supply is derived, never stored: ``x_o[j] = d[j] - imports into j``.
    """

    x: tuple[tuple[int, ...], ...]

    def supplier_total(self, i: int) -> int:
        return sum(self.x[i])

    def market_total(self, j: int) -> int:
        return sum(row[j] for row in self.x)

    @staticmethod
    def from_rows(rows: list[list[int]]) -> FlowMatrix:
        return FlowMatrix(tuple(tuple(row) for row in rows))


def local_quantities(flows: FlowMatrix, inst: MarketInstance) -> tuple[int, ...]:
    """Per-market local supply implied by demand minus imports."""
    return tuple(inst.d[j] - flows.market_total(j) for j in range(inst.n))


def validate_flows(flows: FlowMatrix, inst: MarketInstance) -> list[str]:
    """Return violated flow invariants against the given instance."""
    issues: list[str] = []
    m, n = inst.m, inst.n
    if len(flows.x) != m or any(len(row) != n for row in flows.x):
        return ["flow matrix must be m x n"]
    for i in range(m):
        for j in range(n):
            q = flows.x[i][j]
            if q < 0:
                issues.append(f"negative flow on pair ({i}, {j})")
            if q > 0 and not inst.mask[i][j]:
                issues.append(f"flow crosses masked pair ({i}, {j})")
        if flows.supplier_total(i) > inst.s[i]:
            issues.append(f"capacity exceeded (supplier {i})")
    for j in range(n):
        if flows.market_total(j) > inst.d[j]:
            issues.append(f"imports exceed demand (market {j})")
    return issues


@dataclass(frozen=True)
class Equilibrium:
    """Markups and flows jointly satisfying the three market conditions."""

    markups: MarkupVector
    flows: FlowMatrix
