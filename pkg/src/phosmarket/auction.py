"""Buyer valuation, demand, and the ascending auction for minimal markups.

Buyers on each market face quadratic spending schedules: the k-th locally
produced unit costs ``c_oj + a*(2k - 1)`` at the margin and the u-th unit from
supplier i costs ``t_ij + p_i + a*(2u - 1)``.  A market demanding ``d`` units
therefore solves a separable convex assignment: buy the ``d`` cheapest units
across the local source and all unmasked suppliers.  That assignment is
computed exactly on the integer cost grid by a waterline search
(:func:`_min_spend`), which provably matches exhaustive enumeration.

The ascending auction raises markups along steepest-descent directions of the
aggregate objective ``sum_j V_j(p) + p . s`` (indirect buyer surplus plus the
value of unsold capacity).  Raising every overdemanded supplier by one tick is
the generic special case of this rule; near cost ties the naive rule can
overshoot the minimal equilibrium, so the direction set is chosen as the
unique minimal minimizer of the one-tick objective change.  The terminal
markups are certified against :func:`brute_force_equilibrium` in the tests.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

from .core import (
    Equilibrium,
    FlowMatrix,
    MarketInstance,
    require_valid,
    validate_flows,
)


class AuctionError(RuntimeError):
    """Internal inconsistency in the ascending auction (a bug, not a model state)."""


class EnumerationBudgetError(RuntimeError):
    """The brute-force oracle exceeded its enumeration budget."""


# ---------------------------------------------------------------------------
# Spending schedules


def local_spend(z: int, j: int, inst: MarketInstance) -> int:
    """Spending on ``z`` locally produced units: ``z * (a*z + c_oj)``."""
    if not 0 <= z <= inst.d[j]:
        raise ValueError(f"local purchase {z} outside [0, {inst.d[j]}]")
    return z * (inst.a * z + inst.c_o[j])


def import_spend(z: int, i: int, j: int, inst: MarketInstance) -> int:
    """Spending on ``z`` units shipped from supplier i at cost value."""
    if not inst.mask[i][j]:
        raise ValueError(f"pair (supplier {i}, market {j}) is masked")
    if not 0 <= z <= inst.s[i]:
        raise ValueError(f"import {z} outside [0, {inst.s[i]}]")
    return z * (inst.a * z + inst.trade_cost(i, j))


# ---------------------------------------------------------------------------
# Waterline assignment of the d cheapest units

# A source is (base, cap): its u-th unit costs base + a*(2u - 1), u = 1..cap.
_Source = tuple[int, int]


def _units_at_or_below(base: int, a: int, cap: int, mu: int) -> int:
    """Number of units of one source with marginal cost <= mu."""
    if cap <= 0:
        return 0
    if a == 0:
        return cap if base <= mu else 0
    if mu < base + a:
        return 0
    k = (mu - base + a) // (2 * a)
    return k if k < cap else cap


def _min_spend(sources: Sequence[_Source], a: int, d: int, mu_hint: int | None = None) -> tuple[int, int]:
    """Exact minimum spend for ``d`` units across sources and its waterline.

    ``sources`` must be able to supply at least ``d`` units in total.  With a
    hint from a previous call whose per-source bases have each moved up by at
    most one minor unit, the waterline can only be the hint or the hint plus
    one; otherwise a binary search over the integer cost grid is used.
    """
    if d <= 0:
        return 0, 0

    def supply(mu: int) -> int:
        total = 0
        for base, cap in sources:
            total += _units_at_or_below(base, a, cap, mu)
            if total >= d:
                return total
        return total

    if mu_hint is not None:
        mu = mu_hint if supply(mu_hint) >= d else mu_hint + 1
        if supply(mu) < d:
            raise AuctionError("stale waterline hint; price moved by more than one tick")
    else:
        lo = min(base + a for base, cap in sources if cap > 0)
        hi = max(base + a * (2 * cap - 1) for base, cap in sources if cap > 0)
        while lo < hi:
            mid = (lo + hi) // 2
            if supply(mid) >= d:
                hi = mid
            else:
                lo = mid + 1
        mu = lo

    spend = 0
    below = 0
    for base, cap in sources:
        k = _units_at_or_below(base, a, cap, mu - 1)
        spend += base * k + a * k * k
        below += k
    if below >= d:
        raise AuctionError("waterline search produced an inconsistent basket")
    spend += (d - below) * mu
    return spend, mu


@dataclass(frozen=True)
class _MarketDemand:
    """Tie-aware structure of one market's cheapest-units basket."""

    mu: int
    spend: int
    forced: tuple[int, ...]  # per supplier, units strictly below the waterline
    tie: tuple[int, ...]  # per supplier, units exactly at the waterline
    forced_local: int
    tie_local: int
    remainder: int  # waterline units still to distribute among ties

    def minimal_imports(self) -> tuple[int, ...]:
        """Unique minimal bundle: remainder goes local first, then by index."""
        left = self.remainder - min(self.remainder, self.tie_local)
        z = list(self.forced)
        for i, slack in enumerate(self.tie):
            take = min(left, slack)
            z[i] += take
            left -= take
        if left:
            raise AuctionError("tie capacity cannot absorb the waterline remainder")
        return tuple(z)


def _demand_structure(inst: MarketInstance, j: int, markups: Sequence[int]) -> _MarketDemand:
    a, d = inst.a, inst.d[j]
    sources: list[_Source] = [(inst.c_o[j], d)]
    idx: list[int] = []
    for i in range(inst.m):
        if inst.mask[i][j]:
            sources.append((inst.t[i][j] + markups[i], inst.s[i]))  # type: ignore[operator]
            idx.append(i)
    spend, mu = _min_spend(sources, a, d)
    forced = [0] * inst.m
    tie = [0] * inst.m
    forced_local = tie_local = 0
    below_total = 0
    for pos, (base, cap) in enumerate(sources):
        k_below = _units_at_or_below(base, a, cap, mu - 1)
        k_at = _units_at_or_below(base, a, cap, mu) - k_below
        below_total += k_below
        if pos == 0:
            forced_local, tie_local = k_below, k_at
        else:
            forced[idx[pos - 1]] = k_below
            tie[idx[pos - 1]] = k_at
    return _MarketDemand(
        mu=mu,
        spend=spend,
        forced=tuple(forced),
        tie=tuple(tie),
        forced_local=forced_local,
        tie_local=tie_local,
        remainder=d - below_total,
    )


# ---------------------------------------------------------------------------
# Valuation and demand correspondence


def valuation(xcap: Sequence[int], j: int, inst: MarketInstance) -> int:
    """Maximum savings from substituting local goods with capped imports.

    Equals the exhaustive maximum of
    ``e_oj(d_j) - e_oj(d_j - sum z) - sum e_ij(z_i)`` over all bundles with
    ``z_i <= xcap_i`` and total at most ``d_j``; computed as the local-only
    spend minus the cheapest-units spend with import caps ``xcap``.
    """
    if len(xcap) != inst.m:
        raise ValueError("cap vector length must equal supplier count")
    sources: list[_Source] = [(inst.c_o[j], inst.d[j])]
    for i, cap in enumerate(xcap):
        if not 0 <= cap <= inst.s[i]:
            raise ValueError(f"cap {cap} outside [0, {inst.s[i]}] (supplier {i})")
        if cap > 0 and not inst.mask[i][j]:
            raise ValueError(f"positive cap on masked pair ({i}, {j})")
        if cap > 0:
            sources.append((inst.t[i][j], cap))  # type: ignore[arg-type]
    spend, _ = _min_spend(sources, inst.a, inst.d[j])
    return local_spend(inst.d[j], j, inst) - spend


@dataclass(frozen=True)
class DemandBundle:
    """A payoff-maximizing import bundle for one market at given markups."""

    z: tuple[int, ...]
    utility: int


def demand_bundle(j: int, markups: Sequence[int], inst: MarketInstance) -> DemandBundle:
    """Minimal payoff-maximizing bundle (ties go local first, then low index)."""
    if len(markups) != inst.m:
        raise ValueError("markup vector length must equal supplier count")
    if any(p < 0 for p in markups):
        raise ValueError("markups must be nonnegative")
    structure = _demand_structure(inst, j, markups)
    z = structure.minimal_imports()
    utility = local_spend(inst.d[j], j, inst) - structure.spend
    return DemandBundle(z=z, utility=utility)


def bundle_utility(z: Sequence[int], j: int, markups: Sequence[int], inst: MarketInstance) -> int:
    """Payoff of an arbitrary bundle: valuation minus markup payments."""
    return valuation(z, j, inst) - sum(p * q for p, q in zip(markups, z))


# ---------------------------------------------------------------------------
# Ascending auction


def _markup_bound(inst: MarketInstance) -> int:
    """No buyer pays above its worst local marginal cost."""
    return max(inst.c_o[j] + inst.a * (2 * inst.d[j] - 1) for j in range(inst.n))


def run_english_auction(
    inst: MarketInstance, *, trace: list[tuple[int, ...]] | None = None
) -> Equilibrium:
    """Compute the equilibrium with the componentwise smallest markup vector.

    Markups start at zero and never decrease.  Each tick raises by one minor
    unit the minimal set of suppliers that steepest-descends the aggregate
    objective; the auction stops when no one-tick raise improves it, at which
    point a feasible allocation (capacity caps plus at least one unit sold per
    positively marked supplier) is assembled from the tie structure.

    A ``trace`` list, when given, receives the markup vector at every tick.
    """
    require_valid(inst)
    m, n = inst.m, inst.n
    markups = [0] * m
    cap_sum = [0] * (1 << m)
    for bits in range(1, 1 << m):
        low = bits & -bits
        cap_sum[bits] = cap_sum[bits ^ low] + inst.s[low.bit_length() - 1]

    max_ticks = m * (_markup_bound(inst) + 1)
    mu_hints: dict[tuple[int, int], int] = {}

    def spends(bits: int) -> int:
        total = 0
        for j in range(n):
            a, d = inst.a, inst.d[j]
            sources: list[_Source] = [(inst.c_o[j], d)]
            for i in range(m):
                if inst.mask[i][j]:
                    bump = 1 if bits >> i & 1 else 0
                    sources.append((inst.t[i][j] + markups[i] + bump, inst.s[i]))  # type: ignore[operator]
            spend, mu = _min_spend(sources, a, d, mu_hints.get((j, bits)))
            mu_hints[(j, bits)] = mu
            total += spend
        return total

    for _ in range(max_ticks + 1):
        if trace is not None:
            trace.append(tuple(markups))
        base = spends(0)
        best = 0
        argmin = 0  # intersection of all minimizing direction sets
        for bits in range(1, 1 << m):
            delta = cap_sum[bits] - (spends(bits) - base)
            if delta < best:
                best = delta
                argmin = bits
            elif delta == best and best < 0:
                argmin &= bits
        if best >= 0:
            return Equilibrium(tuple(markups), _allocate(inst, markups))
        check = cap_sum[argmin] - (spends(argmin) - base)
        if check != best:
            raise AuctionError("descent directions do not intersect; demand is not substitutable")
        for i in range(m):
            if argmin >> i & 1:
                markups[i] += 1
    raise AuctionError("tick budget exhausted without reaching an equilibrium")


def _allocate(inst: MarketInstance, markups: Sequence[int]) -> FlowMatrix:
    """Select per-market optimal bundles that jointly satisfy all conditions."""
    m, n = inst.m, inst.n
    structures = [_demand_structure(inst, j, markups) for j in range(n)]

    # Fast path: the minimal demanded bundles already clear everything.
    minimal = [structure.minimal_imports() for structure in structures]
    sold = [sum(minimal[j][i] for j in range(n)) for i in range(m)]
    if all(sold[i] <= inst.s[i] for i in range(m)) and all(
        sold[i] > 0 or markups[i] == 0 for i in range(m)
    ):
        return FlowMatrix(tuple(tuple(minimal[j][i] for j in range(n)) for i in range(m)))

    forced_total = [sum(structures[j].forced[i] for j in range(n)) for i in range(m)]
    needs = [
        max(0, 1 - forced_total[i]) if markups[i] > 0 else 0 for i in range(m)
    ]
    if any(forced_total[i] > inst.s[i] for i in range(m)):
        raise AuctionError("forced demand exceeds capacity at terminal markups")

    # Transportation with lower bounds: each market distributes its waterline
    # remainder among tie units; suppliers take at most their spare capacity
    # and, when positively marked, at least one unit overall.
    source, sink = 0, n + m + 1
    ssource, ssink = n + m + 2, n + m + 3
    net = _FlowNetwork(n + m + 4)
    excess = [0] * (n + m + 4)
    for j in range(n):
        r = structures[j].remainder
        excess[1 + j] += r  # source -> market arc with equal lower/upper bound
        excess[source] -= r
        net.add(1 + j, sink, structures[j].tie_local)
        for i in range(m):
            if structures[j].tie[i] > 0:
                net.add(1 + j, 1 + n + i, structures[j].tie[i])
    take_edges: dict[tuple[int, int], int] = {
        (j, i): e
        for j in range(n)
        for i in range(m)
        for e in [net.edge_id(1 + j, 1 + n + i)]
        if e is not None
    }
    for i in range(m):
        spare = inst.s[i] - forced_total[i]
        if needs[i] > spare:
            raise AuctionError("clearance requirement exceeds spare capacity")
        net.add(1 + n + i, sink, spare - needs[i])
        excess[sink] += needs[i]
        excess[1 + n + i] -= needs[i]
    net.add(sink, source, sum(structures[j].remainder for j in range(n)))
    required = 0
    for node in range(n + m + 4):
        if excess[node] > 0:
            net.add(ssource, node, excess[node])
            required += excess[node]
        elif excess[node] < 0:
            net.add(node, ssink, -excess[node])
    if net.max_flow(ssource, ssink) != required:
        raise AuctionError("no market-clearing allocation exists at terminal markups")

    rows = []
    for i in range(m):
        row = []
        for j in range(n):
            take = net.flow(take_edges[(j, i)]) if (j, i) in take_edges else 0
            row.append(structures[j].forced[i] + take)
        rows.append(tuple(row))
    return FlowMatrix(tuple(rows))


class _FlowNetwork:
    """Minimal Edmonds-Karp max-flow used for the terminal allocation."""

    def __init__(self, nodes: int) -> None:
        self.adj: list[list[int]] = [[] for _ in range(nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add(self, u: int, v: int, cap: int) -> int:
        e = len(self.to)
        self.adj[u].append(e)
        self.to.append(v)
        self.cap.append(cap)
        self.adj[v].append(e + 1)
        self.to.append(u)
        self.cap.append(0)
        return e

    def edge_id(self, u: int, v: int) -> int | None:
        for e in self.adj[u]:
            if e % 2 == 0 and self.to[e] == v:
                return e
        return None

    def flow(self, e: int) -> int:
        return self.cap[e + 1]

    def max_flow(self, s: int, t: int) -> int:
        total = 0
        while True:
            parent = [-1] * len(self.adj)
            parent_edge = [-1] * len(self.adj)
            parent[s] = s
            queue = deque([s])
            while queue and parent[t] == -1:
                u = queue.popleft()
                for e in self.adj[u]:
                    v = self.to[e]
                    if self.cap[e] > 0 and parent[v] == -1:
                        parent[v] = u
                        parent_edge[v] = e
                        queue.append(v)
            if parent[t] == -1:
                return total
            push = None
            v = t
            while v != s:
                e = parent_edge[v]
                push = self.cap[e] if push is None else min(push, self.cap[e])
                v = parent[v]
            v = t
            while v != s:
                e = parent_edge[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                v = parent[v]
            total += push


# ---------------------------------------------------------------------------
# Verification


@dataclass(frozen=True)
class ConditionCheck:
    passed: bool
    witnesses: tuple[str, ...] = ()


@dataclass(frozen=True)
class VerificationReport:
    """Per-condition result of checking an equilibrium candidate."""

    capacity: ConditionCheck
    utility: ConditionCheck
    clearance: ConditionCheck

    @property
    def ok(self) -> bool:
        return self.capacity.passed and self.utility.passed and self.clearance.passed


def verify_equilibrium(inst: MarketInstance, eq: Equilibrium) -> VerificationReport:
    """Check capacity, payoff maximization and clearance, with witnesses."""
    structural = validate_flows(eq.flows, inst)
    if len(eq.markups) != inst.m or any(p < 0 for p in eq.markups):
        structural.append("malformed markup vector")
    if structural:
        failed = ConditionCheck(False, tuple(structural))
        return VerificationReport(capacity=failed, utility=failed, clearance=failed)

    capacity_witnesses = tuple(
        f"supplier {i} ships {eq.flows.supplier_total(i)} > capacity {inst.s[i]}"
        for i in range(inst.m)
        if eq.flows.supplier_total(i) > inst.s[i]
    )
    utility_witnesses = []
    for j in range(inst.n):
        bundle = tuple(eq.flows.x[i][j] for i in range(inst.m))
        attained = bundle_utility(bundle, j, eq.markups, inst)
        best = demand_bundle(j, eq.markups, inst).utility
        if attained != best:
            utility_witnesses.append(
                f"market {j} gets utility {attained}, maximum is {best}"
            )
    clearance_witnesses = tuple(
        f"supplier {i} unsold at positive markup {eq.markups[i]}"
        for i in range(inst.m)
        if eq.flows.supplier_total(i) == 0 and eq.markups[i] > 0
    )
    return VerificationReport(
        capacity=ConditionCheck(not capacity_witnesses, capacity_witnesses),
        utility=ConditionCheck(not utility_witnesses, tuple(utility_witnesses)),
        clearance=ConditionCheck(not clearance_witnesses, clearance_witnesses),
    )


# ---------------------------------------------------------------------------
# Brute-force oracle


def _bundles(inst: MarketInstance, j: int) -> list[tuple[int, ...]]:
    ranges = [
        range(inst.s[i] + 1) if inst.mask[i][j] else range(1) for i in range(inst.m)
    ]
    return [z for z in itertools.product(*ranges) if sum(z) <= inst.d[j]]


def _enumerated_values(inst: MarketInstance, j: int, bundles: list[tuple[int, ...]]) -> list[int]:
    """Valuation of every bundle by direct enumeration of sub-bundles."""
    savings = {}
    for w in bundles:
        total = sum(w)
        cost = sum(
            w[i] * (inst.a * w[i] + inst.t[i][j])  # type: ignore[operator]
            for i in range(inst.m)
            if w[i]
        )
        savings[w] = (
            local_spend(inst.d[j], j, inst)
            - local_spend(inst.d[j] - total, j, inst)
            - cost
        )
    values = []
    for z in bundles:
        values.append(
            max(
                savings[w]
                for w in bundles
                if all(w[i] <= z[i] for i in range(inst.m))
            )
        )
    return values


def _markup_vectors(m: int, p_max: int) -> Iterator[tuple[int, ...]]:
    """All vectors on [0, p_max]^m ordered by total, then lexicographically."""

    def compositions(total: int, slots: int) -> Iterator[tuple[int, ...]]:
        if slots == 1:
            if total <= p_max:
                yield (total,)
            return
        first_min = max(0, total - (slots - 1) * p_max)
        for first in range(first_min, min(total, p_max) + 1):
            for rest in compositions(total - first, slots - 1):
                yield (first, *rest)

    for total in range(m * p_max + 1):
        yield from compositions(total, m)


def brute_force_equilibrium(
    inst: MarketInstance, p_max: int | None = None, *, budget: int = 500_000
) -> Equilibrium:
    """Smallest-markup equilibrium by exhaustive enumeration (test oracle).

    Markup vectors on the integer grid are scanned in order of total then
    lexicographically; at each vector every jointly feasible selection of
    payoff-maximizing bundles is searched for one satisfying capacity and
    clearance.  Intended for small instances only.
    """
    require_valid(inst)
    m, n = inst.m, inst.n
    if p_max is None:
        p_max = _markup_bound(inst)
    bundles = [_bundles(inst, j) for j in range(n)]
    values = [_enumerated_values(inst, j, bundles[j]) for j in range(n)]

    examined = 0
    for markups in _markup_vectors(m, p_max):
        examined += 1
        if examined > budget:
            raise EnumerationBudgetError(
                f"enumeration budget exhausted after {budget} markup vectors"
            )
        argmax: list[list[tuple[int, ...]]] = []
        for j in range(n):
            utilities = [
                value - sum(p * q for p, q in zip(markups, z))
                for z, value in zip(bundles[j], values[j])
            ]
            best = max(utilities)
            argmax.append(
                [z for z, u in zip(bundles[j], utilities) if u == best]
            )
        selection = _select_flows(inst, markups, argmax)
        if selection is not None:
            return Equilibrium(markups, FlowMatrix(selection))
    raise AuctionError("no equilibrium found on the markup grid")


def _select_flows(
    inst: MarketInstance,
    markups: tuple[int, ...],
    argmax: list[list[tuple[int, ...]]],
) -> tuple[tuple[int, ...], ...] | None:
    """Pick one argmax bundle per market meeting capacity and clearance."""
    m, n = inst.m, inst.n
    chosen: list[tuple[int, ...]] = []
    seen: set[tuple[int, tuple[int, ...], frozenset[int]]] = set()
    lacking0 = frozenset(i for i in range(m) if markups[i] > 0)

    def search(j: int, caps: tuple[int, ...], lacking: frozenset[int]) -> bool:
        if j == n:
            return not lacking
        state = (j, caps, lacking)
        if state in seen:
            return False
        for z in argmax[j]:
            if all(z[i] <= caps[i] for i in range(m)):
                chosen.append(z)
                left = frozenset(i for i in lacking if not z[i])
                if search(j + 1, tuple(caps[i] - z[i] for i in range(m)), left):
                    return True
                chosen.pop()
        seen.add(state)
        return False

    if not search(0, inst.s, lacking0):
        return None
    return tuple(tuple(chosen[j][i] for j in range(n)) for i in range(m))
