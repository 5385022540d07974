"""End-to-end scenario experiment: sample, auction, verify, aggregate.

Every replication assembles one market instance from bootstrap draws, runs
the ascending auction, verifies the equilibrium (a verifier failure aborts
the whole run) and contributes one row of market-structure statistics.
Replications are independent and may execute in parallel; results are a pure
function of (inputs, config, seed) regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

from . import bootstrap as bs
from . import metrics
from .auction import brute_force_equilibrium, run_english_auction, verify_equilibrium
from .config import ExperimentConfig
from .core import Equilibrium, FlowMatrix, MarketInstance, quantize, require_valid
from .pipeline import file_digest, read_csv, write_csv


class ExperimentError(RuntimeError):
    """A replication failed verification or a sampler hard-errored."""


@dataclass(frozen=True)
class BootstrapDraw:
    """One replication of all exogenous auction inputs."""

    replication: int
    stream_id: str
    d: tuple[int, ...]
    s: tuple[int, ...]
    t: tuple[tuple[int | None, ...], ...]
    a: int
    c_o: tuple[int, ...]
    rejections: int

    def instance(self) -> MarketInstance:
        mask = tuple(tuple(cost is not None for cost in row) for row in self.t)
        return MarketInstance(s=self.s, d=self.d, a=self.a, c_o=self.c_o, t=self.t, mask=mask)


@dataclass(frozen=True)
class ExperimentContext:
    """Immutable, picklable state shared by all replications of one run."""

    config: ExperimentConfig
    suppliers: tuple[str, ...]
    regions: tuple[str, ...]
    series: tuple[bs.RegionSeries, ...]
    z_scenario: tuple[float, ...]
    shares: tuple[float, ...]  # supplier share estimates, unitless
    deviation_pool: tuple[float, ...]  # capacity deviations, goods units
    cost_fit: bs.TradeCostFit
    base_costs: tuple[tuple[float | None, ...], ...]
    ref_shares: tuple[float, ...]
    reference_index: int
    input_digests: tuple[tuple[str, str], ...]


def load_context(config: ExperimentConfig) -> ExperimentContext:
    """Read the harmonized input tables and fit every sampler."""
    data_dir = Path(config.data_dir)
    paths = {
        name: data_dir / f"{name}.csv"
        for name in ("flows", "local_supply", "demand_series", "scenario_use")
    }
    for name, path in paths.items():
        if not path.exists():
            raise ExperimentError(f"missing input table {path}")

    flows: dict[tuple[str, str, int], float] = {}
    for row in read_csv(paths["flows"]):
        flows[(row["supplier"], row["region"], int(row["year"]))] = float(row["kt"])
    local: dict[tuple[str, int], float] = {}
    for row in read_csv(paths["local_supply"]):
        local[(row["region"], int(row["year"]))] = float(row["kt"])

    suppliers = tuple(sorted({key[0] for key in flows}))
    regions = tuple(sorted({key[1] for key in flows} | {key[0] for key in local}))
    years = sorted({key[2] for key in flows})
    if config.reference_market not in regions:
        raise ExperimentError(f"reference market {config.reference_market!r} not in data")

    series_rows = read_csv(paths["demand_series"])
    series_list = []
    for region in regions:
        rows = sorted(
            (row for row in series_rows if row["region"] == region),
            key=lambda row: int(row["year"]),
        )
        if not rows:
            raise ExperimentError(f"no demand series for region {region!r}")
        series_list.append(
            bs.RegionSeries.from_raw(
                region,
                [float(row["dapmap_mt"]) for row in rows],
                [float(row["fert_mt"]) for row in rows],
                [float(row["crop_use_mt"]) for row in rows],
            )
        )

    z_scenario = {}
    for row in read_csv(paths["scenario_use"]):
        if row["scenario"] == config.scenario:
            z_scenario[row["region"]] = float(row["use_mt"])
    missing = [region for region in regions if region not in z_scenario]
    if missing:
        raise ExperimentError(
            f"scenario {config.scenario!r} lacks fertilizer use for: {', '.join(missing)}"
        )

    supply_by_year = {
        supplier: [
            sum(flows.get((supplier, region, year), 0.0) for region in regions)
            for year in years
        ]
        for supplier in suppliers
    }
    global_demand = [
        sum(local.get((region, year), 0.0) for region in regions)
        + sum(
            flows.get((supplier, region, year), 0.0)
            for supplier in suppliers
            for region in regions
        )
        for year in years
    ]
    share_map, pool_kt = bs.capacity_inputs(
        supply_by_year, global_demand, base=config.capacity_share_base
    )

    inversion = bs.infer_relative_trade_costs(
        flows,
        local,
        suppliers,
        regions,
        years,
        config.reference_market,
        config.reference_year,
        theta=config.theta,
    )
    cost_fit = bs.fit_trade_cost_regression(
        inversion.w,
        inversion.v,
        reference_market=config.reference_market,
        reference_year=config.reference_year,
    )

    digests = tuple(
        (name, file_digest(path)) for name, path in sorted(paths.items())
    )
    return ExperimentContext(
        config=config,
        suppliers=suppliers,
        regions=regions,
        series=tuple(series_list),
        z_scenario=tuple(z_scenario[region] for region in regions),
        shares=tuple(share_map[supplier] for supplier in suppliers),
        deviation_pool=tuple(dev / config.unit_kt for dev in pool_kt),
        cost_fit=cost_fit,
        base_costs=inversion.base_costs,
        ref_shares=inversion.ref_shares,
        reference_index=regions.index(config.reference_market),
        input_digests=digests,
    )


def assemble_draw(context: ExperimentContext, replication: int) -> BootstrapDraw:
    """Sample every exogenous input for one replication."""
    config = context.config
    n = len(context.regions)
    demand_rngs, capacity_rng, cost_rng = bs.replication_streams(
        config.seed, replication, n
    )
    unit_mt = config.unit_kt / 1000.0

    d_units = []
    rejections = 0
    for j in range(n):
        draws, rejected = bs.wild_bootstrap_demand(
            context.series[j],
            context.z_scenario[j],
            1,
            demand_rngs[j],
            min_value=0.5 * unit_mt,
        )
        rejections += rejected
        d_units.append(quantize(draws[0] * 1000.0, config.unit_kt))
    total_units = sum(d_units)

    capacities = bs.sample_capacity(
        float(total_units), context.shares, context.deviation_pool, capacity_rng
    )

    ref_growth = (d_units[context.reference_index] / total_units) / context.ref_shares[
        context.reference_index
    ]
    share_changes = tuple(
        (d_units[j] / total_units) / ref_growth - context.ref_shares[j]
        for j in range(n)
    )
    mask = tuple(
        tuple(cost is not None for cost in row) for row in context.base_costs
    )
    costs = bs.sample_trade_costs(
        context.base_costs,
        share_changes,
        context.cost_fit,
        cost_rng,
        mask,
        scale=config.money_scale,
    )
    a, c_o = bs.calibrate_local_costs(
        d_units, theta=config.theta, scale=config.money_scale
    )
    return BootstrapDraw(
        replication=replication,
        stream_id=f"{config.seed}/{replication}",
        d=tuple(d_units),
        s=capacities,
        t=costs,
        a=a,
        c_o=c_o,
        rejections=rejections,
    )


@dataclass(frozen=True)
class ReplicationResult:
    """Inputs, equilibrium and structure statistics of one replication."""

    draw: BootstrapDraw
    markups: tuple[int, ...]
    flows: tuple[tuple[int, ...], ...]
    concentration: tuple[float, ...]
    local_share: tuple[float, ...]
    diversification: tuple[float | None, ...]
    global_share: tuple[float, ...]
    sold: tuple[int, ...]


def run_replication(context: ExperimentContext, replication: int) -> ReplicationResult:
    draw = assemble_draw(context, replication)
    inst = draw.instance()
    require_valid(inst)
    equilibrium = run_english_auction(inst)
    report = verify_equilibrium(inst, equilibrium)
    if not report.ok:
        witnesses = [
            witness
            for check in (report.capacity, report.utility, report.clearance)
            for witness in check.witnesses
        ]
        raise ExperimentError(
            f"replication {replication} failed verification: " + "; ".join(witnesses)
        )
    flows = equilibrium.flows
    return ReplicationResult(
        draw=draw,
        markups=equilibrium.markups,
        flows=flows.x,
        concentration=tuple(
            metrics.concentration(j, flows, inst) for j in range(inst.n)
        ),
        local_share=tuple(metrics.local_share(j, flows, inst) for j in range(inst.n)),
        diversification=tuple(
            metrics.diversification(i, flows, inst) for i in range(inst.m)
        ),
        global_share=tuple(
            metrics.global_supplier_share(i, flows, inst.d) for i in range(inst.m)
        ),
        sold=tuple(flows.supplier_total(i) for i in range(inst.m)),
    )


def _replicate(payload: tuple[ExperimentContext, int]) -> ReplicationResult:
    context, replication = payload
    return run_replication(context, replication)


@dataclass(frozen=True)
class ScenarioReport:
    """Replication statistics in the shape of the published scenario tables."""

    context: ExperimentContext
    demand_mt: tuple[tuple[float, float], ...]  # per region (mean, sd)
    concentration: tuple[tuple[float, float], ...]
    local_share: tuple[tuple[float, float], ...]
    diversification: tuple[tuple[float, float, int], ...]  # mean, sd, defined count
    global_share: tuple[tuple[float, float], ...]
    trade_costs: metrics.TradeCostSummary
    replications: tuple[ReplicationResult, ...]
    rejections: int


def run_experiment(config: ExperimentConfig) -> ScenarioReport:
    """Execute all replications and aggregate mean/SD statistics."""
    context = load_context(config)
    indices = range(config.replications)
    if config.workers > 1:
        with get_context("spawn").Pool(config.workers) as pool:
            results = pool.map(
                _replicate, [(context, b) for b in indices], chunksize=8
            )
    else:
        results = [run_replication(context, b) for b in indices]
    return aggregate(context, results)


def aggregate(
    context: ExperimentContext, results: list[ReplicationResult]
) -> ScenarioReport:
    config = context.config
    n = len(context.regions)
    m = len(context.suppliers)
    unit_mt = config.unit_kt / 1000.0

    demand_stats = tuple(
        metrics.mean_sd([r.draw.d[j] * unit_mt for r in results]) for j in range(n)
    )
    concentration_stats = tuple(
        metrics.mean_sd([r.concentration[j] for r in results]) for j in range(n)
    )
    local_stats = tuple(
        metrics.mean_sd([r.local_share[j] for r in results]) for j in range(n)
    )
    diversification_stats = []
    for i in range(m):
        defined = [
            r.diversification[i] for r in results if r.diversification[i] is not None
        ]
        if defined:
            mean, sd = metrics.mean_sd(defined)  # type: ignore[arg-type]
        else:
            mean, sd = math.nan, math.nan
        diversification_stats.append((mean, sd, len(defined)))
    global_stats = tuple(
        metrics.mean_sd([r.global_share[i] for r in results]) for i in range(m)
    )
    cost_summary = metrics.entry_floor_summary(
        [r.draw.t for r in results], config.money_scale
    )
    return ScenarioReport(
        context=context,
        demand_mt=demand_stats,
        concentration=concentration_stats,
        local_share=local_stats,
        diversification=tuple(diversification_stats),
        global_share=global_stats,
        trade_costs=cost_summary,
        replications=tuple(results),
        rejections=sum(r.draw.rejections for r in results),
    )


# ---------------------------------------------------------------------------
# Output tables


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def emit_tables(report: ScenarioReport, outdir: Path) -> dict[str, Path]:
    """Write one CSV per table shape plus the run manifest."""
    if not report.replications:
        raise ExperimentError("cannot emit tables for an empty report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    context = report.context
    config = context.config
    regions = context.regions
    suppliers = context.suppliers
    outputs: dict[str, Path] = {}

    def table(name: str, header: list[str], rows: list[list[object]]) -> None:
        path = outdir / f"{name}.csv"
        write_csv(path, header, rows)
        outputs[name] = path

    table(
        "demand",
        ["region", "mean_mt", "sd_mt"],
        [
            [regions[j], _fmt(report.demand_mt[j][0]), _fmt(report.demand_mt[j][1])]
            for j in range(len(regions))
        ],
    )
    table(
        "concentration",
        ["region", "mean", "sd"],
        [
            [regions[j], _fmt(report.concentration[j][0]), _fmt(report.concentration[j][1])]
            for j in range(len(regions))
        ],
    )
    table(
        "local_share",
        ["region", "mean", "sd"],
        [
            [regions[j], _fmt(report.local_share[j][0]), _fmt(report.local_share[j][1])]
            for j in range(len(regions))
        ],
    )
    table(
        "diversification",
        ["supplier", "mean", "sd", "defined"],
        [
            [
                suppliers[i],
                _fmt(report.diversification[i][0]) if report.diversification[i][2] else "",
                _fmt(report.diversification[i][1]) if report.diversification[i][2] else "",
                report.diversification[i][2],
            ]
            for i in range(len(suppliers))
        ],
    )
    table(
        "global_share",
        ["supplier", "mean", "sd"],
        [
            [suppliers[i], _fmt(report.global_share[i][0]), _fmt(report.global_share[i][1])]
            for i in range(len(suppliers))
        ],
    )

    cost_header = ["region"]
    for supplier in suppliers:
        cost_header += [f"{supplier}_mean", f"{supplier}_sd"]
    cost_rows = []
    for j in range(len(regions)):
        row: list[object] = [regions[j]]
        for i in range(len(suppliers)):
            mean = report.trade_costs.mean[i][j]
            sd = report.trade_costs.sd[i][j]
            row += ["" if mean is None else _fmt(mean), "" if sd is None else _fmt(sd)]
        cost_rows.append(row)
    table("trade_costs", cost_header, cost_rows)

    table(
        "entry_floor",
        ["region", "mean_min_cost"],
        [
            [regions[j], _fmt(report.trade_costs.entry_floor[j])]
            for j in range(len(regions))
        ],
    )

    rep_header = ["replication"]
    rep_header += [f"demand_units_{region}" for region in regions]
    rep_header += [f"capacity_{supplier}" for supplier in suppliers]
    rep_header += ["a"]
    rep_header += [f"local_cost_{region}" for region in regions]
    rep_header += [f"markup_{supplier}" for supplier in suppliers]
    rep_header += [f"sold_{supplier}" for supplier in suppliers]
    rep_header += [f"concentration_{region}" for region in regions]
    rep_header += [f"local_share_{region}" for region in regions]
    rep_rows: list[list[object]] = []
    for result in report.replications:
        row = [result.draw.replication]
        row += list(result.draw.d)
        row += list(result.draw.s)
        row.append(result.draw.a)
        row += list(result.draw.c_o)
        row += list(result.markups)
        row += list(result.sold)
        row += [_fmt(value) for value in result.concentration]
        row += [_fmt(value) for value in result.local_share]
        rep_rows.append(row)
    table("replications", rep_header, rep_rows)

    manifest = outdir / "manifest.txt"
    lines = [
        f"scenario: {config.scenario}",
        f"replications: {config.replications}",
        f"seed: {config.seed}",
        f"money_scale: {config.money_scale}",
        f"unit_kt: {config.unit_kt}",
        f"theta: {config.theta}",
        f"capacity_share_base: {config.capacity_share_base}",
        f"reference_market: {config.reference_market}",
        f"reference_year: {config.reference_year}",
        f"suppliers: {','.join(suppliers)}",
        f"regions: {','.join(regions)}",
        f"rejected_draws: {report.rejections}",
    ]
    lines += [f"digest_{name}: {digest}" for name, digest in context.input_digests]
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs["manifest"] = manifest
    return outputs


# ---------------------------------------------------------------------------
# Oracle re-check on down-scaled instances


def downscale_instance(
    inst: MarketInstance, *, max_units: int = 5, max_cost: int = 20
) -> MarketInstance:
    """Shrink an instance onto a grid the brute-force oracle can enumerate.

    Quantities and costs divide by common factors (rounded, floored at one
    unit); the inventory constant rescales to keep its weight against unit
    costs roughly unchanged.
    """
    qdiv = max(1, math.ceil(max(max(inst.s), max(inst.d)) / max_units))
    open_costs = [c for row in inst.t for c in row if c is not None]
    top = max([*open_costs, *inst.c_o, 1])
    cdiv = max(1, math.ceil(top / max_cost))
    s = tuple(max(1, round(v / qdiv)) for v in inst.s)
    d = tuple(max(1, round(v / qdiv)) for v in inst.d)
    c_o = tuple(max(1, round(v / cdiv)) for v in inst.c_o)
    t = tuple(
        tuple(None if v is None else round(v / cdiv) for v in row) for row in inst.t
    )
    a = round(inst.a * qdiv / cdiv)
    return MarketInstance(s=s, d=d, a=a, c_o=c_o, t=t, mask=inst.mask)


def verify_run(
    config: ExperimentConfig, *, sample: int = 20
) -> list[tuple[int, bool, bool]]:
    """Re-check sampled replications: verifier at full scale, oracle downscaled.

    When the configured output directory holds a run manifest, its input
    digests must match the current input tables (the saved run would not be
    reproducible otherwise).  Returns ``(replication, verifier_ok,
    oracle_match)`` per sampled index.
    """
    context = load_context(config)
    manifest = Path(config.output_dir) / "manifest.txt"
    if manifest.exists():
        recorded = {}
        for line in manifest.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition(":")
            if key.startswith("digest_"):
                recorded[key.removeprefix("digest_")] = value.strip()
        for name, digest in context.input_digests:
            if name in recorded and recorded[name] != digest:
                raise ExperimentError(
                    f"input table {name!r} changed since the saved run "
                    f"(digest {digest} != recorded {recorded[name]})"
                )
    step = max(1, config.replications // max(1, sample))
    outcomes = []
    for b in range(0, config.replications, step):
        result = run_replication(context, b)  # raises on verifier failure
        small = downscale_instance(result.draw.instance())
        auction_small = run_english_auction(small)
        oracle_small = brute_force_equilibrium(small)
        outcomes.append(
            (
                b,
                True,
                auction_small.markups == oracle_small.markups
                and verify_equilibrium(small, auction_small).ok
                and verify_equilibrium(small, oracle_small).ok,
            )
        )
    return outcomes


def equilibrium_of(result: ReplicationResult) -> Equilibrium:
    """Rehydrate the stored equilibrium of a replication result."""
    return Equilibrium(result.markups, FlowMatrix(result.flows))
