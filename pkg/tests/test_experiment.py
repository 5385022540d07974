"""Configuration parsing, draw assembly, report emission and the CLI."""

from pathlib import Path

import pytest

from phosmarket.cli import main
from phosmarket.config import ConfigError, ExperimentConfig, load_config
from phosmarket.core import validate_instance
from phosmarket.experiment import (
    ExperimentError,
    aggregate,
    assemble_draw,
    downscale_instance,
    emit_tables,
    load_context,
    run_experiment,
    run_replication,
)
from phosmarket.pipeline import read_csv

DATA = Path(__file__).parent / "data" / "fixture_small"


def fixture_config(tmp_path, **overrides):
    fields = dict(
        scenario="BAU",
        seed=20240815,
        reference_market="east",
        reference_year=2013,
        data_dir=DATA,
        output_dir=tmp_path / "out",
        replications=8,
        money_scale=100,
        unit_kt=25.0,
        theta=1.0,
        workers=1,
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


def write_config(tmp_path, **overrides) -> Path:
    config = fixture_config(tmp_path, **overrides)
    lines = [
        f"scenario = {config.scenario}",
        f"replications = {config.replications}",
        f"seed = {config.seed}",
        f"money_scale = {config.money_scale}",
        f"unit_kt = {config.unit_kt}",
        f"theta = {config.theta}",
        f"reference_market = {config.reference_market}",
        f"reference_year = {config.reference_year}",
        f"data_dir = {config.data_dir}",
        f"output_dir = {config.output_dir}",
        f"workers = {config.workers}",
    ]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Configuration


def test_config_file_roundtrip(tmp_path):
    path = write_config(tmp_path)
    config = load_config(path)
    assert config.scenario == "BAU"
    assert config.replications == 8
    assert config.unit_kt == 25.0


def test_config_defaults_and_validation(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(
        "scenario = BAU\nseed = 1\nreference_market = east\n"
        "reference_year = 2013\ndata_dir = d\noutput_dir = o\n"
    )
    config = load_config(path)
    assert config.replications == 1000
    assert config.money_scale == 100
    assert config.theta == 0.5
    assert config.workers == 1


def test_config_rejects_unknown_and_missing_keys(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("scenario = BAU\nbogus = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(path)
    path.write_text("scenario = BAU\n")
    with pytest.raises(ConfigError, match="missing required"):
        load_config(path)


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        fixture_config(tmp_path, replications=0)
    with pytest.raises(ConfigError):
        fixture_config(tmp_path, unit_kt=0.0)
    with pytest.raises(ConfigError):
        fixture_config(tmp_path, capacity_share_base="median")


# ---------------------------------------------------------------------------
# Draw assembly and replications


def test_context_masks_pairs_without_history(tmp_path):
    context = load_context(fixture_config(tmp_path))
    assert context.suppliers == ("atlaschem", "borchem", "capechem")
    assert context.regions == ("east", "north", "south", "west")
    capechem = context.suppliers.index("capechem")
    north = context.regions.index("north")
    assert context.base_costs[capechem][north] is None


def test_draws_are_deterministic_and_replication_indexed(tmp_path):
    context = load_context(fixture_config(tmp_path))
    again = assemble_draw(context, 3)
    assert assemble_draw(context, 3) == again
    assert assemble_draw(context, 4) != again


def test_draw_yields_valid_instance_and_identity(tmp_path):
    context = load_context(fixture_config(tmp_path))
    draw = assemble_draw(context, 0)
    inst = draw.instance()
    assert validate_instance(inst) == []
    for d, c in zip(draw.d, draw.c_o):
        assert draw.a * d + c == 100


def test_replication_passes_verifier_and_masks_flows(tmp_path):
    context = load_context(fixture_config(tmp_path))
    result = run_replication(context, 0)
    capechem = context.suppliers.index("capechem")
    north = context.regions.index("north")
    assert result.flows[capechem][north] == 0
    assert sum(result.sold) > 0


def test_single_replication_report_has_zero_sd(tmp_path):
    config = fixture_config(tmp_path, replications=1)
    report = run_experiment(config)
    assert all(sd == 0.0 for _, sd in report.demand_mt)
    assert all(sd == 0.0 for _, sd in report.concentration)


def test_emit_tables_rerun_is_byte_identical(tmp_path):
    config = fixture_config(tmp_path)
    report = run_experiment(config)
    first = emit_tables(report, tmp_path / "a")
    second = emit_tables(report, tmp_path / "b")
    for name in first:
        assert first[name].read_bytes() == second[name].read_bytes()


def test_emit_tables_blanks_masked_trade_cost_cells(tmp_path):
    config = fixture_config(tmp_path)
    report = run_experiment(config)
    outputs = emit_tables(report, tmp_path / "t")
    rows = read_csv(outputs["trade_costs"])
    north = next(row for row in rows if row["region"] == "north")
    assert north["capechem_mean"] == ""
    assert north["capechem_sd"] == ""
    assert north["atlaschem_mean"] != ""


def test_emit_tables_rejects_empty_report(tmp_path):
    config = fixture_config(tmp_path)
    context = load_context(config)
    report = aggregate(context, [run_replication(context, 0)])
    empty = report.__class__(
        context=report.context,
        demand_mt=report.demand_mt,
        concentration=report.concentration,
        local_share=report.local_share,
        diversification=report.diversification,
        global_share=report.global_share,
        trade_costs=report.trade_costs,
        replications=(),
        rejections=0,
    )
    with pytest.raises(ExperimentError):
        emit_tables(empty, tmp_path / "x")


def test_missing_input_table_is_reported(tmp_path):
    config = fixture_config(tmp_path, data_dir=tmp_path / "nowhere")
    with pytest.raises(ExperimentError, match="missing input table"):
        load_context(config)


def test_downscale_produces_small_valid_instance(tmp_path):
    context = load_context(fixture_config(tmp_path))
    inst = assemble_draw(context, 0).instance()
    small = downscale_instance(inst, max_units=4, max_cost=12)
    assert validate_instance(small) == []
    assert max(max(small.s), max(small.d)) <= 5
    assert small.mask == inst.mask


def test_aggregated_means_stay_inside_replication_envelope(tmp_path):
    eps = 1e-9  # the mean of equal floats can land one ulp off the envelope
    config = fixture_config(tmp_path, replications=12)
    report = run_experiment(config)
    unit_mt = config.unit_kt / 1000.0
    for j in range(len(report.context.regions)):
        demands = [r.draw.d[j] * unit_mt for r in report.replications]
        assert min(demands) - eps <= report.demand_mt[j][0] <= max(demands) + eps
        spreads = [r.concentration[j] for r in report.replications]
        assert min(spreads) - eps <= report.concentration[j][0] <= max(spreads) + eps


def test_verify_rejects_run_with_changed_inputs(tmp_path):
    config = fixture_config(tmp_path, replications=2)
    emit_tables(run_experiment(config), config.output_dir)
    manifest = config.output_dir / "manifest.txt"
    text = manifest.read_text()
    assert "digest_flows" in text
    import re

    manifest.write_text(re.sub(r"digest_flows: \w+", "digest_flows: 0000", text))
    from phosmarket.experiment import verify_run

    with pytest.raises(ExperimentError, match="changed since the saved run"):
        verify_run(config, sample=1)


# ---------------------------------------------------------------------------
# CLI


def test_cli_simulate_and_verify(tmp_path, capsys):
    path = write_config(tmp_path, replications=4)
    assert main(["simulate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "rejected draws" in out
    assert (tmp_path / "out" / "manifest.txt").exists()

    assert main(["verify", "--config", str(path), "--sample", "2"]) == 0
    out = capsys.readouterr().out
    assert "verified" in out


def test_cli_simulate_overrides(tmp_path):
    path = write_config(tmp_path, replications=4)
    alt = tmp_path / "alt"
    assert main([
        "simulate", "--config", str(path),
        "--replications", "2", "--output-dir", str(alt), "--seed", "7",
    ]) == 0
    rows = read_csv(alt / "replications.csv")
    assert len(rows) == 2


def test_cli_pipeline_command(tmp_path, capsys):
    raw = Path(__file__).parent / "data" / "raw_small"
    assert main(["pipeline", "--raw-dir", str(raw), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "flows.csv").exists()


def test_cli_calibrate_command(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["calibrate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "trade_cost" in out


def test_cli_reports_validation_errors_with_exit_1(tmp_path, capsys):
    path = tmp_path / "broken.cfg"
    path.write_text("scenario = BAU\nbogus = 1\n")
    assert main(["simulate", "--config", str(path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_reports_runtime_failures_with_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, data_dir=tmp_path / "missing")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "failure:" in capsys.readouterr().err
