"""Many-to-many matching simulator for the distributed DAP/MAP market."""

from .auction import (
    DemandBundle,
    VerificationReport,
    brute_force_equilibrium,
    demand_bundle,
    import_spend,
    local_spend,
    run_english_auction,
    valuation,
    verify_equilibrium,
)
from .config import ExperimentConfig, load_config
from .core import (
    Equilibrium,
    FlowMatrix,
    MarketInstance,
    validate_flows,
    validate_instance,
)
from .experiment import ScenarioReport, emit_tables, run_experiment

__version__ = "0.1.0"

__all__ = [
    "DemandBundle",
    "Equilibrium",
    "ExperimentConfig",
    "FlowMatrix",
    "MarketInstance",
    "ScenarioReport",
    "VerificationReport",
    "brute_force_equilibrium",
    "demand_bundle",
    "emit_tables",
    "import_spend",
    "load_config",
    "local_spend",
    "run_english_auction",
    "run_experiment",
    "valuation",
    "validate_flows",
    "validate_instance",
    "verify_equilibrium",
]
