"""Functional and cost-model simulator of an in-memory-computing recommendation accelerator."""

from .config import ArchConfig, CostTable, WorkloadConfig, load_config, validate
from .ledger import CostLedger, ledger_totals
from .mapper import activation_report, locate, place_tables
from .pipeline import Query, Simulator

__all__ = [
    "ArchConfig", "CostTable", "WorkloadConfig", "load_config", "validate",
    "CostLedger", "ledger_totals", "activation_report", "locate", "place_tables",
    "Query", "Simulator",
]
__version__ = "0.1.0"
