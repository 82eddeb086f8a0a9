"""Detection and characterisation of erasable Ethereum accounts."""

from .detectors import (
    Classification,
    DetectorConfig,
    Label,
    classify,
    detect_dos_eoa,
    detect_dos_malicious,
    detect_empty_account,
    detect_mc_rs,
    detect_mc_s,
    detect_opcode_error,
    detect_parity_dep,
    detect_stack_error,
)
from .isa import decode, first_block, opcode_info, split_blocks
from .report import compute_cdf, compute_waste, run_pipeline
from .state import AccountState, TxRecord, load_accounts, load_transactions
from .symstack import ExecBudget, contains_call_opcode, simulate_depth, sym_exec

__version__ = "0.1.0"

__all__ = [
    "AccountState",
    "Classification",
    "DetectorConfig",
    "ExecBudget",
    "Label",
    "TxRecord",
    "classify",
    "compute_cdf",
    "compute_waste",
    "contains_call_opcode",
    "decode",
    "detect_dos_eoa",
    "detect_dos_malicious",
    "detect_empty_account",
    "detect_mc_rs",
    "detect_mc_s",
    "detect_opcode_error",
    "detect_parity_dep",
    "detect_stack_error",
    "first_block",
    "load_accounts",
    "load_transactions",
    "opcode_info",
    "run_pipeline",
    "simulate_depth",
    "split_blocks",
    "sym_exec",
]
