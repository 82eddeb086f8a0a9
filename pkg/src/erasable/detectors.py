"""Classifiers for the five kinds of erasable account.

Contract rules look only at runtime code.  EOA rules combine the state
fields with the account's transaction history.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .isa import DEFAULT_FORK, FORKS, decode, first_block, split_blocks
from .state import AccountHistory, AccountState, format_address, parse_address
from .symstack import ExecBudget, SymResult, contains_call_opcode, simulate_depth, sym_exec

PARITY_LIBRARY = 0x863DF6BFA4469F3EAD0BE8F9F2AAE51C91A907B4

DEFAULT_DOS_OPS = frozenset(
    {"EXTCODESIZE", "EXTCODECOPY", "BALANCE", "CALL", "DELEGATECALL", "CALLCODE", "SELFDESTRUCT"}
)


class Label(str, enum.Enum):
    MC_S = "MC_S"
    OPCODE_ERROR = "OpcodeError"
    STACK_ERROR = "StackError"
    MC_RS = "MC_RS"
    PARITY_DEPENDENT = "ParityDependent"
    DOS_MALICIOUS = "DoSMalicious"
    EMPTY_ACCOUNT = "EmptyAccount"
    DOS_EOA = "DoSEOA"

    def __str__(self) -> str:
        return self.value

    @property
    def category(self) -> str:
        return CATEGORY_OF[self]


# declaration order above is the precedence order for the primary label
PRECEDENCE = tuple(Label)

CATEGORIES = (
    "Meaningless contract",
    "Stack/opcode error contract",
    "DoS contract",
    "Empty account",
    "DoS EOA",
)
CATEGORY_OF = {
    Label.MC_S: "Meaningless contract",
    Label.MC_RS: "Meaningless contract",
    Label.STACK_ERROR: "Stack/opcode error contract",
    Label.OPCODE_ERROR: "Stack/opcode error contract",
    Label.PARITY_DEPENDENT: "DoS contract",
    Label.DOS_MALICIOUS: "DoS contract",
    Label.EMPTY_ACCOUNT: "Empty account",
    Label.DOS_EOA: "DoS EOA",
}
DOS_CONTRACT_LABELS = frozenset({Label.PARITY_DEPENDENT, Label.DOS_MALICIOUS})


@dataclass(frozen=True)
class DetectorConfig:
    removed_contracts: frozenset[int] = frozenset({PARITY_LIBRARY})
    dos_op_threshold: int = 100
    dos_ops: frozenset[str] = DEFAULT_DOS_OPS
    exec_budget: ExecBudget = field(default_factory=ExecBudget)
    fork: str = DEFAULT_FORK

    def __post_init__(self):
        if self.dos_op_threshold < 1:
            raise ValueError("dos_op_threshold must be >= 1")
        if self.fork not in FORKS:
            raise ValueError(f"unknown fork {self.fork!r}")
        for addr in self.removed_contracts:
            if not 0 <= addr < 2**160:
                raise ValueError("removed contract addresses must be 20 bytes")

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        kw = {}
        if "removed_contracts" in data:
            kw["removed_contracts"] = frozenset(parse_address(a) for a in data["removed_contracts"])
        if "extra_removed_contracts" in data:
            base = kw.get("removed_contracts", cls.removed_contracts)
            kw["removed_contracts"] = base | {parse_address(a) for a in data["extra_removed_contracts"]}
        if "dos_op_threshold" in data:
            kw["dos_op_threshold"] = int(data["dos_op_threshold"])
        if "dos_ops" in data:
            kw["dos_ops"] = frozenset(data["dos_ops"])
        if "exec_budget" in data:
            kw["exec_budget"] = ExecBudget(**data["exec_budget"])
        if "fork" in data:
            kw["fork"] = data["fork"]
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "DetectorConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# -- contract detectors -----------------------------------------------------


def detect_mc_s(code: bytes) -> bool:
    return len(code) > 0 and code[0] == 0x00


def detect_mc_rs(code: bytes, fork: str = DEFAULT_FORK) -> bool:
    block = first_block(code, fork)
    return block is not None and any(
        ins.mnemonic in ("REVERT", "SELFDESTRUCT") for ins in block
    )


def detect_stack_error(code: bytes, fork: str = DEFAULT_FORK) -> bool:
    block = first_block(code, fork)
    return block is not None and not simulate_depth(block).ok


def detect_opcode_error(code: bytes, fork: str = DEFAULT_FORK) -> bool:
    block = first_block(code, fork)
    return block is not None and any(not ins.opcode.is_known for ins in block)


def count_dos_ops(code: bytes, config: DetectorConfig) -> tuple[int, int]:
    """Return (number of basic blocks, number of DoS-related instructions)."""
    instrs = decode(code, config.fork)
    blocks = split_blocks(instrs)
    return len(blocks), sum(ins.mnemonic in config.dos_ops for ins in instrs)


def detect_dos_malicious(code: bytes, config: DetectorConfig = DetectorConfig()) -> bool:
    n_blocks, n_ops = count_dos_ops(code, config)
    return n_blocks == 1 and n_ops > config.dos_op_threshold


def parity_scan(code: bytes, config: DetectorConfig = DetectorConfig()) -> SymResult | None:
    """Symbolically execute ``code`` unless it has no call-family opcode."""
    if not contains_call_opcode(code, config.fork):
        return None
    return sym_exec(code, config.exec_budget, config.fork)


def detect_parity_dep(code: bytes, config: DetectorConfig = DetectorConfig()) -> tuple[bool, set[int]]:
    result = parity_scan(code, config)
    if result is None:
        return False, set()
    matched = result.concrete_targets & config.removed_contracts
    return bool(matched), matched


# -- EOA detectors ----------------------------------------------------------


def detect_empty_account(state: AccountState, hist: AccountHistory) -> bool:
    if state.balance != 0 or state.nonce != 0 or state.code:
        return False
    oldest = hist.oldest
    return (
        oldest is not None
        and oldest.is_creation
        and oldest.created_address == state.address
    )


def detect_dos_eoa(state: AccountState, hist: AccountHistory) -> bool:
    if state.balance != 1 or state.nonce != 0 or state.code:
        return False
    if hist.external_in or hist.external_out or hist.internal_out:
        return False
    clean = [tx for tx in hist.internal_in if tx.error is None]
    return len(clean) == 1


# -- combined ---------------------------------------------------------------


@dataclass
class Classification:
    address: int
    labels: tuple[Label, ...] = ()
    evidence: dict[Label, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    sym: SymResult | None = field(default=None, repr=False, compare=False)

    @property
    def primary(self) -> Label | None:
        return self.labels[0] if self.labels else None

    @property
    def is_erasable(self) -> bool:
        return bool(self.labels)

    def to_json(self) -> dict:
        return {
            "address": format_address(self.address),
            "primary": None if self.primary is None else self.primary.value,
            "labels": [l.value for l in self.labels],
            "evidence": {l.value: self.evidence[l] for l in self.labels if l in self.evidence},
            "notes": self.notes,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "Classification":
        labels = tuple(sorted((Label(l) for l in rec.get("labels", [])), key=PRECEDENCE.index))
        return cls(
            address=parse_address(rec["address"]),
            labels=labels,
            evidence={Label(k): v for k, v in rec.get("evidence", {}).items()},
            notes=list(rec.get("notes", [])),
        )


def _classify_contract(code: bytes, config: DetectorConfig, out: Classification) -> set[Label]:
    fired = set()
    fork = config.fork
    if detect_mc_s(code):
        fired.add(Label.MC_S)
        out.evidence[Label.MC_S] = "first byte 0x00 (STOP)"

    block = first_block(code, fork)
    names = block.mnemonics if block else []
    hits = [n for n in names if n in ("REVERT", "SELFDESTRUCT")]
    if hits:
        fired.add(Label.MC_RS)
        out.evidence[Label.MC_RS] = f"{'/'.join(sorted(set(hits)))} in first block ({len(names)} instructions)"

    unknown = [ins for ins in block or () if not ins.opcode.is_known]
    if unknown:
        fired.add(Label.OPCODE_ERROR)
        out.evidence[Label.OPCODE_ERROR] = "unknown opcode " + ", ".join(
            f"0x{ins.opcode.byte_value:02x}@{ins.offset}" for ins in unknown[:8]
        )

    depth = simulate_depth(block) if block else None
    if depth is not None and not depth.ok:
        fired.add(Label.STACK_ERROR)
        out.evidence[Label.STACK_ERROR] = f"{depth.kind} at offset {depth.at_offset}"

    n_blocks, n_ops = count_dos_ops(code, config)
    if n_blocks == 1 and n_ops > config.dos_op_threshold:
        fired.add(Label.DOS_MALICIOUS)
        out.evidence[Label.DOS_MALICIOUS] = f"{n_ops} DoS-related operations in a single block"

    sym = parity_scan(code, config)
    out.sym = sym
    if sym is not None:
        matched = sym.concrete_targets & config.removed_contracts
        if matched:
            fired.add(Label.PARITY_DEPENDENT)
            ops = sorted({e.call_opcode for e in sym.events if e.target in matched})
            out.evidence[Label.PARITY_DEPENDENT] = "calls removed " + ", ".join(
                format_address(a) for a in sorted(matched)
            ) + f" via {'/'.join(ops)}"
        elif not sym.terminated_normally:
            out.notes.append("parity scan inconclusive: execution budget exhausted")
    return fired


def _classify_eoa(state: AccountState, hist: AccountHistory, out: Classification) -> set[Label]:
    fired = set()
    if detect_empty_account(state, hist):
        fired.add(Label.EMPTY_ACCOUNT)
        out.evidence[Label.EMPTY_ACCOUNT] = "created by deployment tx 0x" + hist.oldest.hash.hex()
    if detect_dos_eoa(state, hist):
        fired.add(Label.DOS_EOA)
        clean = next(tx for tx in hist.internal_in if tx.error is None)
        errored = len(hist.internal_in) - 1
        out.evidence[Label.DOS_EOA] = f"single clean internal tx 0x{clean.hash.hex()}" + (
            f"; {errored} errored internal tx ignored" if errored else ""
        )
    return fired


def classify(
    state: AccountState,
    hist: AccountHistory | None = None,
    config: DetectorConfig = DetectorConfig(),
) -> Classification:
    out = Classification(state.address)
    if state.code:
        fired = _classify_contract(state.code, config, out)
    else:
        fired = _classify_eoa(state, hist or AccountHistory(), out)
    out.labels = tuple(l for l in PRECEDENCE if l in fired)
    return out
