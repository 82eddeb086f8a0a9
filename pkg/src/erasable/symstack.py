"""Depth tracking and bounded symbolic execution over EVM bytecode.

Stack words are either plain ``int`` (concrete, always reduced mod 2**256) or
:class:`Symbolic` markers.  Memory and storage are not modelled, and the
machine never solves branch conditions: every JUMPI forks.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Union

from .isa import (
    CALL_OPS,
    DEFAULT_FORK,
    STACK_LIMIT,
    BasicBlock,
    Instruction,
    decode,
    to_bytes,
)

log = logging.getLogger(__name__)

WORD_BITS = 256
WORD_MASK = (1 << WORD_BITS) - 1
ADDRESS_MASK = (1 << 160) - 1
SIGN_BIT = 1 << 255

# account-probing opcodes whose operand is an address (graph extension)
PROBE_OPS = frozenset({"BALANCE", "EXTCODESIZE", "EXTCODECOPY", "EXTCODEHASH"})


@dataclass(frozen=True)
class Symbolic:
    origin: str

    def __repr__(self) -> str:
        return f"<{self.origin}>"


Word = Union[int, Symbolic]
SYMBOLIC_TARGET = "symbolic"


# -- depth verdicts ---------------------------------------------------------


@dataclass(frozen=True)
class DepthOutcome:
    kind: str  # "ok" | "underflow" | "overflow"
    final_depth: int | None = None
    at_offset: int | None = None

    @property
    def ok(self) -> bool:
        return self.kind == "ok"


def simulate_depth(block: BasicBlock | list[Instruction]) -> DepthOutcome:
    """Track stack depth through a straight-line block starting from empty."""
    depth = 0
    for ins in block:
        op = ins.opcode
        if not op.is_known:
            continue
        if op.pops > depth:
            return DepthOutcome("underflow", at_offset=ins.offset)
        depth += op.pushes - op.pops
        if depth > STACK_LIMIT:
            return DepthOutcome("overflow", at_offset=ins.offset)
    return DepthOutcome("ok", final_depth=depth)


# -- 256-bit folding --------------------------------------------------------


def _signed(x: int) -> int:
    return x - (1 << 256) if x & SIGN_BIT else x


def _sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    q = abs(sa) // abs(sb)
    return (-q if (sa < 0) != (sb < 0) else q) & WORD_MASK


def _smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    r = abs(sa) % abs(sb)
    return (-r if sa < 0 else r) & WORD_MASK


def _signextend(b: int, x: int) -> int:
    if b >= 31:
        return x
    bits = 8 * (b + 1)
    low = x & ((1 << bits) - 1)
    if low >> (bits - 1):
        return (low | (WORD_MASK ^ ((1 << bits) - 1))) & WORD_MASK
    return low


def _byte(i: int, x: int) -> int:
    return (x >> (8 * (31 - i))) & 0xFF if i < 32 else 0


def _sar(shift: int, x: int) -> int:
    if shift >= 256:
        return WORD_MASK if x & SIGN_BIT else 0
    return (_signed(x) >> shift) & WORD_MASK


# operands in stack order: a = top, b = second, ...
FOLDERS = {
    "ADD": lambda a, b: (a + b) & WORD_MASK,
    "MUL": lambda a, b: (a * b) & WORD_MASK,
    "SUB": lambda a, b: (a - b) & WORD_MASK,
    "DIV": lambda a, b: a // b if b else 0,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "SMOD": _smod,
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
    "EXP": lambda a, b: pow(a, b, 1 << 256),
    "SIGNEXTEND": _signextend,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(_signed(a) < _signed(b)),
    "SGT": lambda a, b: int(_signed(a) > _signed(b)),
    "EQ": lambda a, b: int(a == b),
    "ISZERO": lambda a: int(a == 0),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "NOT": lambda a: a ^ WORD_MASK,
    "BYTE": _byte,
    "SHL": lambda s, x: (x << s) & WORD_MASK if s < 256 else 0,
    "SHR": lambda s, x: x >> s if s < 256 else 0,
    "SAR": _sar,
}


# -- symbolic execution -----------------------------------------------------


@dataclass(frozen=True)
class ExecBudget:
    max_paths: int = 256
    max_steps: int = 4096
    time_limit: float = 5.0
    max_revisits: int = 2

    def __post_init__(self):
        if self.max_paths <= 0 or self.max_steps <= 0 or self.time_limit <= 0:
            raise ValueError("budget limits must be positive")


@dataclass(frozen=True)
class CallEvent:
    call_opcode: str
    target: int | str  # 160-bit int or SYMBOLIC_TARGET
    at_offset: int
    path_id: int = 0

    @property
    def key(self) -> tuple:
        return (self.call_opcode, self.target, self.at_offset)

    @property
    def is_concrete(self) -> bool:
        return self.target != SYMBOLIC_TARGET


@dataclass
class SymbolicState:
    stack: list[Word] = field(default_factory=list)  # top is the last element
    pc: int = 0
    steps: int = 0
    path_id: int = 0
    visits: dict[int, int] = field(default_factory=dict)

    def fork(self, pc: int, path_id: int) -> "SymbolicState":
        return SymbolicState(list(self.stack), pc, self.steps, path_id, dict(self.visits))

    def peek(self, i: int) -> Word:
        """Stack item ``i`` counted from the top (0 = top)."""
        return self.stack[-1 - i]

    def top_first(self) -> list[Word]:
        return self.stack[::-1]


@dataclass
class PathResult:
    path_id: int
    halt: str
    pc: int
    steps: int
    stack: list[Word]  # top first


@dataclass
class SymResult:
    events: list[CallEvent]
    terminated_normally: bool
    probes: list[CallEvent] = field(default_factory=list)
    paths: list[PathResult] = field(default_factory=list)

    @property
    def concrete_targets(self) -> set[int]:
        return {e.target for e in self.events if e.is_concrete}


_ENV_SYMBOLIC = frozenset(
    {
        "ADDRESS", "BALANCE", "ORIGIN", "CALLER", "CALLVALUE", "CALLDATALOAD",
        "CALLDATASIZE", "GASPRICE", "EXTCODESIZE", "RETURNDATASIZE", "EXTCODEHASH",
        "BLOCKHASH", "COINBASE", "TIMESTAMP", "NUMBER", "DIFFICULTY", "GASLIMIT",
        "CHAINID", "SELFBALANCE", "BASEFEE", "BLOBHASH", "BLOBBASEFEE", "MLOAD",
        "SLOAD", "TLOAD", "MSIZE", "GAS", "SHA3", "CREATE", "CREATE2",
    }
)


class _Machine:
    def __init__(self, code: bytes, budget: ExecBudget, fork: str):
        self.code = code
        self.budget = budget
        self.instrs = {ins.offset: ins for ins in decode(code, fork)}
        self.jumpdests = {o for o, ins in self.instrs.items() if ins.mnemonic == "JUMPDEST"}
        self.events: dict[tuple, CallEvent] = {}
        self.probes: dict[tuple, CallEvent] = {}
        self.paths: list[PathResult] = []
        self.exhausted = False
        self.path_count = 1
        self.total_steps = 0
        self.timed_out = False
        self.deadline = time.monotonic() + budget.time_limit

    def run(self) -> SymResult:
        work = [SymbolicState()]
        while work:
            state = work.pop()
            if self.timed_out:
                self._halt(state, "timeout")
                continue
            self._run_path(state, work)
        return SymResult(
            events=sorted(self.events.values(), key=_event_sort),
            terminated_normally=not self.exhausted,
            probes=sorted(self.probes.values(), key=_event_sort),
            paths=sorted(self.paths, key=lambda p: p.path_id),
        )

    def _halt(self, state: SymbolicState, reason: str) -> None:
        self.paths.append(
            PathResult(state.path_id, reason, state.pc, state.steps, state.top_first())
        )

    def _fresh(self, ins: Instruction) -> Symbolic:
        return Symbolic(f"{ins.mnemonic}@{ins.offset}")

    def _enter(self, state: SymbolicState, target: int) -> bool:
        seen = state.visits.get(target, 0)
        if seen > self.budget.max_revisits:
            return False
        state.visits[target] = seen + 1
        return True

    def _run_path(self, state: SymbolicState, work: list[SymbolicState]) -> None:
        stack = state.stack
        while True:
            if state.steps >= self.budget.max_steps:
                self.exhausted = True
                return self._halt(state, "step-limit")
            self.total_steps += 1
            if self.total_steps & 0xFF == 0 and time.monotonic() > self.deadline:
                self.exhausted = self.timed_out = True
                return self._halt(state, "timeout")
            ins = self.instrs.get(state.pc)
            if ins is None:
                return self._halt(state, "code-end")
            op = ins.opcode
            name = op.mnemonic
            if not op.is_known or name == "INVALID":
                return self._halt(state, "bad-instruction")
            if op.pops > len(stack):
                return self._halt(state, "underflow")
            if len(stack) - op.pops + op.pushes > STACK_LIMIT:
                return self._halt(state, "overflow")
            state.steps += 1
            next_pc = ins.next_offset

            if op.immediate_len or name == "PUSH0":
                stack.append(ins.push_value)
            elif name.startswith("DUP"):
                stack.append(stack[-op.pops])
            elif name.startswith("SWAP"):
                n = op.pops
                stack[-1], stack[-n] = stack[-n], stack[-1]
            elif name == "POP":
                stack.pop()
            elif name in FOLDERS:
                args = [stack.pop() for _ in range(op.pops)]
                if all(isinstance(a, int) for a in args):
                    stack.append(FOLDERS[name](*args))
                else:
                    stack.append(self._fresh(ins))
            elif name in CALL_OPS:
                target = stack[-2]
                if isinstance(target, int):
                    target = target & ADDRESS_MASK
                else:
                    target = SYMBOLIC_TARGET
                ev = CallEvent(name, target, ins.offset, state.path_id)
                self.events.setdefault(ev.key, ev)
                del stack[-op.pops :]
                stack.append(self._fresh(ins))
            elif name in ("JUMP", "JUMPI"):
                dest = stack.pop()
                if name == "JUMPI":
                    stack.pop()
                    # fall-through branch continues in this path
                    if isinstance(dest, int) and dest in self.jumpdests:
                        if self.path_count < self.budget.max_paths:
                            self.path_count += 1
                            branch = state.fork(dest, self.path_count - 1)
                            if self._enter(branch, dest):
                                work.append(branch)
                            else:
                                self._halt(branch, "revisit-limit")
                        else:
                            self.exhausted = True
                    state.pc = next_pc
                    continue
                if not isinstance(dest, int):
                    return self._halt(state, "symbolic-jump")
                if dest not in self.jumpdests:
                    return self._halt(state, "bad-jump")
                if not self._enter(state, dest):
                    return self._halt(state, "revisit-limit")
                state.pc = dest
                continue
            elif name in ("STOP", "RETURN", "REVERT", "SELFDESTRUCT"):
                del stack[len(stack) - op.pops :]
                return self._halt(state, name.lower())
            elif name == "PC":
                stack.append(ins.offset)
            elif name == "CODESIZE":
                stack.append(len(self.code))
            else:
                if name in PROBE_OPS and isinstance(stack[-1], int):
                    ev = CallEvent(name, stack[-1] & ADDRESS_MASK, ins.offset, state.path_id)
                    self.probes.setdefault(ev.key, ev)
                if op.pops:
                    del stack[-op.pops :]
                if op.pushes:
                    stack.append(self._fresh(ins))
            state.pc = next_pc


def _event_sort(ev: CallEvent) -> tuple:
    return (ev.at_offset, ev.call_opcode, str(ev.target))


def sym_exec(
    code: bytes | str, budget: ExecBudget | None = None, fork: str = DEFAULT_FORK
) -> SymResult:
    """Explore paths of ``code`` from entry, collecting call-family targets.

    Events are deduplicated by (opcode, target, offset).  When the path,
    step or time budget runs out the partial events are still returned and
    ``terminated_normally`` is false.
    """
    return _Machine(to_bytes(code), budget or ExecBudget(), fork).run()


def contains_call_opcode(code: bytes | str, fork: str = DEFAULT_FORK) -> bool:
    return any(ins.mnemonic in CALL_OPS for ins in decode(code, fork))
