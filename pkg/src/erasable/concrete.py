"""A small concrete EVM interpreter.

Only used as a reference oracle in tests: it checks the depth verdicts,
constant folding and call targets produced by :mod:`erasable.symstack`.
It deliberately shares no code with that module (own decoder, own
arithmetic, arity implied by explicit pops and pushes).

Istanbul instruction set.  Memory, storage, hashing and logs are not
modelled; those opcodes consume their operands and push a deterministic
pseudo-random word derived from (opcode, step, seed).  Call-family opcodes
are stubs that return 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Mapping

M = 2**256
LIMIT = 1024


class _Halt(Exception):
    def __init__(self, reason: str):
        self.reason = reason


@dataclass
class ConcreteEnv:
    calldata: bytes = b""
    caller: int = 0
    timestamp: int = 0
    balances: Mapping[int, int] = field(default_factory=dict)
    extcode: Mapping[int, bytes] = field(default_factory=dict)
    seed: int = 0

    def balance_of(self, addr: int) -> int:
        return self.balances.get(addr, 0)

    def code_of(self, addr: int) -> bytes:
        return self.extcode.get(addr, b"")


@dataclass
class Trace:
    offsets: list[int] = field(default_factory=list)
    depths: list[int] = field(default_factory=list)  # depth after each step
    calls: list[tuple[str, int, int]] = field(default_factory=list)
    probes: list[tuple[str, int, int]] = field(default_factory=list)
    halt_reason: str = ""
    halt_offset: int | None = None
    stack: list[int] = field(default_factory=list)  # bottom first


def _to_signed(x: int) -> int:
    return int.from_bytes(x.to_bytes(32, "big"), "big", signed=True)


def _from_signed(x: int) -> int:
    return x % M


def _jumpdests(code: bytes) -> set[int]:
    dests = set()
    i = 0
    while i < len(code):
        b = code[i]
        if b == 0x5B:
            dests.add(i)
        i += (b - 0x5E) if 0x60 <= b <= 0x7F else 1
    return dests


class _VM:
    def __init__(self, code: bytes, env: ConcreteEnv):
        self.code = code
        self.env = env
        self.stack: list[int] = []
        self.pc = 0
        self.step = 0
        self.dests = _jumpdests(code)
        self.trace = Trace()

    def pop(self) -> int:
        if not self.stack:
            raise _Halt("underflow")
        return self.stack.pop()

    def push(self, v: int) -> None:
        if len(self.stack) >= LIMIT:
            raise _Halt("overflow")
        self.stack.append(v % M)

    def need(self, n: int) -> None:
        if len(self.stack) < n:
            raise _Halt("underflow")

    def noise(self, op: int) -> int:
        h = hashlib.blake2b(f"{op}:{self.step}:{self.env.seed}".encode(), digest_size=32)
        return int.from_bytes(h.digest(), "big")


def _binary(fn: Callable[[int, int], int]):
    def run(vm: _VM, op: int) -> None:
        a = vm.pop()
        b = vm.pop()
        vm.push(fn(a, b))
    return run


def _sdiv(a, b):
    if b == 0:
        return 0
    x, y = _to_signed(a), _to_signed(b)
    sign = -1 if x * y < 0 else 1
    return _from_signed(sign * (abs(x) // abs(y)))


def _smod(a, b):
    if b == 0:
        return 0
    x, y = _to_signed(a), _to_signed(b)
    sign = -1 if x < 0 else 1
    return _from_signed(sign * (abs(x) % abs(y)))


def _signextend(k, v):
    if k > 30:
        return v
    width = k + 1
    raw = (v % (1 << (8 * width))).to_bytes(width, "big")
    return _from_signed(int.from_bytes(raw, "big", signed=True))


def _byte(i, v):
    return v.to_bytes(32, "big")[i] if i < 32 else 0


def _sar(s, v):
    x = _to_signed(v)
    if s > 255:
        return _from_signed(-1) if x < 0 else 0
    return _from_signed(x >> s)


def _ternary(fn):
    def run(vm: _VM, op: int) -> None:
        a, b, n = vm.pop(), vm.pop(), vm.pop()
        vm.push(fn(a, b, n))
    return run


def _unary(fn):
    def run(vm: _VM, op: int) -> None:
        vm.push(fn(vm.pop()))
    return run


def _const(fn):
    def run(vm: _VM, op: int) -> None:
        vm.push(fn(vm))
    return run


def _consume(n_in: int, n_out: int):
    """Unmodelled opcode: drop operands, push pseudo-random results."""
    def run(vm: _VM, op: int) -> None:
        for _ in range(n_in):
            vm.pop()
        for _ in range(n_out):
            vm.push(vm.noise(op))
    return run


def _calldataload(vm: _VM, op: int) -> None:
    off = vm.pop()
    data = vm.env.calldata[off : off + 32] if off < len(vm.env.calldata) else b""
    vm.push(int.from_bytes(data.ljust(32, b"\0"), "big"))


def _probe(name: str, n_in: int, fn):
    def run(vm: _VM, op: int) -> None:
        addr = vm.pop() % 2**160
        vm.trace.probes.append((name, addr, vm.pc))
        for _ in range(n_in - 1):
            vm.pop()
        if fn is not None:
            vm.push(fn(vm, addr))
    return run


def _call(name: str, n_args: int):
    def run(vm: _VM, op: int) -> None:
        vm.need(n_args)
        target = vm.stack[-2] % 2**160
        for _ in range(n_args):
            vm.pop()
        vm.trace.calls.append((name, target, vm.pc))
        vm.push(1)
    return run


def _halting(reason: str, n_in: int):
    def run(vm: _VM, op: int) -> None:
        for _ in range(n_in):
            vm.pop()
        raise _Halt(reason)
    return run


def _jump(vm: _VM, op: int) -> None:
    dest = vm.pop()
    if dest not in vm.dests:
        raise _Halt("bad-jump")
    vm.pc = dest - 1  # compensated by the generic advance


def _jumpi(vm: _VM, op: int) -> None:
    dest = vm.pop()
    cond = vm.pop()
    if cond:
        if dest not in vm.dests:
            raise _Halt("bad-jump")
        vm.pc = dest - 1


def _dup(n):
    def run(vm: _VM, op: int) -> None:
        vm.need(n)
        vm.push(vm.stack[-n])
    return run


def _swap(n):
    def run(vm: _VM, op: int) -> None:
        vm.need(n + 1)
        s = vm.stack
        s[-1], s[-1 - n] = s[-1 - n], s[-1]
    return run


def _pop(vm: _VM, op: int) -> None:
    vm.pop()


def _nop(vm: _VM, op: int) -> None:
    pass


HANDLERS: dict[int, tuple[str, Callable]] = {
    0x00: ("STOP", _halting("stop", 0)),
    0x01: ("ADD", _binary(lambda a, b: a + b)),
    0x02: ("MUL", _binary(lambda a, b: a * b)),
    0x03: ("SUB", _binary(lambda a, b: a - b)),
    0x04: ("DIV", _binary(lambda a, b: 0 if b == 0 else a // b)),
    0x05: ("SDIV", _binary(_sdiv)),
    0x06: ("MOD", _binary(lambda a, b: 0 if b == 0 else a % b)),
    0x07: ("SMOD", _binary(_smod)),
    0x08: ("ADDMOD", _ternary(lambda a, b, n: 0 if n == 0 else (a + b) % n)),
    0x09: ("MULMOD", _ternary(lambda a, b, n: 0 if n == 0 else (a * b) % n)),
    0x0A: ("EXP", _binary(lambda a, b: pow(a, b, M))),
    0x0B: ("SIGNEXTEND", _binary(_signextend)),
    0x10: ("LT", _binary(lambda a, b: 1 if a < b else 0)),
    0x11: ("GT", _binary(lambda a, b: 1 if a > b else 0)),
    0x12: ("SLT", _binary(lambda a, b: 1 if _to_signed(a) < _to_signed(b) else 0)),
    0x13: ("SGT", _binary(lambda a, b: 1 if _to_signed(a) > _to_signed(b) else 0)),
    0x14: ("EQ", _binary(lambda a, b: 1 if a == b else 0)),
    0x15: ("ISZERO", _unary(lambda a: 1 if a == 0 else 0)),
    0x16: ("AND", _binary(lambda a, b: a & b)),
    0x17: ("OR", _binary(lambda a, b: a | b)),
    0x18: ("XOR", _binary(lambda a, b: a ^ b)),
    0x19: ("NOT", _unary(lambda a: M - 1 - a)),
    0x1A: ("BYTE", _binary(_byte)),
    0x1B: ("SHL", _binary(lambda s, v: 0 if s > 255 else v << s)),
    0x1C: ("SHR", _binary(lambda s, v: 0 if s > 255 else v >> s)),
    0x1D: ("SAR", _binary(_sar)),
    0x20: ("SHA3", _consume(2, 1)),
    0x30: ("ADDRESS", _const(lambda vm: vm.noise(0x30) % 2**160)),
    0x31: ("BALANCE", _probe("BALANCE", 1, lambda vm, a: vm.env.balance_of(a))),
    0x32: ("ORIGIN", _const(lambda vm: vm.env.caller)),
    0x33: ("CALLER", _const(lambda vm: vm.env.caller)),
    0x34: ("CALLVALUE", _const(lambda vm: 0)),
    0x35: ("CALLDATALOAD", _calldataload),
    0x36: ("CALLDATASIZE", _const(lambda vm: len(vm.env.calldata))),
    0x37: ("CALLDATACOPY", _consume(3, 0)),
    0x38: ("CODESIZE", _const(lambda vm: len(vm.code))),
    0x39: ("CODECOPY", _consume(3, 0)),
    0x3A: ("GASPRICE", _const(lambda vm: 1)),
    0x3B: ("EXTCODESIZE", _probe("EXTCODESIZE", 1, lambda vm, a: len(vm.env.code_of(a)))),
    0x3C: ("EXTCODECOPY", _probe("EXTCODECOPY", 4, None)),
    0x3D: ("RETURNDATASIZE", _const(lambda vm: 0)),
    0x3E: ("RETURNDATACOPY", _consume(3, 0)),
    0x3F: ("EXTCODEHASH", _probe("EXTCODEHASH", 1, lambda vm, a: vm.noise(0x3F))),
    0x40: ("BLOCKHASH", _consume(1, 1)),
    0x41: ("COINBASE", _consume(0, 1)),
    0x42: ("TIMESTAMP", _const(lambda vm: vm.env.timestamp)),
    0x43: ("NUMBER", _consume(0, 1)),
    0x44: ("DIFFICULTY", _consume(0, 1)),
    0x45: ("GASLIMIT", _consume(0, 1)),
    0x46: ("CHAINID", _const(lambda vm: 1)),
    0x47: ("SELFBALANCE", _consume(0, 1)),
    0x50: ("POP", _pop),
    0x51: ("MLOAD", _consume(1, 1)),
    0x52: ("MSTORE", _consume(2, 0)),
    0x53: ("MSTORE8", _consume(2, 0)),
    0x54: ("SLOAD", _consume(1, 1)),
    0x55: ("SSTORE", _consume(2, 0)),
    0x56: ("JUMP", _jump),
    0x57: ("JUMPI", _jumpi),
    0x58: ("PC", _const(lambda vm: vm.pc)),
    0x59: ("MSIZE", _consume(0, 1)),
    0x5A: ("GAS", _consume(0, 1)),
    0x5B: ("JUMPDEST", _nop),
    0xF0: ("CREATE", _consume(3, 1)),
    0xF1: ("CALL", _call("CALL", 7)),
    0xF2: ("CALLCODE", _call("CALLCODE", 7)),
    0xF3: ("RETURN", _halting("return", 2)),
    0xF4: ("DELEGATECALL", _call("DELEGATECALL", 6)),
    0xF5: ("CREATE2", _consume(4, 1)),
    0xFA: ("STATICCALL", _call("STATICCALL", 6)),
    0xFD: ("REVERT", _halting("revert", 2)),
    0xFF: ("SELFDESTRUCT", _halting("selfdestruct", 1)),
}
for _i in range(1, 17):
    HANDLERS[0x7F + _i] = (f"DUP{_i}", _dup(_i))
    HANDLERS[0x8F + _i] = (f"SWAP{_i}", _swap(_i))
for _i in range(5):
    HANDLERS[0xA0 + _i] = (f"LOG{_i}", _consume(2 + _i, 0))


def run_concrete(code: bytes, env: ConcreteEnv | None = None, step_limit: int = 10_000) -> Trace:
    """Execute ``code`` concretely and return the trace.

    Halt reasons: underflow, overflow, bad-instruction, bad-jump, stop,
    return, revert, selfdestruct, code-end, step-limit.
    """
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    vm = _VM(bytes(code), env or ConcreteEnv())
    tr = vm.trace
    while True:
        if vm.pc >= len(vm.code):
            tr.halt_reason = "code-end"
            break
        if vm.step >= step_limit:
            tr.halt_reason = "step-limit"
            break
        op = vm.code[vm.pc]
        here = vm.pc
        try:
            if 0x60 <= op <= 0x7F:
                width = op - 0x5F
                data = vm.code[here + 1 : here + 1 + width]
                vm.push(int.from_bytes(data + bytes(width - len(data)), "big"))
                vm.pc += width
            elif op in HANDLERS:
                HANDLERS[op][1](vm, op)
            else:
                raise _Halt("bad-instruction")
        except _Halt as h:
            tr.halt_reason = h.reason
            tr.halt_offset = here
            if h.reason in ("stop", "return", "revert", "selfdestruct"):
                tr.offsets.append(here)
                tr.depths.append(len(vm.stack))
            break
        tr.offsets.append(here)
        tr.depths.append(len(vm.stack))
        vm.pc += 1
        vm.step += 1
    tr.stack = list(vm.stack)
    return tr
