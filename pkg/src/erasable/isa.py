"""EVM instruction table, bytecode decoder and basic-block splitter.

The table is keyed by fork so that "unknown opcode" can be judged against a
specific instruction set.  Istanbul is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

STACK_LIMIT = 1024

# (mnemonic, pops, pushes, fork that introduced it)
_BASE: dict[int, tuple[str, int, int, str]] = {
    0x00: ("STOP", 0, 0, "frontier"),
    0x01: ("ADD", 2, 1, "frontier"),
    0x02: ("MUL", 2, 1, "frontier"),
    0x03: ("SUB", 2, 1, "frontier"),
    0x04: ("DIV", 2, 1, "frontier"),
    0x05: ("SDIV", 2, 1, "frontier"),
    0x06: ("MOD", 2, 1, "frontier"),
    0x07: ("SMOD", 2, 1, "frontier"),
    0x08: ("ADDMOD", 3, 1, "frontier"),
    0x09: ("MULMOD", 3, 1, "frontier"),
    0x0A: ("EXP", 2, 1, "frontier"),
    0x0B: ("SIGNEXTEND", 2, 1, "frontier"),
    0x10: ("LT", 2, 1, "frontier"),
    0x11: ("GT", 2, 1, "frontier"),
    0x12: ("SLT", 2, 1, "frontier"),
    0x13: ("SGT", 2, 1, "frontier"),
    0x14: ("EQ", 2, 1, "frontier"),
    0x15: ("ISZERO", 1, 1, "frontier"),
    0x16: ("AND", 2, 1, "frontier"),
    0x17: ("OR", 2, 1, "frontier"),
    0x18: ("XOR", 2, 1, "frontier"),
    0x19: ("NOT", 1, 1, "frontier"),
    0x1A: ("BYTE", 2, 1, "frontier"),
    0x1B: ("SHL", 2, 1, "constantinople"),
    0x1C: ("SHR", 2, 1, "constantinople"),
    0x1D: ("SAR", 2, 1, "constantinople"),
    0x20: ("SHA3", 2, 1, "frontier"),
    0x30: ("ADDRESS", 0, 1, "frontier"),
    0x31: ("BALANCE", 1, 1, "frontier"),
    0x32: ("ORIGIN", 0, 1, "frontier"),
    0x33: ("CALLER", 0, 1, "frontier"),
    0x34: ("CALLVALUE", 0, 1, "frontier"),
    0x35: ("CALLDATALOAD", 1, 1, "frontier"),
    0x36: ("CALLDATASIZE", 0, 1, "frontier"),
    0x37: ("CALLDATACOPY", 3, 0, "frontier"),
    0x38: ("CODESIZE", 0, 1, "frontier"),
    0x39: ("CODECOPY", 3, 0, "frontier"),
    0x3A: ("GASPRICE", 0, 1, "frontier"),
    0x3B: ("EXTCODESIZE", 1, 1, "frontier"),
    0x3C: ("EXTCODECOPY", 4, 0, "frontier"),
    0x3D: ("RETURNDATASIZE", 0, 1, "byzantium"),
    0x3E: ("RETURNDATACOPY", 3, 0, "byzantium"),
    0x3F: ("EXTCODEHASH", 1, 1, "constantinople"),
    0x40: ("BLOCKHASH", 1, 1, "frontier"),
    0x41: ("COINBASE", 0, 1, "frontier"),
    0x42: ("TIMESTAMP", 0, 1, "frontier"),
    0x43: ("NUMBER", 0, 1, "frontier"),
    0x44: ("DIFFICULTY", 0, 1, "frontier"),
    0x45: ("GASLIMIT", 0, 1, "frontier"),
    0x46: ("CHAINID", 0, 1, "istanbul"),
    0x47: ("SELFBALANCE", 0, 1, "istanbul"),
    0x48: ("BASEFEE", 0, 1, "london"),
    0x49: ("BLOBHASH", 1, 1, "cancun"),
    0x4A: ("BLOBBASEFEE", 0, 1, "cancun"),
    0x50: ("POP", 1, 0, "frontier"),
    0x51: ("MLOAD", 1, 1, "frontier"),
    0x52: ("MSTORE", 2, 0, "frontier"),
    0x53: ("MSTORE8", 2, 0, "frontier"),
    0x54: ("SLOAD", 1, 1, "frontier"),
    0x55: ("SSTORE", 2, 0, "frontier"),
    0x56: ("JUMP", 1, 0, "frontier"),
    0x57: ("JUMPI", 2, 0, "frontier"),
    0x58: ("PC", 0, 1, "frontier"),
    0x59: ("MSIZE", 0, 1, "frontier"),
    0x5A: ("GAS", 0, 1, "frontier"),
    0x5B: ("JUMPDEST", 0, 0, "frontier"),
    0x5C: ("TLOAD", 1, 1, "cancun"),
    0x5D: ("TSTORE", 2, 0, "cancun"),
    0x5E: ("MCOPY", 3, 0, "cancun"),
    0x5F: ("PUSH0", 0, 1, "shanghai"),
    0xF0: ("CREATE", 3, 1, "frontier"),
    0xF1: ("CALL", 7, 1, "frontier"),
    0xF2: ("CALLCODE", 7, 1, "frontier"),
    0xF3: ("RETURN", 2, 0, "frontier"),
    0xF4: ("DELEGATECALL", 6, 1, "homestead"),
    0xF5: ("CREATE2", 4, 1, "constantinople"),
    0xFA: ("STATICCALL", 6, 1, "byzantium"),
    0xFD: ("REVERT", 2, 0, "byzantium"),
    0xFE: ("INVALID", 0, 0, "frontier"),
    0xFF: ("SELFDESTRUCT", 1, 0, "frontier"),
}
for _n in range(1, 33):
    _BASE[0x5F + _n] = (f"PUSH{_n}", 0, 1, "frontier")
for _n in range(1, 17):
    _BASE[0x7F + _n] = (f"DUP{_n}", _n, _n + 1, "frontier")
    _BASE[0x8F + _n] = (f"SWAP{_n}", _n + 1, _n + 1, "frontier")
for _n in range(5):
    _BASE[0xA0 + _n] = (f"LOG{_n}", 2 + _n, 0, "frontier")

FORKS = (
    "frontier",
    "homestead",
    "byzantium",
    "constantinople",
    "petersburg",
    "istanbul",
    "berlin",
    "london",
    "shanghai",
    "cancun",
)
DEFAULT_FORK = "istanbul"

# forks that add no opcodes still need a rank
_INTRODUCED_RANK = {name: i for i, name in enumerate(FORKS)}

TERMINATORS = frozenset({"STOP", "JUMP", "JUMPI", "RETURN", "SELFDESTRUCT", "REVERT"})
CALL_OPS = frozenset({"CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"})


@dataclass(frozen=True)
class OpcodeInfo:
    byte_value: int
    mnemonic: str
    pops: int = 0
    pushes: int = 0
    immediate_len: int = 0
    is_terminator: bool = False
    is_known: bool = True

    @property
    def is_push(self) -> bool:
        return self.immediate_len > 0


def _unknown(byte: int) -> OpcodeInfo:
    return OpcodeInfo(byte, f"UNKNOWN_0x{byte:02x}", is_known=False)


@lru_cache(maxsize=None)
def opcode_table(fork: str = DEFAULT_FORK) -> tuple[OpcodeInfo, ...]:
    """Return the 256-entry instruction table for ``fork``."""
    if fork not in _INTRODUCED_RANK:
        raise ValueError(f"unknown fork {fork!r}; choose from {', '.join(FORKS)}")
    rank = _INTRODUCED_RANK[fork]
    table = []
    for byte in range(256):
        entry = _BASE.get(byte)
        if entry is None or _INTRODUCED_RANK[entry[3]] > rank:
            table.append(_unknown(byte))
            continue
        name, pops, pushes, _ = entry
        imm = byte - 0x5F if 0x60 <= byte <= 0x7F else 0
        table.append(
            OpcodeInfo(
                byte, name, pops, pushes, imm, is_terminator=name in TERMINATORS
            )
        )
    return tuple(table)


def opcode_info(byte: int, fork: str = DEFAULT_FORK) -> OpcodeInfo:
    return opcode_table(fork)[byte]


def opcode_by_name(name: str) -> OpcodeInfo:
    """Look up an opcode by mnemonic in the most recent fork table."""
    for info in opcode_table(FORKS[-1]):
        if info.mnemonic == name:
            return info
    raise KeyError(name)


@dataclass(frozen=True)
class Instruction:
    offset: int
    opcode: OpcodeInfo
    immediate: bytes = b""

    @property
    def mnemonic(self) -> str:
        return self.opcode.mnemonic

    @property
    def next_offset(self) -> int:
        return self.offset + 1 + self.opcode.immediate_len

    @property
    def push_value(self) -> int:
        return int.from_bytes(self.immediate, "big")

    def __str__(self) -> str:
        if self.immediate:
            return f"{self.offset:#06x} {self.mnemonic} 0x{self.immediate.hex()}"
        return f"{self.offset:#06x} {self.mnemonic}"


@dataclass(frozen=True)
class BasicBlock:
    instructions: tuple[Instruction, ...]
    start_offset: int
    ends_with_terminator: bool = field(default=False)

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    @property
    def mnemonics(self) -> list[str]:
        return [ins.mnemonic for ins in self.instructions]


def to_bytes(code: bytes | bytearray | str) -> bytes:
    """Accept raw bytes or hex text (optional 0x prefix, any case)."""
    if isinstance(code, (bytes, bytearray)):
        return bytes(code)
    text = code.strip()
    if text[:2].lower() == "0x":
        text = text[2:]
    if len(text) % 2:
        raise ValueError("odd-length hex string")
    return bytes.fromhex(text)


def decode(code: bytes | str, fork: str = DEFAULT_FORK) -> list[Instruction]:
    """Disassemble ``code``; PUSH data is consumed, never decoded."""
    code = to_bytes(code)
    table = opcode_table(fork)
    out = []
    pc = 0
    n = len(code)
    while pc < n:
        info = table[code[pc]]
        imm = b""
        if info.immediate_len:
            imm = code[pc + 1 : pc + 1 + info.immediate_len]
            imm = imm.ljust(info.immediate_len, b"\x00")
        out.append(Instruction(pc, info, imm))
        pc += 1 + info.immediate_len
    return out


def encode(instrs: Iterable[Instruction], length: int | None = None) -> bytes:
    """Re-serialize instructions; ``length`` trims trailing zero padding."""
    buf = bytearray()
    for ins in instrs:
        buf.append(ins.opcode.byte_value)
        buf += ins.immediate
    if length is not None:
        del buf[length:]
    return bytes(buf)


def split_blocks(instrs: Sequence[Instruction]) -> list[BasicBlock]:
    blocks = []
    current: list[Instruction] = []
    for ins in instrs:
        current.append(ins)
        if ins.opcode.is_terminator:
            blocks.append(BasicBlock(tuple(current), current[0].offset, True))
            current = []
    if current:
        blocks.append(BasicBlock(tuple(current), current[0].offset, False))
    return blocks


def first_block(code: bytes | str, fork: str = DEFAULT_FORK) -> BasicBlock | None:
    code = to_bytes(code)
    table = opcode_table(fork)
    # stop decoding at the first terminator instead of decoding everything
    current = []
    pc = 0
    while pc < len(code):
        info = table[code[pc]]
        imm = code[pc + 1 : pc + 1 + info.immediate_len].ljust(info.immediate_len, b"\x00")
        current.append(Instruction(pc, info, imm))
        if info.is_terminator:
            return BasicBlock(tuple(current), 0, True)
        pc += 1 + info.immediate_len
    if not current:
        return None
    return BasicBlock(tuple(current), 0, False)


def disassemble(code: bytes | str, fork: str = DEFAULT_FORK) -> str:
    return "\n".join(str(ins) for ins in decode(code, fork))


def assemble(*items) -> bytes:
    """Build bytecode from mnemonics, ``(PUSHn, value)`` pairs or raw bytes.

    >>> assemble(("PUSH1", 1), ("PUSH1", 2), "ADD", "STOP").hex()
    '600160020100'
    """
    names = {info.mnemonic: info for info in opcode_table(FORKS[-1])}
    out = bytearray()
    for item in items:
        if isinstance(item, (bytes, bytearray)):
            out += item
            continue
        if isinstance(item, tuple):
            name, value = item
        else:
            name, value = item, None
        info = names[name]
        out.append(info.byte_value)
        if info.immediate_len:
            if isinstance(value, (bytes, bytearray)):
                data = bytes(value).rjust(info.immediate_len, b"\x00")
            else:
                data = int(value or 0).to_bytes(info.immediate_len, "big")
            out += data
    return bytes(out)
