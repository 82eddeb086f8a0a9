"""Synthetic bytecodes, account dumps and transaction histories.

Used by the test-suite, the acceptance checks and the demo scripts.  All
generators are deterministic for a given seed.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources

from .detectors import PARITY_LIBRARY, Label
from .isa import assemble, opcode_by_name
from .state import EXTERNAL, INTERNAL, AccountState, TxRecord

# -- bytecode builders ------------------------------------------------------


def _is_label(item) -> bool:
    return isinstance(item, tuple) and item[0] == "LABEL"


def _width(item) -> int:
    if _is_label(item):
        return 1  # emitted as JUMPDEST
    if isinstance(item, (bytes, bytearray)):
        return len(item)
    name = item[0] if isinstance(item, tuple) else item
    return 1 + opcode_by_name(name).immediate_len


def link(items: list) -> bytes:
    """Assemble with labels: ``("LABEL", name)`` emits a JUMPDEST and
    ``("PUSH2", "@name")`` pushes its offset."""
    offsets: dict[str, int] = {}
    pc = 0
    for item in items:
        if _is_label(item):
            offsets[item[1]] = pc
        pc += _width(item)
    out = []
    for item in items:
        if _is_label(item):
            out.append("JUMPDEST")
        elif isinstance(item, tuple) and isinstance(item[1], str) and item[1].startswith("@"):
            out.append((item[0], offsets[item[1][1:]]))
        else:
            out.append(item)
    return assemble(*out)


def mc_s_code(suffix: bytes = bytes.fromhex("6080604052")) -> bytes:
    """Runtime code starting with STOP, e.g. deployment code deployed as runtime."""
    return b"\x00" + suffix


def mc_rs_selfdestruct_code() -> bytes:
    """Three operations: the beneficiary comes straight from calldata."""
    return assemble(("PUSH1", 0), "CALLDATALOAD", "SELFDESTRUCT")


def mc_rs_revert_code() -> bytes:
    """Executes offsets 0x0..0x8 and always reverts; the rest is dead code."""
    return assemble(("PUSH1", 0x80), ("PUSH1", 0x40), "MSTORE", ("PUSH1", 0), "DUP1", "REVERT") + \
        bytes.fromhex("5b6004361061004c57")


def stack_error_code() -> bytes:
    """First operation is DIV on an empty stack."""
    return assemble("DIV", ("PUSH1", 0x40), "MSTORE", "STOP")


def opcode_error_code() -> bytes:
    return bytes.fromhex("d929") + assemble(("PUSH1", 1), "STOP")


def dos_malicious_code(targets: list[int] | int = 200, op: str = "EXTCODESIZE", seed: int = 0) -> bytes:
    """One basic block probing many addresses (PUSH20 addr; op; POP)."""
    if isinstance(targets, int):
        rng = random.Random(seed)
        targets = [rng.getrandbits(160) | (1 << 156) for _ in range(targets)]
    items = []
    for t in targets:
        if op == "EXTCODECOPY":
            items += [("PUSH1", 0), ("PUSH1", 0), ("PUSH1", 0), ("PUSH20", t), op]
        else:
            items += [("PUSH20", t), op, "POP"]
    return assemble(*items, "STOP")


def delegating_wallet_code(
    library: int = PARITY_LIBRARY,
    selectors: tuple[int, ...] = (0xB61D27F6, 0x797AF627, 0xF00D4B5D, 0x2F54BF6E),
    call_op: str = "DELEGATECALL",
) -> bytes:
    """Wallet stub in the style of old Solidity output: a linear selector
    dispatcher whose every route forwards calldata to a hardcoded library."""
    items = [
        ("PUSH1", 0x60), ("PUSH1", 0x40), "MSTORE",
        "CALLDATASIZE", "ISZERO", ("PUSH2", "@fallback"), "JUMPI",
        ("PUSH1", 0), "CALLDATALOAD",
        ("PUSH29", 1 << 224), "SWAP1", "DIV", ("PUSH4", 0xFFFFFFFF), "AND",
    ]
    for sel in selectors:
        items += ["DUP1", ("PUSH4", sel), "EQ", ("PUSH2", "@forward"), "JUMPI"]
    items += [
        ("LABEL", "fallback"),
        "CALLVALUE", "ISZERO", ("PUSH2", "@forward"), "JUMPI",
        "CALLVALUE", "CALLER", ("PUSH1", 0), "MSTORE", ("PUSH1", 0x20), ("PUSH1", 0), "LOG1",
        "STOP",
        ("LABEL", "forward"),
        "CALLDATASIZE", ("PUSH1", 0), "DUP1", "CALLDATACOPY",
        ("PUSH1", 0), ("PUSH1", 0), "CALLDATASIZE", ("PUSH1", 0),
    ]
    if call_op in ("CALL", "CALLCODE"):
        items += [("PUSH1", 0), ("PUSH20", library), "GAS", call_op]
    else:
        items += [("PUSH20", library), "GAS", call_op]
    items += [
        "ISZERO", ("PUSH2", "@fail"), "JUMPI", "STOP",
        ("LABEL", "fail"), ("PUSH1", 0), "DUP1", "REVERT",
    ]
    return link(items)


def rule_examples() -> dict[str, bytes]:
    """One minimal bytecode per contract rule."""
    return {
        "mc_s": mc_s_code(),
        "mc_rs_selfdestruct": mc_rs_selfdestruct_code(),
        "mc_rs_revert": mc_rs_revert_code(),
        "stack_error": stack_error_code(),
        "opcode_error": opcode_error_code(),
        "dos_malicious": dos_malicious_code(200),
        "parity_wallet": delegating_wallet_code(),
    }


def reference_contracts() -> list[dict]:
    """Runtime bytecodes of small contracts compiled with vyper 0.4.3 (london)."""
    text = resources.files("erasable").joinpath("data/reference_contracts.json").read_text()
    out = json.loads(text)
    for c in out:
        c["code"] = bytes.fromhex(c["runtime"][2:])
    return out


# -- transaction helpers ----------------------------------------------------


def tx_hash(*parts) -> bytes:
    return hashlib.sha256(repr(parts).encode()).digest()


def creation_tx(creator: int, created: int, *, kind: str = EXTERNAL, ts: int = 0,
                block: int = 0, gas_used: int = 21_000, gas_price: int = 1, error=None,
                value: int = 0, parent: bytes | None = None, index: int | None = None) -> TxRecord:
    return TxRecord(
        hash=parent or tx_hash("create", creator, created, ts),
        kind=kind, sender=creator, to=None, created_address=created, value=value,
        gas_used=gas_used, gas_price=gas_price, error=error, timestamp=ts,
        block_number=block, index=index,
    )


def call_tx(sender: int, to: int, *, kind: str = EXTERNAL, ts: int = 0, block: int = 0,
            gas_used: int = 21_000, gas_price: int = 1, value: int = 0, error=None,
            data: bytes = b"", parent: bytes | None = None, index: int | None = None,
            nonce: int = 0) -> TxRecord:
    return TxRecord(
        hash=parent or tx_hash("call", sender, to, ts, nonce),
        kind=kind, sender=sender, to=to, value=value, gas_used=gas_used,
        gas_price=gas_price, input=data, error=error, timestamp=ts, block_number=block,
        index=index,
    )


# -- graph fixtures ---------------------------------------------------------


def many_to_one_fixture(n_wallets: int = 20, seed: int = 6):
    """``n_wallets`` wallets delegating to the removed library."""
    rng = random.Random(seed)
    accounts = []
    for i in range(n_wallets):
        sels = tuple(rng.getrandbits(32) for _ in range(rng.randint(1, 5)))
        balance = rng.choice([0, 0, 10**18 * rng.randint(1, 50)])
        accounts.append(AccountState(rng.getrandbits(160), 1, balance, delegating_wallet_code(selectors=sels)))
    return accounts


def one_to_many_fixture(n_targets: int = 200, seed: int = 7):
    rng = random.Random(seed)
    targets = sorted({rng.getrandbits(160) | (1 << 159) for _ in range(n_targets)})
    while len(targets) < n_targets:
        targets = sorted(set(targets) | {rng.getrandbits(160) | (1 << 159)})
    attacker = AccountState(rng.getrandbits(160), 1, 0, dos_malicious_code(targets))
    return attacker, targets


# -- planted corpus ---------------------------------------------------------

DEFAULT_PLANT = {
    Label.MC_S: 50,
    Label.MC_RS: 40,
    Label.STACK_ERROR: 10,
    Label.OPCODE_ERROR: 10,
    Label.DOS_MALICIOUS: 20,
    Label.PARITY_DEPENDENT: 30,
    Label.EMPTY_ACCOUNT: 25,
    Label.DOS_EOA: 100,
}

_SAFE_BINARY = ["ADD", "MUL", "SUB", "DIV", "AND", "OR", "XOR", "LT", "GT", "EQ"]


@dataclass
class Corpus:
    accounts: list[AccountState] = field(default_factory=list)
    txs: list[TxRecord] = field(default_factory=list)
    truth: dict[int, Label | None] = field(default_factory=dict)
    created_at: dict[int, int] = field(default_factory=dict)

    def planted(self, label: Label | None) -> list[int]:
        return sorted(a for a, l in self.truth.items() if l == label)


class _Builder:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.corpus = Corpus()
        self.used: set[int] = set()
        self.ts = 1_450_000_000
        self.block = 1_000_000
        self.eoas = [self.address() for _ in range(20)]
        self.factory = self.address()

    def address(self) -> int:
        while True:
            a = self.rng.getrandbits(160)
            if a not in self.used and a != PARITY_LIBRARY:
                self.used.add(a)
                return a

    def tick(self) -> tuple[int, int]:
        self.ts += self.rng.randint(1, 5000)
        self.block += 1
        return self.ts, self.block

    def add(self, state: AccountState, label: Label | None, *, creator_kind=EXTERNAL,
            deploy_error=None, extra_calls: int = 0) -> None:
        c = self.corpus
        c.accounts.append(state)
        c.truth[state.address] = label
        ts, blk = self.tick()
        creator = self.rng.choice(self.eoas)
        if creator_kind == INTERNAL:
            parent = tx_hash("trigger", state.address)
            c.txs.append(call_tx(creator, self.factory, ts=ts, block=blk, parent=parent,
                                 gas_used=90_000, gas_price=20))
            c.txs.append(creation_tx(self.factory, state.address, kind=INTERNAL, ts=ts, block=blk,
                                     parent=parent, gas_used=32_000, gas_price=20))
        else:
            c.txs.append(creation_tx(creator, state.address, ts=ts, block=blk, error=deploy_error,
                                     gas_used=self.rng.randint(53_000, 900_000), gas_price=20))
        c.created_at[state.address] = ts
        for k in range(extra_calls):
            t2, b2 = self.tick()
            c.txs.append(call_tx(self.rng.choice(self.eoas), state.address, ts=t2, block=b2,
                                 gas_used=self.rng.randint(21_000, 60_000), gas_price=20,
                                 value=self.rng.choice([0, 10**15]), nonce=k,
                                 data=bytes.fromhex("a9059cbb")))

    def noise(self, n: int) -> bytes:
        return self.rng.randbytes(n)

    def pushes(self, n: int) -> list:
        return [("PUSH1", self.rng.getrandbits(8)) for _ in range(n)]

    # contract variants -------------------------------------------------

    def mc_s(self) -> bytes:
        return b"\x00" + self.noise(self.rng.randint(0, 200))

    def mc_rs(self) -> bytes:
        if self.rng.random() < 0.5:
            head = assemble(*self.pushes(self.rng.randint(0, 4)), ("PUSH1", 0), "CALLDATALOAD", "SELFDESTRUCT")
        else:
            head = assemble(*self.pushes(self.rng.randint(2, 6)), "MSTORE", ("PUSH1", 0), "DUP1", "REVERT")
        return head + self.noise(self.rng.randint(0, 120))

    def stack_error(self, overflow: bool = False) -> bytes:
        if overflow:
            return assemble(*[("PUSH1", 1)] * 1025, "STOP")
        op = self.rng.choice(_SAFE_BINARY)
        depth = self.rng.randint(0, 1)
        return assemble(*self.pushes(depth), op, *self.pushes(2), "MSTORE", "STOP") + self.noise(40)

    def opcode_error(self) -> bytes:
        bad = self.rng.choice([0xD9, 0x21, 0x29, 0x4B, 0xB0, 0xC7, 0xEF, 0xFC])
        return assemble(*self.pushes(self.rng.randint(0, 3))) + bytes([bad, self.rng.choice([0x29, 0xD9])]) + \
            assemble("STOP") + self.noise(30)

    def dos_malicious(self) -> bytes:
        n = self.rng.randint(101, 260)
        op = self.rng.choice(["EXTCODESIZE", "BALANCE", "EXTCODECOPY"])
        return dos_malicious_code(n, op, seed=self.rng.getrandbits(32))

    def parity(self) -> bytes:
        sels = tuple(self.rng.getrandbits(32) for _ in range(self.rng.randint(1, 8)))
        op = self.rng.choice(["DELEGATECALL", "DELEGATECALL", "CALL", "CALLCODE"])
        return delegating_wallet_code(PARITY_LIBRARY, sels, op)


def planted_corpus(total: int = 1000, plant: dict[Label, int] | None = None, seed: int = 0) -> Corpus:
    """Accounts with known labels; the remainder are benign look-alikes."""
    plant = dict(DEFAULT_PLANT if plant is None else plant)
    b = _Builder(seed)
    rng = b.rng

    for _ in range(plant.get(Label.MC_S, 0)):
        b.add(AccountState(b.address(), 1, rng.choice([0, 0, 4 * 10**16]), b.mc_s()), Label.MC_S,
              extra_calls=rng.randint(0, 3))
    for _ in range(plant.get(Label.MC_RS, 0)):
        b.add(AccountState(b.address(), 1, 0, b.mc_rs()), Label.MC_RS, creator_kind=INTERNAL)
    for i in range(plant.get(Label.STACK_ERROR, 0)):
        b.add(AccountState(b.address(), 1, 0, b.stack_error(overflow=i == 0)), Label.STACK_ERROR,
              extra_calls=rng.randint(0, 2))
    for _ in range(plant.get(Label.OPCODE_ERROR, 0)):
        b.add(AccountState(b.address(), 1, 0, b.opcode_error()), Label.OPCODE_ERROR)
    for _ in range(plant.get(Label.DOS_MALICIOUS, 0)):
        b.add(AccountState(b.address(), 1, 0, b.dos_malicious()), Label.DOS_MALICIOUS)
    for _ in range(plant.get(Label.PARITY_DEPENDENT, 0)):
        b.add(AccountState(b.address(), 1, rng.choice([0, 3 * 10**18]), b.parity()),
              Label.PARITY_DEPENDENT, extra_calls=rng.randint(0, 3))
    for _ in range(plant.get(Label.EMPTY_ACCOUNT, 0)):
        b.add(AccountState(b.address(), 0, 0, b""), Label.EMPTY_ACCOUNT,
              deploy_error="Out of Gas Error", extra_calls=rng.randint(0, 2))
    attacker = b.address()
    b.corpus.accounts.append(AccountState(attacker, 1, 0, assemble(
        *[("PUSH1", 0)] * 4, ("PUSH1", 1), ("PUSH1", 4), "CALLDATALOAD", "GAS", "CALL", "POP", "STOP")))
    b.corpus.truth[attacker] = None
    for i in range(plant.get(Label.DOS_EOA, 0)):
        eoa = b.address()
        b.corpus.accounts.append(AccountState(eoa, 0, 1, b""))
        b.corpus.truth[eoa] = Label.DOS_EOA
        ts, blk = b.tick()
        parent = tx_hash("dos", i // 10)
        b.corpus.txs.append(call_tx(attacker, eoa, kind=INTERNAL, ts=ts, block=blk, value=1,
                                    parent=parent, gas_used=25_000, gas_price=20))
        b.corpus.created_at[eoa] = ts
        for k in range(rng.randint(0, 3)):
            t2, b2 = b.tick()
            b.corpus.txs.append(call_tx(attacker, eoa, kind=INTERNAL, ts=t2, block=b2,
                                        error="Out of Gas Error", gas_used=25_000, gas_price=20,
                                        parent=tx_hash("dos-oog", i, k)))

    # benign remainder: real compiled code first, then look-alikes
    clean_makers = [
        lambda: AccountState(b.address(), 3, 10**18, b.rng.choice(reference_contracts())["code"]),
        # one block with exactly the threshold of DoS ops
        lambda: AccountState(b.address(), 1, 0, dos_malicious_code(100, "BALANCE", seed=b.rng.getrandbits(32))),
        # DoS-heavy code split across two blocks
        lambda: AccountState(b.address(), 1, 0, dos_malicious_code(120)[:-1] + assemble(
            ("PUSH2", 0), "JUMP") + dos_malicious_code(90)),
        # proxy delegating to a live library
        lambda: AccountState(b.address(), 1, 0, delegating_wallet_code(b.address())),
        # normal EOA
        lambda: AccountState(b.address(), b.rng.randint(1, 40), b.rng.randint(0, 10**19), b""),
        # 1-wei EOA that has sent transactions
        lambda: AccountState(b.address(), 1, 1, b""),
        # empty EOA whose first transaction is a plain transfer
        lambda: AccountState(b.address(), 0, 0, b""),
    ]
    n_clean = total - len(b.corpus.accounts)
    if n_clean < 0:
        raise ValueError("total smaller than the planted accounts")
    for i, ref in enumerate(reference_contracts()):
        if i >= n_clean:
            break
        b.add(AccountState(b.address(), 1, 10**17, ref["code"]), None, extra_calls=2)
    while len(b.corpus.accounts) < total:
        state = rng.choice(clean_makers)()
        if state.code:
            b.add(state, None, extra_calls=rng.randint(0, 2))
        else:
            b.corpus.accounts.append(state)
            b.corpus.truth[state.address] = None
            ts, blk = b.tick()
            b.corpus.txs.append(call_tx(rng.choice(b.eoas), state.address, ts=ts, block=blk,
                                        value=state.balance))
            if state.nonce:
                t2, b2 = b.tick()
                b.corpus.txs.append(call_tx(state.address, rng.choice(b.eoas), ts=t2, block=b2))
            b.corpus.created_at[state.address] = ts
    return b.corpus
