"""Account-state and transaction dumps.

Both dumps are JSON Lines.  An account record::

    {"address": "0x..", "nonce": 0, "balance": "0x1", "code": "0x", "storage_root": "0x.."}

A transaction record carries the :class:`TxRecord` fields; ``to`` is null
for contract creation and ``error`` is omitted when the call succeeded.
Amounts may be JSON integers, decimal strings or 0x-hex strings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

EXTERNAL = "external"
INTERNAL = "internal"


class IngestError(Exception):
    pass


def parse_address(value) -> int:
    if isinstance(value, int):
        addr = value
    else:
        text = str(value).strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        if len(text) != 40:
            raise ValueError(f"address must be 20 bytes: {value!r}")
        addr = int(text, 16)
    if not 0 <= addr < 2**160:
        raise ValueError(f"address out of range: {value!r}")
    return addr


def format_address(addr: int) -> str:
    return f"0x{addr:040x}"


def parse_amount(value) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean is not an amount")
    if isinstance(value, int):
        n = value
    elif isinstance(value, str):
        text = value.strip()
        n = int(text, 16) if text[:2].lower() == "0x" else int(text, 10)
    else:
        raise ValueError(f"bad amount {value!r}")
    if n < 0 or n >= 2**256:
        raise ValueError(f"amount out of range: {value!r}")
    return n


def parse_hex(value, *, exact: int | None = None) -> bytes:
    if value is None:
        return b""
    text = str(value).strip()
    if text[:2].lower() == "0x":
        text = text[2:]
    if len(text) % 2:
        raise ValueError("odd-length hex")
    raw = bytes.fromhex(text)
    if exact is not None and len(raw) != exact:
        raise ValueError(f"expected {exact} bytes, got {len(raw)}")
    return raw


@dataclass(frozen=True)
class AccountState:
    address: int
    nonce: int = 0
    balance: int = 0
    code: bytes = b""
    storage_root: bytes | None = None

    @property
    def is_eoa(self) -> bool:
        return not self.code

    def to_json(self) -> dict:
        rec = {
            "address": format_address(self.address),
            "nonce": self.nonce,
            "balance": str(self.balance),
            "code": "0x" + self.code.hex(),
        }
        if self.storage_root is not None:
            rec["storage_root"] = "0x" + self.storage_root.hex()
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "AccountState":
        root = rec.get("storage_root")
        return cls(
            address=parse_address(rec["address"]),
            nonce=parse_amount(rec.get("nonce", 0)),
            balance=parse_amount(rec.get("balance", 0)),
            code=parse_hex(rec.get("code")),
            storage_root=parse_hex(root, exact=32) if root else None,
        )


@dataclass(frozen=True)
class TxRecord:
    hash: bytes
    kind: str
    sender: int
    to: int | None
    created_address: int | None = None
    value: int = 0
    gas_used: int = 0
    gas_price: int = 0
    input: bytes = b""
    error: str | None = None
    timestamp: int = 0
    block_number: int = 0
    index: int | None = None
    seq: int = field(default=0, compare=False)  # load order, breaks ties

    @property
    def is_creation(self) -> bool:
        return self.to is None and self.created_address is not None

    @property
    def order_key(self) -> tuple:
        return (self.block_number, self.index if self.index is not None else self.seq, self.seq)

    @property
    def gas_cost(self) -> int:
        return self.gas_used * self.gas_price

    def participants(self) -> set[int]:
        return {a for a in (self.sender, self.to, self.created_address) if a is not None}

    def to_json(self) -> dict:
        rec = {
            "hash": "0x" + self.hash.hex(),
            "kind": self.kind,
            "from": format_address(self.sender),
            "to": None if self.to is None else format_address(self.to),
            "created_address": None
            if self.created_address is None
            else format_address(self.created_address),
            "value": str(self.value),
            "gas_used": self.gas_used,
            "gas_price": str(self.gas_price),
            "input": "0x" + self.input.hex(),
            "timestamp": self.timestamp,
            "block_number": self.block_number,
        }
        if self.error is not None:
            rec["error"] = self.error
        if self.index is not None:
            rec["index"] = self.index
        return rec

    @classmethod
    def from_json(cls, rec: dict, seq: int = 0) -> "TxRecord":
        kind = rec.get("kind", EXTERNAL)
        if kind not in (EXTERNAL, INTERNAL):
            raise ValueError(f"kind must be external or internal, got {kind!r}")
        to = rec.get("to")
        created = rec.get("created_address")
        tx = cls(
            hash=parse_hex(rec["hash"], exact=32),
            kind=kind,
            sender=parse_address(rec["from"]),
            to=None if to in (None, "") else parse_address(to),
            created_address=None if created in (None, "") else parse_address(created),
            value=parse_amount(rec.get("value", 0)),
            gas_used=parse_amount(rec.get("gas_used", 0)),
            gas_price=parse_amount(rec.get("gas_price", 0)),
            input=parse_hex(rec.get("input")),
            error=rec.get("error") or None,
            timestamp=parse_amount(rec.get("timestamp", 0)),
            block_number=parse_amount(rec.get("block_number", 0)),
            index=None if rec.get("index") is None else int(rec["index"]),
            seq=seq,
        )
        if tx.to is None and tx.created_address is None:
            raise ValueError("creation transaction without created_address")
        return tx


@dataclass
class LoadReport:
    loaded: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    duplicates: int = 0


def _records(path: Path, report: LoadReport) -> Iterator[tuple[int, dict]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
            except ValueError as exc:
                report.rejected.append((lineno, f"invalid JSON: {exc}"))
                continue
            yield lineno, rec


class AccountStore:
    def __init__(self, accounts: Iterable[AccountState] = ()):
        self.accounts: dict[int, AccountState] = {}
        self.report = LoadReport()
        for acc in accounts:
            self.add(acc)

    def add(self, acc: AccountState) -> None:
        if acc.address in self.accounts:
            self.report.duplicates += 1
            log.warning("duplicate account %s, keeping last", format_address(acc.address))
        self.accounts[acc.address] = acc
        self.report.loaded = len(self.accounts)

    def get(self, address: int) -> AccountState | None:
        return self.accounts.get(address)

    def __contains__(self, address: int) -> bool:
        return address in self.accounts

    def __iter__(self):
        return iter(self.accounts.values())

    def __len__(self) -> int:
        return len(self.accounts)


def load_accounts(path: str | Path) -> AccountStore:
    store = AccountStore()
    for lineno, rec in _records(Path(path), store.report):
        try:
            acc = AccountState.from_json(rec)
        except (KeyError, ValueError, TypeError) as exc:
            store.report.rejected.append((lineno, f"{type(exc).__name__}: {exc}"))
            continue
        store.add(acc)
    for lineno, msg in store.report.rejected:
        log.warning("%s:%d rejected: %s", path, lineno, msg)
    return store


def write_accounts(path: str | Path, accounts: Iterable[AccountState]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for acc in accounts:
            fh.write(json.dumps(acc.to_json()) + "\n")


@dataclass
class AccountHistory:
    external_in: list[TxRecord] = field(default_factory=list)
    external_out: list[TxRecord] = field(default_factory=list)
    internal_in: list[TxRecord] = field(default_factory=list)
    internal_out: list[TxRecord] = field(default_factory=list)
    oldest: TxRecord | None = None

    @property
    def external_count(self) -> int:
        return len(self.external_in) + len(self.external_out)

    @property
    def internal_count(self) -> int:
        return len(self.internal_in) + len(self.internal_out)

    def all(self) -> list[TxRecord]:
        seen = {}
        for seq in (self.external_in, self.external_out, self.internal_in, self.internal_out):
            for tx in seq:
                seen[tx.seq] = tx
        return sorted(seen.values(), key=lambda t: t.order_key)


class TxStore:
    def __init__(self, records: Iterable[TxRecord] = ()):
        self.records: list[TxRecord] = []
        self.by_address: dict[int, list[TxRecord]] = {}
        self.report = LoadReport()
        for tx in records:
            self.add(tx)
        self.finalize()

    def add(self, tx: TxRecord) -> TxRecord:
        tx = replace(tx, seq=len(self.records))
        self.records.append(tx)
        for addr in tx.participants():
            self.by_address.setdefault(addr, []).append(tx)
        self.report.loaded = len(self.records)
        return tx

    def finalize(self) -> None:
        for seq in self.by_address.values():
            seq.sort(key=lambda t: t.order_key)

    def for_address(self, address: int) -> list[TxRecord]:
        return self.by_address.get(address, [])

    def by_hash(self, tx_hash: bytes) -> list[TxRecord]:
        return [t for t in self.records if t.hash == tx_hash]

    def history(self, address: int) -> AccountHistory:
        hist = AccountHistory()
        for tx in self.for_address(address):
            incoming = tx.to == address or tx.created_address == address
            outgoing = tx.sender == address
            if tx.kind == EXTERNAL:
                if incoming:
                    hist.external_in.append(tx)
                if outgoing:
                    hist.external_out.append(tx)
            else:
                if incoming:
                    hist.internal_in.append(tx)
                if outgoing:
                    hist.internal_out.append(tx)
        txs = self.for_address(address)
        hist.oldest = txs[0] if txs else None
        return hist

    def __len__(self) -> int:
        return len(self.records)


def load_transactions(path: str | Path) -> TxStore:
    store = TxStore()
    for lineno, rec in _records(Path(path), store.report):
        try:
            tx = TxRecord.from_json(rec)
        except (KeyError, ValueError, TypeError) as exc:
            store.report.rejected.append((lineno, f"{type(exc).__name__}: {exc}"))
            continue
        store.add(tx)
    store.finalize()
    for lineno, msg in store.report.rejected:
        log.warning("%s:%d rejected: %s", path, lineno, msg)
    return store


def write_transactions(path: str | Path, records: Iterable[TxRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tx in records:
            fh.write(json.dumps(tx.to_json()) + "\n")
