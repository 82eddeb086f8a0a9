import json
import random
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from erasable.fixtures import call_tx, creation_tx
from erasable.state import (
    EXTERNAL,
    INTERNAL,
    AccountState,
    IngestError,
    TxRecord,
    TxStore,
    format_address,
    load_accounts,
    load_transactions,
    parse_address,
    parse_amount,
    write_accounts,
    write_transactions,
)

A = 0x1111111111111111111111111111111111111111
B = 0x2222222222222222222222222222222222222222
C = 0x3333333333333333333333333333333333333333


def test_parse_helpers():
    assert parse_address("0x" + "ab" * 20) == int("ab" * 20, 16)
    assert parse_address("AB" * 20) == int("ab" * 20, 16)
    assert format_address(1) == "0x" + "0" * 39 + "1"
    with pytest.raises(ValueError):
        parse_address("0x1234")
    assert parse_amount("0x10") == parse_amount("16") == parse_amount(16) == 16
    for bad in (-1, 2**256, True, 1.5):
        with pytest.raises(ValueError):
            parse_amount(bad)


def test_account_round_trip(tmp_path):
    accs = [AccountState(A, 1, 10**30, b"\x60\x00", bytes(32)), AccountState(B)]
    write_accounts(tmp_path / "a.jsonl", accs)
    store = load_accounts(tmp_path / "a.jsonl")
    assert [store.get(A), store.get(B)] == accs
    assert store.report.rejected == []


def test_malformed_account_lines(tmp_path):
    p = tmp_path / "a.jsonl"
    lines = [
        json.dumps(AccountState(A, 0, 1).to_json()),
        "{not json",
        json.dumps({"address": "0x12", "balance": 1}),
        json.dumps({"address": format_address(B), "balance": "-5"}),
        json.dumps({"address": format_address(C), "code": "0xabc"}),
        "[1, 2]",
        "",
        json.dumps({"balance": 1}),
        json.dumps(AccountState(C, 2, 3).to_json()),
    ]
    p.write_text("\n".join(lines) + "\n")
    store = load_accounts(p)
    assert len(store) == 2
    assert [ln for ln, _ in store.report.rejected] == [2, 3, 4, 5, 6, 8]


def test_duplicate_keeps_last(tmp_path, caplog):
    p = tmp_path / "a.jsonl"
    write_accounts(p, [AccountState(A, 0, 1), AccountState(A, 0, 2)])
    store = load_accounts(p)
    assert store.get(A).balance == 2
    assert store.report.duplicates == 1
    assert "duplicate" in caplog.text


def test_missing_file():
    with pytest.raises(IngestError):
        load_accounts("/nonexistent/accounts.jsonl")


def test_creation_without_address_rejected(tmp_path):
    rec = creation_tx(A, B).to_json()
    rec["created_address"] = None
    p = tmp_path / "t.jsonl"
    p.write_text(json.dumps(rec) + "\n" + json.dumps({**rec, "kind": "weird"}) + "\n")
    store = load_transactions(p)
    assert len(store) == 0 and len(store.report.rejected) == 2


def test_tx_round_trip(tmp_path):
    txs = [
        creation_tx(A, B, ts=5, block=2, index=0, value=7, error="Out of Gas Error"),
        call_tx(B, C, kind=INTERNAL, ts=5, block=2, index=0, value=2**200, data=b"\x01\x02"),
    ]
    write_transactions(tmp_path / "t.jsonl", txs)
    loaded = load_transactions(tmp_path / "t.jsonl")
    assert loaded.records == txs


def test_history_directions():
    store = TxStore([
        creation_tx(A, B, block=1, index=0),
        call_tx(C, B, block=2, index=0),
        call_tx(B, C, kind=INTERNAL, block=3, index=0),
        call_tx(A, B, kind=INTERNAL, block=4, index=0, error="Reverted"),
        call_tx(B, B, block=5, index=0),  # self transfer counts both ways
    ])
    h = store.history(B)
    assert len(h.external_in) == 3 and len(h.external_out) == 1
    assert len(h.internal_in) == 1 and len(h.internal_out) == 1
    assert h.oldest.is_creation
    assert h.external_count == 4 and h.internal_count == 2
    assert len(h.all()) == 5
    assert store.history(0xDEAD).oldest is None


def test_oldest_uses_block_then_index():
    store = TxStore([
        call_tx(C, B, block=9, index=3),
        call_tx(A, B, block=9, index=1),
        call_tx(A, B, block=10, index=0),
    ])
    assert store.history(B).oldest.sender == A


def _random_txs(rng, n, addrs):
    out = []
    for i in range(n):
        kind = rng.choice([EXTERNAL, INTERNAL])
        blk = rng.randint(0, 30)
        idx = rng.randint(0, 5)
        if rng.random() < 0.1:
            out.append(creation_tx(rng.choice(addrs), rng.choice(addrs), kind=kind, block=blk, index=idx,
                                   ts=blk * 10))
        else:
            out.append(call_tx(rng.choice(addrs), rng.choice(addrs), kind=kind, block=blk, index=idx,
                               ts=blk * 10, nonce=i))
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 200))
def test_oldest_matches_brute_force(seed, n):
    rng = random.Random(seed)
    addrs = [rng.getrandbits(160) for _ in range(6)]
    txs = _random_txs(rng, n, addrs)
    store = TxStore(txs)
    for a in addrs:
        mine = [t for t in store.records if a in t.participants()]
        expected = min(mine, key=lambda t: (t.block_number, t.index, t.seq)) if mine else None
        assert store.history(a).oldest == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_index_complete_and_load_idempotent(seed):
    rng = random.Random(seed)
    addrs = [rng.getrandbits(160) for _ in range(5)]
    txs = _random_txs(rng, 80, addrs)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "t.jsonl"
        write_transactions(p, txs)
        first = load_transactions(p)
        write_transactions(p, first.records)
        second = load_transactions(p)
    assert first.records == second.records
    for tx in first.records:
        for a in tx.participants():
            assert tx in first.for_address(a)
    total = sum(len(v) for v in first.by_address.values())
    assert total == sum(len(t.participants()) for t in first.records)


def test_txrecord_is_hashable_and_ordered():
    t = call_tx(A, B, block=1, index=2)
    assert t.order_key == (1, 2, 0)
    assert isinstance(hash(t), int)
    assert isinstance(t, TxRecord)
