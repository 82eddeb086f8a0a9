"""End-to-end exit criteria.

Each test carries ``@pytest.mark.acceptance(number, title)``; the conftest
prints one PASS/FAIL line per criterion after the run.
"""

import random
import time
from collections import Counter
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from erasable.concrete import ConcreteEnv, run_concrete
from erasable.detectors import (
    PARITY_LIBRARY,
    Classification,
    DetectorConfig,
    Label,
    classify,
    detect_dos_eoa,
)
from erasable.fixtures import (
    call_tx,
    creation_tx,
    delegating_wallet_code,
    dos_malicious_code,
    many_to_one_fixture,
    one_to_many_fixture,
    planted_corpus,
    reference_contracts,
)
from erasable.graphs import build_call_graph, classify_shape, to_dot
from erasable.isa import assemble, decode, encode, opcode_by_name, opcode_table, split_blocks
from erasable.report import ReportConfig, analyse, compute_cdf, compute_waste
from erasable.rpc import RpcClient, RpcEndpoint
from erasable.state import INTERNAL, AccountState, AccountStore, TxStore
from erasable.symstack import simulate_depth, sym_exec
from mock_rpc import MockRpc

ISTANBUL = opcode_table("istanbul")


# -- 1 ------------------------------------------------------------------------------


@pytest.mark.acceptance(1, "Decoder round trip")
def test_decoder_round_trip(record_property):
    rng = random.Random(1)
    samples = [rng.randbytes(rng.randint(0, 1024)) for _ in range(10_000)]
    start = time.perf_counter()
    bad = sum(encode(decode(s), len(s)) != s for s in samples)
    elapsed = time.perf_counter() - start
    record_property("detail", f"10000 sequences, {bad} mismatches, {elapsed:.2f} s (limit 5 s)")
    assert bad == 0
    assert elapsed < 5.0


# -- 2 ------------------------------------------------------------------------------

STRAIGHT = [i for i in ISTANBUL if i.is_known and not i.is_terminator and i.mnemonic != "INVALID"]
PUSHES = [i for i in STRAIGHT if i.immediate_len]
OTHERS = [i for i in STRAIGHT if not i.immediate_len]
ENDERS = [i for i in ISTANBUL if i.is_terminator]


def random_block(rng: random.Random) -> bytes:
    limit = rng.randint(1, 64)
    push_bias = rng.choice([0.3, 0.6, 0.8])
    out = bytearray()
    while len(out) < limit:
        if rng.random() < push_bias:
            op = rng.choice(PUSHES[:4] if rng.random() < 0.7 else PUSHES)
            out.append(op.byte_value)
            out += rng.randbytes(op.immediate_len)
        else:
            out.append(rng.choice(OTHERS).byte_value)
    out = out[:limit]
    if rng.random() < 0.5:
        out[-1:] = bytes([rng.choice(ENDERS).byte_value])
    return bytes(out)


def random_env(rng: random.Random) -> ConcreteEnv:
    return ConcreteEnv(
        calldata=rng.randbytes(rng.randint(0, 96)),
        caller=rng.getrandbits(160),
        timestamp=rng.getrandbits(32),
        balances={rng.getrandbits(160): rng.getrandbits(64) for _ in range(3)},
        seed=rng.getrandbits(32),
    )


def concrete_verdict(code: bytes, instrs, env: ConcreteEnv):
    n = len(instrs)
    tr = run_concrete(code, env, step_limit=n + 1)
    offsets = [i.offset for i in instrs]
    assert tr.offsets[:n] == offsets[: len(tr.offsets[:n])], "block is not straight-line"
    if tr.halt_reason in ("underflow", "overflow") and tr.halt_offset in offsets:
        return (tr.halt_reason, tr.halt_offset, None)
    if len(tr.offsets) >= n:
        return ("ok", None, tr.depths[n - 1])
    if tr.halt_offset == offsets[-1]:  # bad jump: operands already consumed
        return ("ok", None, len(tr.stack))
    raise AssertionError(f"unexpected halt {tr.halt_reason}@{tr.halt_offset}")


@pytest.mark.acceptance(2, "Oracle depth equivalence")
def test_depth_oracle(record_property):
    rng = random.Random(2)
    mismatches = []
    kinds = Counter()
    for _ in range(10_000):
        code = random_block(rng)
        instrs = decode(code)
        assert len(split_blocks(instrs)) == 1
        sim = simulate_depth(instrs)
        got = (sim.kind, sim.at_offset, sim.final_depth)
        kinds[sim.kind] += 1
        for _ in range(3):
            want = concrete_verdict(code, instrs, random_env(rng))
            if want != got:
                mismatches.append((code.hex(), got, want))
    summary = ", ".join(f"{k} {v}" for k, v in sorted(kinds.items()))
    record_property("detail", f"10000 blocks x 3 environments ({summary}), {len(mismatches)} mismatches")
    assert mismatches == []


# -- 3 ------------------------------------------------------------------------------

ARITH = ["ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "ADDMOD", "MULMOD", "EXP",
         "SIGNEXTEND", "LT", "GT", "SLT", "SGT", "EQ", "ISZERO", "AND", "OR", "XOR", "NOT",
         "BYTE", "SHL", "SHR", "SAR"]
SHUFFLE = ["POP"] + [f"DUP{i}" for i in range(1, 17)] + [f"SWAP{i}" for i in range(1, 17)]
EDGE_VALUES = [0, 1, 2, 31, 32, 255, 256, 2**255, 2**255 - 1, 2**256 - 1, 2**256 - 2, 2**160 - 1]


def random_program(rng: random.Random) -> bytes:
    items = []
    depth = 0
    for _ in range(rng.randint(1, 40)):
        ops = [m for m in ARITH + SHUFFLE if opcode_by_name(m).pops <= depth]
        if not ops or rng.random() < 0.4:
            value = rng.choice(EDGE_VALUES) if rng.random() < 0.5 else rng.getrandbits(rng.choice([8, 64, 256]))
            width = max(1, (value.bit_length() + 7) // 8)
            items.append((f"PUSH{width}", value))
            depth += 1
        else:
            name = rng.choice(ops)
            info = opcode_by_name(name)
            items.append(name)
            depth += info.pushes - info.pops
    return assemble(*items, "STOP")


@pytest.mark.acceptance(3, "Constant-folding equivalence")
def test_constant_folding(record_property):
    rng = random.Random(3)
    mismatches = []
    for _ in range(2_000):
        code = random_program(rng)
        res = sym_exec(code)
        symbolic = res.paths[0].stack
        concrete = run_concrete(code).stack[::-1]
        if res.paths[0].halt != "stop" or symbolic != concrete:
            mismatches.append(code.hex())
    record_property("detail", f"2000 programs, {len(mismatches)} mismatches")
    assert mismatches == []


# -- 4 ------------------------------------------------------------------------------


@pytest.mark.acceptance(4, "Rule-example fixtures")
def test_rule_examples(record_property):
    delegate = assemble(*[("PUSH1", 0)] * 4, ("PUSH20", PARITY_LIBRARY), "GAS", "DELEGATECALL", "STOP")
    cases = [
        ("leading STOP", bytes.fromhex("006080604052"), Label.MC_S),
        ("SELFDESTRUCT in first block", assemble(("PUSH1", 0), "CALLDATALOAD", "SELFDESTRUCT"), Label.MC_RS),
        ("REVERT in first block", assemble(("PUSH1", 0x80), ("PUSH1", 0x40), "MSTORE", ("PUSH1", 0), "DUP1",
                                           "REVERT", "JUMPDEST"), Label.MC_RS),
        ("DIV first", assemble("DIV", ("PUSH1", 1), "STOP"), Label.STACK_ERROR),
        ("0xd929 first", bytes.fromhex("d92960016000"), Label.OPCODE_ERROR),
        ("200 EXTCODESIZE", dos_malicious_code(200, "EXTCODESIZE"), Label.DOS_MALICIOUS),
        ("exactly 100 BALANCE", dos_malicious_code(100, "BALANCE"), None),
        ("PUSH20 library + DELEGATECALL", delegate, Label.PARITY_DEPENDENT),
        ("wallet stub", delegating_wallet_code(), Label.PARITY_DEPENDENT),
    ]
    start = time.perf_counter()
    wrong = []
    for name, code, want in cases:
        got = classify(AccountState(0xF00, 1, 0, code)).primary
        if got != want:
            wrong.append((name, got, want))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{len(cases) - len(wrong)}/{len(cases)} correct in {elapsed:.3f} s")
    assert wrong == []
    assert elapsed < 1.0


# -- 5 ------------------------------------------------------------------------------


@pytest.mark.acceptance(5, "Planted-corpus exactness")
def test_planted_corpus(record_property):
    corpus = planted_corpus(total=1000, seed=5)
    accounts = AccountStore(corpus.accounts)
    txs = TxStore(corpus.txs)
    start = time.perf_counter()
    result = analyse(accounts, txs, DetectorConfig(), ReportConfig(), workers=1)
    elapsed = time.perf_counter() - start

    planted = Counter(l for l in corpus.truth.values() if l is not None)
    found = Counter(c.primary for c in result.classifications if c.primary is not None)
    false_pos = [c for c in result.classifications if corpus.truth[c.address] is None and c.labels]
    wrong = [c for c in result.classifications
             if corpus.truth[c.address] is not None and c.labels != (corpus.truth[c.address],)]
    compiled = {bytes(r["code"]) for r in reference_contracts()}
    clean_compiled = sum(1 for a in corpus.accounts if corpus.truth[a.address] is None and a.code in compiled)
    record_property(
        "detail",
        f"{sum(found.values())} erasable / {len(corpus.accounts)}, {len(false_pos)} false positives, "
        f"{clean_compiled} compiled contracts in clean set, {elapsed:.1f} s",
    )
    assert found == planted
    assert false_pos == [] and wrong == []
    assert clean_compiled >= 5
    assert elapsed < 60


# -- 6 ------------------------------------------------------------------------------


@pytest.mark.acceptance(6, "DoS-EOA rule strictness")
def test_dos_eoa_mutations(record_property):
    me, attacker, user = 0xE0A, 0xBAD, 0x5E4
    base_state = AccountState(me, 0, 1)
    clean = call_tx(attacker, me, kind=INTERNAL, value=1, block=10, index=0)

    def verdict(state, txs):
        return detect_dos_eoa(state, TxStore(txs).history(me))

    assert verdict(base_state, [clean])
    mutations = {
        "balance 0 Wei": (AccountState(me, 0, 0), [clean]),
        "balance 2 Wei": (AccountState(me, 0, 2), [clean]),
        "nonce 1": (AccountState(me, 1, 1), [clean]),
        "non-empty code": (AccountState(me, 0, 1, b"\x60\x00"), [clean]),
        "external tx in": (base_state, [clean, call_tx(user, me, block=11)]),
        "external tx out": (base_state, [clean, call_tx(me, user, block=11)]),
        "errored internal tx": (base_state, [call_tx(attacker, me, kind=INTERNAL, value=1, block=10,
                                                     error="Out of Gas Error")]),
        "duplicated internal tx": (base_state, [clean, call_tx(attacker, me, kind=INTERNAL, value=1,
                                                               block=12, nonce=1)]),
    }
    still_true = [name for name, (s, t) in mutations.items() if verdict(s, t)]
    record_property("detail", f"{len(mutations) - len(still_true)}/{len(mutations)} mutations flip the verdict")
    assert still_true == []


# -- 7 ------------------------------------------------------------------------------


@pytest.mark.acceptance(7, "Waste accounting exactness")
def test_waste_exact(record_property):
    user, mc, wallet, eoa, attacker = 0x100, 0x200, 0x300, 0x400, 0x500
    attack = 1_509_981_921
    accounts = AccountStore([
        AccountState(mc, 1, 0, b"\x00"),
        AccountState(wallet, 1, 12_345, delegating_wallet_code()),
        AccountState(eoa, 0, 1),
    ])
    txs = TxStore([
        creation_tx(user, mc, ts=attack - 9, block=1, index=0, gas_used=53_000, gas_price=20),
        call_tx(user, mc, ts=attack + 1, block=2, index=0, gas_used=21_000, gas_price=20, value=700),
        call_tx(user, mc, ts=attack + 2, block=3, index=0, gas_used=30_000, gas_price=20, value=900,
                error="Reverted Error"),
        creation_tx(user, wallet, ts=attack - 100, block=4, index=0, gas_used=400_000, gas_price=10),
        call_tx(user, wallet, ts=attack + 50, block=5, index=0, gas_used=45_000, gas_price=10),
        call_tx(attacker, eoa, kind=INTERNAL, ts=attack + 60, block=6, index=0, gas_used=2_300,
                gas_price=30, value=1),
    ])
    classes = [classify(a, txs.history(a.address)) for a in accounts]
    report = compute_waste(classes, txs, accounts, ReportConfig(attack_timestamp=attack))
    m, p, e = (report.per_label[l] for l in (Label.MC_S, Label.PARITY_DEPENDENT, Label.DOS_EOA))
    got = {
        "mc_gas": m.gas_wasted, "mc_cost": m.gas_cost_wei, "mc_returned": m.eth_returned_excluded,
        "mc_value": m.value_received, "wallet_gas": p.gas_wasted, "wallet_excluded": p.gas_excluded,
        "wallet_cost": p.gas_cost_wei, "wallet_locked": p.eth_locked, "eoa_cost": e.gas_cost_wei,
        "total_gas": report.total.gas_wasted, "total_wei": report.total.wasted_wei,
    }
    want = {
        "mc_gas": 104_000, "mc_cost": 2_080_000, "mc_returned": 900, "mc_value": 700,
        "wallet_gas": 45_000, "wallet_excluded": 400_000, "wallet_cost": 450_000,
        "wallet_locked": 12_345, "eoa_cost": 69_000,
        "total_gas": 151_300, "total_wei": 2_080_000 + 450_000 + 12_345 + 69_000,
    }
    diffs = {k: (got[k], want[k]) for k in want if got[k] != want[k]}
    record_property("detail", f"{len(want) - len(diffs)}/{len(want)} sums exact")
    assert diffs == {}
    assert report.total.usd(Decimal("204.36")) == Decimal("0.00")


# -- 8 ------------------------------------------------------------------------------


@pytest.mark.acceptance(8, "Graph shapes and DOT determinism")
def test_graph_shapes(record_property):
    wallets = many_to_one_fixture(20)
    classes = [classify(w) for w in wallets]
    graph = build_call_graph(classes, accounts=AccountStore(wallets))
    center = classify_shape(graph, PARITY_LIBRARY)

    attacker, targets = one_to_many_fixture(200)
    fan = build_call_graph([classify(attacker)], accounts=AccountStore([attacker]))
    spread = classify_shape(fan, attacker.address)

    dot1 = to_dot(build_call_graph([classify(w) for w in wallets], accounts=AccountStore(wallets)))
    dot2 = to_dot(build_call_graph([classify(w) for w in reversed(wallets)],
                                   accounts=AccountStore(reversed(wallets))))
    record_property("detail", f"{center.kind}({center.degree}), {spread.kind}({spread.degree}), "
                              f"DOT identical: {dot1 == dot2}")
    assert (center.kind, center.degree) == ("ManyToOne", 20)
    assert len(graph.in_edges(PARITY_LIBRARY)) == 20
    assert (spread.kind, spread.degree) == ("OneToMany", 200)
    assert dot1.encode() == dot2.encode()


# -- 9 ------------------------------------------------------------------------------


@pytest.mark.acceptance(9, "CDF correctness")
def test_cdf(record_property):
    corpus = planted_corpus(total=1000, seed=9)
    txs = TxStore(corpus.txs)
    classes = [classify(a, txs.history(a.address)) for a in corpus.accounts]
    cdfs = compute_cdf(classes, txs)
    wrong = []
    for label in Label:
        stamps = Counter(corpus.created_at[a] for a in corpus.planted(label))
        expected, running = [], 0
        for t in sorted(stamps):
            running += stamps[t]
            expected.append((t, running))
        if cdfs[label].points != expected:
            wrong.append(label.value)
        counts = [n for _, n in cdfs[label].points]
        assert counts == sorted(counts)
    record_property("detail", f"{len(Label) - len(wrong)}/{len(Label)} series match the brute-force sort")
    assert wrong == []
    check_cdf_monotone()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 10**6)), max_size=60))
def check_cdf_monotone(plants):
    classes, txs = [], []
    labels = list(Label)
    for i, (li, ts) in enumerate(plants):
        addr = 0x1000 + i
        classes.append(Classification(addr, (labels[li],)))
        txs.append(call_tx(0x1, addr, ts=ts, block=ts, nonce=i))
    for series in compute_cdf(classes, TxStore(txs)).values():
        ts = [t for t, _ in series.points]
        ns = [n for _, n in series.points]
        assert ts == sorted(set(ts)) and ns == sorted(ns)


# -- 10 -----------------------------------------------------------------------------


def load_canned(mock, addrs):
    mock.add_account(1, 1, 0, b"")  # a 1-Wei EOA
    mock.add_account(2, 0, 5, b"\x00")  # a one-byte contract
    for a in addrs[2:]:
        mock.add_account(a, a * 1000, a % 3, bytes([0x60, a, 0x00]) if a % 2 else b"")


@pytest.mark.acceptance(10, "RPC fetcher against a mock server")
def test_rpc(tmp_path, record_property):
    addrs = list(range(1, 61))
    with MockRpc(latency=0.01) as mock:
        load_canned(mock, addrs)
        mock.fail_after = 1 + 3 * 25
        cap = 4
        ep = RpcEndpoint(mock.url, max_concurrent_requests=cap, max_attempts=1, backoff_base=0.01)
        client = RpcClient(ep, cache_dir=tmp_path / "cache")
        interrupted = False
        try:
            client.fetch_accounts(addrs)
        except Exception:
            interrupted = True
        peak = mock.max_in_flight

    with MockRpc(block_number="0x20") as mock:
        load_canned(mock, addrs)
        ep = RpcEndpoint(mock.url, max_concurrent_requests=cap, backoff_base=0.01)
        client = RpcClient(ep, cache_dir=tmp_path / "cache")
        got = client.fetch_accounts(addrs, tmp_path / "accounts.jsonl")
        refetched = mock.calls["eth_getBalance"]
        peak = max(peak, mock.max_in_flight)

    exact = got[0] == AccountState(1, 0, 1, b"") and got[1] == AccountState(2, 5, 0, b"\x00")
    record_property("detail", f"exact fields: {exact}, peak in-flight {peak} (cap {cap}), "
                              f"interrupted then resumed with {refetched}/{len(addrs)} balance refetches")
    assert exact
    assert 1 <= peak <= cap
    assert interrupted
    assert refetched < len(addrs)
    assert client.block_tag == "0x10"
    assert [a.balance for a in got[2:]] == [a * 1000 for a in addrs[2:]]
