import random

import pytest

from erasable.detectors import PARITY_LIBRARY, Classification, Label, classify
from erasable.fixtures import (
    call_tx,
    creation_tx,
    many_to_one_fixture,
    one_to_many_fixture,
    tx_hash,
)
from erasable.graphs import (
    CREATION,
    PROBE,
    TRIGGER,
    AccountGraph,
    build_call_graph,
    build_creation_graph,
    classify_shape,
    export_dot,
    export_edge_list,
    multi_creators,
    shapes,
    short_label,
    to_dot,
)
from erasable.isa import assemble
from erasable.state import INTERNAL, AccountState, AccountStore, TxStore

EOA = 0xE0A0000000000000000000000000000000000001
FACTORY = 0xFAC7000000000000000000000000000000000002


def call_graph_for(accounts, **kw):
    store = AccountStore(accounts)
    classes = [classify(a) for a in accounts]
    return build_call_graph(classes, accounts=store, **kw), classes


def test_many_to_one():
    wallets = many_to_one_fixture(20)
    graph, classes = call_graph_for(wallets)
    assert all(c.primary is Label.PARITY_DEPENDENT for c in classes)
    assert classify_shape(graph, PARITY_LIBRARY).kind == "ManyToOne"
    assert classify_shape(graph, PARITY_LIBRARY).degree == 20
    assert graph.nodes[PARITY_LIBRARY].removed
    assert len(graph.nodes) == 21 and len(graph.edges) == 20
    assert [s.kind for s in shapes(graph)] == ["ManyToOne"]


def test_many_to_one_monotone():
    graph, _ = call_graph_for(many_to_one_fixture(5))
    before = classify_shape(graph, PARITY_LIBRARY)
    graph.add_edge(0x77, PARITY_LIBRARY, "CALL")
    after = classify_shape(graph, PARITY_LIBRARY)
    assert after.kind == before.kind == "ManyToOne" and after.degree == 6


def test_one_to_many():
    attacker, targets = one_to_many_fixture(200)
    graph, classes = call_graph_for([attacker])
    assert classes[0].primary is Label.DOS_MALICIOUS
    shape = classify_shape(graph, attacker.address)
    assert (shape.kind, shape.degree) == ("OneToMany", 200)
    assert {k[2] for k in graph.edges} == {PROBE}
    # probes can be turned off, leaving an isolated node
    graph, _ = call_graph_for([attacker], include_probes=False)
    assert classify_shape(graph, attacker.address).kind == "Other"


def test_empty_and_isolated():
    graph = build_call_graph([])
    assert graph.nodes == {} and graph.edges == {}
    assert to_dot(graph) == 'digraph "call_graph" {\n  node [shape=ellipse, fontname="monospace"];\n}\n'
    g = AccountGraph()
    g.node(5)
    assert classify_shape(g, 5).kind == "Other"
    with pytest.raises(KeyError):
        classify_shape(g, 6)


def test_self_calls_excluded():
    me = 0xABC
    code = assemble(*[("PUSH1", 0)] * 4, ("PUSH20", me), "GAS", "DELEGATECALL",
                    *[("PUSH1", 0)] * 4, ("PUSH20", PARITY_LIBRARY), "GAS", "DELEGATECALL", "STOP")
    graph, _ = call_graph_for([AccountState(me, 1, 0, code)])
    assert graph.self_calls == 1
    assert list(graph.edges) == [(me, PARITY_LIBRARY, "DELEGATECALL")]


def test_multiplicity_counts_call_sites():
    site = [*[("PUSH1", 0)] * 4, ("PUSH20", PARITY_LIBRARY), "GAS", "DELEGATECALL", "POP"]
    graph, _ = call_graph_for([AccountState(0xABC, 1, 0, assemble(*site, *site, "STOP"))])
    assert graph.edges == {(0xABC, PARITY_LIBRARY, "DELEGATECALL"): 2}
    assert 'label="DELEGATECALL x2"' in to_dot(graph)


def test_merge_is_commutative():
    wallets = many_to_one_fixture(6)
    a, _ = call_graph_for(wallets[:3])
    b, _ = call_graph_for(wallets[3:])
    whole, _ = call_graph_for(wallets)
    ab = AccountGraph("call_graph").merge(a).merge(b)
    ba = AccountGraph("call_graph").merge(b).merge(a)
    assert to_dot(ab) == to_dot(ba) == to_dot(whole)


def test_dot_is_deterministic(tmp_path):
    wallets = many_to_one_fixture(20)
    shuffled = wallets[:]
    random.Random(3).shuffle(shuffled)
    g1, _ = call_graph_for(wallets)
    g2, _ = call_graph_for(shuffled)
    export_dot(g1, tmp_path / "a.dot")
    export_dot(g2, tmp_path / "b.dot")
    assert (tmp_path / "a.dot").read_bytes() == (tmp_path / "b.dot").read_bytes()
    text = (tmp_path / "a.dot").read_text()
    assert text.count(" -> ") == 20
    assert short_label(PARITY_LIBRARY) == "0x863df6.."
    assert 'fillcolor="red"' in text


def test_dot_two_nodes_one_edge():
    g = AccountGraph()
    g.add_edge(1, 2, "CALL")
    assert to_dot(g).count(" -> ") == 1
    with pytest.raises(ValueError):
        g.add_edge(1, 2, "CALL", 0)


def test_edge_list(tmp_path):
    g = AccountGraph()
    g.add_edge(2, 1, "CALL", 3)
    export_edge_list(g, tmp_path / "e.tsv")
    lines = (tmp_path / "e.tsv").read_text().splitlines()
    assert lines[0] == "from\tto\tkind\tmultiplicity"
    assert lines[1].endswith("\tCALL\t3")


def test_dot_colours():
    g = AccountGraph()
    g.node(1).category = "DoS EOA"
    g.node(2).category = "DoS contract"
    g.node(2).balance = 5
    g.node(3).removed = True
    text = to_dot(g)
    assert 'fillcolor="lightgrey"' in text and 'fillcolor="dimgray"' in text and 'fillcolor="red"' in text


# -- creation graph --------------------------------------------------------------


def fourteen_eoas():
    trigger = tx_hash("one external tx")
    txs = [call_tx(EOA, FACTORY, block=5, index=0, parent=trigger, gas_used=500_000)]
    accounts = []
    for i in range(14):
        addr = 0xD05E0A0000000000000000000000000000000000 + i
        txs.append(call_tx(FACTORY, addr, kind=INTERNAL, value=1, block=5, index=0, parent=trigger))
        accounts.append(AccountState(addr, 0, 1))
    return accounts, TxStore(txs)


def test_fourteen_dos_eoas_one_transaction():
    accounts, txs = fourteen_eoas()
    classes = [classify(a, txs.history(a.address)) for a in accounts]
    assert all(c.primary is Label.DOS_EOA for c in classes)
    graph = build_creation_graph(classes, txs, AccountStore(accounts))
    assert len(graph.out_edges(FACTORY, [CREATION])) == 14
    assert graph.edges[(EOA, FACTORY, TRIGGER)] == 1
    assert len(graph.edges) == 15
    assert multi_creators(graph) == [FACTORY]
    assert graph.nodes[FACTORY].creations_total == 14


def test_eoa_deploys_mc_s():
    mc = 0x3C
    txs = TxStore([creation_tx(EOA, mc, block=1)])
    classes = [classify(AccountState(mc, 1, 0, b"\x00"))]
    graph = build_creation_graph(classes, txs)
    assert graph.edges == {(EOA, mc, CREATION): 1}
    assert multi_creators(graph) == []


def test_dangling_creation():
    graph = build_creation_graph([Classification(0x44, (Label.MC_S,))], TxStore())
    assert graph.edges == {}
    assert "dangling" in graph.nodes[0x44].notes[0]


def test_creation_edges_conserved():
    accounts, txs = fourteen_eoas()
    extra = Classification(0x44, (Label.MC_S,))  # no creation tx known
    classes = [classify(a, txs.history(a.address)) for a in accounts] + [extra]
    graph = build_creation_graph(classes, txs)
    assert sum(1 for k in graph.edges if k[2] == CREATION) == 14
