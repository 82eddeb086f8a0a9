"""Call graphs and creation graphs over erasable accounts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .detectors import DOS_CONTRACT_LABELS, Classification, DetectorConfig
from .state import EXTERNAL, AccountStore, TxRecord, TxStore, format_address
from .symstack import CALL_OPS, SymResult, sym_exec

log = logging.getLogger(__name__)

CREATION = "creation"
TRIGGER = "trigger"
PROBE = "probe"
CALL_EDGE_KINDS = frozenset(CALL_OPS | {PROBE})


@dataclass
class Node:
    address: int
    category: str | None = None
    balance: int = 0
    removed: bool = False
    is_contract: bool | None = None
    created_erasable: int = 0
    creations_total: int = 0
    notes: list[str] = field(default_factory=list)


@dataclass
class AccountGraph:
    name: str = "graph"
    nodes: dict[int, Node] = field(default_factory=dict)
    edges: dict[tuple[int, int, str], int] = field(default_factory=dict)
    self_calls: int = 0

    def node(self, address: int) -> Node:
        if address not in self.nodes:
            self.nodes[address] = Node(address)
        return self.nodes[address]

    def add_edge(self, src: int, dst: int, kind: str, count: int = 1) -> None:
        if count < 1:
            raise ValueError("edge multiplicity must be >= 1")
        self.node(src)
        self.node(dst)
        key = (src, dst, kind)
        self.edges[key] = self.edges.get(key, 0) + count

    def merge(self, other: "AccountGraph") -> "AccountGraph":
        for addr, node in other.nodes.items():
            mine = self.node(addr)
            mine.category = mine.category or node.category
            mine.balance = max(mine.balance, node.balance)
            mine.removed = mine.removed or node.removed
            if mine.is_contract is None:
                mine.is_contract = node.is_contract
        for (src, dst, kind), n in other.edges.items():
            self.add_edge(src, dst, kind, n)
        self.self_calls += other.self_calls
        return self

    def out_edges(self, address: int, kinds: Iterable[str] | None = None) -> list[tuple]:
        kinds = None if kinds is None else set(kinds)
        return [
            (k, n) for k, n in self.edges.items()
            if k[0] == address and (kinds is None or k[2] in kinds)
        ]

    def in_edges(self, address: int, kinds: Iterable[str] | None = None) -> list[tuple]:
        kinds = None if kinds is None else set(kinds)
        return [
            (k, n) for k, n in self.edges.items()
            if k[1] == address and (kinds is None or k[2] in kinds)
        ]

    def neighbours_out(self, address: int, kinds=CALL_EDGE_KINDS) -> set[int]:
        return {k[1] for k, _ in self.out_edges(address, kinds) if k[1] != address}

    def neighbours_in(self, address: int, kinds=CALL_EDGE_KINDS) -> set[int]:
        return {k[0] for k, _ in self.in_edges(address, kinds) if k[0] != address}


# -- call graph -------------------------------------------------------------


def build_call_graph(
    classifications: Iterable[Classification],
    sym_results: Mapping[int, SymResult] | None = None,
    accounts: AccountStore | None = None,
    config: DetectorConfig = DetectorConfig(),
    include_probes: bool = True,
) -> AccountGraph:
    """Edges from each DoS contract to the concrete addresses it reaches.

    Multiplicity counts distinct call sites for the same (caller, target,
    opcode).  ``sym_results`` may be partial; missing contracts are executed
    here, which needs their code from ``accounts``.
    """
    graph = AccountGraph("call_graph")
    sym_results = dict(sym_results or {})
    for cls in sorted(classifications, key=lambda c: c.address):
        if not DOS_CONTRACT_LABELS.intersection(cls.labels):
            continue
        caller = graph.node(cls.address)
        caller.category = cls.primary.category if cls.primary else None
        caller.is_contract = True
        state = accounts.get(cls.address) if accounts is not None else None
        if state is not None:
            caller.balance = state.balance
        result = sym_results.get(cls.address) or cls.sym
        if result is None:
            if state is None:
                caller.notes.append("no code available for symbolic execution")
                continue
            result = sym_exec(state.code, config.exec_budget, config.fork)
        events = list(result.events) + (list(result.probes) if include_probes else [])
        for ev in events:
            if not ev.is_concrete:
                continue
            if ev.target == cls.address:
                graph.self_calls += 1
                continue
            kind = ev.call_opcode if ev.call_opcode in CALL_OPS else PROBE
            graph.add_edge(cls.address, ev.target, kind)
    for addr, node in graph.nodes.items():
        if addr in config.removed_contracts:
            node.removed = True
        elif accounts is not None and node.is_contract is not True:
            state = accounts.get(addr)
            node.removed = state is None or not state.code
            if state is not None:
                node.balance = state.balance
                node.is_contract = bool(state.code)
    return graph


# -- creation graph ---------------------------------------------------------


def build_creation_graph(
    classifications: Iterable[Classification],
    txs: TxStore,
    accounts: AccountStore | None = None,
) -> AccountGraph:
    """Creator -> account edges, plus trigger edges for contract creators."""
    graph = AccountGraph("creation_graph")
    erasable = sorted((c for c in classifications if c.is_erasable), key=lambda c: c.address)
    triggers: set[tuple[int, int, bytes]] = set()
    for cls in erasable:
        node = graph.node(cls.address)
        node.category = cls.primary.category
        if accounts is not None and (state := accounts.get(cls.address)) is not None:
            node.balance = state.balance
            node.is_contract = bool(state.code)
        creation = _creation_tx(cls.address, txs, node.is_contract)
        if creation is None:
            node.notes.append("dangling creation: no creation transaction found")
            log.warning("no creation transaction for %s", format_address(cls.address))
            continue
        creator = creation.sender
        graph.add_edge(creator, cls.address, CREATION)
        graph.node(creator).created_erasable += 1
        if creation.kind != EXTERNAL:
            graph.node(creator).is_contract = True
            driver = next(
                (t for t in txs.by_hash(creation.hash) if t.kind == EXTERNAL), None
            )
            if driver is None:
                graph.node(creator).notes.append(
                    f"no external transaction found for 0x{creation.hash.hex()}"
                )
            elif (driver.sender, creator, creation.hash) not in triggers:
                triggers.add((driver.sender, creator, creation.hash))
                graph.add_edge(driver.sender, creator, TRIGGER)
                graph.node(driver.sender).is_contract = False
    for addr, node in graph.nodes.items():
        if node.created_erasable:
            node.creations_total = _count_creations(addr, txs)
    return graph


def _creation_tx(address: int, txs: TxStore, is_contract: bool | None) -> TxRecord | None:
    """The transaction that brought ``address`` into existence.

    Contracts have an explicit creation record.  An EOA appears in the state
    when it first receives value, so its oldest incoming transfer is used.
    """
    history = txs.for_address(address)
    for t in history:
        if t.created_address == address:
            return t
    if is_contract is not True and history and history[0].to == address:
        return history[0]
    return None


def _count_creations(creator: int, txs: TxStore) -> int:
    """Accounts whose first transaction was sent by ``creator``."""
    born = set()
    for t in txs.for_address(creator):
        target = t.created_address if t.created_address is not None else t.to
        if t.sender != creator or target is None or target == creator:
            continue
        if txs.for_address(target)[0] is t:
            born.add(target)
    return len(born)


def multi_creators(graph: AccountGraph) -> list[int]:
    """Creators responsible for more than one erasable account."""
    return sorted(a for a, n in graph.nodes.items() if n.created_erasable > 1)


# -- shapes -----------------------------------------------------------------


@dataclass(frozen=True)
class GraphShape:
    kind: str  # "ManyToOne" | "OneToMany" | "Other"
    address: int | None = None
    degree: int = 0


def classify_shape(graph: AccountGraph, address: int) -> GraphShape:
    if address not in graph.nodes:
        raise KeyError(format_address(address))
    fan_in = len(graph.neighbours_in(address))
    fan_out = len(graph.neighbours_out(address))
    if fan_in >= 2 and fan_out == 0:
        return GraphShape("ManyToOne", address, fan_in)
    if fan_out >= 2 and fan_in == 0:
        return GraphShape("OneToMany", address, fan_out)
    return GraphShape("Other", address, 0)


def shapes(graph: AccountGraph) -> list[GraphShape]:
    found = [classify_shape(graph, a) for a in sorted(graph.nodes)]
    return [s for s in found if s.kind != "Other"]


# -- export -----------------------------------------------------------------


def short_label(address: int, nbytes: int = 3) -> str:
    return format_address(address)[: 2 + 2 * nbytes] + ".."


def _node_style(node: Node) -> dict[str, str]:
    if node.removed:
        return {"fillcolor": "red", "style": "filled"}
    if node.category is not None:
        # erasable: deep grey when it still holds ETH
        fill = "dimgray" if node.balance > 0 else "lightgrey"
        return {"fillcolor": fill, "style": "filled"}
    if node.balance > 0:
        return {"fillcolor": "dimgray", "style": "filled"}
    return {"fillcolor": "white", "style": "filled"}


def _attrs(d: Mapping[str, str]) -> str:
    return ", ".join(f'{k}="{v}"' for k, v in d.items())


def to_dot(graph: AccountGraph, label_bytes: int = 3) -> str:
    lines = [f'digraph "{graph.name}" {{', "  node [shape=ellipse, fontname=\"monospace\"];"]
    for addr in sorted(graph.nodes):
        node = graph.nodes[addr]
        attrs = {"label": short_label(addr, label_bytes), **_node_style(node)}
        if node.category:
            attrs["category"] = node.category
        if node.balance:
            attrs["balance_wei"] = str(node.balance)
        lines.append(f'  "{format_address(addr)}" [{_attrs(attrs)}];')
    for (src, dst, kind) in sorted(graph.edges):
        n = graph.edges[(src, dst, kind)]
        attrs = {"label": kind if n == 1 else f"{kind} x{n}", "kind": kind, "multiplicity": str(n)}
        lines.append(f'  "{format_address(src)}" -> "{format_address(dst)}" [{_attrs(attrs)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(graph: AccountGraph, path: str | Path, label_bytes: int = 3) -> Path:
    path = Path(path)
    path.write_text(to_dot(graph, label_bytes), encoding="utf-8")
    return path


def export_edge_list(graph: AccountGraph, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("from\tto\tkind\tmultiplicity\n")
        for (src, dst, kind) in sorted(graph.edges):
            fh.write(f"{format_address(src)}\t{format_address(dst)}\t{kind}\t{graph.edges[(src, dst, kind)]}\n")
    return path
