"""Quantity, waste and creation-time reporting, and the end-to-end pipeline."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable

from .detectors import (
    CATEGORIES,
    DOS_CONTRACT_LABELS,
    PRECEDENCE,
    Classification,
    DetectorConfig,
    Label,
    classify,
)
from .graphs import (
    AccountGraph,
    build_call_graph,
    build_creation_graph,
    export_dot,
    export_edge_list,
    shapes,
)
from .state import (
    AccountStore,
    TxRecord,
    TxStore,
    format_address,
    load_accounts,
    load_transactions,
)

log = logging.getLogger(__name__)

WEI_PER_ETH = 10**18
DEFAULT_USD_PER_ETH = Decimal("204.36")
# block 4501969, the transaction that removed the Parity multi-sig library
DEFAULT_ATTACK_TIMESTAMP = 1509981921
REVERTED = "Reverted Error"


@dataclass(frozen=True)
class ReportConfig:
    usd_per_eth: Decimal = DEFAULT_USD_PER_ETH
    attack_timestamp: int = DEFAULT_ATTACK_TIMESTAMP

    @classmethod
    def from_dict(cls, data: dict) -> "ReportConfig":
        kw = {}
        if "usd_per_eth" in data:
            kw["usd_per_eth"] = Decimal(str(data["usd_per_eth"]))
        if "attack_timestamp" in data:
            kw["attack_timestamp"] = int(data["attack_timestamp"])
        return cls(**kw)


@dataclass
class CategoryWaste:
    accounts: int = 0
    external_txs: int = 0
    internal_txs: int = 0
    gas_wasted: int = 0
    gas_cost_wei: int = 0
    eth_locked: int = 0
    value_received: int = 0
    eth_returned_excluded: int = 0
    gas_excluded: int = 0

    @property
    def wasted_wei(self) -> int:
        return self.gas_cost_wei + self.eth_locked

    def usd(self, usd_per_eth: Decimal) -> Decimal:
        return (Decimal(self.wasted_wei) * usd_per_eth / WEI_PER_ETH).quantize(Decimal("0.01"))

    def add(self, other: "CategoryWaste") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class WasteReport:
    per_label: dict[Label, CategoryWaste]
    usd_per_eth: Decimal = DEFAULT_USD_PER_ETH
    exclusions: list[str] = field(default_factory=list)

    def per_category(self) -> dict[str, CategoryWaste]:
        out = {c: CategoryWaste() for c in CATEGORIES}
        for label, w in self.per_label.items():
            out[label.category].add(w)
        return out

    @property
    def total(self) -> CategoryWaste:
        t = CategoryWaste()
        for w in self.per_label.values():
            t.add(w)
        return t

    def to_json(self) -> dict:
        def row(w: CategoryWaste) -> dict:
            d = {k: getattr(w, k) for k in w.__dataclass_fields__}
            d["wasted_wei"] = w.wasted_wei
            d["usd_value"] = str(w.usd(self.usd_per_eth))
            return d

        return {
            "usd_per_eth": str(self.usd_per_eth),
            "exclusions": self.exclusions,
            "per_label": {l.value: row(self.per_label[l]) for l in PRECEDENCE},
            "per_category": {c: row(w) for c, w in self.per_category().items()},
            "total": row(self.total),
        }


def compute_waste(
    classifications: Iterable[Classification],
    txs: TxStore,
    accounts: AccountStore,
    config: ReportConfig = ReportConfig(),
) -> WasteReport:
    """Gas and ETH wasted on erasable accounts, grouped by primary label.

    A transaction touching several accounts of the same label is counted
    once for that label.  Gas spent on Parity-dependent wallets before the
    attack timestamp is excluded.  Money lost is gas cost plus the balance
    locked in DoS contracts.  Value sent to other erasable accounts is
    reported as ``value_received``; failed transactions returned theirs, so
    it goes to ``eth_returned_excluded``.
    """
    per_label = {l: CategoryWaste() for l in PRECEDENCE}
    seen: dict[Label, set[int]] = {l: set() for l in PRECEDENCE}
    for cls in sorted(classifications, key=lambda c: c.address):
        label = cls.primary
        if label is None:
            continue
        w = per_label[label]
        w.accounts += 1
        state = accounts.get(cls.address)
        if label in DOS_CONTRACT_LABELS and state is not None:
            w.eth_locked += state.balance
        for tx in txs.for_address(cls.address):
            if tx.seq in seen[label]:
                continue
            seen[label].add(tx.seq)
            if tx.kind == "external":
                w.external_txs += 1
            else:
                w.internal_txs += 1
            if label is Label.PARITY_DEPENDENT and tx.timestamp < config.attack_timestamp:
                w.gas_excluded += tx.gas_used
            else:
                w.gas_wasted += tx.gas_used
                w.gas_cost_wei += tx.gas_cost
            if label in DOS_CONTRACT_LABELS:
                continue
            if not _incoming(tx, cls.address):
                continue
            if tx.error is not None:
                w.eth_returned_excluded += tx.value
            else:
                w.value_received += tx.value
    return WasteReport(
        per_label,
        config.usd_per_eth,
        exclusions=[
            f"Parity-dependent gas before timestamp {config.attack_timestamp}",
            "value attached to failed transactions (e.g. Reverted Error) was returned",
        ],
    )


def _incoming(tx: TxRecord, address: int) -> bool:
    return tx.to == address or tx.created_address == address


# -- creation-time series ---------------------------------------------------


@dataclass
class TimeSeriesCDF:
    label: Label
    points: list[tuple[int, int]] = field(default_factory=list)
    excluded: int = 0

    def to_csv(self) -> str:
        rows = ["timestamp,cumulative_count"] + [f"{t},{n}" for t, n in self.points]
        return "\n".join(rows) + "\n"


def cumulative(timestamps: Iterable[int]) -> list[tuple[int, int]]:
    points: list[tuple[int, int]] = []
    count = 0
    for t in sorted(timestamps):
        count += 1
        if points and points[-1][0] == t:
            points[-1] = (t, count)
        else:
            points.append((t, count))
    return points


def compute_cdf(classifications: Iterable[Classification], txs: TxStore) -> dict[Label, TimeSeriesCDF]:
    stamps: dict[Label, list[int]] = {l: [] for l in PRECEDENCE}
    out = {l: TimeSeriesCDF(l) for l in PRECEDENCE}
    for cls in classifications:
        if cls.primary is None:
            continue
        hist = txs.for_address(cls.address)
        if not hist:
            out[cls.primary].excluded += 1
            continue
        stamps[cls.primary].append(hist[0].timestamp)
    for label, ts in stamps.items():
        out[label].points = cumulative(ts)
    return out


# -- pipeline ---------------------------------------------------------------


@dataclass
class PipelineResult:
    classifications: list[Classification]
    call_graph: AccountGraph
    creation_graph: AccountGraph
    waste: WasteReport
    cdfs: dict[Label, TimeSeriesCDF]
    rejected: dict[str, list[tuple[int, str]]] = field(default_factory=dict)

    def counts(self) -> dict[Label, int]:
        counts = {l: 0 for l in PRECEDENCE}
        for c in self.classifications:
            if c.primary is not None:
                counts[c.primary] += 1
        return counts

    def summary(self) -> dict:
        counts = self.counts()
        table = {cat: {} for cat in CATEGORIES}
        for label, n in counts.items():
            table[label.category][label.value] = n
        return {
            "accounts": len(self.classifications),
            "erasable": sum(counts.values()),
            "per_label": {l.value: n for l, n in counts.items()},
            "per_category": {
                cat: {"total": sum(sub.values()), "labels": sub} for cat, sub in table.items()
            },
            "call_graph_shapes": [
                {"kind": s.kind, "address": format_address(s.address), "degree": s.degree}
                for s in shapes(self.call_graph)
            ],
            "cdf_excluded": {l.value: c.excluded for l, c in self.cdfs.items()},
            "rejected_records": {k: len(v) for k, v in self.rejected.items()},
        }


def _classify_one(args) -> Classification:
    state, hist, config = args
    try:
        return classify(state, hist, config)
    except Exception as exc:  # one bad account must not stop the run
        log.exception("classification failed for %s", format_address(state.address))
        return Classification(state.address, notes=[f"evidence incomplete: {exc!r}"])


def classify_all(
    accounts: AccountStore,
    txs: TxStore,
    config: DetectorConfig = DetectorConfig(),
    workers: int = 1,
) -> list[Classification]:
    jobs = [(s, txs.history(s.address) if not s.code else None, config)
            for s in sorted(accounts, key=lambda s: s.address)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_classify_one, jobs, chunksize=64))
    else:
        results = [_classify_one(j) for j in jobs]
    return sorted(results, key=lambda c: c.address)


def analyse(
    accounts: AccountStore,
    txs: TxStore,
    config: DetectorConfig = DetectorConfig(),
    report_config: ReportConfig = ReportConfig(),
    workers: int = 1,
) -> PipelineResult:
    classes = classify_all(accounts, txs, config, workers)
    call_graph = build_call_graph(classes, accounts=accounts, config=config)
    creation_graph = build_creation_graph(classes, txs, accounts)
    return PipelineResult(
        classifications=classes,
        call_graph=call_graph,
        creation_graph=creation_graph,
        waste=compute_waste(classes, txs, accounts, report_config),
        cdfs=compute_cdf(classes, txs),
        rejected={"accounts": accounts.report.rejected, "transactions": txs.report.rejected},
    )


def write_outputs(result: PipelineResult, out_dir: str | Path) -> Path:
    """Write summary, classifications, waste, CDFs and graphs to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "summary.json", result.summary())
    write_classifications(out / "classifications.jsonl", result.classifications)
    _dump_json(out / "waste.json", result.waste.to_json())
    cdf_dir = out / "cdf"
    cdf_dir.mkdir(exist_ok=True)
    for label, series in result.cdfs.items():
        (cdf_dir / f"{label.value}.csv").write_text(series.to_csv(), encoding="utf-8")
    export_dot(result.call_graph, out / "call_graph.dot")
    export_dot(result.creation_graph, out / "creation_graph.dot")
    export_edge_list(result.call_graph, out / "call_graph.tsv")
    export_edge_list(result.creation_graph, out / "creation_graph.tsv")
    return out


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_classifications(path: str | Path, classes: Iterable[Classification]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in classes:
            fh.write(json.dumps(c.to_json(), sort_keys=True) + "\n")


def read_classifications(path: str | Path) -> list[Classification]:
    with open(path, encoding="utf-8") as fh:
        return [Classification.from_json(json.loads(line)) for line in fh if line.strip()]


def run_pipeline(
    account_dump: str | Path,
    tx_dump: str | Path | None,
    config: DetectorConfig = DetectorConfig(),
    report_config: ReportConfig = ReportConfig(),
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> PipelineResult:
    accounts = load_accounts(account_dump)
    txs = load_transactions(tx_dump) if tx_dump else TxStore()
    result = analyse(accounts, txs, config, report_config, workers or os.cpu_count() or 1)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result
