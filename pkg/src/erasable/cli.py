"""Command-line entry point: ``erasable classify|fetch|graph|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from decimal import Decimal
from pathlib import Path

from .detectors import DetectorConfig
from .graphs import build_call_graph, build_creation_graph, export_dot, export_edge_list
from .isa import FORKS
from .report import (
    ReportConfig,
    compute_cdf,
    compute_waste,
    read_classifications,
    run_pipeline,
)
from .rpc import ENV_URL, RpcClient, RpcEndpoint, RpcError
from .state import IngestError, TxStore, load_accounts, load_transactions, parse_address, write_transactions

log = logging.getLogger("erasable")


def _read_addresses(path: str) -> list[int]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(parse_address(line))
    return out


def load_configs(args) -> tuple[DetectorConfig, ReportConfig]:
    raw = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    det = DetectorConfig.from_dict(raw.get("detectors", raw))
    rep = ReportConfig.from_dict(raw.get("report", raw))

    budget = det.exec_budget
    if getattr(args, "max_paths", None):
        budget = replace(budget, max_paths=args.max_paths)
    if getattr(args, "max_steps", None):
        budget = replace(budget, max_steps=args.max_steps)
    if getattr(args, "time_limit", None):
        budget = replace(budget, time_limit=args.time_limit)
    det = replace(det, exec_budget=budget)
    if getattr(args, "fork", None):
        det = replace(det, fork=args.fork)
    if getattr(args, "removed", None):
        extra = set()
        for item in args.removed:
            extra.update(_read_addresses(item) if os.path.exists(item) else [parse_address(item)])
        det = replace(det, removed_contracts=det.removed_contracts | extra)
    if getattr(args, "attack_timestamp", None) is not None:
        rep = replace(rep, attack_timestamp=args.attack_timestamp)
    if getattr(args, "usd_price", None) is not None:
        rep = replace(rep, usd_per_eth=Decimal(args.usd_price))
    return det, rep


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--max-paths", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--time-limit", type=float, help="seconds per contract")
    p.add_argument("--fork", choices=FORKS)
    p.add_argument("--removed", action="append", metavar="ADDR|FILE",
                   help="extra removed contract address, or a file of addresses")
    p.add_argument("--attack-timestamp", type=int)
    p.add_argument("--usd-price", help="USD per ETH")


def cmd_classify(args) -> int:
    det, rep = load_configs(args)
    result = run_pipeline(args.accounts, args.txs, det, rep, args.out, args.workers)
    counts = result.summary()
    print(json.dumps({"erasable": counts["erasable"], "per_label": counts["per_label"]}, indent=2))
    return 0


def cmd_fetch(args) -> int:
    url = args.rpc_url or os.environ.get(ENV_URL)
    if not url:
        print(f"error: --rpc-url or ${ENV_URL} required", file=sys.stderr)
        return 2
    endpoint = RpcEndpoint(url, request_timeout=args.timeout,
                           max_concurrent_requests=args.concurrency,
                           max_attempts=args.retries)
    client = RpcClient(endpoint, cache_dir=args.cache_dir)
    try:
        accounts = client.fetch_accounts(_read_addresses(args.addresses), args.out)
        print(f"wrote {len(accounts)} accounts at block {client.block_tag} to {args.out}")
        if args.tx_hashes:
            hashes = [h.strip() for h in Path(args.tx_hashes).read_text().split() if h.strip()]
            txs = [client.fetch_transaction(h) for h in hashes]
            write_transactions(args.tx_out, txs)
            print(f"wrote {len(txs)} transactions to {args.tx_out}")
    except RpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_graph(args) -> int:
    det, _ = load_configs(args)
    classes = read_classifications(args.classifications)
    accounts = load_accounts(args.accounts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    call = build_call_graph(classes, accounts=accounts, config=det)
    export_dot(call, out / "call_graph.dot")
    export_edge_list(call, out / "call_graph.tsv")
    if args.txs:
        creation = build_creation_graph(classes, load_transactions(args.txs), accounts)
        export_dot(creation, out / "creation_graph.dot")
        export_edge_list(creation, out / "creation_graph.tsv")
    print(f"graphs written to {out}")
    return 0


def cmd_report(args) -> int:
    _, rep = load_configs(args)
    classes = read_classifications(args.classifications)
    txs = load_transactions(args.txs) if args.txs else TxStore()
    accounts = load_accounts(args.accounts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    waste = compute_waste(classes, txs, accounts, rep)
    (out / "waste.json").write_text(json.dumps(waste.to_json(), indent=2, sort_keys=True) + "\n")
    cdf_dir = out / "cdf"
    cdf_dir.mkdir(exist_ok=True)
    for label, series in compute_cdf(classes, txs).items():
        (cdf_dir / f"{label.value}.csv").write_text(series.to_csv())
    total = waste.total
    print(f"gas wasted {total.gas_wasted}, wei wasted {total.wasted_wei}, "
          f"USD {total.usd(waste.usd_per_eth)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erasable", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify every account in a dump")
    p.add_argument("--accounts", required=True, help="account dump (JSON lines)")
    p.add_argument("--txs", help="transaction dump (JSON lines)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("fetch", help="build dumps from a JSON-RPC endpoint")
    p.add_argument("--addresses", required=True, help="file with one address per line")
    p.add_argument("--out", required=True, help="account dump to write")
    p.add_argument("--rpc-url", help=f"endpoint URL (default: ${ENV_URL})")
    p.add_argument("--cache-dir", help="response cache; reuse it to resume")
    p.add_argument("--concurrency", type=int, default=8)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--tx-hashes", help="file of external transaction hashes")
    p.add_argument("--tx-out", default="transactions.jsonl")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("graph", help="call and creation graphs as DOT")
    p.add_argument("--classifications", required=True)
    p.add_argument("--accounts", required=True)
    p.add_argument("--txs")
    p.add_argument("--out", required=True)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("report", help="waste report and creation-time CDFs")
    p.add_argument("--classifications", required=True)
    p.add_argument("--accounts", required=True)
    p.add_argument("--txs")
    p.add_argument("--out", required=True)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except IngestError as exc:
        print(f"ingestion failed: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
