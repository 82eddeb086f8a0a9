"""Populate account and transaction dumps from an Ethereum JSON-RPC node.

JSON-RPC cannot enumerate accounts, so callers supply the address list.

Cache layout (when ``cache_dir`` is set)::

    <cache_dir>/block_tag.json            pinned block tag of the crawl
    <cache_dir>/<method>/<sha256>.json    one successful result per request

The hash covers ``[method, params, block_tag]``.  Re-running a crawl against
the same cache directory reuses the pinned tag and every cached response,
so an interrupted crawl resumes where it stopped.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import requests

from .state import AccountState, TxRecord, format_address, parse_address, parse_hex, write_accounts
from .symstack import CALL_OPS

log = logging.getLogger(__name__)

ENV_URL = "ERASABLE_RPC_URL"
METHOD_NOT_FOUND = -32601


class RpcError(Exception):
    pass


class TransportError(RpcError):
    pass


class MalformedResponse(RpcError):
    pass


class CapabilityError(RpcError):
    pass


class NotFoundError(RpcError):
    pass


@dataclass(frozen=True)
class RpcEndpoint:
    url: str
    request_timeout: float = 10.0
    max_concurrent_requests: int = 8
    max_attempts: int = 3
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @classmethod
    def from_env(cls, default: str | None = None, **kw) -> "RpcEndpoint":
        url = os.environ.get(ENV_URL) or default
        if not url:
            raise ValueError(f"no RPC endpoint given and ${ENV_URL} is unset")
        return cls(url, **kw)


@dataclass
class TraceSummary:
    tx_hash: str
    steps: list[tuple[int, str]] = field(default_factory=list)
    calls: list[tuple[str, int, int]] = field(default_factory=list)  # (op, target, pc)
    failed: bool = False

    def called(self, address: int, opcode: str | None = None) -> bool:
        return any(t == address and (opcode is None or op == opcode) for op, t, _ in self.calls)


def _excerpt(raw: str | bytes, n: int = 200) -> str:
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", "replace")
    return raw if len(raw) <= n else raw[:n] + "..."


class RpcClient:
    def __init__(
        self,
        endpoint: RpcEndpoint,
        cache_dir: str | Path | None = None,
        block_tag: str | None = None,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(endpoint.max_concurrent_requests)
        self._ids = itertools.count(1)
        self._block_tag = block_tag

    # -- transport ----------------------------------------------------------

    def _post(self, method: str, params: list):
        payload = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params}
        last: Exception | None = None
        for attempt in range(self.endpoint.max_attempts):
            if attempt:
                time.sleep(self.endpoint.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self.session.post(
                        self.endpoint.url, json=payload, timeout=self.endpoint.request_timeout
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                log.debug("%s attempt %d failed: %s", method, attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                continue
            try:
                body = resp.json()
            except ValueError:
                raise MalformedResponse(f"{method}: non-JSON response: {_excerpt(resp.content)}")
            if not isinstance(body, dict) or ("result" not in body and "error" not in body):
                raise MalformedResponse(f"{method}: unexpected payload: {_excerpt(resp.text)}")
            if body.get("error"):
                err = body["error"]
                code = err.get("code") if isinstance(err, dict) else None
                msg = err.get("message", "") if isinstance(err, dict) else str(err)
                if code == METHOD_NOT_FOUND:
                    raise CapabilityError(f"endpoint does not support {method}: {msg}")
                if "not found" in msg.lower():
                    raise NotFoundError(f"{method}: {msg}")
                raise RpcError(f"{method}: {code} {msg}")
            return body["result"]
        raise TransportError(
            f"{method} failed after {self.endpoint.max_attempts} attempts: {last}"
        ) from last

    def _cache_path(self, method: str, params: list) -> Path | None:
        if self.cache_dir is None:
            return None
        key = json.dumps([method, params, self._block_tag], sort_keys=True)
        digest = hashlib.sha256(key.encode()).hexdigest()
        return self.cache_dir / method / f"{digest}.json"

    def call(self, method: str, params: list, use_cache: bool = True):
        path = self._cache_path(method, params) if use_cache else None
        if path is not None and path.exists():
            return json.loads(path.read_text())
        result = self._post(method, params)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
            tmp.write_text(json.dumps(result))
            tmp.replace(path)
        return result

    # -- snapshot -----------------------------------------------------------

    @property
    def block_tag(self) -> str:
        if self._block_tag is None:
            self._block_tag = self._pin_block()
        return self._block_tag

    def _pin_block(self) -> str:
        marker = self.cache_dir / "block_tag.json" if self.cache_dir else None
        if marker is not None and marker.exists():
            return json.loads(marker.read_text())["block_tag"]
        tag = self._post("eth_blockNumber", [])
        if not isinstance(tag, str) or not tag.startswith("0x"):
            raise MalformedResponse(f"eth_blockNumber: {_excerpt(repr(tag))}")
        if marker is not None:
            marker.parent.mkdir(parents=True, exist_ok=True)
            marker.write_text(json.dumps({"block_tag": tag}))
        return tag

    # -- queries ------------------------------------------------------------

    def fetch_account(self, address: int | str) -> AccountState:
        addr = parse_address(address)
        hexaddr = format_address(addr)
        tag = self.block_tag
        balance = self.call("eth_getBalance", [hexaddr, tag])
        nonce = self.call("eth_getTransactionCount", [hexaddr, tag])
        code = self.call("eth_getCode", [hexaddr, tag])
        try:
            return AccountState(
                address=addr,
                nonce=int(nonce, 16),
                balance=int(balance, 16),
                code=parse_hex(code),
            )
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(
                f"account {hexaddr}: {exc}; payload {_excerpt(repr((balance, nonce, code)))}"
            ) from exc

    def fetch_accounts(
        self, addresses: Iterable[int | str], out_path: str | Path | None = None
    ) -> list[AccountState]:
        """Fetch many accounts concurrently; results are written by one thread."""
        addrs = sorted({parse_address(a) for a in addresses})
        self.block_tag  # pin before fanning out
        results: dict[int, AccountState] = {}
        with ThreadPoolExecutor(self.endpoint.max_concurrent_requests) as pool:
            futures = {pool.submit(self.fetch_account, a): a for a in addrs}
            for fut in as_completed(futures):
                results[futures[fut]] = fut.result()
        accounts = [results[a] for a in addrs]
        if out_path is not None:
            write_accounts(out_path, accounts)
        return accounts

    def fetch_transaction(self, tx_hash: str) -> TxRecord:
        """External transaction record from tx, receipt and block queries."""
        tx = self.call("eth_getTransactionByHash", [tx_hash])
        if tx is None:
            raise NotFoundError(f"transaction {tx_hash} not found")
        receipt = self.call("eth_getTransactionReceipt", [tx_hash])
        block = self.call("eth_getBlockByNumber", [tx["blockNumber"], False])
        try:
            status = int(receipt.get("status", "0x1"), 16)
            return TxRecord(
                hash=parse_hex(tx["hash"], exact=32),
                kind="external",
                sender=parse_address(tx["from"]),
                to=None if tx.get("to") is None else parse_address(tx["to"]),
                created_address=None
                if receipt.get("contractAddress") is None
                else parse_address(receipt["contractAddress"]),
                value=int(tx["value"], 16),
                gas_used=int(receipt["gasUsed"], 16),
                gas_price=int(receipt.get("effectiveGasPrice") or tx["gasPrice"], 16),
                input=parse_hex(tx.get("input")),
                error=None if status else "Reverted Error",
                timestamp=int(block["timestamp"], 16),
                block_number=int(tx["blockNumber"], 16),
                index=int(tx["transactionIndex"], 16),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedResponse(f"transaction {tx_hash}: {exc}") from exc

    def fetch_trace(self, tx_hash: str) -> TraceSummary:
        result = self.call(
            "debug_traceTransaction",
            [tx_hash, {"disableStorage": True, "disableMemory": True}],
        )
        if result is None:
            raise NotFoundError(f"transaction {tx_hash} not found")
        try:
            return summarize_trace(tx_hash, result)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"trace {tx_hash}: {exc}; {_excerpt(json.dumps(result))}") from exc


def summarize_trace(tx_hash: str, result: dict) -> TraceSummary:
    """Reduce a struct-logger trace to executed opcodes and call targets."""
    summary = TraceSummary(tx_hash, failed=bool(result.get("failed")))
    for log_entry in result["structLogs"]:
        op = log_entry["op"]
        pc = int(log_entry["pc"])
        summary.steps.append((pc, op))
        if op in CALL_OPS:
            stack = log_entry["stack"]  # top of stack is the last entry
            target = int(stack[-2], 16) & ((1 << 160) - 1)
            summary.calls.append((op, target, pc))
    return summary
