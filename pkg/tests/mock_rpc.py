"""In-process JSON-RPC server with canned answers and fault injection."""

from __future__ import annotations

import json
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockRpc:
    def __init__(self, block_number: str = "0x10", latency: float = 0.0):
        self.block_number = block_number
        self.latency = latency
        self.accounts: dict[str, dict] = {}  # lowercase hex address -> balance/nonce/code
        self.txs: dict[str, dict] = {}
        self.receipts: dict[str, dict] = {}
        self.blocks: dict[str, dict] = {}
        self.traces: dict[str, dict] = {}
        self.unsupported: set[str] = set()
        self.stall: Counter = Counter()  # method -> number of requests to stall
        self.stall_seconds = 1.0
        self.fail_after: int | None = None  # answer HTTP 500 once this many requests were served
        self.raw_reply: str | None = None
        self.calls: Counter = Counter()
        self.tags_seen: set[str] = set()
        self.in_flight = 0
        self.max_in_flight = 0
        self.served = 0
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()

    def add_account(self, address: int, balance: int, nonce: int, code: bytes) -> None:
        self.accounts[f"0x{address:040x}"] = {
            "balance": hex(balance), "nonce": hex(nonce), "code": "0x" + code.hex(),
        }

    # -- dispatch -------------------------------------------------------------

    def answer(self, method: str, params: list):
        if method in self.unsupported:
            return None, {"code": -32601, "message": "the method does not exist/is not available"}
        if method == "eth_blockNumber":
            return self.block_number, None
        if method in ("eth_getBalance", "eth_getTransactionCount", "eth_getCode"):
            addr, tag = params
            self.tags_seen.add(tag)
            acc = self.accounts.get(addr.lower(), {"balance": "0x0", "nonce": "0x0", "code": "0x"})
            field = {"eth_getBalance": "balance", "eth_getTransactionCount": "nonce", "eth_getCode": "code"}
            return acc[field[method]], None
        if method == "eth_getTransactionByHash":
            return self.txs.get(params[0]), None
        if method == "eth_getTransactionReceipt":
            return self.receipts.get(params[0]), None
        if method == "eth_getBlockByNumber":
            return self.blocks.get(params[0]), None
        if method == "debug_traceTransaction":
            if params[0] not in self.traces:
                return None, {"code": -32000, "message": f"transaction {params[0]} not found"}
            return self.traces[params[0]], None
        return None, {"code": -32601, "message": "unknown"}

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                method = body["method"]
                with mock._lock:
                    mock.in_flight += 1
                    mock.max_in_flight = max(mock.max_in_flight, mock.in_flight)
                    mock.calls[method] += 1
                    mock.served += 1
                    stall = mock.stall[method] > 0
                    if stall:
                        mock.stall[method] -= 1
                    down = mock.fail_after is not None and mock.served > mock.fail_after
                try:
                    if stall:
                        time.sleep(mock.stall_seconds)
                    elif mock.latency:
                        time.sleep(mock.latency)
                    if down:
                        self.send_response(500)
                        self.end_headers()
                        return
                    if mock.raw_reply is not None:
                        payload = mock.raw_reply.encode()
                    else:
                        result, error = mock.answer(method, body.get("params", []))
                        reply = {"jsonrpc": "2.0", "id": body["id"]}
                        if error:
                            reply["error"] = error
                        else:
                            reply["result"] = result
                        payload = json.dumps(reply).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    with mock._lock:
                        mock.in_flight -= 1

        return Handler
