"""Fetch account states over JSON-RPC, with a resumable on-disk cache.

Uses $ERASABLE_RPC_URL when set. Otherwise it starts the in-process mock node
from the test suite, so the demo runs offline.

Run: python demos/06_fetch_over_rpc.py [ADDRESS ...]
"""

import os
import sys
import tempfile
from contextlib import nullcontext
from pathlib import Path

from erasable import classify
from erasable.fixtures import PARITY_LIBRARY, delegating_wallet_code, mc_s_code
from erasable.rpc import ENV_URL, RpcClient, RpcEndpoint

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

addresses = [int(a, 16) for a in sys.argv[1:]] or [PARITY_LIBRARY, 0xBEEF, 0xC0DE]

if os.environ.get(ENV_URL):
    node = nullcontext(None)
else:
    from mock_rpc import MockRpc

    node = MockRpc(latency=0.01)
    node.add_account(0xBEEF, 10**17, 1, delegating_wallet_code())
    node.add_account(0xC0DE, 0, 1, mc_s_code())

with node as mock, tempfile.TemporaryDirectory() as cache:
    endpoint = RpcEndpoint.from_env(mock.url if mock else None, max_concurrent_requests=4)
    client = RpcClient(endpoint, cache_dir=cache)
    states = client.fetch_accounts(addresses)
    print(f"pinned block {client.block_tag}; cache in {cache}")
    for s in states:
        c = classify(s)
        print(f"  {s.address:#042x} nonce={s.nonce} balance={s.balance} "
              f"code={len(s.code)}B -> {c.primary.value if c.primary else 'not erasable'}")

    # A second client on the same cache answers from disk, pinned to the same block.
    again = RpcClient(endpoint, cache_dir=cache).fetch_accounts(addresses)
    assert again == states
    if mock:
        print(f"requests served: {sum(mock.calls.values())}, peak concurrency {mock.max_in_flight}")
