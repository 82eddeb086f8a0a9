"""Build call graphs for the two DoS contract shapes and render DOT.

Run: python demos/04_graphs.py [OUT_DIR]
"""

import sys
from pathlib import Path

from erasable import classify
from erasable.fixtures import many_to_one_fixture, one_to_many_fixture
from erasable.graphs import build_call_graph, export_dot, shapes, to_dot
from erasable.state import AccountStore

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/graphs")
out.mkdir(parents=True, exist_ok=True)


def graph_of(states):
    store = AccountStore()
    for s in states:
        store.add(s)
    return build_call_graph([classify(s) for s in states], accounts=store)


# Twenty wallets all forwarding to one removed library.
wallets = graph_of(many_to_one_fixture(20))
# One contract probing two hundred addresses with EXTCODESIZE.
attacker, _ = one_to_many_fixture(200)
spray = graph_of([attacker])

merged = wallets.merge(spray)
for s in shapes(merged):
    print(f"{s.kind:10s} centre={s.address:#042x} degree={s.degree}")

print(f"\nmerged graph: {len(merged.nodes)} nodes, {len(merged.edges)} edges")
print("\nwallet graph DOT (head):")
print("\n".join(to_dot(wallets).splitlines()[:6]))

for name, g in [("many_to_one", wallets), ("one_to_many", spray)]:
    path = export_dot(g, out / f"{name}.dot")
    print(f"wrote {path}  (render with: dot -Tsvg {path} -o {path.with_suffix('.svg')})")
