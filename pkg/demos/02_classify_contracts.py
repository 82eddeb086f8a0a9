"""Run every contract rule over hand-built bytecodes and a few compiled ones.

Run: python demos/02_classify_contracts.py
"""

from erasable import AccountState, classify
from erasable.fixtures import rule_examples, reference_contracts
from erasable.isa import disassemble

ADDR = 0xC0FFEE

for name, code in rule_examples().items():
    c = classify(AccountState(ADDR, nonce=1, balance=0, code=code))
    labels = ", ".join(l.value for l in c.labels) or "-"
    print(f"{name:20s} primary={c.primary.value if c.primary else None:18s} all=[{labels}]")
    if c.primary is not None:
        print(f"{'':20s} evidence: {c.evidence[c.primary]}")

# The wallet stub forwards calls to a library that no longer has code.
print("\nwallet stub, first lines:")
print("\n".join(disassemble(rule_examples()["parity_wallet"]).splitlines()[:8]))

print("\ncompiled contracts (expected clean):")
for ref in reference_contracts():
    c = classify(AccountState(ADDR, 1, 0, ref["code"]))
    print(f"  {ref['name']:12s} erasable={c.is_erasable} notes={c.notes}")
