"""End to end on a synthetic state dump with known answers.

Writes the dumps, runs ``erasable classify`` on them and compares the labels
with what was planted. Output lands in ./demo_out/pipeline unless a directory
is given as the first argument.

Run: python demos/03_corpus_pipeline.py [OUT_DIR]
"""

import json
import sys
from collections import Counter
from pathlib import Path

from erasable.cli import main
from erasable.fixtures import planted_corpus
from erasable.report import read_classifications
from erasable.state import write_accounts, write_transactions

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/pipeline")
out.mkdir(parents=True, exist_ok=True)

corpus = planted_corpus(total=1000, seed=5)
write_accounts(out / "accounts.jsonl", corpus.accounts)
write_transactions(out / "transactions.jsonl", corpus.txs)
print(f"{len(corpus.accounts)} accounts, {len(corpus.txs)} transaction records")

code = main(["classify", "--accounts", str(out / "accounts.jsonl"),
             "--txs", str(out / "transactions.jsonl"), "--out", str(out), "--workers", "2"])
assert code == 0

got = {c.address: c.primary for c in read_classifications(out / "classifications.jsonl")}
confusion = Counter((corpus.truth[a], got[a]) for a in corpus.truth)
wrong = {k: n for k, n in confusion.items() if k[0] != k[1]}
print("misclassified:", wrong or "none")

waste = json.loads((out / "waste.json").read_text())
print("total USD:", waste["total"]["usd_value"])
print("files:", ", ".join(sorted(p.name for p in out.iterdir())))
