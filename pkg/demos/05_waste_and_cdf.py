"""Waste accounting and creation-time CDFs on a tiny, hand-checkable history.

Run: python demos/05_waste_and_cdf.py
"""

from erasable import AccountState, classify
from erasable.fixtures import call_tx, creation_tx, delegating_wallet_code, mc_s_code
from erasable.report import ReportConfig, compute_cdf, compute_waste
from erasable.state import AccountStore, TxStore

USER, STUB, WALLET = 0xA11CE, 0x5100, 0x3A11E7
ATTACK = 1_000  # pretend the library was removed at t=1000
ETH = 10**18

accounts = AccountStore([
    AccountState(USER, 5, 10 * ETH, b""),
    AccountState(STUB, 1, 0, mc_s_code()),
    AccountState(WALLET, 1, 2 * ETH, delegating_wallet_code()),
])
txs = TxStore()
txs.add(creation_tx(USER, STUB, ts=10, gas_used=60_000, gas_price=20))
txs.add(call_tx(USER, STUB, ts=20, gas_used=21_000, gas_price=20, value=300))
txs.add(call_tx(USER, STUB, ts=30, gas_used=21_000, gas_price=20, value=50, error="Reverted Error"))
txs.add(creation_tx(USER, WALLET, ts=500, gas_used=400_000, gas_price=1))  # before removal: excluded
txs.add(call_tx(USER, WALLET, ts=1_500, gas_used=30_000, gas_price=10, nonce=1))
txs.finalize()

classes = [classify(s, txs.history(s.address)) for s in accounts]
report = compute_waste(classes, txs, accounts, ReportConfig(attack_timestamp=ATTACK))

for label, w in report.per_label.items():
    if w.accounts:
        print(f"{label.value:16s} gas={w.gas_wasted:>7} cost={w.gas_cost_wei:>9} wei "
              f"locked={w.eth_locked} excluded_gas={w.gas_excluded} usd={w.usd(report.usd_per_eth)}")
print("notes:", *report.exclusions, sep="\n  ")

# Each account is dated by its oldest transaction; the CDF counts them over time.
for label, series in compute_cdf(classes, txs).items():
    if series.points:
        print(f"{label.value}: {series.points}")
