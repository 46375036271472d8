"""
Settling trades on the ledger
=============================

Register two parties, submit hourly settlements, replay a duplicate and
watch confirmation latency and throughput come out of the round clock.
"""

# %%
# Setup
# -----
# Four-second rounds and one extra confirmation round, so every accepted
# transaction confirms one round after it first becomes valid.

from energytrader.ledger import Ledger, LedgerConfig, transaction_latency

ledger = Ledger(LedgerConfig(round_duration=4.0, extra_confirm_rounds=1))
ledger.register("producer")
ledger.register("consumer")
print("minted supply:", ledger.minted_supply)

# %%
# A day of trades
# ---------------

ids = [ledger.submit_settlement("consumer", "producer", hour, 40.0 + hour, 10.0) for hour in range(24)]
dup = ledger.submit_settlement("consumer", "producer", 7, 47.0, 10.0)
stranger = ledger.submit_settlement("nobody", "producer", 3, 40.0, 1.0)
while ledger.pending_transactions:
    ledger.advance_round()

for txn_id in (ids[0], ids[7], dup, stranger):
    txn = ledger.transaction(txn_id)
    print(txn_id, txn.outcome.value, transaction_latency(txn) if txn.confirmed else "-")

# %%
# Report
# ------

report = ledger.report()
for name, value in report.metrics():
    print(f"{name:>24}: {value}")

# %%
# Replay
# ------
# The event log rebuilds an identical ledger.

copy = Ledger.replay(ledger.events, ledger.config)
print(copy.state_hash() == ledger.state_hash())
