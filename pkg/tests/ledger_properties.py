"""Random ledger operation sequences and the invariants they must keep.

Shared by the ledger unit tests and the acceptance suite. A probe subclass
hashes the state around every processed transaction, and a small reference
model predicts each outcome independently of the ledger's own bookkeeping.
"""

from __future__ import annotations

import math

import numpy as np

from energytrader.ledger import Ledger, LedgerConfig, LedgerError, Outcome, to_micro_units

ACCOUNT_POOL = ("a0", "a1", "a2", "a3", "a4")
# small balances so InsufficientFunds shows up regularly
PROPERTY_CONFIG = LedgerConfig(round_duration=4.0, extra_confirm_rounds=1, initial_balance=5_000 * 1_000_000)


class ProbedLedger(Ledger):
    """Records the state hash and registry around every processed transaction."""

    def __init__(self, config=None, clock=None, model: "ReferenceModel | None" = None):
        super().__init__(config, clock)
        self.model = model
        self.probes: list[dict] = []

    def _process(self, txn, ts):
        before = self.state_hash()
        registered = set(self._state.accounts)
        expected = self.model.process(txn) if self.model is not None else None
        outcome = super()._process(txn, ts)
        self.probes.append(
            dict(
                txn=txn, outcome=outcome, expected=expected,
                before=before, after=self.state_hash(), registered=registered,
            )
        )
        return outcome


class ReferenceModel:
    """Expected outcomes from first principles, fed the same events as the ledger."""

    def __init__(self, config: LedgerConfig):
        self.config = config
        self.balances: dict[str, int] = {}
        self.settled: set = set()

    def register(self, account_id: str) -> None:
        self.balances[account_id] = self.config.initial_balance

    def process(self, txn) -> Outcome:
        cfg = self.config
        if txn.sender not in self.balances or txn.receiver not in self.balances:
            return Outcome.ACCESS_DENIED
        hour_ok = isinstance(txn.hour, int) and 0 <= txn.hour <= 23
        price_ok = math.isfinite(txn.price) and cfg.price_min <= txn.price <= cfg.price_max
        qty_ok = math.isfinite(txn.quantity) and txn.quantity > 0
        if not (hour_ok and price_ok and qty_ok) or txn.sender == txn.receiver:
            return Outcome.VERIFICATION_FAILED
        key = (txn.hour, txn.sender, txn.receiver)
        if key in self.settled:
            return Outcome.DOUBLE_SPEND
        amount = to_micro_units(txn.price, txn.quantity, cfg.micro_unit_scale)
        if self.balances[txn.sender] < amount:
            return Outcome.INSUFFICIENT_FUNDS
        self.balances[txn.sender] -= amount
        self.balances[txn.receiver] += amount
        self.settled.add(key)
        return Outcome.CONFIRMED


def random_operations(rng: np.random.Generator, n_ops: int) -> list[tuple]:
    ops: list[tuple] = []
    for _ in range(n_ops):
        kind = rng.choice(["register", "submit", "submit", "submit", "advance", "advance"])
        if kind == "register":
            ops.append(("register", str(rng.choice(ACCOUNT_POOL))))
        elif kind == "submit":
            sender, receiver = (str(x) for x in rng.choice(ACCOUNT_POOL, 2))
            # mostly valid hours; a few out of range
            hour = int(rng.integers(0, 4)) if rng.random() < 0.9 else int(rng.choice([-1, 24]))
            price = float(rng.choice([round(float(rng.uniform(14, 66)), 2), 0.5, 1500.0, math.nan], p=[0.85, 0.05, 0.05, 0.05]))
            quantity = float(rng.choice([round(float(rng.uniform(1, 150)), 3), 0.0, -3.0], p=[0.9, 0.05, 0.05]))
            ops.append(("submit", sender, receiver, hour, price, quantity))
        else:
            ops.append(("advance",))
    return ops


def run_operations(ledger: Ledger, ops: list[tuple], model: ReferenceModel | None = None) -> list[str]:
    """Apply ``ops`` then drain the pool; returns problems seen on the way."""
    problems: list[str] = []
    for op in ops:
        if op[0] == "register":
            before = ledger.state_hash()
            try:
                ledger.register(op[1])
                if model is not None:
                    model.register(op[1])
            except LedgerError:
                if ledger.state_hash() != before:
                    problems.append(f"duplicate registration of {op[1]} changed state")
        elif op[0] == "submit":
            ledger.submit_settlement(*op[1:])
        else:
            ledger.advance_round()
    while ledger.pending_transactions:
        ledger.advance_round()
    return problems


def check_sequence(seed: int, n_ops: int = 40) -> list[str]:
    """Run one random sequence and return every invariant it broke."""
    rng = np.random.default_rng(seed)
    model = ReferenceModel(PROPERTY_CONFIG)
    ledger = ProbedLedger(PROPERTY_CONFIG, model=model)
    problems = run_operations(ledger, random_operations(rng, n_ops), model)

    confirmed_keys = set()
    for probe in ledger.probes:
        txn, outcome, expected = probe["txn"], probe["outcome"], probe["expected"]
        if outcome is not expected:
            problems.append(f"{txn.txn_id}: outcome {outcome.value}, reference says {expected.value}")
        if outcome is Outcome.CONFIRMED:
            if txn.trade_key in confirmed_keys:
                problems.append(f"{txn.txn_id}: double-spend confirmed for {txn.trade_key}")
            confirmed_keys.add(txn.trade_key)
            if txn.sender not in probe["registered"] or txn.receiver not in probe["registered"]:
                problems.append(f"{txn.txn_id}: settled with an unregistered party")
        elif probe["before"] != probe["after"]:
            problems.append(f"{txn.txn_id}: rejection {outcome.value} changed the state hash")

    if ledger.total_supply != ledger.minted_supply:
        problems.append(f"supply {ledger.total_supply} != minted {ledger.minted_supply}")
    if any(a.balance < 0 for a in ledger.accounts.values()):
        problems.append("negative balance")
    if {k: a.balance for k, a in ledger.accounts.items()} != model.balances:
        problems.append("balances differ from the reference model")

    replayed = Ledger.replay(ledger.events, PROPERTY_CONFIG)
    if replayed.state_hash() != ledger.state_hash() or replayed.transactions != ledger.transactions:
        problems.append("replay diverged")
    return problems
