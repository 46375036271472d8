"""A round-based settlement ledger simulated in-process.

Participants register, submit hourly trade settlements, and the ledger
confirms them when rounds are produced. Confirmation runs the access check,
trade verification, token settlement and the global-state write as one atomic
step: a rejected transaction leaves balances and global state untouched.

Timing follows the round clock. Round ``r`` is produced at
``r * round_duration`` seconds. A transaction submitted during round ``c``
is first valid in round ``c + 1`` and is confirmed ``extra_confirm_rounds``
rounds after that, so its latency is ``extra_confirm_rounds * round_duration``.

Every mutating call is appended to an event log; :meth:`Ledger.replay`
rebuilds an identical ledger from it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import numbers
import threading
import time
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

REPORT_FILE = "ledger_report.csv"
GLOBAL_STATE_FILE = "global_state.csv"
GLOBAL_STATE_HEADER = ("hour", "price_usd_per_mwh", "timestamp_s", "txn_id")


class LedgerError(RuntimeError):
    """Misuse of the ledger API (not a transaction rejection)."""


class Outcome(str, Enum):
    CONFIRMED = "Confirmed"
    ACCESS_DENIED = "AccessDenied"
    VERIFICATION_FAILED = "VerificationFailed"
    DOUBLE_SPEND = "DoubleSpend"
    INSUFFICIENT_FUNDS = "InsufficientFunds"


REJECTIONS = tuple(o for o in Outcome if o is not Outcome.CONFIRMED)


@dataclass(frozen=True)
class LedgerConfig:
    """Ledger settings.

    Attributes:
        round_duration: Seconds between produced rounds.
        extra_confirm_rounds: Rounds a transaction waits past its first valid
            round before it is processed.
        initial_balance: Micro-units credited to every newly registered account.
        price_min: Lowest settlement price accepted, $/MWh.
        price_max: Highest settlement price accepted, $/MWh.
        micro_unit_scale: Micro-units per dollar.
        mode: ``"simulated"`` (rounds produced by :meth:`Ledger.advance_round`)
            or ``"wall_clock"`` (rounds produced by elapsed clock time on
            :meth:`Ledger.poll`).
    """

    round_duration: float = 4.0
    extra_confirm_rounds: int = 1
    initial_balance: int = 10_000_000 * 1_000_000
    price_min: float = 1.0
    price_max: float = 1000.0
    micro_unit_scale: int = 1_000_000
    mode: str = "simulated"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.round_duration) and self.round_duration > 0):
            raise ValueError("round_duration must be a positive number of seconds")
        if self.extra_confirm_rounds < 0:
            raise ValueError("extra_confirm_rounds must be >= 0")
        if self.initial_balance < 0:
            raise ValueError("initial_balance must be >= 0")
        if not 0 < self.price_min <= self.price_max:
            raise ValueError("price band must satisfy 0 < price_min <= price_max")
        if self.micro_unit_scale < 1:
            raise ValueError("micro_unit_scale must be >= 1")
        if self.mode not in ("simulated", "wall_clock"):
            raise ValueError("mode must be 'simulated' or 'wall_clock'")


@dataclass
class Account:
    account_id: str
    balance: int
    registered: bool = True


@dataclass(frozen=True)
class LedgerTransaction:
    txn_id: str
    sender: str
    receiver: str
    hour: int
    price: float
    quantity: float
    first_valid_round: int
    submitted_at: float
    first_valid_at: float
    confirmed_round: int | None = None
    confirmed_at: float | None = None
    outcome: Outcome | None = None

    @property
    def trade_key(self) -> tuple[int, str, str]:
        return (self.hour, self.sender, self.receiver)

    @property
    def pending(self) -> bool:
        return self.outcome is None

    @property
    def confirmed(self) -> bool:
        return self.outcome is Outcome.CONFIRMED


@dataclass(frozen=True)
class GlobalStateEntry:
    key: str
    hour: int
    price: float
    timestamp: float
    writer_txn: str


def transaction_latency(txn: LedgerTransaction) -> float:
    """Seconds from the first valid round's timestamp to confirmation.

    Raises:
        LedgerError: the transaction is still pending or was rejected.
    """
    if not txn.confirmed or txn.confirmed_at is None:
        raise LedgerError(f"transaction {txn.txn_id} is not confirmed")
    return txn.confirmed_at - txn.first_valid_at


def throughput(txns: Iterable[LedgerTransaction]) -> float:
    """Confirmed transactions divided by their mean latency, per second.

    An empty set gives 0. A non-empty set whose mean latency is zero gives
    ``inf``.
    """
    lat = [transaction_latency(t) for t in txns]
    if not lat:
        return 0.0
    mean = math.fsum(lat) / len(lat)
    return math.inf if mean == 0 else len(lat) / mean


def to_micro_units(price: float, quantity: float, scale: int) -> int:
    """``price * quantity * scale`` rounded half-to-even, computed in decimal."""
    exact = Decimal(repr(float(price))) * Decimal(repr(float(quantity))) * scale
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class LedgerReport:
    """Counts, timing metrics and the global-state price log."""

    submitted: int
    confirmed: int
    pending: int
    rejected: dict[str, int]
    mean_latency_s: float
    throughput_tps: float
    global_state: tuple[GlobalStateEntry, ...] = ()

    @classmethod
    def empty(cls) -> "LedgerReport":
        return cls(0, 0, 0, {o.value: 0 for o in REJECTIONS}, 0.0, 0.0, ())

    def metrics(self) -> list[tuple[str, object]]:
        rows: list[tuple[str, object]] = [
            ("submitted", self.submitted),
            ("confirmed", self.confirmed),
            ("pending", self.pending),
        ]
        rows += [(f"rejected_{name}", n) for name, n in self.rejected.items()]
        rows += [
            ("mean_latency_s", self.mean_latency_s),
            ("throughput_tps", self.throughput_tps),
            ("global_state_entries", len(self.global_state)),
        ]
        return rows

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric", "value"))
        for name, value in self.metrics():
            w.writerow((name, repr(value) if isinstance(value, float) else value))
        return buf.getvalue()

    def global_state_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GLOBAL_STATE_HEADER)
        for e in self.global_state:
            w.writerow((e.hour, repr(e.price), repr(e.timestamp), e.writer_txn))
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / REPORT_FILE, out / GLOBAL_STATE_FILE]
        paths[0].write_text(self.report_csv(), encoding="utf-8")
        paths[1].write_text(self.global_state_csv(), encoding="utf-8")
        return paths


@dataclass
class _State:
    accounts: dict[str, Account] = field(default_factory=dict)
    settled: set[tuple[int, str, str]] = field(default_factory=set)
    global_state: list[GlobalStateEntry] = field(default_factory=list)
    minted: int = 0


class Ledger:
    """Serialized ledger state machine.

    Submissions may come from several threads; round production is guarded by
    the same lock, so confirmation always sees a consistent pool.
    """

    def __init__(self, config: LedgerConfig | None = None, clock: Callable[[], float] | None = None):
        self.config = config or LedgerConfig()
        self._clock = clock or time.monotonic
        self._t0 = self._clock() if self.config.mode == "wall_clock" else 0.0
        self._lock = threading.RLock()
        self._state = _State()
        self._txns: dict[str, LedgerTransaction] = {}
        self._pool: list[str] = []
        self._round = 0
        self._next_id = 0
        self._events: list[tuple] = []

    # -- clock ------------------------------------------------------------

    @property
    def current_round(self) -> int:
        return self._round

    def round_timestamp(self, round_no: int) -> float:
        return round_no * self.config.round_duration

    def now(self) -> float:
        if self.config.mode == "wall_clock":
            return self._clock() - self._t0
        return self.round_timestamp(self._round)

    # -- registry ---------------------------------------------------------

    def register(self, account_id: str) -> Account:
        """Create a registered account holding the configured initial balance.

        Raises:
            LedgerError: the id is already registered.
        """
        account_id = str(account_id)
        with self._lock:
            if account_id in self._state.accounts:
                raise LedgerError(f"account {account_id!r} is already registered")
            acct = Account(account_id, self.config.initial_balance)
            self._state.accounts[account_id] = acct
            self._state.minted += acct.balance
            self._events.append(("register", account_id))
            return replace(acct)

    def account(self, account_id: str) -> Account:
        return replace(self._state.accounts[account_id])

    def balance(self, account_id: str) -> int:
        return self._state.accounts[account_id].balance

    @property
    def accounts(self) -> dict[str, Account]:
        return {k: replace(v) for k, v in self._state.accounts.items()}

    @property
    def total_supply(self) -> int:
        return sum(a.balance for a in self._state.accounts.values())

    @property
    def minted_supply(self) -> int:
        return self._state.minted

    # -- submission -------------------------------------------------------

    def submit_settlement(self, sender: str, receiver: str, hour: int, price: float, quantity: float) -> str:
        """Queue a settlement; all checks happen when its round is produced."""
        with self._lock:
            txn_id = f"tx{self._next_id:08d}"
            self._next_id += 1
            first_valid = self._round + 1
            self._txns[txn_id] = LedgerTransaction(
                txn_id=txn_id,
                sender=str(sender),
                receiver=str(receiver),
                hour=hour,
                price=price,
                quantity=quantity,
                first_valid_round=first_valid,
                submitted_at=self.now(),
                first_valid_at=self.round_timestamp(first_valid),
            )
            self._pool.append(txn_id)
            self._events.append(("submit", str(sender), str(receiver), hour, price, quantity))
            return txn_id

    def submit_batch(self, trades: Iterable[tuple[str, str, int, float, float]]) -> list[str]:
        """Submit several ``(sender, receiver, hour, price, quantity)`` trades in one round."""
        with self._lock:
            return [self.submit_settlement(*t) for t in trades]

    # -- rounds -----------------------------------------------------------

    def advance_round(self) -> list[tuple[str, Outcome]]:
        """Produce the next round and process every transaction due in it.

        Raises:
            LedgerError: the ledger runs on the wall clock.
        """
        if self.config.mode != "simulated":
            raise LedgerError("advance_round is only available in simulated mode; use poll()")
        with self._lock:
            self._events.append(("advance",))
            return self._produce_round()

    def poll(self) -> list[tuple[str, Outcome]]:
        """Wall-clock mode: produce every round whose timestamp has passed."""
        if self.config.mode != "wall_clock":
            raise LedgerError("poll is only available in wall_clock mode")
        with self._lock:
            due = int(math.floor(self.now() / self.config.round_duration))
            results = []
            while self._round < due:
                results += self._produce_round()
            return results

    def _produce_round(self) -> list[tuple[str, Outcome]]:
        self._round += 1
        ts = self.round_timestamp(self._round)
        results = []
        still_pending = []
        for txn_id in self._pool:
            txn = self._txns[txn_id]
            if txn.first_valid_round + self.config.extra_confirm_rounds > self._round:
                still_pending.append(txn_id)
                continue
            outcome = self._process(txn, ts)
            self._txns[txn_id] = replace(txn, confirmed_round=self._round, confirmed_at=ts, outcome=outcome)
            results.append((txn_id, outcome))
        self._pool = still_pending
        return results

    def _check(self, txn: LedgerTransaction) -> Outcome | None:
        accounts = self._state.accounts
        if txn.sender not in accounts or txn.receiver not in accounts:
            return Outcome.ACCESS_DENIED
        cfg = self.config
        valid = (
            isinstance(txn.hour, numbers.Integral)
            and not isinstance(txn.hour, bool)
            and 0 <= txn.hour < 24
            and txn.sender != txn.receiver
            and math.isfinite(txn.price)
            and cfg.price_min <= txn.price <= cfg.price_max
            and math.isfinite(txn.quantity)
            and txn.quantity > 0
        )
        if not valid:
            return Outcome.VERIFICATION_FAILED
        if txn.trade_key in self._state.settled:
            return Outcome.DOUBLE_SPEND
        if accounts[txn.sender].balance < to_micro_units(txn.price, txn.quantity, cfg.micro_unit_scale):
            return Outcome.INSUFFICIENT_FUNDS
        return None

    def _process(self, txn: LedgerTransaction, ts: float) -> Outcome:
        rejection = self._check(txn)
        if rejection is not None:
            return rejection
        amount = to_micro_units(txn.price, txn.quantity, self.config.micro_unit_scale)
        accounts = self._state.accounts
        # checks are complete, so the writes below cannot fail part-way
        accounts[txn.sender].balance -= amount
        accounts[txn.receiver].balance += amount
        self._state.settled.add(txn.trade_key)
        self._state.global_state.append(
            GlobalStateEntry(f"price_{txn.hour}", txn.hour, txn.price, ts, txn.txn_id)
        )
        return Outcome.CONFIRMED

    # -- queries ----------------------------------------------------------

    def transaction(self, txn_id: str) -> LedgerTransaction:
        return self._txns[txn_id]

    @property
    def transactions(self) -> tuple[LedgerTransaction, ...]:
        return tuple(self._txns.values())

    @property
    def confirmed_transactions(self) -> tuple[LedgerTransaction, ...]:
        return tuple(t for t in self._txns.values() if t.confirmed)

    @property
    def pending_transactions(self) -> tuple[LedgerTransaction, ...]:
        return tuple(self._txns[i] for i in self._pool)

    @property
    def global_state(self) -> tuple[GlobalStateEntry, ...]:
        return tuple(self._state.global_state)

    @property
    def events(self) -> tuple[tuple, ...]:
        return tuple(self._events)

    def state_hash(self) -> str:
        """SHA-256 over balances, registrations, settled trade keys and global state."""
        s = self._state
        doc = {
            "accounts": sorted((a.account_id, a.balance, a.registered) for a in s.accounts.values()),
            "settled": sorted([h, a, b] for h, a, b in s.settled),
            "global_state": [[e.key, e.hour, repr(e.price), repr(e.timestamp), e.writer_txn] for e in s.global_state],
            "minted": s.minted,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def report(self) -> LedgerReport:
        txns = self._txns.values()
        confirmed = [t for t in txns if t.confirmed]
        rejected = {o.value: sum(1 for t in txns if t.outcome is o) for o in REJECTIONS}
        lat = [transaction_latency(t) for t in confirmed]
        mean_lat = math.fsum(lat) / len(lat) if lat else 0.0
        return LedgerReport(
            submitted=len(self._txns),
            confirmed=len(confirmed),
            pending=len(self._pool),
            rejected=rejected,
            mean_latency_s=mean_lat,
            throughput_tps=throughput(confirmed),
            global_state=self.global_state,
        )

    @classmethod
    def replay(cls, events: Iterable[tuple], config: LedgerConfig | None = None) -> "Ledger":
        """Rebuild a simulated ledger by re-applying a recorded event log."""
        ledger = cls(config)
        for event in events:
            kind, *args = event
            if kind == "register":
                ledger.register(*args)
            elif kind == "submit":
                ledger.submit_settlement(*args)
            elif kind == "advance":
                ledger.advance_round()
            else:
                raise LedgerError(f"unknown event {kind!r}")
        return ledger


def ledger_report(ledger: Ledger) -> LedgerReport:
    return ledger.report()
