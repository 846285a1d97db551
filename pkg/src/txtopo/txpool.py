"""Per-node transaction pool: pending/future classification, replacement,
promotion, and capacity enforcement.

Pending transactions form, per account, a contiguous nonce run starting at
the account's expected nonce and are eligible for forwarding; future
transactions sit in the queue until the gap below them closes. A same-nonce
transaction replaces a stored one only when its effective price exceeds the
old one by at least the pool's replacement rate (inclusive boundary),
checked in exact integer arithmetic.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property

# Headroom added to gas_fee_cap so a transaction built for a target effective
# price keeps that price under any base fee the simulator uses.
FEE_CAP_HEADROOM = 10**9

MARKED_TX_GAS = 24_152


def as_fraction(alpha) -> Fraction:
    """Exact replacement rate. Floats are read by their decimal repr, so 0.1
    means exactly 1/10 rather than the nearest binary float."""
    if isinstance(alpha, Fraction):
        frac = alpha
    elif isinstance(alpha, int):
        frac = Fraction(alpha)
    elif isinstance(alpha, float):
        frac = Fraction(str(alpha))
    elif isinstance(alpha, str):
        frac = Fraction(alpha)
    else:
        raise TypeError(f"unsupported replacement rate type: {type(alpha)!r}")
    if frac <= 0:
        raise ValueError(f"replacement rate must be > 0, got {frac}")
    return frac


@dataclass(frozen=True)
class Transaction:
    account: int
    nonce: int
    gas_tip_cap: int
    gas_fee_cap: int
    gas_used: int = MARKED_TX_GAS
    marker: str = ""

    @cached_property
    def tx_id(self) -> str:
        # injective over the field tuple
        return (
            f"{self.account}.{self.nonce}.{self.gas_tip_cap}."
            f"{self.gas_fee_cap}.{self.gas_used}.{self.marker}"
        )

    @cached_property
    def tx_key(self) -> int:
        # deterministic integer key for stateless latency hashing
        return zlib.crc32(self.tx_id.encode())


def tx_with_effective_price(
    account: int, nonce: int, price: int, marker: str = "", gas_used: int = MARKED_TX_GAS
) -> Transaction:
    """Transaction whose effective price equals `price` for any base fee up
    to FEE_CAP_HEADROOM."""
    if price <= 0:
        raise ValueError(f"price must be > 0, got {price}")
    return Transaction(
        account=account,
        nonce=nonce,
        gas_tip_cap=price,
        gas_fee_cap=price + FEE_CAP_HEADROOM,
        gas_used=gas_used,
        marker=marker,
    )


def effective_price(tx: Transaction, base_fee: int) -> int:
    """min(gas_fee_cap - base_fee, gas_tip_cap); may be negative."""
    if base_fee < 0:
        raise ValueError("base_fee must be >= 0")
    return min(tx.gas_fee_cap - base_fee, tx.gas_tip_cap)


def replacement_allowed(old_price: int, new_price: int, alpha) -> bool:
    """Eq-style threshold test (new - old) / old >= alpha, integer-exact."""
    if old_price <= 0:
        raise ValueError(f"old_price must be > 0, got {old_price}")
    frac = as_fraction(alpha)
    return (new_price - old_price) * frac.denominator >= frac.numerator * old_price


class EvictionPolicy(Enum):
    # pre-v1.10.18 Geth glitch: the incoming future transaction is dropped
    DROP_NEWEST = "drop_newest"
    # post-fix behaviour: keep staler entries, evict from the fattest account
    DROP_STALEST = "drop_stalest"


@dataclass(frozen=True)
class PoolConfig:
    alpha: Fraction = Fraction(1, 10)
    max_pending_per_account: int = 16
    queue_capacity: int = 1_024
    eviction_policy: EvictionPolicy = EvictionPolicy.DROP_STALEST

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        if self.max_pending_per_account < 1 or self.queue_capacity < 1:
            raise ValueError("capacities must be >= 1")


class SubmitKind(Enum):
    ACCEPTED_PENDING = "pending"
    ACCEPTED_FUTURE = "future"
    REPLACED = "replaced"
    REJECTED_UNDERPRICED = "underpriced"
    REJECTED_DUPLICATE = "duplicate"
    DROPPED_QUEUE_FULL = "queue-full"


@dataclass(frozen=True)
class SubmitOutcome:
    kind: SubmitKind
    promoted: tuple[Transaction, ...] = ()  # futures promoted besides the submitted tx
    replaced_tx_id: str | None = None
    evicted_tx_id: str | None = None

    @property
    def accepted(self) -> bool:
        return self.kind in (
            SubmitKind.ACCEPTED_PENDING,
            SubmitKind.ACCEPTED_FUTURE,
            SubmitKind.REPLACED,
        )


@dataclass
class _AccountState:
    next_nonce: int = 0
    pending: list[Transaction] = field(default_factory=list)  # contiguous from next_nonce
    queued: dict[int, Transaction] = field(default_factory=dict)


class TxPool:
    """Single-owner mutable pool; the simulator serializes all access."""

    def __init__(self, config: PoolConfig | None = None):
        self.config = config or PoolConfig()
        self._accounts: dict[int, _AccountState] = {}
        self._queued_total = 0
        self._newly_pending: list[Transaction] = []

    # -- introspection -----------------------------------------------------

    def account(self, account_id: int) -> _AccountState:
        state = self._accounts.get(account_id)
        if state is None:
            state = _AccountState()
            self._accounts[account_id] = state
        return state

    def pending_count(self) -> int:
        return sum(len(s.pending) for s in self._accounts.values())

    def queued_count(self) -> int:
        return self._queued_total

    def contains(self, tx: Transaction) -> bool:
        state = self._accounts.get(tx.account)
        if state is None:
            return False
        if tx.nonce in state.queued:
            return state.queued[tx.nonce].tx_id == tx.tx_id
        idx = tx.nonce - state.next_nonce
        if 0 <= idx < len(state.pending):
            return state.pending[idx].tx_id == tx.tx_id
        return False

    def seed_next_nonce(self, account_id: int, next_nonce: int) -> None:
        """Set an account's chain nonce; only valid before it holds anything."""
        state = self.account(account_id)
        if state.pending or state.queued:
            raise ValueError(f"account {account_id} already holds transactions")
        state.next_nonce = next_nonce

    def snapshot(self) -> dict:
        return {
            str(acct): {
                "pending": [tx.tx_id for tx in state.pending],
                "queued": [state.queued[n].tx_id for n in sorted(state.queued)],
            }
            for acct, state in sorted(self._accounts.items())
            if state.pending or state.queued
        }

    # -- core state machine ------------------------------------------------

    def submit(self, tx: Transaction, base_fee: int) -> SubmitOutcome:
        if effective_price(tx, base_fee) <= 0:
            return SubmitOutcome(SubmitKind.REJECTED_UNDERPRICED)
        state = self.account(tx.account)
        if tx.nonce < state.next_nonce:
            return SubmitOutcome(SubmitKind.REJECTED_DUPLICATE)

        pending_end = state.next_nonce + len(state.pending)
        if tx.nonce < pending_end:
            return self._try_replace(state, state.pending[tx.nonce - state.next_nonce], tx, base_fee, pending=True)
        if tx.nonce in state.queued:
            return self._try_replace(state, state.queued[tx.nonce], tx, base_fee, pending=False)

        if tx.nonce == pending_end and len(state.pending) < self.config.max_pending_per_account:
            state.pending.append(tx)
            self._newly_pending.append(tx)
            promoted = self._promote(state)
            return SubmitOutcome(SubmitKind.ACCEPTED_PENDING, promoted=promoted)

        return self._enqueue_future(state, tx)

    def _try_replace(
        self, state: _AccountState, old: Transaction, tx: Transaction, base_fee: int, pending: bool
    ) -> SubmitOutcome:
        if old.tx_id == tx.tx_id:
            return SubmitOutcome(SubmitKind.REJECTED_DUPLICATE)
        old_price = effective_price(old, base_fee)
        new_price = effective_price(tx, base_fee)
        if old_price <= 0 or not replacement_allowed(old_price, new_price, self.config.alpha):
            return SubmitOutcome(SubmitKind.REJECTED_UNDERPRICED)
        if pending:
            state.pending[tx.nonce - state.next_nonce] = tx
            # the superseded tx is no longer forwardable; the replacement is
            self._newly_pending = [t for t in self._newly_pending if t.tx_id != old.tx_id]
            self._newly_pending.append(tx)
        else:
            state.queued[tx.nonce] = tx
        return SubmitOutcome(SubmitKind.REPLACED, replaced_tx_id=old.tx_id)

    def _promote(self, state: _AccountState) -> tuple[Transaction, ...]:
        promoted = []
        while len(state.pending) < self.config.max_pending_per_account:
            nxt = state.next_nonce + len(state.pending)
            tx = state.queued.pop(nxt, None)
            if tx is None:
                break
            self._queued_total -= 1
            state.pending.append(tx)
            self._newly_pending.append(tx)
            promoted.append(tx)
        return tuple(promoted)

    def _enqueue_future(self, state: _AccountState, tx: Transaction) -> SubmitOutcome:
        state.queued[tx.nonce] = tx
        self._queued_total += 1
        if self._queued_total <= self.config.queue_capacity:
            return SubmitOutcome(SubmitKind.ACCEPTED_FUTURE)
        if self.config.eviction_policy is EvictionPolicy.DROP_NEWEST:
            victim_account, victim = tx.account, tx
        else:
            victim_account, victim = self._stalest_victim()
        self._accounts[victim_account].queued.pop(victim.nonce)
        self._queued_total -= 1
        if victim.tx_id == tx.tx_id:
            return SubmitOutcome(SubmitKind.DROPPED_QUEUE_FULL, evicted_tx_id=victim.tx_id)
        return SubmitOutcome(SubmitKind.ACCEPTED_FUTURE, evicted_tx_id=victim.tx_id)

    def _stalest_victim(self) -> tuple[int, Transaction]:
        # fattest queue first, smallest account id on ties, then highest nonce
        acct = min(
            (a for a, s in self._accounts.items() if s.queued),
            key=lambda a: (-len(self._accounts[a].queued), a),
        )
        state = self._accounts[acct]
        return acct, state.queued[max(state.queued)]

    def drain_forwardable(self) -> list[Transaction]:
        """Transactions that became pending since the previous drain, each at
        most once; replaced entries are superseded by their replacement."""
        out = self._newly_pending
        self._newly_pending = []
        return out

    # -- invariants (debug aid; exercised heavily by the fuzz suite) --------

    def validate(self) -> None:
        queued_total = 0
        for acct, state in self._accounts.items():
            for i, tx in enumerate(state.pending):
                assert tx.account == acct
                assert tx.nonce == state.next_nonce + i, "pending run not contiguous"
            assert len(state.pending) <= self.config.max_pending_per_account
            pending_nonces = {t.nonce for t in state.pending}
            for nonce, tx in state.queued.items():
                assert tx.account == acct and tx.nonce == nonce
                assert nonce not in pending_nonces, "nonce stored twice"
                assert nonce >= state.next_nonce + len(state.pending), "queued nonce not a future"
            queued_total += len(state.queued)
        assert queued_total == self._queued_total
        assert queued_total <= self.config.queue_capacity
