"""Mainchain state machine.

Round leaders come from a weighted announcement race, blocks are packed
from three queues (syncs, the reserved payment slice, everything else),
sync transactions update the mirrored summary variables, and scripted
rollbacks unwind the tip using per-block undo journals.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from dualchain.domain import (
    GENESIS_REF,
    Block,
    BlockKind,
    Ledger,
    NodeId,
    Transaction,
    TxKind,
    SYNC_KINDS,
)

log = logging.getLogger(__name__)


class NoLeaderError(RuntimeError):
    pass


@dataclass(frozen=True)
class SortitionSeed:
    seed_bytes: bytes

    @classmethod
    def from_block(cls, block: Block) -> "SortitionSeed":
        return cls(hashlib.sha256(b"sortition" + block.block_hash).digest())


@dataclass(frozen=True)
class QueuedTx:
    tx: Transaction
    queued_round: int
    rolled_back: bool = False


@dataclass(frozen=True)
class RollbackEvent:
    depth: int
    removed_heights: tuple[int, ...] = ()
    requeued: int = 0
    rolled_back_syncs: tuple[Transaction, ...] = ()


@dataclass
class MainchainState:
    ledger: Ledger
    mining_power: dict[NodeId, float]
    payment_quota: float = 0.30
    dispense_on_sync: bool = False
    contract_fees: dict[int, int] = field(default_factory=dict)
    pending_syncs: deque = field(default_factory=deque)
    pending_tx_main: deque = field(default_factory=deque)
    pending_payments: deque = field(default_factory=deque)
    escrows: dict[int, int] = field(default_factory=dict)
    escrow_funded: dict[int, int] = field(default_factory=dict)
    dispensed: dict[int, int] = field(default_factory=dict)
    applied_syncs: dict[tuple, int] = field(default_factory=dict)  # summary refs -> height
    synced_epochs: dict[int, int] = field(default_factory=dict)  # epoch -> block height
    rejected_syncs: list[tuple[Transaction, str]] = field(default_factory=list)
    truncations: list[tuple[int, int, int]] = field(default_factory=list)
    queued_round: dict[int, int] = field(default_factory=dict)
    # per-height undo journal
    journal: dict[int, list] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.payment_quota <= 1.0:
            raise ValueError("payment quota must lie in [0, 1]")
        if not self.ledger.blocks:
            self.ledger.append(
                Block.create(kind=BlockKind.MAIN, height=0, epoch=0, round_in_epoch=0, prev_ref=GENESIS_REF)
            )

    def pending_count(self) -> int:
        return len(self.pending_syncs) + len(self.pending_tx_main) + len(self.pending_payments)

    def enqueue(self, tx: Transaction, round_no: int) -> None:
        self.queued_round.setdefault(tx.tx_id, round_no)
        entry = QueuedTx(tx, self.queued_round[tx.tx_id])
        if tx.kind in SYNC_KINDS:
            self.pending_syncs.append(entry)
        elif tx.kind is TxKind.TRANSFER:
            self.pending_payments.append(entry)
        else:
            self.pending_tx_main.append(entry)

    def enqueue_many(self, txs: Iterable[Transaction], round_no: int) -> None:
        for tx in txs:
            self.enqueue(tx, round_no)


# ---------------------------------------------------------------------------
# leader selection


def announcement_time(seed: SortitionSeed, node: NodeId, weight: float) -> float:
    """Simulated announcement delay; exponential with rate equal to weight."""
    h = hashlib.sha256(seed.seed_bytes + node.index.to_bytes(8, "big")).digest()
    u = (int.from_bytes(h[:8], "big") + 1) / 2**64
    return -math.log(u) / weight


def select_round_leader(state: MainchainState, seed: SortitionSeed) -> NodeId:
    """Earliest announcer wins; an exponential race picks in proportion to power."""
    best: Optional[tuple[float, int, NodeId]] = None
    for node, weight in state.mining_power.items():
        if weight <= 0:
            continue
        t = announcement_time(seed, node, weight)
        key = (t, node.index, node)
        if best is None or key[:2] < best[:2]:
            best = key
    if best is None:
        raise NoLeaderError("total mining power is zero")
    return best[2]


# ---------------------------------------------------------------------------
# block assembly


SyncVerifier = Callable[[Transaction], bool]


def assemble_main_block(
    state: MainchainState,
    capacity: int,
    leader: Optional[NodeId] = None,
    round_no: int = 0,
    verify_sync: Optional[SyncVerifier] = None,
) -> Block:
    """Pack syncs first, then the payment slice, then FIFO mainchain traffic."""
    txs: list[Transaction] = []
    used = 0
    taken: set = set()
    while state.pending_syncs:
        tx = state.pending_syncs[0].tx
        if used + tx.nominal_size > capacity:
            break
        state.pending_syncs.popleft()
        reason = _sync_rejection(state, tx, verify_sync, taken)
        if reason:
            state.rejected_syncs.append((tx, reason))
            log.info("sync %d rejected: %s", tx.tx_id, reason)
            continue
        txs.append(tx)
        taken.update(epoch for epoch, _ in tx.payload.summary_refs)
        used += tx.nominal_size

    quota = int(state.payment_quota * capacity)
    pay_used = 0
    q = state.pending_payments
    while q:
        size = q[0].tx.nominal_size
        if pay_used + size > quota or used + size > capacity:
            break
        txs.append(q.popleft().tx)
        pay_used += size
        used += size

    q = state.pending_tx_main
    while q:
        size = q[0].tx.nominal_size
        if used + size > capacity:
            break
        txs.append(q.popleft().tx)
        used += size

    tip = state.ledger.tip
    assert tip is not None
    return Block.create(
        kind=BlockKind.MAIN,
        height=tip.height + 1,
        epoch=0,
        round_in_epoch=0,
        prev_ref=tip.block_hash,
        txs=txs,
        proposer=leader,
        capacity_bytes=capacity,
        mc_round=round_no,
    )


def _sync_rejection(
    state: MainchainState, tx: Transaction, verify: Optional[SyncVerifier], taken: set
) -> str:
    refs = tx.payload.summary_refs
    if refs in state.applied_syncs:
        return "duplicate"
    if any(epoch in state.synced_epochs or epoch in taken for epoch, _ in refs):
        return "epoch already synced"
    if verify is not None and not verify(tx):
        return "inconsistent with summary-block"
    return ""


# ---------------------------------------------------------------------------
# block application


def apply_main_block(state: MainchainState, block: Block) -> list[tuple[int, int]]:
    """Append a mined block and apply its effects.

    Returns the (contract, amount) storage payments dispensed by sync
    application; the caller records them as miner-issued payment txs.
    """
    state.ledger.append(block)
    undo: list = []
    state.journal[block.height] = undo
    settled: list[tuple[int, int]] = []
    for tx in block.txs:
        kind = tx.kind
        if kind is TxKind.ASK:
            terms = tx.payload.terms
            amount = terms.fee_per_round * terms.duration_rounds
            _credit(state, tx.contract_id, amount, undo)
            state.contract_fees[tx.contract_id] = terms.fee_per_round
        elif kind is TxKind.SERVICE_PAYMENT and not tx.payload.settled:
            _dispense(state, tx.contract_id, tx.payload.amount, undo)
        elif kind in SYNC_KINDS:
            paid = _merge_sync(state, tx, block.height, undo)
            if state.dispense_on_sync:
                settled.extend(paid)
    return settled


def _credit(state: MainchainState, cid: int, amount: int, undo: list) -> None:
    state.escrows[cid] = state.escrows.get(cid, 0) + amount
    state.escrow_funded[cid] = state.escrow_funded.get(cid, 0) + amount
    undo.append(("credit", cid, amount))


def _dispense(state: MainchainState, cid: int, amount: int, undo: list) -> int:
    balance = state.escrows.get(cid, 0)
    paid = min(balance, amount)
    if paid < amount:
        state.truncations.append((cid, amount, paid))
        log.info("escrow of contract %d exhausted: wanted %d, paid %d", cid, amount, paid)
    state.escrows[cid] = balance - paid
    state.dispensed[cid] = state.dispensed.get(cid, 0) + paid
    undo.append(("dispense", cid, paid))
    return paid


def apply_sync_transaction(state: MainchainState, tx: Transaction, height: int = -1) -> list[tuple[int, int]]:
    """Merge a verified sync into the summary variables; return (contract, paid) pairs."""
    undo: list = []
    paid = _merge_sync(state, tx, height, undo)
    state.journal.setdefault(height, []).extend(undo)
    return paid


def _merge_sync(state: MainchainState, tx: Transaction, height: int, undo: list) -> list[tuple[int, int]]:
    payload = tx.payload
    s = payload.state
    sv = state.ledger.summary_variables
    undo.append(("summary", copy.deepcopy(sv)))
    for cid, n in s.proof_counts.items():
        sv["proofCounts"][cid] = sv["proofCounts"].get(cid, 0) + n
    for cid, amt in s.payment_totals.items():
        sv["paymentTotals"][cid] = sv["paymentTotals"].get(cid, 0) + amt
    sv["disputes"].update(s.disputes)
    sv["agreements"].update(s.agreements)
    state.applied_syncs[payload.summary_refs] = height
    for epoch, _ in payload.summary_refs:
        state.synced_epochs[epoch] = height
    undo.append(("sync", payload.summary_refs))

    paid: list[tuple[int, int]] = []
    for cid, amt in s.payment_totals.items():
        paid.append((cid, _dispense(state, cid, amt, undo)))
    if state.dispense_on_sync:
        for cid, n in s.proof_counts.items():
            fee = state.contract_fees.get(cid, 1)
            paid.append((cid, _dispense(state, cid, fee * n, undo)))
    return paid


# ---------------------------------------------------------------------------
# rollback


def inject_rollback(state: MainchainState, depth: int) -> RollbackEvent:
    """Abandon the last `depth` blocks and put their traffic back in the queues."""
    if depth <= 0:
        return RollbackEvent(0)
    removed = state.ledger.pop(depth)
    syncs: list[Transaction] = []
    requeue_pay: list[QueuedTx] = []
    requeue_main: list[QueuedTx] = []
    for block in reversed(removed):
        for op in reversed(state.journal.pop(block.height, [])):
            _undo(state, op)
    for block in removed:
        for tx in block.txs:
            if tx.kind in SYNC_KINDS:
                syncs.append(tx)
                continue
            if tx.kind is TxKind.SERVICE_PAYMENT and tx.payload.settled:
                # reissued when the covering mass-sync lands
                continue
            entry = QueuedTx(tx, state.queued_round.get(tx.tx_id, block.mc_round), True)
            (requeue_pay if tx.kind is TxKind.TRANSFER else requeue_main).append(entry)
    state.pending_payments.extendleft(reversed(requeue_pay))
    state.pending_tx_main.extendleft(reversed(requeue_main))
    return RollbackEvent(
        depth=len(removed),
        removed_heights=tuple(b.height for b in removed),
        requeued=len(requeue_pay) + len(requeue_main),
        rolled_back_syncs=tuple(syncs),
    )


def _undo(state: MainchainState, op: tuple) -> None:
    tag = op[0]
    if tag == "credit":
        _, cid, amount = op
        state.escrows[cid] -= amount
        state.escrow_funded[cid] -= amount
    elif tag == "dispense":
        _, cid, paid = op
        state.escrows[cid] += paid
        state.dispensed[cid] -= paid
    elif tag == "summary":
        state.ledger.summary_variables.clear()
        state.ledger.summary_variables.update(op[1])
    elif tag == "sync":
        refs = op[1]
        state.applied_syncs.pop(refs, None)
        for epoch, _ in refs:
            state.synced_epochs.pop(epoch, None)


def escrow_conserved(state: MainchainState) -> bool:
    return all(
        state.escrow_funded.get(cid, 0) == state.escrows.get(cid, 0) + state.dispensed.get(cid, 0)
        and state.escrows.get(cid, 0) >= 0
        for cid in set(state.escrow_funded) | set(state.escrows) | set(state.dispensed)
    )


def block_trace(block: Block) -> dict:
    counts: dict[str, int] = {}
    for tx in block.txs:
        counts[tx.kind.value] = counts.get(tx.kind.value, 0) + 1
    return {
        "height": block.height,
        "mcRound": block.mc_round,
        "txsByKind": counts,
        "bytesUsed": block.bytes_used_by_txs(),
    }

