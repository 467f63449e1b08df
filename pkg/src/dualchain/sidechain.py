"""Sidechain block production, summaries, syncs and pruning."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterable, Mapping, Optional, Sequence

from dualchain.consensus import LeaderChangeCertificate, TakeoverCertificate
from dualchain.domain import (
    Block,
    BlockKind,
    HomeChain,
    Ledger,
    NodeId,
    SummaryState,
    SyncPayload,
    Transaction,
    TxKind,
    DEFAULT_SIDE_KINDS,
    GENESIS_REF,
    make_tx,
    merge_summaries,
)


class SummaryError(RuntimeError):
    pass


@dataclass(frozen=True)
class QueuedSideTx:
    tx: Transaction
    queued_at: float  # mc-round units


@dataclass
class SidechainState:
    ledger: Ledger
    sc_block_capacity: int
    epoch_sc_rounds: int
    pending_tx_side: deque = field(default_factory=deque)
    current_epoch_meta_blocks: list[Block] = field(default_factory=list)
    summaries: dict[int, Block] = field(default_factory=dict)
    meta_by_epoch: dict[int, list[Block]] = field(default_factory=dict)
    next_height: int = 1
    pruned_bytes: int = 0

    @classmethod
    def create(
        cls, sc_block_capacity: int, epoch_sc_rounds: int, main_genesis: Block, k_conf: int = 6
    ) -> "SidechainState":
        ledger = Ledger(HomeChain.SIDE, k_conf)
        genesis = Block.create(
            kind=BlockKind.SUMMARY,
            height=0,
            epoch=-1,
            round_in_epoch=0,
            prev_ref=main_genesis.block_hash,
            summary=SummaryState(),
        )
        ledger.append(genesis)
        state = cls(ledger, sc_block_capacity, epoch_sc_rounds)
        state.summaries[-1] = genesis
        return state

    @property
    def last_summary(self) -> Block:
        return self.summaries[max(self.summaries)]

    def enqueue(self, tx: Transaction, queued_at: float) -> None:
        if tx.annotation != 0b11:
            raise ValueError(f"tx {tx.tx_id} is not a sidechain transaction")
        self.pending_tx_side.append(QueuedSideTx(tx, queued_at))

    def permanent_bytes(self) -> int:
        return sum(b.storage_bytes() for b in self.ledger.blocks)


# ---------------------------------------------------------------------------
# block production


def propose_meta_block(
    state: SidechainState,
    proposer: NodeId,
    epoch: int,
    round_in_epoch: int,
    mc_round: int = 0,
    sc_round: int = 0,
    certs: Sequence = (),
    extra_txs: Sequence[Transaction] = (),
) -> Block:
    """Fill a meta-block FIFO from the pending queue without consuming it.

    The queue is only advanced by :func:`commit_meta_block`, so a proposal
    that fails to gather votes leaves the traffic in place.
    """
    if round_in_epoch >= state.epoch_sc_rounds - 1:
        raise ValueError("the last sc-round of an epoch is reserved for the summary-block")
    cap = state.sc_block_capacity
    used = sum(tx.nominal_size for tx in extra_txs)
    txs: list[Transaction] = []
    for entry in state.pending_tx_side:
        size = entry.tx.nominal_size
        if used + size > cap:
            break
        txs.append(entry.tx)
        used += size
    txs.extend(extra_txs)
    prev = state.current_epoch_meta_blocks[-1] if state.current_epoch_meta_blocks else state.last_summary
    return Block.create(
        kind=BlockKind.META,
        height=state.next_height,
        epoch=epoch,
        round_in_epoch=round_in_epoch,
        prev_ref=prev.block_hash,
        txs=txs,
        proposer=proposer,
        capacity_bytes=cap,
        certs=tuple(certs),
        mc_round=mc_round,
        sc_round=sc_round,
    )


def commit_meta_block(state: SidechainState, block: Block) -> list[QueuedSideTx]:
    """Append an agreed meta-block and pop its queued transactions."""
    taken: list[QueuedSideTx] = []
    q = state.pending_tx_side
    for tx in block.txs:
        if q and q[0].tx is tx:
            taken.append(q.popleft())
    state.ledger.append(block)
    state.current_epoch_meta_blocks.append(block)
    state.meta_by_epoch.setdefault(block.epoch, []).append(block)
    state.next_height = block.height + 1
    return taken


def drop_blocks(state: SidechainState, first: Block, restore: Mapping[int, float]) -> list[Block]:
    """Drop ``first`` and every later meta-block of the epoch.

    Transactions that were genuinely queued (present in ``restore``, which
    maps tx id to original queue time) go back to the head of the queue.
    """
    metas = state.current_epoch_meta_blocks
    idx = next(i for i, b in enumerate(metas) if b.block_hash == first.block_hash)
    dropped = metas[idx:]
    del metas[idx:]
    epoch_list = state.meta_by_epoch.get(first.epoch, [])
    del epoch_list[len(epoch_list) - len(dropped):]
    dropped_hashes = {b.block_hash for b in dropped}
    state.ledger.blocks = [b for b in state.ledger.blocks if b.block_hash not in dropped_hashes]
    state.next_height = first.height
    back = [QueuedSideTx(tx, restore[tx.tx_id]) for b in dropped for tx in b.txs if tx.tx_id in restore]
    state.pending_tx_side.extendleft(reversed(back))
    return dropped


def summarize(meta_blocks: Sequence[Block], extra_certs: Iterable = ()) -> SummaryState:
    proofs: dict[int, int] = {}
    payments: dict[int, int] = {}
    disputes: dict[int, tuple] = {}
    agreements: dict[int, tuple] = {}
    lcc: list = []
    toc: list = []
    for block in meta_blocks:
        for tx in block.txs:
            kind = tx.kind
            if kind not in _FOLDED:
                continue
            cid = tx.contract_id
            if cid is None:
                raise SummaryError(f"tx {tx.tx_id} of kind {kind.value} has no contract id")
            if kind is TxKind.SERVICE_PROOF:
                proofs[cid] = proofs.get(cid, 0) + 1
            elif kind is TxKind.SERVICE_PAYMENT:
                payments[cid] = payments.get(cid, 0) + tx.payload.amount
            elif kind is TxKind.DISPUTE:
                # last write wins
                disputes[cid] = (tx.payload.proof_ref, tx.payload.outcome)
            else:
                p = tx.payload
                agreements[cid] = (p.server, p.client, (p.terms.fee_per_round, p.terms.duration_rounds))
        _sort_certs(block.certs, lcc, toc)
    _sort_certs(extra_certs, lcc, toc)
    return SummaryState(proofs, payments, disputes, agreements, tuple(lcc), tuple(toc))


_FOLDED = frozenset({TxKind.SERVICE_PROOF, TxKind.SERVICE_PAYMENT, TxKind.DISPUTE, TxKind.AGREEMENT_COMMIT})


def _sort_certs(certs: Iterable, lcc: list, toc: list) -> None:
    for c in certs:
        if isinstance(c, LeaderChangeCertificate):
            lcc.append(c)
        elif isinstance(c, TakeoverCertificate):
            toc.append(c)


def propose_summary_block(
    state: SidechainState,
    proposer: NodeId,
    epoch: int,
    extra_certs: Sequence = (),
    mc_round: int = 0,
    sc_round: int = 0,
    summary: Optional[SummaryState] = None,
) -> Block:
    """Summary-block for the epoch; ``summary`` overrides the fold (used to forge one)."""
    state_fold = summarize(state.current_epoch_meta_blocks, extra_certs) if summary is None else summary
    return Block.create(
        kind=BlockKind.SUMMARY,
        height=state.next_height,
        epoch=epoch,
        round_in_epoch=state.epoch_sc_rounds - 1,
        prev_ref=state.last_summary.block_hash,
        summary=state_fold,
        proposer=proposer,
        certs=tuple(extra_certs),
        mc_round=mc_round,
        sc_round=sc_round,
    )


def commit_summary_block(state: SidechainState, block: Block) -> None:
    state.ledger.append(block)
    state.summaries[block.epoch] = block
    state.next_height = block.height + 1
    state.current_epoch_meta_blocks = []


def drop_summary(state: SidechainState, block: Block) -> None:
    """Remove a committed summary-block; its epoch's meta-blocks become current again."""
    state.ledger.blocks = [b for b in state.ledger.blocks if b.block_hash != block.block_hash]
    del state.summaries[block.epoch]
    state.current_epoch_meta_blocks = list(state.meta_by_epoch.get(block.epoch, []))
    state.next_height = block.height


def verify_meta_block(state: SidechainState, block: Block) -> bool:
    used = 0
    for tx in block.txs:
        if tx.annotation != 0b11:
            return False
        if tx.kind is TxKind.SERVICE_PROOF and not tx.payload.valid:
            return False
        used += tx.nominal_size
    if used > block.capacity_bytes:
        return False
    prev = state.current_epoch_meta_blocks[-1] if state.current_epoch_meta_blocks else state.last_summary
    return block.prev_ref == prev.block_hash


def verify_summary_block(state: SidechainState, block: Block) -> bool:
    if block.prev_ref != state.last_summary.block_hash or block.summary is None:
        return False
    return summarize(state.current_epoch_meta_blocks).aggregates() == block.summary.aggregates()


# ---------------------------------------------------------------------------
# syncing


def create_sync_transaction(
    summaries: Sequence[Block],
    tx_id: int,
    created_at_round: int = 0,
    takeover_attested: bool = False,
    side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS,
) -> Transaction:
    if not summaries:
        raise ValueError("a sync needs at least one summary-block")
    refs = tuple((b.epoch, b.block_hash) for b in summaries)
    merged = merge_summaries(b.summary for b in summaries)
    kind = TxKind.SYNC if len(summaries) == 1 else TxKind.MASS_SYNC
    payload = SyncPayload(refs, merged, takeover_attested)
    return make_tx(tx_id, kind, payload, None, created_at_round, side_kinds)


def verify_sync_transaction(state: SidechainState, tx: Transaction) -> bool:
    payload = tx.payload
    if not isinstance(payload, SyncPayload) or not payload.summary_refs:
        return False
    blocks = []
    for epoch, ref in payload.summary_refs:
        b = state.summaries.get(epoch)
        if b is None or b.block_hash != ref:
            return False
        blocks.append(b)
    merged = merge_summaries(b.summary for b in blocks)
    return merged.aggregates() == payload.state.aggregates()


# ---------------------------------------------------------------------------
# pruning


def sync_heights(main_ledger: Ledger) -> dict[int, int]:
    """Epoch -> height of the mainchain block holding its sync (full scan)."""
    found: dict[int, int] = {}
    for b in main_ledger.blocks:
        for tx in b.txs:
            if tx.kind in (TxKind.SYNC, TxKind.MASS_SYNC):
                for epoch, _ in tx.payload.summary_refs:
                    found.setdefault(epoch, b.height)
    return found


def prune(state: SidechainState, main_ledger: Ledger, synced_at: Optional[Mapping[int, int]] = None) -> int:
    """Drop meta-blocks whose epoch's sync is buried at least k_conf deep."""
    if synced_at is None:
        synced_at = sync_heights(main_ledger)
    k = main_ledger.k_conf
    dropped = 0
    for epoch in sorted(state.meta_by_epoch):
        if epoch not in state.summaries:
            continue
        h = synced_at.get(epoch)
        if h is None or main_ledger.depth_of(h) < k:
            continue
        blocks = state.meta_by_epoch.pop(epoch)
        if not blocks:
            continue
        hashes = {b.block_hash for b in blocks}
        state.ledger.blocks = [b for b in state.ledger.blocks if b.block_hash not in hashes]
        state.ledger.pruned_ranges.append((epoch, tuple(b.height for b in blocks)))
        state.pruned_bytes += sum(b.storage_bytes() for b in blocks)
        dropped += len(blocks)
    return dropped


def walk_summaries(state: SidechainState, start: Block) -> list[Block]:
    """Follow prevRefs from a summary-block back to the sidechain genesis."""
    by_hash = {b.block_hash: b for b in state.ledger.blocks}
    out = [start]
    cur = start
    while cur.height != 0:
        cur = by_hash[cur.prev_ref]
        out.append(cur)
    return out


def block_trace(block: Block) -> dict:
    counts: dict[str, int] = {}
    for tx in block.txs:
        counts[tx.kind.value] = counts.get(tx.kind.value, 0) + 1
    return {
        "kind": block.kind.value,
        "height": block.height,
        "epoch": block.epoch,
        "scRound": block.sc_round,
        "txsByKind": counts,
        "bytes": block.storage_bytes(),
    }
