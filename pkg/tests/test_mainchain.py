import math
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from dualchain import mainchain as mc
from dualchain.committees import elect_committees
from dualchain.domain import (
    VALID_STUB,
    ContractTerms,
    NodeId,
    PaymentPayload,
    ProposePayload,
    RollbackRefused,
    SYNC_KINDS,
    TxKind,
    make_tx,
    STORAGE_MARKET_SIDE_KINDS,
)
from helpers import main_state, mine, sync_tx

MB = 1_048_576


def por(i):
    return make_tx(i, TxKind.SERVICE_PROOF, VALID_STUB, i % 7, 0, STORAGE_MARKET_SIDE_KINDS)


def test_single_miner_always_leads():
    s = main_state(miners=1)
    for i in range(20):
        seed = mc.SortitionSeed(i.to_bytes(32, "big"))
        assert mc.select_round_leader(s, seed) == NodeId(0)


def test_zero_power_never_leads():
    s = main_state(miners=3)
    s.mining_power[NodeId(1)] = 0.0
    picks = {mc.select_round_leader(s, mc.SortitionSeed(i.to_bytes(32, "big"))) for i in range(2000)}
    assert NodeId(1) not in picks


def test_no_power_is_an_error():
    s = main_state(miners=2)
    for n in s.mining_power:
        s.mining_power[n] = 0.0
    with pytest.raises(mc.NoLeaderError):
        mc.select_round_leader(s, mc.SortitionSeed(bytes(32)))


def test_equal_power_is_fair():
    s = main_state(miners=2)
    draws = 10_000
    c = Counter(mc.select_round_leader(s, mc.SortitionSeed(i.to_bytes(32, "big"))).index for i in range(draws))
    sd = math.sqrt(draws * 0.25)
    assert abs(c[0] - draws / 2) <= 3 * sd


def test_power_proportional_selection():
    s = main_state(miners=2)
    s.mining_power[NodeId(0)] = 3.0
    draws = 8_000
    c = Counter(mc.select_round_leader(s, mc.SortitionSeed(i.to_bytes(32, "big"))).index for i in range(draws))
    sd = math.sqrt(draws * 0.75 * 0.25)
    assert abs(c[0] - 0.75 * draws) <= 3 * sd


def test_empty_queues_give_empty_block():
    block, _ = mine(main_state())
    assert block.txs == ()


def _packing_oracle(capacity, quota, transfers, pors):
    # greedy byte budget: transfer slice first, then FIFO fill of what is left
    slice_bytes = math.floor(quota * capacity)
    n_tr = min(transfers, slice_bytes // 398)
    left = capacity - n_tr * 398
    return n_tr, min(pors, left // 515)


def test_byte_budget_packing():
    s = main_state()
    for i in range(3000):
        s.enqueue(por(i), 0)
    for i in range(3000, 4000):
        s.enqueue(make_tx(i, TxKind.TRANSFER), 0)
    block, _ = mine(s, capacity=MB)
    kinds = Counter(tx.kind for tx in block.txs)
    n_tr, n_por = _packing_oracle(MB, 0.30, 1000, 3000)
    assert (kinds[TxKind.TRANSFER], kinds[TxKind.SERVICE_PROOF]) == (n_tr, n_por)
    assert (n_tr, n_por) == (790, 1425)
    assert block.bytes_used_by_txs() <= MB


def test_sync_goes_first():
    s = main_state()
    for i in range(2000):
        s.enqueue(make_tx(i, TxKind.TRANSFER), 0)
    s.enqueue(sync_tx(9999, 0, {1: 3}), 0)
    block, _ = mine(s, capacity=MB)
    assert block.txs[0].kind is TxKind.SYNC


@given(st.lists(st.sampled_from(["sync", "transfer", "por", "ask"]), max_size=60), st.integers(2_000, 40_000))
def test_no_non_sync_precedes_a_sync(order, capacity):
    s = main_state()
    epoch = 0
    for i, k in enumerate(order):
        if k == "sync":
            s.enqueue(sync_tx(i, epoch, {1: 1}), 0)
            epoch += 1
        elif k == "transfer":
            s.enqueue(make_tx(i, TxKind.TRANSFER), 0)
        elif k == "por":
            s.enqueue(por(i), 0)
        else:
            s.enqueue(make_tx(i, TxKind.ASK, ProposePayload(0, 1, ContractTerms(1, 4)), 1), 0)
    block, _ = mine(s, capacity=capacity)
    seen_other = False
    for tx in block.txs:
        if tx.kind in SYNC_KINDS:
            assert not seen_other
        else:
            seen_other = True
    assert block.bytes_used_by_txs() <= capacity


def test_sync_dispenses_under_per_epoch_payment():
    s = main_state(dispense_on_sync=True)
    s.escrows[1] = s.escrow_funded[1] = 40
    s.contract_fees[1] = 1
    s.enqueue(sync_tx(1, 0, {1: 30}), 0)
    _, paid = mine(s)
    assert s.escrows[1] == 10
    assert paid == [(1, 30)]
    assert s.ledger.summary_variables["proofCounts"] == {1: 30}
    assert mc.escrow_conserved(s)


def test_escrow_truncates_instead_of_going_negative():
    s = main_state(dispense_on_sync=True)
    s.escrows[1] = s.escrow_funded[1] = 5
    s.enqueue(sync_tx(1, 0, {1: 30}), 0)
    mine(s)
    assert s.escrows[1] == 0
    assert s.truncations == [(1, 30, 5)]


def test_unverifiable_sync_rejected():
    s = main_state()
    s.enqueue(sync_tx(1, 0, {1: 30}), 0)
    block, _ = mine(s, verify=lambda tx: False)
    assert block.txs == ()
    assert s.rejected_syncs[0][1] == "inconsistent with summary-block"
    assert s.ledger.summary_variables["proofCounts"] == {}


def test_second_sync_for_same_epoch_rejected():
    s = main_state()
    s.enqueue(sync_tx(1, 0, {1: 3}), 0)
    mine(s)
    s.enqueue(sync_tx(2, 0, {1: 3}, ref=b"\x02" * 32), 1)
    block, _ = mine(s)
    assert block.txs == ()
    assert s.rejected_syncs[0][1] == "epoch already synced"


def test_empty_summary_leaves_variables():
    s = main_state()
    s.enqueue(sync_tx(1, 0, {}), 0)
    mine(s)
    assert s.ledger.summary_aggregates() == ({}, {}, {}, {})


def test_payment_dispenses_from_escrow():
    s = main_state()
    s.escrows[2] = s.escrow_funded[2] = 40
    s.enqueue(make_tx(1, TxKind.SERVICE_PAYMENT, PaymentPayload(40, 40), 2), 0)
    mine(s)
    assert s.escrows[2] == 0 and s.dispensed[2] == 40


def test_rollback_zero_is_noop():
    s = main_state()
    mine(s)
    ev = mc.inject_rollback(s, 0)
    assert ev.depth == 0 and s.ledger.height == 1


def test_rollback_deeper_than_k_conf_refused():
    s = main_state(k_conf=2)
    for r in range(4):
        mine(s, r)
    with pytest.raises(RollbackRefused):
        mc.inject_rollback(s, 3)


def test_rollback_returns_sync_and_requeues_traffic():
    s = main_state(dispense_on_sync=True)
    s.escrows[1] = s.escrow_funded[1] = 50
    mine(s, 0)
    s.enqueue(sync_tx(1, 0, {1: 30}), 1)
    s.enqueue(make_tx(2, TxKind.TRANSFER), 1)
    mine(s, 1)
    before = s.ledger.summary_aggregates()
    ev = mc.inject_rollback(s, 1)
    assert [t.tx_id for t in ev.rolled_back_syncs] == [1]
    assert ev.requeued == 1
    assert s.pending_payments[0].rolled_back
    assert s.ledger.summary_aggregates() == ({}, {}, {}, {}) != before
    assert s.escrows[1] == 50 and mc.escrow_conserved(s)
    assert 0 not in s.synced_epochs


def test_rollback_keeps_originally_queued_round():
    s = main_state()
    s.enqueue(make_tx(5, TxKind.TRANSFER), 3)
    mine(s, 7)
    mc.inject_rollback(s, 1)
    assert s.pending_payments[0].queued_round == 3


def test_rollback_of_unconfirmed_blocks_keeps_election():
    s = main_state(miners=30, k_conf=3)
    for r in range(40):
        mine(s, r)
    pop = [NodeId(i) for i in range(30)]
    before = elect_committees(s.ledger, 1, 5, pop, epoch=4, seed=1)
    mc.inject_rollback(s, 3)
    for r in range(3):
        s.mining_power = {n: (1.0 if n.index == 29 else 0.0) for n in pop}
        mine(s, 100 + r)
    after = elect_committees(s.ledger, 1, 5, pop, epoch=4, seed=1)
    assert before == after


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 60), st.booleans()), max_size=25), st.integers(0, 6))
def test_escrow_conservation_under_random_traffic(ops, depth):
    s = main_state(dispense_on_sync=True)
    for cid in range(4):
        s.escrows[cid] = s.escrow_funded[cid] = 30
    for i, (cid, amount, is_sync) in enumerate(ops):
        if is_sync:
            s.enqueue(sync_tx(i, i, {cid: amount} if amount else {}), i)
        else:
            s.enqueue(make_tx(i, TxKind.SERVICE_PAYMENT, PaymentPayload(amount), cid), i)
        mine(s, i)
    mc.inject_rollback(s, min(depth, s.ledger.height))
    assert mc.escrow_conserved(s)
    assert all(v >= 0 for v in s.escrows.values())


def test_block_trace_counts_kinds():
    s = main_state()
    s.enqueue(make_tx(1, TxKind.TRANSFER), 0)
    block, _ = mine(s)
    tr = mc.block_trace(block)
    assert tr["txsByKind"] == {"Transfer": 1} and tr["bytesUsed"] == 398
