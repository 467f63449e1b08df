import json

import pytest
from hypothesis import given, strategies as st

from dualchain.domain import (
    BLOCK_HEADER_BYTES,
    DEFAULT_SIDE_KINDS,
    GENESIS_REF,
    VALID_STUB,
    Block,
    BlockKind,
    Clock,
    HomeChain,
    Ledger,
    MalformedTransaction,
    NodeId,
    RollbackRefused,
    SummaryState,
    Transaction,
    TxKind,
    classify,
    digest,
    encode,
    make_tx,
    merge_summaries,
    nominal_size_of,
    to_json,
)


@pytest.mark.parametrize(
    "kind,size",
    [
        (TxKind.ASK, 645),
        (TxKind.AGREEMENT_COMMIT, 79),
        (TxKind.TRANSFER, 398),
        (TxKind.SERVICE_PROOF, 515),
        (TxKind.SERVICE_PAYMENT, 406),
    ],
)
def test_table_sizes(kind, size):
    assert nominal_size_of(kind) == size


def test_sync_size_rule():
    assert nominal_size_of(TxKind.SYNC, 0) == 64
    assert nominal_size_of(TxKind.MASS_SYNC, 10) == 64 + 80


def test_classify_home_chain():
    assert classify(make_tx(1, TxKind.SERVICE_PROOF, VALID_STUB, 0)) is HomeChain.SIDE
    assert classify(make_tx(2, TxKind.TRANSFER)) is HomeChain.MAIN


def test_classify_rejects_bad_annotation():
    tx = Transaction(1, TxKind.TRANSFER, 0b01, 398)
    with pytest.raises(MalformedTransaction):
        classify(tx)


@pytest.mark.parametrize("kind", list(TxKind))
def test_annotation_rule(kind):
    tx = make_tx(1, kind) if kind not in (TxKind.SYNC, TxKind.MASS_SYNC) else None
    if tx is None:
        return
    assert (tx.annotation == 0b11) == (kind in DEFAULT_SIDE_KINDS)


def test_encoding_is_length_prefixed_and_stable():
    a = encode((1, "x", b"\x00"))
    assert a == encode((1, "x", b"\x00"))
    assert encode((1, "xy")) != encode((1, "x", "y"))
    assert len(digest("anything")) == 32


def test_block_hash_covers_txs():
    txs = [make_tx(i, TxKind.TRANSFER) for i in range(3)]
    a = Block.create(kind=BlockKind.MAIN, height=1, epoch=0, round_in_epoch=0, prev_ref=GENESIS_REF, txs=txs)
    b = Block.create(kind=BlockKind.MAIN, height=1, epoch=0, round_in_epoch=0, prev_ref=GENESIS_REF, txs=txs[:2])
    assert a.block_hash != b.block_hash
    assert a.storage_bytes() == BLOCK_HEADER_BYTES + 3 * 398


def test_block_capacity_enforced():
    txs = [make_tx(i, TxKind.TRANSFER) for i in range(3)]
    with pytest.raises(ValueError):
        Block.create(
            kind=BlockKind.MAIN, height=1, epoch=0, round_in_epoch=0, prev_ref=GENESIS_REF, txs=txs, capacity_bytes=700
        )


def test_summary_state_rejects_zero_counts():
    with pytest.raises(ValueError):
        SummaryState({1: 0})


def test_merge_adds_counts_and_keeps_last_dispute():
    a = SummaryState({1: 30}, {1: 4}, {1: (b"a", "valid")})
    b = SummaryState({1: 28, 2: 5}, {}, {1: (b"b", "invalid")})
    m = merge_summaries([a, b])
    assert dict(m.proof_counts) == {1: 58, 2: 5}
    assert dict(m.payment_totals) == {1: 4}
    assert m.disputes[1] == (b"b", "invalid")


@given(st.lists(st.dictionaries(st.integers(0, 20), st.integers(1, 50), max_size=6), max_size=5))
def test_merge_matches_recount(parts):
    merged = merge_summaries(SummaryState(p) for p in parts)
    expected: dict[int, int] = {}
    for p in parts:
        for k, v in p.items():
            expected[k] = expected.get(k, 0) + v
    assert dict(merged.proof_counts) == expected


def test_ledger_pop_bounded_by_k_conf():
    led = Ledger(HomeChain.MAIN, k_conf=3)
    for h in range(6):
        led.append(Block.create(kind=BlockKind.MAIN, height=h, epoch=0, round_in_epoch=0, prev_ref=GENESIS_REF))
    with pytest.raises(RollbackRefused):
        led.pop(4)
    assert [b.height for b in led.pop(3)] == [3, 4, 5]
    assert led.height == 2
    assert led.confirmed_height() == -1


def test_clock_epoch_boundaries():
    c = Clock(3, 10)
    assert c.sc_rounds_per_epoch == 30
    for _ in range(10):
        c.advance_mc()
    assert c.epoch == 1 and c.is_epoch_boundary() and c.sc_round == 30


def test_node_identity_ignores_behavior():
    from dualchain.domain import Behavior

    assert NodeId(3) == NodeId(3).with_behavior(Behavior.LAZY)


def test_json_view_is_camel_case():
    tx = make_tx(7, TxKind.SERVICE_PROOF, VALID_STUB, 3, 2)
    view = to_json(tx)
    assert view["txId"] == 7 and view["contractId"] == 3 and view["createdAtRound"] == 2
    json.dumps(view)
