import itertools
import statistics

import pytest
from hypothesis import given, strategies as st

from dualchain import sidechain as sc
from dualchain.domain import Block, BlockKind, MB, NOMINAL_SIZES, TxKind, VALID_STUB, make_tx, DEFAULT_SIDE_KINDS
from dualchain.workload import (
    Contract,
    ContractStatus,
    OpBoostState,
    PaymentModality,
    StorageMarket,
    TrafficMix,
    WorkloadConfig,
    dispense_storage_payments,
    run_opboost_round,
    sample_duration,
    transfers_needed,
)


def market(contracts, **kw):
    kw.setdefault("nodes", max(1, contracts // 2))
    return StorageMarket(WorkloadConfig(contracts=contracts, **kw), itertools.count(1).__next__)


def test_default_round_mix():
    traffic = market(2000).generate_round(0)
    assert len(traffic.proofs) == 2000 and traffic.contract_txs == []
    # payments are 2% of the round's total count
    assert len(traffic.transfers) == round(0.02 / 0.98 * 2000) == 41


def test_no_contracts_no_service_traffic():
    traffic = market(0, nodes=4).generate_round(0)
    assert traffic.proofs == [] and traffic.contract_txs == []
    assert all(t.kind is TxKind.TRANSFER for t in traffic.all())


def test_byte_basis_mix():
    mix = TrafficMix.with_payment_fraction(0.1, "bytes")
    n = transfers_needed(mix, 1000, 1000 * 515)
    assert n == round(0.1 / 0.9 * 515_000 / NOMINAL_SIZES[TxKind.TRANSFER])


def test_mix_validation():
    with pytest.raises(ValueError):
        TrafficMix(0.5, 0.6, 0.0)
    with pytest.raises(ValueError):
        TrafficMix.with_payment_fraction(1.0)
    with pytest.raises(ValueError):
        TrafficMix(basis="weight")


def test_expiry_renews_contract():
    m = market(1, nodes=1)
    c = m.contracts[0]
    d = c.duration_rounds
    for r in range(d):
        assert len(m.generate_round(r).proofs) == 1
    traffic = m.generate_round(d)
    kinds = [t.kind for t in traffic.contract_txs]
    assert traffic.proofs == []
    assert kinds == [TxKind.SERVICE_PAYMENT, TxKind.ASK, TxKind.AGREEMENT_COMMIT]
    assert [t.nominal_size for t in traffic.contract_txs[1:]] == [645, 79]
    assert traffic.contract_txs[0].payload.amount == d
    assert c.status is ContractStatus.PROPOSED
    assert m.generate_round(d + 1).proofs == []
    m.on_commit_confirmed(traffic.contract_txs[2], d + 1)
    assert c.status is ContractStatus.ACTIVE and c.start_round == d + 2
    assert m.generate_round(d + 1).proofs == []
    assert len(m.generate_round(d + 2).proofs) == 1


def test_stale_commit_ignored():
    m = market(1, nodes=1)
    c = m.contracts[0]
    t = m.generate_round(c.duration_rounds).contract_txs[-1]
    m.on_commit_confirmed(t, 50)
    start = c.start_round
    m.on_commit_confirmed(t, 60)
    assert c.start_round == start


def _contract(duration=40, fee=1):
    return Contract(0, 1, 2, fee, duration, 0)


def test_contract_end_single_payment():
    assert dispense_storage_payments(PaymentModality.CONTRACT_END, _contract(), [40]) == [40]


def test_epoch_end_four_payments():
    assert dispense_storage_payments(PaymentModality.EPOCH_END, _contract(), [10] * 4) == [10, 10, 10, 10]


def test_escrow_truncation():
    assert dispense_storage_payments(PaymentModality.EPOCH_END, _contract(), [10, 10, 10], escrow=25) == [10, 10, 5]


def test_missing_proofs_reduce_epoch_payment():
    m = market(1, nodes=1, missing_proof_rate=0.5, seed=3, duration_mean=500, duration_sigma=0.0)
    proofs = [t for r in range(10) for t in m.generate_round(r).proofs]
    missed = m.missed_proofs.get(0, 0)
    assert missed > 0
    block = Block.create(kind=BlockKind.META, height=1, epoch=0, round_in_epoch=0, prev_ref=b"", txs=proofs)
    counted = sc.summarize([block]).proof_counts.get(0, 0)
    (paid,) = dispense_storage_payments(PaymentModality.EPOCH_END, m.contracts[0], [counted])
    assert paid == 10 - missed


@given(st.integers(1, 120), st.integers(1, 5), st.integers(1, 20))
def test_payment_equivalence(duration, fee, epoch_len):
    c = _contract(duration, fee)
    per_epoch = [min(epoch_len, duration - s) for s in range(0, duration, epoch_len)]
    totals = {
        PaymentModality.CONTRACT_END: sum(dispense_storage_payments(PaymentModality.CONTRACT_END, c, [duration])),
        PaymentModality.EPOCH_END: sum(dispense_storage_payments(PaymentModality.EPOCH_END, c, per_epoch)),
        PaymentModality.EACH_MC_ROUND: sum(dispense_storage_payments(PaymentModality.EACH_MC_ROUND, c, [1] * duration)),
    }
    assert set(totals.values()) == {fee * duration}


def test_duration_sampling():
    a = [sample_duration(1, cid, 0, 40, 20) for cid in range(4000)]
    assert a == [sample_duration(1, cid, 0, 40, 20) for cid in range(4000)]
    assert min(a) >= 1
    assert abs(statistics.mean(a) - 40) < 2
    assert sample_duration(1, 0, 0, 1, 50.0) >= 1


def test_generated_counter_counts_everything():
    m = market(300, nodes=100)
    total = sum(len(m.generate_round(r)) for r in range(80))
    assert m.generated == total


def test_storage_weights_follow_contracts():
    w = market(10, nodes=4).storage_weights()
    assert w == {0: 3, 1: 3, 2: 2, 3: 2}


def _proofs(n, start=0):
    return [make_tx(start + i, TxKind.SERVICE_PROOF, VALID_STUB, i % 5, 0, DEFAULT_SIDE_KINDS) for i in range(n)]


def test_opboost_batch_and_finality():
    st_ = OpBoostState()
    ids = itertools.count(10_000).__next__
    per_batch = int(1.5 * MB) // 515
    done, _ = run_opboost_round(st_, _proofs(per_batch + 100), 0, ids)
    assert done == [] and len(st_.pending) == 100
    for r in (1, 2):
        done, records = run_opboost_round(st_, [], r, ids)
        assert done == [] or r == 3
    done, records = run_opboost_round(st_, [], 3, ids)
    assert [b.tx_count for b in done] == [per_batch]
    assert done[0].finality_round(50_400) == 50_403
    assert records[0].payload.origin == "opboost"
    assert sum(records[0].payload.state.proof_counts.values()) == per_batch
    for r in range(4, 8):
        run_opboost_round(st_, [], r, ids)
    assert st_.idle()
    assert sum(b.tx_count for b in st_.finalized_batches) == per_batch + 100
