"""File-storage market traffic, payment modalities and the rollup baseline."""

from __future__ import annotations

import enum
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from dualchain import por
from dualchain.domain import (
    VALID_STUB,
    MB,
    CommitPayload,
    ContractTerms,
    PaymentPayload,
    ProposePayload,
    RealProof,
    SummaryState,
    SyncPayload,
    Transaction,
    TransferPayload,
    TxKind,
    DEFAULT_SIDE_KINDS,
    NOMINAL_SIZES,
    make_tx,
)

log = logging.getLogger(__name__)


class PaymentModality(enum.Enum):
    CONTRACT_END = "contract_end"
    EPOCH_END = "epoch_end"
    EACH_MC_ROUND = "each_mc_round"


class ContractStatus(enum.Enum):
    PROPOSED = "proposed"
    ACTIVE = "active"
    EXPIRED = "expired"


@dataclass
class Contract:
    id: int
    client: int
    server: int
    fee_per_round: int
    duration_rounds: int
    start_round: int
    generation: int = 0
    status: ContractStatus = ContractStatus.ACTIVE
    file_tag: object = None
    proofs_issued: int = 0  # valid proofs in the current generation

    @property
    def end_round(self) -> int:
        return self.start_round + self.duration_rounds


@dataclass(frozen=True)
class TrafficMix:
    """Transaction mix. Operational traffic is folded into the service class."""

    payment: float = 0.02
    service: float = 0.96
    operational: float = 0.02
    basis: str = "count"  # or "bytes"

    def __post_init__(self) -> None:
        if abs(self.payment + self.service + self.operational - 1.0) > 1e-9:
            raise ValueError("mix fractions must sum to 1")
        if not 0 <= self.payment < 1:
            raise ValueError("payment fraction must lie in [0, 1)")
        if self.basis not in ("count", "bytes"):
            raise ValueError("basis is 'count' or 'bytes'")

    @classmethod
    def with_payment_fraction(cls, f: float, basis: str = "count") -> "TrafficMix":
        return cls(payment=f, service=1.0 - f, operational=0.0, basis=basis)


def transfers_needed(mix: TrafficMix, other_count: int, other_bytes: int) -> int:
    """Transfers that make payments the configured share of the round."""
    ratio = mix.payment / (1.0 - mix.payment)
    if mix.basis == "bytes":
        return round(ratio * other_bytes / NOMINAL_SIZES[TxKind.TRANSFER])
    return round(ratio * other_count)


def sample_duration(seed: int, contract_id: int, generation: int, mean: float, sigma: float) -> int:
    # per-contract stream so durations do not depend on chain timing
    r = random.Random(f"{seed}:{contract_id}:{generation}")
    return max(1, round(r.gauss(mean, sigma)))


@dataclass(frozen=True)
class WorkloadConfig:
    contracts: int
    nodes: int
    duration_mean: float = 40.0
    duration_sigma: float = 20.0
    fee_per_round: int = 1
    mix: TrafficMix = TrafficMix()
    modality: PaymentModality = PaymentModality.CONTRACT_END
    seed: int = 0
    side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS
    missing_proof_rate: float = 0.0
    # contracts whose proofs are real pairing-based PoRs instead of stubs
    real_por_contracts: int = 0
    por_file_bytes: int = 256
    por_sectors: int = 2


@dataclass
class RoundTraffic:
    proofs: list[Transaction] = field(default_factory=list)
    contract_txs: list[Transaction] = field(default_factory=list)  # propose, commit, payments
    transfers: list[Transaction] = field(default_factory=list)

    def all(self) -> list[Transaction]:
        return self.proofs + self.contract_txs + self.transfers

    def __len__(self) -> int:
        return len(self.proofs) + len(self.contract_txs) + len(self.transfers)


class StorageMarket:
    """Contract table and per-round traffic generation.

    Contracts start active at genesis. An active contract emits one proof
    per round until its duration runs out. It then renews with a fresh
    propose/commit pair and becomes active again the round after the commit
    is confirmed.
    """

    def __init__(self, config: WorkloadConfig, next_tx_id: Callable[[], int]) -> None:
        self.config = config
        self._ids = next_tx_id
        self._rng = random.Random(f"{config.seed}:market")
        self.contracts = [
            Contract(
                id=cid,
                client=config.nodes + cid,
                server=cid % config.nodes,
                fee_per_round=config.fee_per_round,
                duration_rounds=sample_duration(config.seed, cid, 0, config.duration_mean, config.duration_sigma),
                start_round=0,
            )
            for cid in range(config.contracts)
        ]
        for c in self.contracts[: config.real_por_contracts]:
            rng = random.Random(f"{config.seed}:por:{c.id}")
            keys = por.PorKeys.generate(rng)
            c.file_tag = (keys, por.preprocess(rng.randbytes(config.por_file_bytes), config.por_sectors, keys, rng))
        self.generated = 0
        self.activations: dict[int, int] = {}  # round -> newly activated contracts
        self.missed_proofs: dict[int, int] = {}

    def storage_weights(self) -> dict[int, int]:
        """Mining power follows the number of contracts a node serves."""
        w: dict[int, int] = {}
        for c in self.contracts:
            w[c.server] = w.get(c.server, 0) + 1
        return w

    def genesis_escrows(self) -> dict[int, int]:
        return {c.id: c.fee_per_round * c.duration_rounds for c in self.contracts}

    def active_count(self) -> int:
        return sum(1 for c in self.contracts if c.status is ContractStatus.ACTIVE)

    def _tx(self, kind: TxKind, payload, cid: Optional[int], round_no: int) -> Transaction:
        self.generated += 1
        return make_tx(self._ids(), kind, payload, cid, round_no, self.config.side_kinds)

    def generate_round(self, round_no: int, challenge_seed: bytes = b"") -> RoundTraffic:
        cfg = self.config
        out = RoundTraffic()
        for c in self.contracts:
            if c.status is ContractStatus.ACTIVE and round_no >= c.end_round:
                self._expire(c, round_no, out)
            if c.status is ContractStatus.ACTIVE and round_no >= c.start_round:
                valid = not (cfg.missing_proof_rate and self._rng.random() < cfg.missing_proof_rate)
                if valid:
                    payload = VALID_STUB if c.file_tag is None else self._real_proof(c, round_no, challenge_seed)
                    out.proofs.append(self._tx(TxKind.SERVICE_PROOF, payload, c.id, round_no))
                    c.proofs_issued += 1
                else:
                    self.missed_proofs[c.id] = self.missed_proofs.get(c.id, 0) + 1
        other = len(out.proofs) + len(out.contract_txs)
        other_bytes = sum(t.nominal_size for t in out.proofs) + sum(t.nominal_size for t in out.contract_txs)
        out.transfers = self.transfers(round_no, transfers_needed(cfg.mix, other, other_bytes))
        return out

    def _real_proof(self, c: Contract, round_no: int, seed: bytes) -> RealProof:
        keys, pf = c.file_tag
        seed = seed or round_no.to_bytes(32, "big")
        challenge = por.derive_challenge(seed, pf.n)
        bundle = por.PorBundle(keys.v, keys.public_key, pf.tag, por.prove(pf, challenge, round_no))
        return RealProof(bundle, seed)

    def transfers(self, round_no: int, count: int) -> list[Transaction]:
        n = self.config.nodes
        out = []
        for _ in range(count):
            a, b = self._rng.randrange(n), self._rng.randrange(n)
            out.append(self._tx(TxKind.TRANSFER, TransferPayload(a, b, 1), None, round_no))
        return out

    def payment_tx(self, cid: int, amount: int, proof_count: int, round_no: int, settled: bool = False) -> Transaction:
        return self._tx(TxKind.SERVICE_PAYMENT, PaymentPayload(amount, proof_count, settled), cid, round_no)

    def _expire(self, c: Contract, round_no: int, out: RoundTraffic) -> None:
        cfg = self.config
        c.status = ContractStatus.EXPIRED
        if cfg.modality is PaymentModality.CONTRACT_END:
            for amount in dispense_storage_payments(cfg.modality, c, [c.proofs_issued]):
                out.contract_txs.append(self.payment_tx(c.id, amount, c.proofs_issued, round_no))
        c.generation += 1
        c.duration_rounds = sample_duration(cfg.seed, c.id, c.generation, cfg.duration_mean, cfg.duration_sigma)
        c.proofs_issued = 0
        terms = ContractTerms(c.fee_per_round, c.duration_rounds, c.generation)
        out.contract_txs.append(self._tx(TxKind.ASK, ProposePayload(c.client, c.server, terms), c.id, round_no))
        out.contract_txs.append(self._tx(TxKind.AGREEMENT_COMMIT, CommitPayload(c.server, c.client, terms), c.id, round_no))
        c.status = ContractStatus.PROPOSED

    def on_commit_confirmed(self, tx: Transaction, round_no: int) -> None:
        """Activate the contract the round after its commit is confirmed."""
        c = self.contracts[tx.contract_id]
        if c.status is not ContractStatus.PROPOSED or tx.payload.terms.generation != c.generation:
            return  # re-confirmation after a rollback
        c.status = ContractStatus.ACTIVE
        c.start_round = round_no + 1
        self.activations[round_no + 1] = self.activations.get(round_no + 1, 0) + 1


def dispense_storage_payments(
    modality: PaymentModality,
    contract: Contract,
    proof_counts: Sequence[int],
    escrow: Optional[int] = None,
) -> list[int]:
    """Payment amounts for a contract given its valid proofs per period.

    Under ContractEnd the whole contract is one period. Under EpochEnd and
    EachMcRound each entry of ``proof_counts`` is one epoch or one round.
    Amounts are truncated once the escrow runs dry.
    """
    fee = contract.fee_per_round
    if modality is PaymentModality.CONTRACT_END:
        amounts = [fee * sum(proof_counts)]
    else:
        amounts = [fee * n for n in proof_counts]
    if escrow is None:
        return amounts
    out = []
    for a in amounts:
        paid = min(a, escrow)
        if paid < a:
            log.info("escrow of contract %d exhausted: wanted %d, paid %d", contract.id, a, paid)
        escrow -= paid
        out.append(paid)
    return out


# ---------------------------------------------------------------------------
# optimistic rollup baseline


@dataclass
class OpBoostBatch:
    batch_id: int
    formed_round: int
    process_round: int
    tx_count: int
    size_bytes: int
    state: SummaryState
    queued_rounds: list[int]

    def finality_round(self, contestation: int) -> int:
        return self.process_round + contestation


@dataclass
class OpBoostState:
    batch_capacity: int = int(1.5 * MB)
    batch_delay_mc_rounds: int = 3
    contestation_mc_rounds: int = 50_400
    pending: deque = field(default_factory=deque)
    pending_batches: list[OpBoostBatch] = field(default_factory=list)
    finalized_batches: list[OpBoostBatch] = field(default_factory=list)
    next_batch: int = 0

    def idle(self) -> bool:
        return not self.pending and not self.pending_batches


def run_opboost_round(
    state: OpBoostState,
    service_txs: Iterable[Transaction],
    round_no: int,
    next_tx_id: Callable[[], int],
    side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS,
) -> tuple[list[OpBoostBatch], list[Transaction]]:
    """Advance the rollup by one mainchain round.

    New service traffic joins the queue, one batch of at most
    ``batch_capacity`` bytes is cut, and batches whose processing delay has
    elapsed post a state-change record for the mainchain. Returns the
    batches processed this round and their records.
    """
    for tx in service_txs:
        state.pending.append((tx, round_no))
    used = 0
    taken: list[tuple[Transaction, int]] = []
    while state.pending and used + state.pending[0][0].nominal_size <= state.batch_capacity:
        entry = state.pending.popleft()
        taken.append(entry)
        used += entry[0].nominal_size
    if taken:
        proofs: dict[int, int] = {}
        for tx, _ in taken:
            if tx.kind is TxKind.SERVICE_PROOF:
                proofs[tx.contract_id] = proofs.get(tx.contract_id, 0) + 1
        state.pending_batches.append(
            OpBoostBatch(
                state.next_batch,
                round_no,
                round_no + state.batch_delay_mc_rounds,
                len(taken),
                used,
                SummaryState(proofs),
                [q for _, q in taken],
            )
        )
        state.next_batch += 1
    done = [b for b in state.pending_batches if b.process_round <= round_no]
    state.pending_batches = [b for b in state.pending_batches if b.process_round > round_no]
    records = []
    for b in done:
        payload = SyncPayload(((-1 - b.batch_id, b.batch_id.to_bytes(32, "big")),), b.state, origin="opboost")
        records.append(make_tx(next_tx_id(), TxKind.SYNC, payload, None, round_no, side_kinds))
        state.finalized_batches.append(b)
    return done, records
