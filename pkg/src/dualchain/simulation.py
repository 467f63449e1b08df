"""Deterministic round-by-round simulation of the market with or without a sidechain.

Each mainchain round does three things. It generates the round's traffic
and routes it by home chain. It runs the sidechain rounds that fall inside
it. It then mines one mainchain block. Epoch boundaries elect committees,
and the epoch's last sidechain round turns out the summary-block and the
sync. After ``run_len_mc_rounds`` no new traffic is generated, and rounds
go on until every queue is empty and every epoch is synced and pruned.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

from dualchain import mainchain as mc
from dualchain import sidechain as sc
from dualchain.committees import EpochOutcome, EpochRunner, assign_behaviors, elect_committees, race_guard
from dualchain.config import Mode, RunConfig
from dualchain.domain import (
    SIDE_ANNOTATION,
    SYNC_KINDS,
    Block,
    BlockKind,
    HomeChain,
    Ledger,
    NodeId,
    Transaction,
    PaymentPayload,
    TxKind,
    make_tx,
    merge_summaries,
)
from dualchain.workload import (
    OpBoostState,
    PaymentModality,
    StorageMarket,
    WorkloadConfig,
    run_opboost_round,
)

log = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    pass


@dataclass
class _BlockStats:
    mc_round: int
    txs: int
    latency_sum: float


@dataclass
class MetricsReport:
    mode: str
    rounds: int
    throughput_per_mc_round: float
    mc_throughput: float
    sc_throughput: float
    mc_latency: float
    sc_latency: float
    confirmation_time: float
    finality_mc_rounds: float
    chain_bytes: dict[str, int]
    serviced_contracts_per_round: float
    total_confirmed: int
    mc_confirmed: int
    sc_confirmed: int
    takeovers: int
    autorecovery_failures: int
    leader_changes: int
    rejected_syncs: int
    escrow_truncations: int
    summary_variables_digest: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "rounds": self.rounds,
            "throughputPerMcRound": self.throughput_per_mc_round,
            "mcThroughput": self.mc_throughput,
            "scThroughput": self.sc_throughput,
            "mcLatency": self.mc_latency,
            "scLatency": self.sc_latency,
            "confirmationTimeMcRounds": self.confirmation_time,
            "finalityMcRounds": self.finality_mc_rounds,
            "chainBytes": dict(self.chain_bytes),
            "servicedContractsPerRound": self.serviced_contracts_per_round,
            "totalConfirmed": self.total_confirmed,
            "mcConfirmed": self.mc_confirmed,
            "scConfirmed": self.sc_confirmed,
            "takeovers": self.takeovers,
            "autorecoveryFailures": self.autorecovery_failures,
            "leaderChanges": self.leader_changes,
            "rejectedSyncs": self.rejected_syncs,
            "escrowTruncations": self.escrow_truncations,
            "summaryVariablesDigest": self.summary_variables_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class SimulationResult:
    config: RunConfig
    metrics: MetricsReport
    series: dict[str, list]
    epochs: list[dict]
    summary_variables: tuple
    main_ledger: Ledger
    side: Optional[sc.SidechainState]

    def traces(self) -> dict[str, Any]:
        return {"series": self.series, "epochs": self.epochs}


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


class Simulation:
    def __init__(self, config: RunConfig) -> None:
        config.validate()
        self.cfg = config
        self._ids = itertools.count(1)
        self.next_id = lambda: next(self._ids)
        side_kinds = config.side_kind_set
        self.market = StorageMarket(
            WorkloadConfig(
                contracts=config.contracts,
                nodes=config.nodes,
                duration_mean=config.duration_mean,
                duration_sigma=config.duration_sigma,
                fee_per_round=config.fee_per_round,
                mix=config.mix,
                modality=config.modality,
                seed=config.seed,
                side_kinds=side_kinds,
                missing_proof_rate=config.missing_proof_rate,
                real_por_contracts=config.real_por_contracts,
            ),
            self.next_id,
        )
        base_nodes = [NodeId(i) for i in range(config.nodes)]
        self.population = assign_behaviors(
            base_nodes, config.p_lazy, config.p_malicious, random.Random(f"{config.seed}:behaviors")
        )
        weights = self.market.storage_weights()
        power = {n: float(weights.get(n.index, 0)) for n in self.population}
        if not any(power.values()):
            power = {n: 1.0 for n in self.population}
        is_cb = config.mode is Mode.CHAINBOOST
        self.main = mc.MainchainState(
            Ledger(HomeChain.MAIN, config.k_conf),
            power,
            payment_quota=config.payment_quota,
            dispense_on_sync=is_cb and config.modality is not PaymentModality.CONTRACT_END,
        )
        for cid, amount in self.market.genesis_escrows().items():
            self.main.escrows[cid] = amount
            self.main.escrow_funded[cid] = amount
            self.main.contract_fees[cid] = config.fee_per_round
        genesis = self.main.ledger.blocks[0]
        self.side = (
            sc.SidechainState.create(config.sc_block_bytes, config.sc_rounds_per_epoch, genesis, config.k_conf)
            if is_cb
            else None
        )
        self.opboost = (
            OpBoostState(config.opboost_batch_bytes, config.opboost_batch_delay, config.opboost_contestation)
            if config.mode is Mode.OPBOOST
            else None
        )
        self.rollbacks = defaultdict(list)
        for e in config.fault_script.rollbacks():
            self.rollbacks[e.round].append(e.depth)

        self.runner: Optional[EpochRunner] = None
        self.outstanding: list[Block] = []
        self.pending_records: list[tuple[int, Transaction]] = []
        self.block_stats: dict[int, _BlockStats] = {}
        self.sc_round_txs: dict[int, int] = defaultdict(int)
        self.sc_latency_sum = 0.0
        self.sc_confirmed = 0
        self.sc_tx_ids: set[int] = set()
        self.op_round_txs: dict[int, int] = defaultdict(int)
        self.op_latency_sum = 0.0
        self.op_confirmed = 0
        self.active_series: list[int] = []
        self.epoch_log: list[dict] = []
        self.takeovers = 0
        self.failures = 0
        self.leader_changes = 0
        self.unpaid_proofs: dict[int, int] = defaultdict(int)

    # -- traffic --------------------------------------------------------------

    def _route(self, txs: list[Transaction], t: int) -> list[Transaction]:
        """Queue traffic on its home chain; returns what goes to the rollup."""
        mode = self.cfg.mode
        rollup = []
        for tx in txs:
            if mode is Mode.CHAINBOOST and tx.annotation == SIDE_ANNOTATION:
                self.side.enqueue(tx, t)
            elif mode is Mode.OPBOOST and tx.kind is TxKind.SERVICE_PROOF:
                rollup.append(tx)
            else:
                self.main.enqueue(tx, t)
        return rollup

    def _base_payments(self, t: int) -> list[Transaction]:
        """Periodic payments without a sidechain, counted from confirmed blocks."""
        cfg = self.cfg
        m = cfg.modality
        due = (m is PaymentModality.EACH_MC_ROUND) or (
            m is PaymentModality.EPOCH_END and t % cfg.epoch_len_mc_rounds == cfg.epoch_len_mc_rounds - 1
        )
        if not due or cfg.mode is Mode.CHAINBOOST:
            return []
        out = []
        for cid in sorted(self.unpaid_proofs):
            n = self.unpaid_proofs[cid]
            if n > 0:
                fee = self.market.contracts[cid].fee_per_round
                out.append(self.market.payment_tx(cid, fee * n, n, t))
        self.unpaid_proofs.clear()
        return out

    # -- sidechain ------------------------------------------------------------

    def _sidechain_round(self, t: int, j: int) -> None:
        cfg = self.cfg
        k = cfg.sc_rounds_per_epoch
        r = cfg.sc_rounds_per_mc_round
        g = t * r + j
        slot = g % k
        epoch = g // k
        ticks = cfg.sc_round_ticks
        if slot == 0:
            if t >= cfg.run_len_mc_rounds and not self.side.pending_tx_side and not self.outstanding:
                return
            committees = elect_committees(
                self.main.ledger,
                cfg.kappa,
                cfg.cs,
                self.population,
                epoch,
                cfg.seed,
                theta_s=cfg.theta_s,
            )
            self.runner = EpochRunner(
                epoch,
                committees,
                self.side,
                cfg.timing,
                cfg.fault_script,
                random.Random(f"{cfg.seed}:epoch:{epoch}"),
                self.next_id,
                self.outstanding,
                cfg.side_kind_set,
                cfg.lazy_mode,
                cfg.malicious_mode,
                start_time=g * ticks,
                mc_round_of=lambda tick: tick // (r * ticks),
            )
        if self.runner is None or self.runner.epoch != epoch:
            return
        self.runner.run_slot(slot, g * ticks, g)
        if TxKind.AGREEMENT_COMMIT in cfg.side_kind_set:
            for b in self.side.current_epoch_meta_blocks:
                for tx in b.txs:
                    if tx.kind is TxKind.AGREEMENT_COMMIT:
                        self.market.on_commit_confirmed(tx, t)
        if slot == k - 1:
            self._close_epoch(self.runner.finish(), t)
            self.runner = None

    def _close_epoch(self, out: EpochOutcome, t: int) -> None:
        cfg = self.cfg
        r = cfg.sc_rounds_per_mc_round
        self.takeovers += len(out.takeovers)
        self.leader_changes += out.leader_changes
        entry = {
            "epoch": out.epoch,
            "closedAtMcRound": t,
            "takeovers": [
                {
                    "failingRank": e.failing_rank,
                    "newRank": e.new_rank,
                    "cause": e.cause,
                    "stallReference": e.stall_reference,
                    "detectionTime": e.detection_time,
                    "recoveryTime": e.recovery_time,
                    "backupIndex": e.backup_index,
                }
                for e in out.takeovers
            ],
            "leaderChanges": out.leader_changes,
            "failure": out.failure.cause if out.failure else None,
            "missedSync": out.missed_sync,
            "syncKind": out.sync.kind.value if out.sync else None,
        }
        self.epoch_log.append(entry)
        if out.failure is not None:
            self.failures += 1
            log.warning("epoch %d: autorecovery failed (%s)", out.epoch, out.failure.cause)
            return
        metas = self.side.meta_by_epoch.get(out.epoch, [])
        if sc.summarize(metas).aggregates() != out.summary.summary.aggregates():
            raise InvariantViolation(f"epoch {out.epoch}: summary-block disagrees with its meta-blocks")
        for b in metas:
            published = b.sc_round / r
            self.sc_round_txs[b.sc_round // r] += len(b.txs)
            for tx in b.txs:
                if tx.tx_id in self.sc_tx_ids:
                    raise InvariantViolation(f"tx {tx.tx_id} published twice on the sidechain")
                self.sc_tx_ids.add(tx.tx_id)
                self.sc_latency_sum += published - out.queued_at[tx.tx_id]
            self.sc_confirmed += len(b.txs)
        verified = []
        for tx in out.broadcast_syncs:
            if sc.verify_sync_transaction(self.side, tx):
                verified.append(tx)
            else:
                self.main.rejected_syncs.append((tx, "inconsistent with summary-block"))
        accepted, rejected = race_guard(verified)
        self.main.rejected_syncs.extend(rejected)
        for tx in accepted:
            self.main.enqueue(tx, t)
        if out.sync is not None and out.sync in accepted:
            self.outstanding = []
        else:
            self.outstanding = [*self.outstanding, out.summary]

    # -- mainchain ------------------------------------------------------------

    def _verify_sync(self, tx: Transaction) -> bool:
        if tx.payload.origin == "opboost":
            return True
        return self.side is not None and sc.verify_sync_transaction(self.side, tx)

    def _mine(self, t: int) -> None:
        main = self.main
        tip = main.ledger.tip
        leader = mc.select_round_leader(main, mc.SortitionSeed.from_block(tip))
        block = mc.assemble_main_block(main, self.cfg.mc_block_bytes, leader, t, self._verify_sync)
        # syncs are protocol overhead and stay out of the traffic metrics
        lat = 0.0
        n = 0
        for tx in block.txs:
            if tx.kind not in SYNC_KINDS:
                lat += t - main.queued_round[tx.tx_id]
                n += 1
        self.block_stats[block.height] = _BlockStats(t, n, lat)
        settled = mc.apply_main_block(main, block)
        base = self.cfg.mode is not Mode.CHAINBOOST
        for tx in block.txs:
            if tx.kind is TxKind.AGREEMENT_COMMIT:
                self.market.on_commit_confirmed(tx, t)
            elif base and tx.kind is TxKind.SERVICE_PROOF:
                self.unpaid_proofs[tx.contract_id] += 1
        for cid, amount in settled:
            if amount > 0:
                # miners record the dispensed amount; the escrow already moved
                payload = PaymentPayload(amount, 0, settled=True)
                rec = make_tx(self.next_id(), TxKind.SERVICE_PAYMENT, payload, cid, t, self.cfg.side_kind_set)
                self.pending_records.append((block.height, rec))

    def _rollback(self, depth: int, t: int) -> None:
        ev = mc.inject_rollback(self.main, depth)
        removed = set(ev.removed_heights)
        for h in removed:
            self.block_stats.pop(h, None)
        # records for syncs that no longer exist are reissued on re-inclusion
        self.pending_records = [(h, rec) for h, rec in self.pending_records if h not in removed]
        log.info("round %d: rolled back %d blocks", t, ev.depth)
        for tx in ev.rolled_back_syncs:
            if tx.payload.origin == "opboost":
                self.main.pending_syncs.appendleft(mc.QueuedTx(tx, self.main.queued_round[tx.tx_id], True))
                continue
            known = {b.epoch for b in self.outstanding}
            for epoch, _ in tx.payload.summary_refs:
                if epoch not in known and epoch in self.side.summaries:
                    self.outstanding.append(self.side.summaries[epoch])
            self.outstanding.sort(key=lambda b: b.epoch)
        if self.runner is not None:
            # the running epoch's sync must cover what was just lost
            self.runner.outstanding = list(self.outstanding)

    # -- loop -----------------------------------------------------------------

    def _drained(self, t: int) -> bool:
        cfg = self.cfg
        if t < cfg.run_len_mc_rounds or self.main.pending_count() or self.pending_records:
            return False
        if self.opboost is not None and not self.opboost.idle():
            return False
        if self.side is not None:
            if self.side.pending_tx_side or self.runner is not None or self.outstanding:
                return False
            if any(self.side.meta_by_epoch.values()):
                return False
        return not any(r > t for r in self.rollbacks)

    def run(self) -> SimulationResult:
        cfg = self.cfg
        t = 0
        limit = cfg.run_len_mc_rounds + cfg.max_drain_rounds
        while True:
            if t >= limit:
                raise InvariantViolation(f"queues did not drain within {cfg.max_drain_rounds} extra rounds")
            if self.pending_records:
                self.main.enqueue_many((rec for _, rec in self.pending_records), t)
                self.pending_records = []
            rollup: list[Transaction] = []
            if t < cfg.run_len_mc_rounds:
                # challenges come from the hash of the latest mainchain block
                traffic = self.market.generate_round(t, self.main.ledger.tip.block_hash)
                self.active_series.append(self.market.active_count())
                rollup = self._route(traffic.contract_txs + traffic.proofs + traffic.transfers, t)
            self._route(self._base_payments(t), t)
            if self.side is not None:
                for j in range(cfg.sc_rounds_per_mc_round):
                    self._sidechain_round(t, j)
            if self.opboost is not None:
                done, records = run_opboost_round(self.opboost, rollup, t, self.next_id, cfg.side_kind_set)
                for b in done:
                    self.op_round_txs[b.formed_round] += b.tx_count
                    self.op_confirmed += b.tx_count
                    self.op_latency_sum += sum(b.process_round - q for q in b.queued_rounds)
                self.main.enqueue_many(records, t)
            self._mine(t)
            for depth in self.rollbacks.get(t, ()):
                self._rollback(depth, t)
            if self.side is not None:
                sc.prune(self.side, self.main.ledger, self.main.synced_epochs)
            t += 1
            if self._drained(t):
                break
        self._check_invariants()
        return self._result(t)

    # -- end of run -------------------------------------------------------------

    def _check_invariants(self) -> None:
        main = self.main
        seen: set[int] = set()
        non_market = 0
        for b in main.ledger.blocks:
            for tx in b.txs:
                if tx.tx_id in seen or tx.tx_id in self.sc_tx_ids:
                    raise InvariantViolation(f"tx {tx.tx_id} confirmed more than once")
                seen.add(tx.tx_id)
                if tx.kind in SYNC_KINDS or (tx.kind is TxKind.SERVICE_PAYMENT and tx.payload.settled):
                    non_market += 1
        if not mc.escrow_conserved(main):
            raise InvariantViolation("escrow accounting does not balance")
        placed = len(seen) - non_market + len(self.sc_tx_ids) + self.op_confirmed
        if placed != self.market.generated:
            raise InvariantViolation(f"traffic conservation: {placed} placed, {self.market.generated} generated")
        if self.side is not None:
            synced = [s for e, s in sorted(self.side.summaries.items()) if e >= 0]
            folded = merge_summaries(b.summary for b in synced).aggregates()
            if folded != main.ledger.summary_aggregates():
                raise InvariantViolation("summary variables differ from the fold of all summary-blocks")
            for b in sc.walk_summaries(self.side, self.side.last_summary):
                if b.kind is not BlockKind.SUMMARY:
                    raise InvariantViolation(f"summary walk reached a {b.kind.value} block")

    def _result(self, rounds: int) -> SimulationResult:
        cfg = self.cfg
        main = self.main
        mc_per_round: dict[int, int] = defaultdict(int)
        mc_lat = 0.0
        mc_n = 0
        for st in self.block_stats.values():
            mc_per_round[st.mc_round] += st.txs
            mc_lat += st.latency_sum
            mc_n += st.txs
        side_per_round = self.sc_round_txs if self.side is not None else self.op_round_txs
        side_n = self.sc_confirmed if self.side is not None else self.op_confirmed
        side_lat = self.sc_latency_sum if self.side is not None else self.op_latency_sum
        mc_thr = _mean([v for v in mc_per_round.values() if v])
        side_thr = _mean([v for v in side_per_round.values() if v])
        mc_latency = mc_lat / mc_n if mc_n else 0.0
        side_latency = side_lat / side_n if side_n else 0.0
        total = mc_n + side_n
        if cfg.mode is Mode.OPBOOST:
            finality = side_latency + cfg.opboost_contestation
        elif cfg.mode is Mode.CHAINBOOST:
            finality = side_latency
        else:
            finality = mc_latency

        main_bytes = sum(b.storage_bytes() for b in main.ledger.blocks)
        side_bytes = self.side.permanent_bytes() if self.side is not None else 0
        pruned = self.side.pruned_bytes if self.side is not None else 0
        sv = main.ledger.summary_aggregates()
        sv_json = json.dumps([sorted(m.items()) for m in sv], sort_keys=True, default=str)
        metrics = MetricsReport(
            mode=cfg.mode.value,
            rounds=rounds,
            throughput_per_mc_round=mc_thr + side_thr,
            mc_throughput=mc_thr,
            sc_throughput=side_thr,
            mc_latency=mc_latency,
            sc_latency=side_latency,
            confirmation_time=(mc_lat + side_lat) / total if total else 0.0,
            finality_mc_rounds=finality,
            chain_bytes={"main": main_bytes, "side": side_bytes, "pruned": pruned},
            serviced_contracts_per_round=_mean(self.active_series),
            total_confirmed=total,
            mc_confirmed=mc_n,
            sc_confirmed=side_n,
            takeovers=self.takeovers,
            autorecovery_failures=self.failures,
            leader_changes=self.leader_changes,
            rejected_syncs=len(main.rejected_syncs),
            escrow_truncations=len(main.truncations),
            summary_variables_digest=hashlib.sha256(sv_json.encode()).hexdigest(),
        )
        series = {
            "mcRound": list(range(rounds)),
            "mcTxs": [mc_per_round.get(i, 0) for i in range(rounds)],
            "sideTxs": [side_per_round.get(i, 0) for i in range(rounds)],
            "activeContracts": self.active_series + [0] * (rounds - len(self.active_series)),
        }
        return SimulationResult(cfg, metrics, series, self.epoch_log, sv, main.ledger, self.side)


def run_simulation(config: RunConfig) -> SimulationResult:
    return Simulation(config).run()
