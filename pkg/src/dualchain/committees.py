"""Committee election and the autorecovery protocol.

Election walks the confirmed mainchain view backwards and collects distinct
miners. The primary takes the most recent ones and each backup starts from
an older offset. Early epochs, before enough history exists, fall back to a
seeded uniform draw.

:class:`EpochRunner` drives one epoch of sidechain production on an integer
tick clock. Members watch their leader and replace it after ``zeta`` of
silence or on an invalid proposal. Backups watch the sidechain and take over
when it stops growing (backup ``i`` waits ``i * eta``) or when an invalid
block gets committed.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from dualchain import sidechain as sc
from dualchain.consensus import (
    AgreementCertificate,
    MemberMode,
    NewLeader,
    Outcome,
    TakeoverCertificate,
    Thresholds,
    leader_change,
    run_agreement,
)
from dualchain.domain import (
    INVALID_STUB,
    Behavior,
    Block,
    Ledger,
    NodeId,
    SummaryState,
    SyncPayload,
    Transaction,
    TxKind,
    DEFAULT_SIDE_KINDS,
    make_tx,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Committee:
    rank: int
    members: tuple[NodeId, ...]
    leader_order: tuple[NodeId, ...]
    thresholds: Thresholds

    def position_of(self, node: NodeId) -> int:
        return self.leader_order.index(node)


@dataclass(frozen=True)
class EpochCommittees:
    epoch: int
    committees: tuple[Committee, ...]
    election_view: int
    bootstrap: bool = False

    @property
    def primary(self) -> Committee:
        return self.committees[0]


def elect_committees(
    main_ledger: Ledger,
    kappa: int,
    cs: int,
    population: Sequence[NodeId],
    epoch: int = 0,
    seed: int = 0,
    window_len: Optional[int] = None,
    theta_s: Optional[int] = None,
) -> EpochCommittees:
    if len(population) < (kappa + 1) * cs:
        raise ConfigError(f"population {len(population)} < (kappa+1)*cs = {(kappa + 1) * cs}")
    y = cs if window_len is None else window_len
    th = Thresholds.for_size(cs, theta_s)
    view = main_ledger.confirmed_height()
    confirmed = [b for b in main_ledger.confirmed_blocks() if b.proposer is not None]
    by_index = {n.index: n for n in population}
    rng = random.Random(f"{seed}:elect:{epoch}")

    if len(confirmed) < y:
        pool = rng.sample(list(population), (kappa + 1) * cs)
        groups = [pool[i * cs : (i + 1) * cs] for i in range(kappa + 1)]
        return EpochCommittees(
            epoch,
            tuple(Committee(r, tuple(g), tuple(g), th) for r, g in enumerate(groups)),
            view,
            bootstrap=True,
        )

    taken: set[int] = set()
    committees = []
    newest_first = confirmed[::-1]
    for rank in range(kappa + 1):
        members: list[NodeId] = []
        for block in newest_first[rank * y :]:
            idx = block.proposer.index
            if idx in taken:
                continue
            taken.add(idx)
            members.append(by_index.get(idx, block.proposer))
            if len(members) == cs:
                break
        if len(members) < cs:
            rest = sorted(n.index for n in population if n.index not in taken)
            for idx in rng.sample(rest, cs - len(members)):
                taken.add(idx)
                members.append(by_index[idx])
        committees.append(Committee(rank, tuple(members), tuple(members), th))
    return EpochCommittees(epoch, tuple(committees), view)


# ---------------------------------------------------------------------------
# fault scripts


class Trigger(enum.Enum):
    BEHAVIOR = "behavior"
    UNRESPONSIVE_LEADER = "unresponsive_leader"
    INVALID_META = "invalid_meta"
    INVALID_SUMMARY = "invalid_summary"
    INVALID_SYNC = "invalid_sync"
    MISSED_SYNC = "missed_sync"
    WITHHOLD = "withhold"
    ROLLBACK = "rollback"


@dataclass(frozen=True)
class FaultEntry:
    trigger: Trigger
    epoch: int = 0
    rank: int = 0
    assignments: Mapping[int, str] = field(default_factory=dict)
    slot: int = 0
    lazy_mode: str = "absent"
    malicious_mode: str = "collude"
    withhold: int = 0
    round: int = 0
    depth: int = 0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FaultEntry":
        return cls(
            trigger=Trigger(d.get("trigger", "behavior")),
            epoch=int(d.get("epoch", 0)),
            rank=int(d.get("rank", 0)),
            assignments={int(k): str(v) for k, v in d.get("assignments", {}).items()},
            slot=int(d.get("slot", 0)),
            lazy_mode=d.get("lazy_mode", d.get("lazyMode", "absent")),
            malicious_mode=d.get("malicious_mode", d.get("maliciousMode", "collude")),
            withhold=int(d.get("withhold", 0)),
            round=int(d.get("round", 0)),
            depth=int(d.get("depth", 0)),
        )


@dataclass(frozen=True)
class FaultScript:
    entries: tuple[FaultEntry, ...] = ()

    @classmethod
    def from_list(cls, items: Iterable[Mapping[str, Any]]) -> "FaultScript":
        return cls(tuple(FaultEntry.from_dict(d) for d in items))

    @classmethod
    def load(cls, path: str | Path) -> "FaultScript":
        return cls.from_list(json.loads(Path(path).read_text()))

    def for_committee(self, epoch: int, rank: int) -> list[FaultEntry]:
        return [
            e for e in self.entries if e.trigger is not Trigger.ROLLBACK and e.epoch == epoch and e.rank == rank
        ]

    def rollbacks(self) -> list[FaultEntry]:
        return [e for e in self.entries if e.trigger is Trigger.ROLLBACK]


_BEHAVIOR_MODES = {
    ("lazy", "absent"): MemberMode.LAZY_ABSENT,
    ("lazy", "accept"): MemberMode.LAZY_ACCEPT,
    ("malicious", "absent"): MemberMode.MALICIOUS_ABSENT,
    ("malicious", "collude"): MemberMode.MALICIOUS_COLLUDE,
    ("malicious", "obstruct"): MemberMode.MALICIOUS_OBSTRUCT,
}


def resolve_mode(behavior: str, lazy_mode: str = "absent", malicious_mode: str = "absent") -> MemberMode:
    if behavior == "honest":
        return MemberMode.HONEST
    if behavior == "lazy":
        return _BEHAVIOR_MODES[("lazy", lazy_mode)]
    if behavior == "malicious":
        return _BEHAVIOR_MODES[("malicious", malicious_mode)]
    return MemberMode(behavior)


# ---------------------------------------------------------------------------
# epoch runner


@dataclass(frozen=True)
class Timing:
    sc_round_ticks: int = 100
    zeta: int = 25
    eta: int = 50
    delta: int = 5
    epsilon: int = 1

    @property
    def t_agr(self) -> int:
        return 2 * self.delta

    def validate(self) -> None:
        if not self.zeta < self.eta:
            raise ConfigError("zeta must be strictly smaller than eta")
        if self.eta > self.sc_round_ticks:
            raise ConfigError("eta is bounded by the sc-round duration")
        if self.t_agr > self.sc_round_ticks:
            raise ConfigError("agreement time must fit in one sc-round")


@dataclass(frozen=True)
class TakeoverEvent:
    epoch: int
    failing_rank: int
    new_rank: int
    cause: str
    detection_time: int
    recovery_time: int
    stall_reference: int
    backup_index: int


@dataclass(frozen=True)
class AutorecoveryFailure:
    epoch: int
    time: int
    cause: str


@dataclass
class EpochOutcome:
    epoch: int
    summary: Optional[Block]
    sync: Optional[Transaction]
    broadcast_syncs: list[Transaction]
    takeovers: list[TakeoverEvent]
    failure: Optional[AutorecoveryFailure]
    missed_sync: bool
    leader_changes: int
    queued_at: dict[int, float]
    end_time: int


@dataclass
class _Attempt:
    kind: str  # published | malicious | stalled
    time: int
    block: Optional[Block] = None
    reason: str = ""


UNRESPONSIVE = "unresponsive-committee"
MISBEHAVING = "misbehaving-committee"

_INF = float("inf")


class EpochRunner:
    """Sidechain production for one epoch, with leader change and takeovers.

    ``run_slot`` is called once per sc-round with the tick at which the
    round starts; the last slot of the epoch produces the summary-block and
    the sync. ``run_unpaced`` produces blocks back to back and is used to
    measure recovery time.
    """

    def __init__(
        self,
        epoch: int,
        committees: EpochCommittees,
        side: sc.SidechainState,
        timing: Timing,
        script: FaultScript = FaultScript(),
        rng: Optional[random.Random] = None,
        next_tx_id: Optional[Callable[[], int]] = None,
        outstanding: Sequence[Block] = (),
        side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS,
        default_lazy: str = "absent",
        default_malicious: str = "absent",
        start_time: int = 0,
        mc_round_of: Optional[Callable[[int], int]] = None,
    ) -> None:
        self.epoch = epoch
        self.side = side
        self.timing = timing
        self.rng = rng or random.Random(epoch)
        self._ids = next_tx_id or _counter()
        self.outstanding = list(outstanding)
        self.side_kinds = side_kinds
        self.ranks: list[Committee] = list(committees.committees)
        self.k = side.epoch_sc_rounds
        self.now = start_time
        self.last_progress = start_time
        self.stall_ref = start_time
        self.leader_pos: dict[int, int] = {c.rank: 0 for c in self.ranks}
        self.pending_certs: list = []
        self.takeovers: list[TakeoverEvent] = []
        self.failure: Optional[AutorecoveryFailure] = None
        self.summary: Optional[Block] = None
        self.sync: Optional[Transaction] = None
        self.broadcast_syncs: list[Transaction] = []
        self.missed_sync = False
        self.leader_changes = 0
        self.queued_at: dict[int, float] = {}
        self._consumed: set[tuple[int, Trigger]] = set()
        self._mc_round_of = mc_round_of or (lambda tick: 0)
        self._fake_ids = 0
        self._entries = {c.rank: script.for_committee(epoch, c.rank) for c in self.ranks}
        self.modes = {c.rank: self._initial_modes(c, default_lazy, default_malicious) for c in self.ranks}

    # -- behaviour ----------------------------------------------------------

    def _initial_modes(self, c: Committee, lazy: str, malicious: str) -> dict[NodeId, MemberMode]:
        modes = {m: resolve_mode(m.behavior.value, lazy, malicious) for m in c.members}
        for e in self._entries[c.rank]:
            for pos, behavior in e.assignments.items():
                modes[c.leader_order[pos]] = resolve_mode(behavior, e.lazy_mode, e.malicious_mode)
        return modes

    def _entry(self, c: Committee, trigger: Trigger) -> Optional[FaultEntry]:
        for e in self._entries[c.rank]:
            if e.trigger is trigger:
                return e
        return None

    def _one_shot(self, c: Committee, trigger: Trigger, slot: Optional[int] = None) -> bool:
        if self.leader_pos[c.rank] != 0 or (c.rank, trigger) in self._consumed:
            return False
        e = self._entry(c, trigger)
        if e is None or (slot is not None and e.slot != slot):
            return False
        self._consumed.add((c.rank, trigger))
        return True

    def _leader_silent(self, c: Committee, block_index: int) -> bool:
        e = self._entry(c, Trigger.UNRESPONSIVE_LEADER)
        if e is None or self.leader_pos[c.rank] != 0 or block_index < e.slot:
            return False
        self.modes[c.rank][c.leader_order[0]] = MemberMode.LAZY_ABSENT
        return True

    def _withhold(self, c: Committee, leader: NodeId) -> int:
        # honest leaders never sit on a block
        e = self._entry(c, Trigger.WITHHOLD)
        if e is None or self.modes[c.rank][leader] is MemberMode.HONEST:
            return 0
        return e.withhold

    def _can_agree(self, c: Committee) -> bool:
        modes = self.modes[c.rank]
        return sum(modes[m].supports(True) for m in c.members) >= c.thresholds.theta_s

    def _deadline(self) -> float:
        for i in range(1, len(self.ranks)):
            if self._can_agree(self.ranks[i]):
                return self.stall_ref + i * self.timing.eta
        return _INF

    # -- public API -----------------------------------------------------------

    @property
    def failed(self) -> bool:
        return self.failure is not None

    @property
    def block_index(self) -> int:
        return len(self.side.current_epoch_meta_blocks)

    def run_slot(self, slot: int, slot_start: int, sc_round: int = 0) -> None:
        if self.failed or self.summary is not None:
            return
        is_summary = slot == self.k - 1
        slot_end = slot_start + self.timing.sc_round_ticks
        self.now = max(self.now, slot_start)
        self.stall_ref = max(self.last_progress, slot_start)
        while not self.failed:
            if not is_summary and self.now >= slot_end:
                return
            res = self._attempt(slot, is_summary, sc_round)
            if res.kind == "published":
                return
            if res.kind == "malicious":
                self._takeover(MISBEHAVING, res.time, res.block)
                if self.failed:
                    return
            else:
                self._takeover(UNRESPONSIVE, self.stall_ref, None)

    def run_unpaced(self, max_steps: int = 10_000) -> None:
        for _ in range(max_steps):
            if self.failed or self.summary is not None:
                return
            idx = self.block_index
            is_summary = idx == self.k - 1
            self.stall_ref = self.now
            res = self._attempt(idx, is_summary, idx)
            if res.kind == "malicious":
                self._takeover(MISBEHAVING, res.time, res.block)
            elif res.kind == "stalled":
                self._takeover(UNRESPONSIVE, self.stall_ref, None)
        raise RuntimeError("epoch did not terminate")

    def finish(self) -> EpochOutcome:
        if self.summary is None and not self.failed:
            self.failure = AutorecoveryFailure(self.epoch, self.now, "no summary-block")
        if self.failed:
            self._abandon_epoch()
        return EpochOutcome(
            epoch=self.epoch,
            summary=self.summary,
            sync=self.sync,
            broadcast_syncs=self.broadcast_syncs,
            takeovers=self.takeovers,
            failure=self.failure,
            missed_sync=self.missed_sync,
            leader_changes=self.leader_changes,
            queued_at=self.queued_at,
            end_time=self.now,
        )

    # -- one proposal attempt ---------------------------------------------------

    def _attempt(self, slot: int, is_summary: bool, sc_round: int) -> _Attempt:
        c = self.ranks[0]
        modes = self.modes[c.rank]
        t = self.now
        deadline = self._deadline()
        timing = self.timing
        while True:
            lp = self.leader_pos[c.rank]
            leader = c.leader_order[lp]
            if t >= deadline:
                return self._stalled(t, "deadline")
            silent = self._leader_silent(c, self.block_index) or not modes[leader].responsive
            withhold = self._withhold(c, leader)
            if silent or withhold > timing.zeta:
                # members time out on the leader and try to replace it
                lc = leader_change(c, lp, modes, self.epoch, None, timing.zeta, timing.t_agr)
                if isinstance(lc, NewLeader) and t + timing.zeta + lc.elapsed < min(deadline, t + (withhold or _INF)):
                    t += timing.zeta + lc.elapsed
                    self._install_leader(c, lc)
                    continue
                if silent:
                    return self._stalled(t + timing.zeta, "leader change stalled")

            block, valid = self._propose(c, leader, slot, is_summary, sc_round)
            agr = run_agreement(c, block.block_hash, valid, modes, self.epoch, slot, self.rng, timing.delta)
            t += max(withhold, agr.elapsed)
            if t > deadline:
                return self._stalled(t, "deadline")
            if agr.outcome is Outcome.COMMITTED:
                self._commit(block, agr.certificate, t)
                if is_summary:
                    self._issue_sync(c, t)
                return _Attempt("published", t, block)
            if agr.outcome is Outcome.MALICIOUS_COMMIT:
                self._commit(block, agr.certificate, t)
                if is_summary:
                    # the faulty committee races its own sync to the mainchain
                    self.broadcast_syncs.append(self._sync_for(block, attested=False))
                return _Attempt("malicious", t, block)
            if valid:
                return self._stalled(t, "no quorum")
            lc = leader_change(c, lp, modes, self.epoch, block.block_hash, 0, timing.t_agr)
            if not isinstance(lc, NewLeader):
                return self._stalled(t, "leader change stalled")
            t += lc.elapsed
            self._install_leader(c, lc)

    def _stalled(self, t: int, reason: str) -> _Attempt:
        self.now = max(self.now, int(min(t, self._deadline())))
        return _Attempt("stalled", self.now, None, reason)

    def _install_leader(self, c: Committee, lc: NewLeader) -> None:
        self.leader_pos[c.rank] = lc.leader_pos
        self.pending_certs.append(lc.certificate)
        self.leader_changes += 1

    def _propose(self, c: Committee, leader: NodeId, slot: int, is_summary: bool, sc_round: int) -> tuple[Block, bool]:
        side = self.side
        mc_round = self._mc_round_of(self.now)
        if is_summary:
            forged = None
            if self._one_shot(c, Trigger.INVALID_SUMMARY):
                forged = _forge_summary(sc.summarize(side.current_epoch_meta_blocks, self.pending_certs))
            block = sc.propose_summary_block(
                side, leader, self.epoch, tuple(self.pending_certs), mc_round, sc_round, summary=forged
            )
            return block, sc.verify_summary_block(side, block)
        extra: list[Transaction] = []
        if self._one_shot(c, Trigger.INVALID_META, self.block_index):
            self._fake_ids += 1
            extra.append(
                make_tx(-self._fake_ids, TxKind.SERVICE_PROOF, INVALID_STUB, 0, mc_round, self.side_kinds)
            )
        block = sc.propose_meta_block(
            side, leader, self.epoch, min(slot, self.k - 2), mc_round, sc_round, tuple(self.pending_certs), extra
        )
        return block, sc.verify_meta_block(side, block)

    def _commit(self, block: Block, cert: Optional[AgreementCertificate], t: int) -> None:
        block = replace(block, certificate=cert)
        if block.summary is not None:
            sc.commit_summary_block(self.side, block)
            self.summary = block
        else:
            for entry in sc.commit_meta_block(self.side, block):
                self.queued_at[entry.tx.tx_id] = entry.queued_at
        self.pending_certs = []
        self.now = t
        self.last_progress = t

    # -- syncing ----------------------------------------------------------------

    def _sync_for(self, summary: Block, attested: bool, tamper: bool = False) -> Transaction:
        tx = sc.create_sync_transaction(
            self.outstanding + [summary],
            self._ids(),
            self._mc_round_of(self.now),
            attested,
            self.side_kinds,
        )
        if tamper:
            p = tx.payload
            tx = make_tx(
                tx.tx_id,
                tx.kind,
                SyncPayload(p.summary_refs, _forge_summary(p.state), attested),
                None,
                tx.created_at_round,
                self.side_kinds,
            )
        return tx

    def _issue_sync(self, c: Committee, t: int) -> None:
        assert self.summary is not None
        attested = bool(self.takeovers)
        if self._entry(c, Trigger.MISSED_SYNC) is not None:
            # valid summary but no sync: the next epoch mass-syncs
            self.missed_sync = True
            return
        if self._one_shot(c, Trigger.INVALID_SYNC):
            bad = self._sync_for(self.summary, attested, tamper=True)
            self.broadcast_syncs.append(bad)
            lc = leader_change(
                c, self.leader_pos[c.rank], self.modes[c.rank], self.epoch, bad.digest(), 0, self.timing.t_agr
            )
            if not isinstance(lc, NewLeader):
                self.missed_sync = True
                return
            self._install_leader(c, lc)
            self.now = t + lc.elapsed
        good = self._sync_for(self.summary, attested)
        self.sync = good
        self.broadcast_syncs.append(good)

    # -- takeover ---------------------------------------------------------------

    def _takeover(self, cause: str, ref_time: float, bad_block: Optional[Block]) -> None:
        eta = self.timing.eta
        failing = self.ranks[0]
        evidence = bad_block.block_hash if bad_block is not None else None
        msg = hashlib.sha256(f"{cause}:{self.epoch}:{failing.rank}".encode() + (evidence or b"")).digest()
        for i in range(1, len(self.ranks)):
            b = self.ranks[i]
            detect = int(ref_time) + (i * eta if cause == UNRESPONSIVE else (i - 1) * eta)
            agr = run_agreement(b, msg, True, self.modes[b.rank], self.epoch, 0, self.rng, self.timing.delta)
            if agr.outcome is not Outcome.COMMITTED:
                continue
            done = detect + agr.elapsed
            self.takeovers.append(
                TakeoverEvent(self.epoch, failing.rank, b.rank, cause, detect, done, int(ref_time), i)
            )
            if bad_block is not None:
                self._discard_invalid(bad_block)
            self.ranks = self.ranks[i:]
            self.pending_certs.append(
                TakeoverCertificate(self.epoch, failing.rank, b.rank, cause, agr.certificate.voters, evidence)
            )
            self.now = max(self.now, done)
            self.stall_ref = self.now
            return
        self.failure = AutorecoveryFailure(self.epoch, int(ref_time), cause)

    def _discard_invalid(self, bad: Block) -> None:
        side = self.side
        if bad.summary is not None:
            # only the summary was invalid; meta-blocks stand
            sc.drop_summary(side, bad)
            self.pending_certs.extend(bad.certs)
            self.summary = None
            return
        metas = side.current_epoch_meta_blocks
        if not metas:
            return
        for b in metas:
            self.pending_certs.extend(b.certs)
        dropped = sc.drop_blocks(side, metas[0], self.queued_at)
        for b in dropped:
            for tx in b.txs:
                self.queued_at.pop(tx.tx_id, None)

    def _abandon_epoch(self) -> None:
        side = self.side
        if self.summary is not None:
            sc.drop_summary(side, self.summary)
            self.summary = None
            self.sync = None
        metas = side.current_epoch_meta_blocks
        if metas:
            sc.drop_blocks(side, metas[0], self.queued_at)
        self.queued_at = {}
        side.current_epoch_meta_blocks = []


def _forge_summary(s: SummaryState) -> SummaryState:
    proofs = dict(s.proof_counts)
    cid = min(proofs) if proofs else 0
    proofs[cid] = proofs.get(cid, 0) + 1
    return SummaryState(proofs, s.payment_totals, s.disputes, s.agreements, s.leader_change_certs, s.takeover_certs)


def _counter() -> Callable[[], int]:
    state = {"n": 0}

    def nxt() -> int:
        state["n"] += 1
        return state["n"]

    return nxt


# ---------------------------------------------------------------------------
# mainchain-facing helpers


def race_guard(sync_txs: Sequence[Transaction]) -> tuple[list[Transaction], list[tuple[Transaction, str]]]:
    """Resolve syncs that arrived within the same processing delay.

    Syncs covering a common epoch conflict. A takeover-attested one beats an
    unattested one; otherwise the first to arrive wins. Exact repeats are
    rejected as duplicates.
    """
    accepted: list[Transaction] = []
    rejected: list[tuple[Transaction, str]] = []
    for tx in sync_txs:
        epochs = {e for e, _ in tx.payload.summary_refs}
        clash = next((a for a in accepted if epochs & {e for e, _ in a.payload.summary_refs}), None)
        if clash is None:
            accepted.append(tx)
            continue
        if tx.payload == clash.payload:
            rejected.append((tx, "duplicate"))
        elif tx.payload.takeover_attested and not clash.payload.takeover_attested:
            accepted[accepted.index(clash)] = tx
            rejected.append((clash, "superseded by takeover"))
        else:
            rejected.append((tx, "conflicting sync"))
    return accepted, rejected


@dataclass(frozen=True)
class RecoveryTime:
    duration: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.duration <= self.bound


def worst_case_recovery_time(
    k: int, eta: float, kappa: int, t_agr: float, epsilon: float = 0.0, sc_round: Optional[float] = None
) -> RecoveryTime:
    """Closed-form worst-case autorecovery time and its epoch-length bound."""
    r = eta if sc_round is None else sc_round
    d = (kappa + 1) * (eta - epsilon) * (k - 1) + kappa * t_agr + (eta - epsilon)
    bound = (kappa + 1) * k * r
    if eta <= r and t_agr <= r:
        assert d <= bound, (d, bound)
    return RecoveryTime(d, bound)


def assign_behaviors(
    population: Sequence[NodeId], p_lazy: float, p_malicious: float, rng: random.Random
) -> list[NodeId]:
    """Exact-count behaviour assignment at the given rates."""
    n = len(population)
    n_l = round(p_lazy * n)
    n_m = round(p_malicious * n)
    order = list(range(n))
    rng.shuffle(order)
    out = list(population)
    for j, i in enumerate(order):
        b = Behavior.MALICIOUS if j < n_m else Behavior.LAZY if j < n_m + n_l else Behavior.HONEST
        out[i] = population[i].with_behavior(b)
    return out
