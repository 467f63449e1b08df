"""Committee agreement and leader change.

Pre-prepare, prepare and commit are collapsed into one propose/vote
exchange. What matters for the protocol is how many supporting votes a
proposal gathers against the safety threshold, and whether enough honest
members remain to agree on a replacement leader.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

from dualchain.domain import NodeId

if TYPE_CHECKING:
    from dualchain.committees import Committee


@dataclass(frozen=True)
class Thresholds:
    """Vote thresholds for a committee of size ``cs``.

    ``theta_s`` supporting votes commit a proposal; ``theta_l`` absent votes
    are enough to block one. The default safety threshold is the larger of
    2f+2 and the optimal value, so committees of size 3f+2 get 2f+2.
    """

    cs: int
    theta_s: int

    @classmethod
    def for_size(cls, cs: int, theta_s: Optional[int] = None) -> "Thresholds":
        f = (cs - 2) // 3
        default = max(2 * f + 2, -(-(2 * cs + 1) // 3))
        t = cls(cs, default if theta_s is None else theta_s)
        t.validate()
        return t

    @property
    def f(self) -> int:
        return (self.cs - 2) // 3

    @property
    def theta_l(self) -> int:
        return self.cs - self.theta_s + 1

    @property
    def theta_s_opt(self) -> int:
        return -(-(2 * self.cs + 1) // 3)

    @property
    def theta_l_opt(self) -> int:
        return (self.cs + 2) // 3

    @property
    def leader_change_quorum(self) -> int:
        return 2 * self.f + 1

    def validate(self) -> None:
        if self.cs < 4:
            raise ValueError("committee size must be at least 4")
        if not (self.theta_l <= self.theta_l_opt <= self.theta_s_opt <= self.theta_s < self.cs):
            raise ValueError(
                f"threshold ordering violated for cs={self.cs}, theta_s={self.theta_s}"
            )


class MemberMode(enum.Enum):
    HONEST = "honest"
    LAZY_ACCEPT = "lazy-accept"  # votes for anything without checking
    LAZY_ABSENT = "lazy-absent"
    MALICIOUS_COLLUDE = "malicious-collude"  # supports every proposal
    MALICIOUS_ABSENT = "malicious-absent"
    MALICIOUS_OBSTRUCT = "malicious-obstruct"  # supports only invalid proposals

    @property
    def responsive(self) -> bool:
        return self not in (MemberMode.LAZY_ABSENT, MemberMode.MALICIOUS_ABSENT)

    def supports(self, valid: bool) -> bool:
        if self is MemberMode.HONEST:
            return valid
        if self in (MemberMode.LAZY_ACCEPT, MemberMode.MALICIOUS_COLLUDE):
            return True
        if self is MemberMode.MALICIOUS_OBSTRUCT:
            return not valid
        return False


@dataclass(frozen=True)
class AgreementCertificate:
    proposal_hash: bytes
    voters: frozenset[int]
    epoch: int
    round: int


@dataclass(frozen=True)
class LeaderChangeCertificate:
    messages: frozenset[int]
    new_leader: NodeId
    old_leader: NodeId
    epoch: int
    evidence: Optional[bytes] = None  # digest of the offending proposal


@dataclass(frozen=True)
class TakeoverCertificate:
    epoch: int
    failing_rank: int
    new_rank: int
    cause: str
    voters: frozenset[int]
    evidence: Optional[bytes] = None


class Outcome(enum.Enum):
    COMMITTED = "committed"
    NO_QUORUM = "no-quorum"
    MALICIOUS_COMMIT = "malicious-commit"


@dataclass(frozen=True)
class AgreementResult:
    outcome: Outcome
    certificate: Optional[AgreementCertificate]
    supporting: int
    elapsed: int


def draw_round_trips(rng: random.Random, n: int, delta: int) -> list[int]:
    """Message delays are bounded by ``delta``; a vote costs one round trip."""
    return [rng.randint(0, delta) + rng.randint(0, delta) for _ in range(n)]


def run_agreement(
    committee: "Committee",
    proposal_hash: bytes,
    valid: bool,
    modes: Mapping[NodeId, MemberMode],
    epoch: int = 0,
    round_no: int = 0,
    rng: Optional[random.Random] = None,
    delta: int = 0,
) -> AgreementResult:
    th = committee.thresholds
    voters = [m for m in committee.members if modes.get(m, MemberMode.HONEST).supports(valid)]
    bound = 2 * delta
    if len(voters) < th.theta_s:
        return AgreementResult(Outcome.NO_QUORUM, None, len(voters), bound)
    trips = sorted(draw_round_trips(rng or random.Random(0), len(voters), delta))
    elapsed = trips[th.theta_s - 1]
    cert = AgreementCertificate(proposal_hash, frozenset(m.index for m in voters), epoch, round_no)
    outcome = Outcome.COMMITTED if valid else Outcome.MALICIOUS_COMMIT
    return AgreementResult(outcome, cert, len(voters), elapsed)


@dataclass(frozen=True)
class NewLeader:
    certificate: LeaderChangeCertificate
    leader_pos: int
    elapsed: int


@dataclass(frozen=True)
class StalledCommittee:
    elapsed: int


def leader_change(
    committee: "Committee",
    leader_pos: int,
    modes: Mapping[NodeId, MemberMode],
    epoch: int = 0,
    evidence: Optional[bytes] = None,
    zeta: int = 0,
    t_agr: int = 0,
) -> NewLeader | StalledCommittee:
    """Replace the leader at ``leader_pos`` with the next responsive candidate.

    Honest members other than the deposed leader send leader-change
    messages. A candidate that skips its turn costs another ``zeta``.
    """
    th = committee.thresholds
    order: Sequence[NodeId] = committee.leader_order
    old = order[leader_pos % len(order)]
    honest = {
        m.index for m in committee.members if m != old and modes.get(m, MemberMode.HONEST) is MemberMode.HONEST
    }
    elapsed = 0
    for step in range(1, len(order)):
        pos = (leader_pos + step) % len(order)
        cand = order[pos]
        mode = modes.get(cand, MemberMode.HONEST)
        if not mode.responsive:
            elapsed += zeta
            continue
        messages = honest | {cand.index} if cand != old else honest
        if len(messages) < th.leader_change_quorum:
            return StalledCommittee(elapsed + t_agr)
        cert = LeaderChangeCertificate(frozenset(messages), cand, old, epoch, evidence)
        return NewLeader(cert, pos, elapsed + t_agr)
    return StalledCommittee(elapsed)
