"""Core value types shared by both chains.

Transactions, blocks, summary state, ledgers, node identities and the
round clock live here, together with the canonical byte encoding used for
every digest in the simulator.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional

DIGEST_BYTES = 32
MB = 1_048_576


class MalformedTransaction(ValueError):
    pass


class RollbackRefused(ValueError):
    pass


class Behavior(enum.Enum):
    HONEST = "honest"
    LAZY = "lazy"
    MALICIOUS = "malicious"


@dataclass(frozen=True, slots=True, order=True)
class NodeId:
    index: int
    behavior: Behavior = field(default=Behavior.HONEST, compare=False)

    def with_behavior(self, behavior: Behavior) -> "NodeId":
        return NodeId(self.index, behavior)


class HomeChain(enum.Enum):
    MAIN = "main"
    SIDE = "side"


class TxKind(enum.Enum):
    ASK = "ContractPropose"
    OFFER = "Offer"
    AGREEMENT_COMMIT = "AgreementCommit"
    SERVICE_PROOF = "ServiceProof"
    SERVICE_PAYMENT = "ServicePayment"
    DISPUTE = "Dispute"
    TRANSFER = "Transfer"
    SYNC = "Sync"
    MASS_SYNC = "MassSync"


MAIN_ANNOTATION = 0b00
SIDE_ANNOTATION = 0b11

# market kinds tagged for the sidechain by default
DEFAULT_SIDE_KINDS: frozenset[TxKind] = frozenset(
    {
        TxKind.ASK,
        TxKind.OFFER,
        TxKind.AGREEMENT_COMMIT,
        TxKind.SERVICE_PROOF,
        TxKind.SERVICE_PAYMENT,
        TxKind.DISPUTE,
    }
)
# storage-market deployment: contract setup and payments settle on the
# mainchain, only the proof stream is offloaded
STORAGE_MARKET_SIDE_KINDS: frozenset[TxKind] = frozenset({TxKind.SERVICE_PROOF})

NOMINAL_SIZES: Mapping[TxKind, int] = MappingProxyType(
    {
        TxKind.ASK: 645,
        TxKind.OFFER: 645,
        TxKind.AGREEMENT_COMMIT: 79,
        TxKind.SERVICE_PROOF: 515,
        TxKind.SERVICE_PAYMENT: 406,
        TxKind.DISPUTE: 547,
        TxKind.TRANSFER: 398,
    }
)
SYNC_HEADER_BYTES = 64
SYNC_ENTRY_BYTES = 8
SYNC_KINDS = frozenset({TxKind.SYNC, TxKind.MASS_SYNC})


def nominal_size_of(kind: TxKind, active_contracts: int = 0) -> int:
    """Wire size used for block packing. Sync sizes grow with their entries."""
    if kind in SYNC_KINDS:
        return SYNC_HEADER_BYTES + SYNC_ENTRY_BYTES * active_contracts
    return NOMINAL_SIZES[kind]


def annotation_for(kind: TxKind, side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS) -> int:
    return SIDE_ANNOTATION if kind in side_kinds else MAIN_ANNOTATION


# ---------------------------------------------------------------------------
# canonical encoding


def encode(value: Any) -> bytes:
    """Length-prefixed concatenation of fields in declaration order."""
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _put(out: bytearray, tag: bytes, body: bytes) -> None:
    out += tag
    out += struct.pack(">I", len(body))
    out += body


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        _put(out, b"N", b"")
    elif isinstance(value, bool):
        _put(out, b"B", b"\x01" if value else b"\x00")
    elif isinstance(value, int):
        n = (value.bit_length() + 8) // 8
        _put(out, b"I", value.to_bytes(n, "big", signed=True))
    elif isinstance(value, str):
        _put(out, b"S", value.encode())
    elif isinstance(value, (bytes, bytearray)):
        _put(out, b"Y", bytes(value))
    elif isinstance(value, enum.Enum):
        _encode_into(value.value, out)
    elif isinstance(value, NodeId):
        _put(out, b"I", value.index.to_bytes(8, "big"))
    elif hasattr(value, "canonical_bytes"):
        _put(out, b"C", value.canonical_bytes())
    elif dataclasses.is_dataclass(value):
        inner = bytearray()
        _encode_into(type(value).__name__, inner)
        for f in dataclasses.fields(value):
            _encode_into(getattr(value, f.name), inner)
        _put(out, b"D", bytes(inner))
    elif isinstance(value, Mapping):
        inner = bytearray()
        for k in sorted(value):
            _encode_into(k, inner)
            _encode_into(value[k], inner)
        _put(out, b"M", bytes(inner))
    elif isinstance(value, (tuple, list)):
        inner = bytearray()
        for item in value:
            _encode_into(item, inner)
        _put(out, b"L", bytes(inner))
    elif isinstance(value, (set, frozenset)):
        inner = bytearray()
        for item in sorted(value):
            _encode_into(item, inner)
        _put(out, b"L", bytes(inner))
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def digest(value: Any) -> bytes:
    return hashlib.sha256(encode(value)).digest()


@lru_cache(maxsize=4096)
def _cached_encoding(payload: Any) -> bytes:
    return encode(payload)


def _payload_encoding(payload: Any) -> bytes:
    # stub payloads repeat millions of times; unhashable ones skip the cache
    try:
        return _cached_encoding(payload)
    except TypeError:
        return encode(payload)


def to_json(value: Any) -> Any:
    """JSON-ready view with camelCase field names."""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, NodeId):
        return value.index
    if dataclasses.is_dataclass(value):
        return {_camel(f.name): to_json(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Mapping):
        return {str(k): to_json(v) for k, v in sorted(value.items())}
    if isinstance(value, (set, frozenset)):
        return [to_json(v) for v in sorted(value)]
    if isinstance(value, (list, tuple)):
        return [to_json(v) for v in value]
    return repr(value)


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(part.title() for part in rest)


# ---------------------------------------------------------------------------
# payloads


@dataclass(frozen=True, slots=True)
class ContractTerms:
    fee_per_round: int
    duration_rounds: int
    generation: int = 0


@dataclass(frozen=True, slots=True)
class ProposePayload:
    client: int
    server: int
    terms: ContractTerms


@dataclass(frozen=True, slots=True)
class CommitPayload:
    server: int
    client: int
    terms: ContractTerms


@dataclass(frozen=True, slots=True)
class StubProof:
    """Size-correct stand-in for a retrievability proof."""

    valid: bool = True


VALID_STUB = StubProof(True)
INVALID_STUB = StubProof(False)


@dataclass(frozen=True, slots=True)
class RealProof:
    # opaque to this module; por.verify decides validity
    proof: Any
    seed: bytes

    @property
    def valid(self) -> bool:
        from dualchain import por

        return por.verify_bundle(self.proof, self.seed)


@dataclass(frozen=True, slots=True)
class PaymentPayload:
    amount: int
    proof_count: int = 0
    settled: bool = False  # already dispensed by a sync application


@dataclass(frozen=True, slots=True)
class DisputePayload:
    proof_ref: bytes
    outcome: str = "valid"


@dataclass(frozen=True, slots=True)
class TransferPayload:
    sender: int
    receiver: int
    amount: int


def _frozen_map(m: Optional[Mapping]) -> Mapping:
    return MappingProxyType(dict(sorted((m or {}).items())))


@dataclass(frozen=True, eq=True)
class SummaryState:
    proof_counts: Mapping[int, int] = field(default_factory=dict)
    payment_totals: Mapping[int, int] = field(default_factory=dict)
    disputes: Mapping[int, tuple] = field(default_factory=dict)
    agreements: Mapping[int, tuple] = field(default_factory=dict)
    leader_change_certs: tuple = ()
    takeover_certs: tuple = ()

    def __post_init__(self) -> None:
        for name in ("proof_counts", "payment_totals", "disputes", "agreements"):
            object.__setattr__(self, name, _frozen_map(getattr(self, name)))
        if any(c < 1 for c in self.proof_counts.values()):
            raise ValueError("proof counts must be positive")
        object.__setattr__(self, "leader_change_certs", tuple(self.leader_change_certs))
        object.__setattr__(self, "takeover_certs", tuple(self.takeover_certs))

    __hash__ = None  # type: ignore[assignment]

    def aggregates(self) -> tuple:
        """State that the mainchain mirrors; certificates excluded."""
        return (
            dict(self.proof_counts),
            dict(self.payment_totals),
            dict(self.disputes),
            dict(self.agreements),
        )

    def contract_ids(self) -> set[int]:
        ids: set[int] = set()
        for m in (self.proof_counts, self.payment_totals, self.disputes, self.agreements):
            ids.update(m)
        return ids

    def is_empty(self) -> bool:
        return not self.contract_ids()


def merge_summaries(states: Iterable[SummaryState]) -> SummaryState:
    """Fold several epochs' summaries in order; disputes keep the last write."""
    proofs: dict[int, int] = {}
    payments: dict[int, int] = {}
    disputes: dict[int, tuple] = {}
    agreements: dict[int, tuple] = {}
    lcc: list = []
    toc: list = []
    for s in states:
        for cid, n in s.proof_counts.items():
            proofs[cid] = proofs.get(cid, 0) + n
        for cid, amt in s.payment_totals.items():
            payments[cid] = payments.get(cid, 0) + amt
        disputes.update(s.disputes)
        agreements.update(s.agreements)
        lcc.extend(s.leader_change_certs)
        toc.extend(s.takeover_certs)
    return SummaryState(proofs, payments, disputes, agreements, tuple(lcc), tuple(toc))


@dataclass(frozen=True, slots=True)
class SyncPayload:
    summary_refs: tuple[tuple[int, bytes], ...]  # (epoch, summary-block digest)
    state: SummaryState
    takeover_attested: bool = False
    origin: str = "sidechain"


# ---------------------------------------------------------------------------
# transactions and blocks


@dataclass(frozen=True, slots=True)
class Transaction:
    tx_id: int
    kind: TxKind
    annotation: int
    nominal_size: int
    payload: Any = None
    contract_id: Optional[int] = None
    created_at_round: int = 0

    def encode(self) -> bytes:
        cid = -1 if self.contract_id is None else self.contract_id
        head = struct.pack(
            ">qBBIqq",
            self.tx_id,
            _KIND_CODES[self.kind],
            self.annotation,
            self.nominal_size,
            cid,
            self.created_at_round,
        )
        return head + _payload_encoding(self.payload)

    def digest(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()


_KIND_CODES = {k: i for i, k in enumerate(TxKind)}


def make_tx(
    tx_id: int,
    kind: TxKind,
    payload: Any = None,
    contract_id: Optional[int] = None,
    created_at_round: int = 0,
    side_kinds: frozenset[TxKind] = DEFAULT_SIDE_KINDS,
) -> Transaction:
    if kind in SYNC_KINDS:
        entries = len(payload.state.contract_ids()) if payload is not None else 0
        size = nominal_size_of(kind, entries)
    else:
        size = NOMINAL_SIZES[kind]
    return Transaction(
        tx_id, kind, annotation_for(kind, side_kinds), size, payload, contract_id, created_at_round
    )


def classify(tx: Transaction) -> HomeChain:
    if tx.annotation == SIDE_ANNOTATION:
        return HomeChain.SIDE
    if tx.annotation == MAIN_ANNOTATION:
        return HomeChain.MAIN
    raise MalformedTransaction(f"tx {tx.tx_id}: annotation {tx.annotation:#04b}")


class BlockKind(enum.Enum):
    MAIN = "main"
    META = "meta"
    SUMMARY = "summary"


GENESIS_REF = bytes(DIGEST_BYTES)
BLOCK_HEADER_BYTES = 80
SUMMARY_ENTRY_BYTES = {"proof": 8, "payment": 8, "dispute": 16, "agreement": 24}
CERT_BYTES = 64


@dataclass(frozen=True, slots=True)
class Block:
    kind: BlockKind
    height: int
    epoch: int
    round_in_epoch: int
    prev_ref: bytes
    txs: tuple[Transaction, ...] = ()
    summary: Optional[SummaryState] = None
    proposer: Optional[NodeId] = None
    certificate: Any = None
    capacity_bytes: int = 0
    certs: tuple = ()  # leader-change / takeover certificates riding along
    mc_round: int = 0
    sc_round: int = 0
    block_hash: bytes = b""

    @classmethod
    def create(cls, **fields: Any) -> "Block":
        fields.setdefault("txs", ())
        fields["txs"] = tuple(fields["txs"])
        draft = cls(**fields)
        object.__setattr__(draft, "block_hash", _hash_header(draft))
        used = draft.bytes_used_by_txs()
        if used > draft.capacity_bytes > 0:
            raise ValueError(f"block over capacity: {used} > {draft.capacity_bytes}")
        return draft

    def bytes_used_by_txs(self) -> int:
        return sum(tx.nominal_size for tx in self.txs)

    def storage_bytes(self) -> int:
        """Bytes this block occupies on disk under nominal sizing."""
        size = BLOCK_HEADER_BYTES + self.bytes_used_by_txs()
        if self.summary is None:
            size += CERT_BYTES * len(self.certs)
        else:
            s = self.summary
            size += SUMMARY_ENTRY_BYTES["proof"] * len(s.proof_counts)
            size += SUMMARY_ENTRY_BYTES["payment"] * len(s.payment_totals)
            size += SUMMARY_ENTRY_BYTES["dispute"] * len(s.disputes)
            size += SUMMARY_ENTRY_BYTES["agreement"] * len(s.agreements)
            size += CERT_BYTES * (len(s.leader_change_certs) + len(s.takeover_certs))
        return size


def _hash_header(b: Block) -> bytes:
    h = hashlib.sha256()
    h.update(
        encode(
            (
                b.kind,
                b.height,
                b.epoch,
                b.round_in_epoch,
                b.prev_ref,
                b.proposer,
                b.mc_round,
                b.sc_round,
                b.certs,
            )
        )
    )
    if b.summary is not None:
        h.update(encode(b.summary))
    for tx in b.txs:
        h.update(tx.encode())
    return h.digest()


# ---------------------------------------------------------------------------
# ledger and clock


@dataclass
class Ledger:
    chain: HomeChain
    k_conf: int = 6
    blocks: list[Block] = field(default_factory=list)
    summary_variables: dict[str, dict] = field(
        default_factory=lambda: {"proofCounts": {}, "paymentTotals": {}, "disputes": {}, "agreements": {}}
    )
    pruned_ranges: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)

    def append(self, block: Block) -> None:
        self.blocks.append(block)

    @property
    def tip(self) -> Optional[Block]:
        return self.blocks[-1] if self.blocks else None

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def depth_of(self, height: int) -> int:
        """Number of blocks burying the block at `height`."""
        return self.height - height

    def confirmed_height(self) -> int:
        return self.height - self.k_conf

    def confirmed_blocks(self) -> list[Block]:
        return self.blocks[: max(0, self.confirmed_height() + 1)]

    def pop(self, depth: int) -> list[Block]:
        if depth > self.k_conf:
            raise RollbackRefused(f"depth {depth} exceeds k_conf={self.k_conf}")
        if depth <= 0:
            return []
        # never drop genesis
        depth = min(depth, len(self.blocks) - 1)
        removed = self.blocks[-depth:]
        del self.blocks[-depth:]
        return removed

    def summary_aggregates(self) -> tuple:
        sv = self.summary_variables
        return (
            dict(sv["proofCounts"]),
            dict(sv["paymentTotals"]),
            dict(sv["disputes"]),
            dict(sv["agreements"]),
        )


@dataclass
class Clock:
    sc_rounds_per_mc_round: int
    epoch_len_mc_rounds: int
    mc_round: int = 0
    sc_round: int = 0

    @property
    def sc_rounds_per_epoch(self) -> int:
        return self.sc_rounds_per_mc_round * self.epoch_len_mc_rounds

    @property
    def epoch(self) -> int:
        return self.mc_round // self.epoch_len_mc_rounds

    def is_epoch_boundary(self) -> bool:
        return self.mc_round % self.epoch_len_mc_rounds == 0

    def advance_sc(self) -> None:
        self.sc_round += 1

    def advance_mc(self) -> None:
        self.mc_round += 1
        self.sc_round = self.mc_round * self.sc_rounds_per_mc_round
