"""Compact proofs of retrievability over BN254.

A file is split into ``n`` blocks of ``s`` sectors. Each sector is an
integer below the group order. Every block gets a G1 authenticator
``sigma_i = alpha * (H(name || i) + sum_j m_ij * u_j)``. A proof aggregates
the challenged authenticators and sectors with per-index coefficients, and
the verifier checks

    e(g2, sigma) == e(v, sum_i c_i * H(name || i) + sum_j mu_j * u_j)

with ``v = alpha * g2``. In the non-interactive variant challenges come from
a seed, normally the hash of the previous mainchain block.
"""

from __future__ import annotations

import hashlib
import math
import random
import secrets
from dataclasses import dataclass
from typing import Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from py_ecc.fields import optimized_bn128_FQ as FQ
from py_ecc.fields import optimized_bn128_FQ12 as FQ12
from py_ecc.optimized_bn128 import (
    G1,
    G2,
    Z1,
    add,
    curve_order,
    field_modulus,
    final_exponentiate,
    multiply,
    neg,
    normalize,
    pairing,
)

from dualchain.domain import encode

SCALAR_BYTES = 32
POINT_BYTES = 64
# sectors must stay below the group order
CHUNK_BITS = curve_order.bit_length() - 2
DEFAULT_QUERY_SIZE = 20


@dataclass(frozen=True)
class PorParams:
    s: int
    n: int
    query_size: int = DEFAULT_QUERY_SIZE
    security_bits: int = 128
    order: int = curve_order
    chunk_bits: int = CHUNK_BITS

    @classmethod
    def for_file(cls, file_bytes: int, s: int, query_size: int = DEFAULT_QUERY_SIZE) -> "PorParams":
        return cls(s, blocks_for(file_bytes, s), query_size)


def blocks_for(file_bytes: int, s: int) -> int:
    return max(1, math.ceil(8 * file_bytes / (s * CHUNK_BITS)))


@dataclass(frozen=True)
class PorKeys:
    alpha: int
    v: tuple
    signing_key: Ed25519PrivateKey
    public_key: bytes

    @classmethod
    def generate(cls, rng: Optional[random.Random] = None) -> "PorKeys":
        alpha = _scalar(rng)
        seed = rng.randbytes(32) if rng else secrets.token_bytes(32)
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        pk = sk.public_key().public_bytes_raw()
        return cls(alpha, multiply(G2, alpha), sk, pk)


@dataclass(frozen=True)
class FileTag:
    name: int
    n: int
    generators: tuple  # u_1..u_s in G1
    signature: bytes = b""

    def body(self) -> bytes:
        return encode((self.name, self.n, tuple(point_bytes(u) for u in self.generators)))


@dataclass(frozen=True)
class ProcessedFile:
    tag: FileTag
    sectors: tuple[tuple[int, ...], ...]
    authenticators: tuple

    @property
    def s(self) -> int:
        return len(self.tag.generators)

    @property
    def n(self) -> int:
        return self.tag.n

    def serialize(self) -> bytes:
        return encode(
            (
                self.tag.body(),
                self.tag.signature,
                self.sectors,
                tuple(point_bytes(a) for a in self.authenticators),
            )
        )


@dataclass(frozen=True)
class PorProof:
    sigma: tuple
    mus: tuple[int, ...]
    round: int = 0

    def size_bytes(self) -> int:
        # round number in one scalar slot, s response scalars, one G1 point
        return (1 + len(self.mus)) * SCALAR_BYTES + POINT_BYTES

    def serialize(self) -> bytes:
        return encode((self.round, self.mus, point_bytes(self.sigma)))


@dataclass(frozen=True)
class ChallengeSet:
    pairs: tuple[tuple[int, int], ...]
    seed: bytes


# ---------------------------------------------------------------------------
# group helpers


def _scalar(rng: Optional[random.Random]) -> int:
    if rng is None:
        return secrets.randbelow(curve_order - 1) + 1
    return rng.randrange(1, curve_order)


def point_bytes(p: tuple) -> bytes:
    if p == Z1 or p[2] == FQ.zero():
        return bytes(POINT_BYTES)
    x, y = normalize(p)
    return int(x).to_bytes(32, "big") + int(y).to_bytes(32, "big")


def g2_bytes(p: tuple) -> bytes:
    x, y = normalize(p)
    return b"".join(int(c).to_bytes(32, "big") for c in (*x.coeffs, *y.coeffs))


def hash_to_g1(data: bytes) -> tuple:
    """Try-and-increment onto y^2 = x^3 + 3; BN254 G1 has cofactor 1."""
    q = field_modulus
    ctr = 0
    while True:
        h = hashlib.sha256(b"por-h2g1" + data + ctr.to_bytes(4, "big")).digest()
        x = int.from_bytes(h, "big") % q
        rhs = (x * x * x + 3) % q
        y = pow(rhs, (q + 1) // 4, q)  # q = 3 mod 4
        if y * y % q == rhs:
            if y & 1:
                y = q - y
            return (FQ(x), FQ(y), FQ.one())
        ctr += 1


def block_point(name: int, i: int) -> tuple:
    return hash_to_g1(name.to_bytes(32, "big") + i.to_bytes(8, "big"))


def _msm(points: Sequence[tuple], scalars: Sequence[int]) -> tuple:
    acc = Z1
    for p, k in zip(points, scalars):
        k %= curve_order
        if k:
            acc = add(acc, multiply(p, k))
    return acc


# ---------------------------------------------------------------------------
# file processing


def split_sectors(data: bytes, s: int) -> list[tuple[int, ...]]:
    """Bit-precise split into CHUNK_BITS-wide sectors, zero padded."""
    if not data:
        raise ValueError("file must be nonempty")
    total_bits = 8 * len(data)
    n_sectors = math.ceil(total_bits / CHUNK_BITS)
    n_blocks = math.ceil(n_sectors / s)
    width = n_blocks * s * CHUNK_BITS
    value = int.from_bytes(data, "big") << (width - total_bits)
    mask = (1 << CHUNK_BITS) - 1
    flat = [(value >> (width - (k + 1) * CHUNK_BITS)) & mask for k in range(n_blocks * s)]
    return [tuple(flat[b * s : (b + 1) * s]) for b in range(n_blocks)]


def preprocess(
    data: bytes,
    s: int,
    keys: PorKeys,
    rng: Optional[random.Random] = None,
    sectors: Optional[Sequence[Sequence[int]]] = None,
) -> ProcessedFile:
    """Authenticate a file, treated as already erasure coded.

    ``sectors`` bypasses byte splitting for callers that supply sector
    values directly.
    """
    blocks = [tuple(b) for b in sectors] if sectors is not None else split_sectors(data, s)
    if any(len(b) != s for b in blocks):
        raise ValueError("every block needs exactly s sectors")
    if any(not 0 <= m < curve_order for b in blocks for m in b):
        raise ValueError("sector value out of range")
    name = _scalar(rng)
    exps = [_scalar(rng) for _ in range(s)]
    gens = tuple(multiply(G1, r) for r in exps)
    alpha = keys.alpha
    auths = []
    for i, block in enumerate(blocks, start=1):
        # alpha * (H_i + sum m_ij u_j) with u_j = r_j * g1
        offset = alpha * sum(r * m for r, m in zip(exps, block)) % curve_order
        point = multiply(block_point(name, i), alpha)
        if offset:
            point = add(point, multiply(G1, offset))
        auths.append(point)
    unsigned = FileTag(name, len(blocks), gens)
    tag = FileTag(name, len(blocks), gens, keys.signing_key.sign(unsigned.body()))
    return ProcessedFile(tag, tuple(blocks), tuple(auths))


# ---------------------------------------------------------------------------
# challenge / response


def derive_challenge(seed: bytes, n: int, query_size: int = DEFAULT_QUERY_SIZE) -> ChallengeSet:
    if n < 1:
        raise ValueError("file has no blocks")
    want = min(query_size, n)
    picked: list[int] = []
    seen: set[int] = set()
    ctr = 0
    while len(picked) < want:
        h = hashlib.sha256(b"por-idx" + seed + ctr.to_bytes(8, "big")).digest()
        ctr += 1
        i = int.from_bytes(h, "big") % n + 1
        if i not in seen:
            seen.add(i)
            picked.append(i)
    pairs = []
    for i in picked:
        h = hashlib.sha256(b"por-coef" + seed + i.to_bytes(8, "big")).digest()
        pairs.append((i, int.from_bytes(h, "big") % (curve_order - 1) + 1))
    return ChallengeSet(tuple(pairs), seed)


def prove(file: ProcessedFile, challenge: ChallengeSet, round_no: int = 0) -> PorProof:
    s = file.s
    mus = [0] * s
    for i, c in challenge.pairs:
        block = file.sectors[i - 1]
        for j in range(s):
            mus[j] = (mus[j] + c * block[j]) % curve_order
    sigma = _msm([file.authenticators[i - 1] for i, _ in challenge.pairs], [c for _, c in challenge.pairs])
    return PorProof(sigma, tuple(mus), round_no)


def verify(v: tuple, public_key: bytes, tag: FileTag, challenge: ChallengeSet, proof: PorProof) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(tag.signature, tag.body())
    except InvalidSignature:
        return False
    if not challenge.pairs or len(proof.mus) != len(tag.generators):
        return False
    if any(not 1 <= i <= tag.n for i, _ in challenge.pairs):
        return False
    lhs_points = [block_point(tag.name, i) for i, _ in challenge.pairs] + list(tag.generators)
    lhs_scalars = [c for _, c in challenge.pairs] + list(proof.mus)
    aggregate = _msm(lhs_points, lhs_scalars)
    # one final exponentiation over e(g2, sigma) * e(-v, aggregate)
    f = pairing(G2, proof.sigma, final_exponentiate=False) * pairing(neg(v), aggregate, final_exponentiate=False)
    return final_exponentiate(f) == FQ12.one()


@dataclass(frozen=True)
class PorBundle:
    """Everything a chain verifier needs to check one served proof."""

    v: tuple
    public_key: bytes
    tag: FileTag
    proof: PorProof
    query_size: int = DEFAULT_QUERY_SIZE

    def canonical_bytes(self) -> bytes:
        return encode(
            (g2_bytes(self.v), self.public_key, self.tag.body(), self.tag.signature, self.proof.serialize(), self.query_size)
        )


def verify_bundle(bundle: PorBundle, seed: bytes) -> bool:
    challenge = derive_challenge(seed, bundle.tag.n, bundle.query_size)
    return verify(bundle.v, bundle.public_key, bundle.tag, challenge, bundle.proof)


# ---------------------------------------------------------------------------
# parameter selection


@dataclass(frozen=True)
class Tradeoff:
    storage_overhead_bytes: int
    proof_bytes: int


def tradeoff(file_bytes: int, s: int, scalar_size: int = SCALAR_BYTES, point_size: int = POINT_BYTES) -> Tradeoff:
    """Authenticator storage against proof size as sectors per block grow."""
    if s < 1:
        raise ValueError("s must be at least 1")
    return Tradeoff(-(-file_bytes // s), (1 + s) * scalar_size + point_size)
