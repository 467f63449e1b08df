import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st
from py_ecc.optimized_bn128 import G1, Z1, add, curve_order, eq, multiply

from dualchain import por

GB = 10 * 1024**3


@pytest.fixture(scope="module")
def keys():
    return por.PorKeys.generate(random.Random(11))


@pytest.fixture(scope="module")
def small_file(keys):
    rng = random.Random(5)
    return por.preprocess(rng.randbytes(150), 2, keys, rng)


def _accepts(keys, pf, challenge, proof):
    return por.verify(keys.v, keys.public_key, pf.tag, challenge, proof)


def _full(pf):
    return por.ChallengeSet(tuple((i, i + 1) for i in range(1, pf.n + 1)), b"full")


def test_authenticator_formula(keys, small_file):
    # sigma_i == alpha * (H(name||i) + sum_j m_ij u_j), computed with the public generators
    for i, block in enumerate(small_file.sectors, start=1):
        acc = por.block_point(small_file.tag.name, i)
        for u, m in zip(small_file.tag.generators, block):
            acc = add(acc, multiply(u, m)) if m else acc
        assert eq(multiply(acc, keys.alpha), small_file.authenticators[i - 1])


def test_zero_sector_authenticator(keys):
    pf = por.preprocess(b"", 1, keys, random.Random(2), sectors=[(0,)])
    assert eq(pf.authenticators[0], multiply(por.block_point(pf.tag.name, 1), keys.alpha))


def test_sector_split_round_trip():
    data = bytes(range(256)) * 3
    blocks = por.split_sectors(data, 3)
    assert all(0 <= m < 2**por.CHUNK_BITS for b in blocks for m in b)
    total = 0
    for b in blocks:
        for m in b:
            total = (total << por.CHUNK_BITS) | m
    width = len(blocks) * 3 * por.CHUNK_BITS
    assert total >> (width - 8 * len(data)) == int.from_bytes(data, "big")
    assert len(blocks) == por.blocks_for(len(data), 3)


def test_empty_file_rejected(keys):
    with pytest.raises(ValueError):
        por.preprocess(b"", 2, keys)


def test_single_pair_challenge(small_file):
    ch = por.ChallengeSet(((2, 1),), b"")
    proof = por.prove(small_file, ch)
    assert proof.mus == small_file.sectors[1]
    assert eq(proof.sigma, small_file.authenticators[1])


def test_empty_challenge(keys, small_file):
    ch = por.ChallengeSet((), b"")
    proof = por.prove(small_file, ch)
    assert proof.mus == (0, 0) and proof.sigma == Z1
    assert not _accepts(keys, small_file, ch, proof)


def test_challenge_deterministic():
    a = por.derive_challenge(b"seed", 50, 20)
    assert a == por.derive_challenge(b"seed", 50, 20)
    assert len({i for i, _ in a.pairs}) == 20
    assert all(1 <= i <= 50 and 1 <= c < curve_order for i, c in a.pairs)


def test_challenge_seeds_differ():
    seen = {por.derive_challenge(i.to_bytes(4, "big"), 1000, 20).pairs for i in range(1000)}
    assert len(seen) == 1000


def test_challenge_capped_and_single_block():
    assert len(por.derive_challenge(b"x", 5, 20).pairs) == 5
    assert {i for i, _ in por.derive_challenge(b"x", 1, 20).pairs} == {1}
    with pytest.raises(ValueError):
        por.derive_challenge(b"x", 0)


@settings(max_examples=12)
@given(st.integers(1, 200), st.integers(1, 4), st.binary(min_size=32, max_size=32), st.integers(1, 12))
def test_completeness(size, s, seed, q):
    rng = random.Random(size * 31 + s)
    k = por.PorKeys.generate(rng)
    pf = por.preprocess(rng.randbytes(size), s, k, rng)
    ch = por.derive_challenge(seed, pf.n, q)
    assert _accepts(k, pf, ch, por.prove(pf, ch))


def test_tampered_sector_rejected(keys, small_file):
    ch = _full(small_file)
    blocks = [list(b) for b in small_file.sectors]
    blocks[1][0] ^= 1
    bad = dataclasses.replace(small_file, sectors=tuple(tuple(b) for b in blocks))
    assert not _accepts(keys, small_file, ch, por.prove(bad, ch))


def test_tampered_authenticator_rejected(keys, small_file):
    ch = _full(small_file)
    auths = list(small_file.authenticators)
    auths[0] = add(auths[0], G1)
    bad = dataclasses.replace(small_file, authenticators=tuple(auths))
    assert not _accepts(keys, small_file, ch, por.prove(bad, ch))


def test_tampered_response_rejected(keys, small_file):
    ch = _full(small_file)
    proof = por.prove(small_file, ch)
    assert _accepts(keys, small_file, ch, proof)
    bumped = por.PorProof(proof.sigma, (proof.mus[0] + 1,) + proof.mus[1:])
    assert not _accepts(keys, small_file, ch, bumped)
    assert not _accepts(keys, small_file, ch, por.PorProof(add(proof.sigma, G1), proof.mus))


def test_missing_block_prover_rejected(keys, small_file):
    ch = _full(small_file)
    # the prover lost block 1 and substitutes zeros
    blocks = list(small_file.sectors)
    blocks[0] = (0,) * small_file.s
    bad = dataclasses.replace(small_file, sectors=tuple(blocks))
    assert not _accepts(keys, small_file, ch, por.prove(bad, ch))


def test_bad_tag_signature_rejected(keys, small_file):
    ch = _full(small_file)
    proof = por.prove(small_file, ch)
    forged = dataclasses.replace(small_file.tag, signature=bytes(64))
    assert not por.verify(keys.v, keys.public_key, forged, ch, proof)


def test_bundle_round_trip(keys, small_file):
    ch = por.derive_challenge(b"tip", small_file.n, 3)
    bundle = por.PorBundle(keys.v, keys.public_key, small_file.tag, por.prove(small_file, ch, 7), 3)
    assert por.verify_bundle(bundle, b"tip")
    assert not por.verify_bundle(bundle, b"other tip")
    assert bundle.canonical_bytes() == bundle.canonical_bytes()


def test_tradeoff_ten_gb():
    one = por.tradeoff(GB, 1)
    assert one.storage_overhead_bytes == GB and one.proof_bytes == 32 + 32 + 64
    assert por.tradeoff(GB, 10).storage_overhead_bytes == -(-GB // 10)


@given(st.integers(1, 10**12), st.integers(1, 64))
def test_tradeoff_monotone(size, s):
    assert por.tradeoff(size, s + 1).storage_overhead_bytes <= por.tradeoff(size, s).storage_overhead_bytes


@pytest.mark.parametrize("s", [1, 2, 3, 5])
def test_proof_size_law(keys, s):
    rng = random.Random(s)
    pf = por.preprocess(rng.randbytes(64), s, keys, rng)
    proof = por.prove(pf, por.derive_challenge(b"z", pf.n, 2))
    assert proof.size_bytes() == (1 + s) * 32 + 64 == por.tradeoff(1, s).proof_bytes


def test_tradeoff_invalid():
    with pytest.raises(ValueError):
        por.tradeoff(10, 0)
