import hashlib
import itertools
import random
import struct
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from contractchecker import ads
from contractchecker.ads import ABSENT, EMPTY_ROOT, MEMBER, DuplicateKey, MerkleProof, MerkleTree, Record
from contractchecker.chainsim import GasMeter


def rec(i: int, epoch: int = 0, nonce=None) -> Record:
    return Record(b"key%03d" % i, i + 1 if nonce is None else nonce, hashlib.sha256(b"%d" % i).digest(), epoch)


def reference_root(records) -> bytes:
    """Naive builder written from the tree's description, not its code."""
    def sha(*parts):
        return hashlib.sha256(b"".join(parts)).digest()
    if not records:
        return sha(b"\x02", b"empty-tree")
    level = []
    for r in sorted(records, key=lambda r: r.key):
        enc = struct.pack(">I", len(r.key)) + r.key + r.nonce.to_bytes(16, "big") \
            + struct.pack(">I", len(r.digest)) + r.digest + struct.pack(">Q", r.epoch)
        level.append(sha(b"\x00", enc))
    n = len(level)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha(b"\x01", level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return sha(b"\x03", struct.pack(">Q", n), level[0])


def test_empty_and_single_leaf():
    assert MerkleTree().root == EMPTY_ROOT
    r = rec(1)
    assert MerkleTree([r]).root == reference_root([r])
    p = MerkleTree().prove(b"any")
    assert p.kind == ABSENT and ads.verify(EMPTY_ROOT, p, b"any")


def test_seven_records_match_reference():
    rng = random.Random(7)
    recs = [rec(rng.randrange(1000), nonce=rng.getrandbits(64)) for _ in range(7)]
    recs = list({r.key: r for r in recs}.values())
    assert ads.build(recs).root == reference_root(recs)


def test_reference_agreement_all_small_sizes():
    for n in range(0, 20):
        recs = [rec(i) for i in range(n)]
        assert ads.build(recs).root == reference_root(recs)


def test_duplicate_key():
    with pytest.raises(DuplicateKey):
        ads.build([rec(1), rec(1, epoch=2)])


def test_membership_and_absence():
    tree = ads.build([rec(i) for i in range(0, 20, 2)])
    for i in range(-1, 22):
        key = b"key%03d" % i if i >= 0 else b"a"
        p = ads.prove(tree, key)
        assert ads.verify(tree.root, p, key)
        assert (p.kind == MEMBER) == (0 <= i < 20 and i % 2 == 0)
        if p.kind == MEMBER:
            assert p.record == tree.get(key)


def test_proof_for_other_key_rejected():
    tree = ads.build([rec(i) for i in range(5)])
    assert not ads.verify(tree.root, tree.prove(b"key001"), b"key002")


def test_stale_root_fails():
    tree = ads.build([rec(i) for i in range(6)])
    old_root, old_proof = tree.root, tree.prove(b"key003")
    ads.apply_epoch(tree, [rec(3, epoch=1, nonce=99)])
    assert tree.root != old_root
    assert not ads.verify(tree.root, old_proof, b"key003")
    assert ads.verify(tree.root, tree.prove(b"key003"), b"key003")


def test_apply_epoch_idempotent_and_commuting():
    base = [rec(i) for i in range(5)]
    a = [rec(10), rec(11)]
    b = [rec(20), rec(2, epoch=1, nonce=77)]
    t1, t2 = ads.build(base), ads.build(base)
    r1 = ads.apply_epoch(t1, a)
    assert ads.apply_epoch(t1, a) == r1
    ads.apply_epoch(t1, b)
    ads.apply_epoch(t2, b)
    ads.apply_epoch(t2, a)
    assert t1.root == t2.root


@settings(max_examples=100)
@given(st.lists(st.integers(0, 200), unique=True, max_size=30), st.randoms(use_true_random=False))
def test_root_independent_of_insertion_order(keys, rnd):
    recs = [rec(k) for k in keys]
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    t = MerkleTree()
    ads.apply_epoch(t, shuffled)
    assert t.root == ads.build(recs).root == reference_root(recs)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 200), unique=True, min_size=1, max_size=40), st.integers(0, 210))
def test_soundness(keys, probe):
    tree = ads.build([rec(k) for k in keys])
    key = b"key%03d" % probe
    assert ads.verify(tree.root, tree.prove(key), key)


def tampered_variants(data: bytes):
    for i in range(len(data)):
        for delta in (1, 0x80):
            b = bytearray(data)
            b[i] ^= delta
            yield bytes(b)


def test_tampering_rejected_on_small_tree():
    tree = ads.build([rec(i) for i in range(0, 32, 2)])  # 16 leaves
    for key in (b"key004", b"key005"):
        data = tree.prove(key).encode()
        assert ads.verify_bytes(tree.root, data, key)
        for bad in tampered_variants(data):
            assert not ads.verify_bytes(tree.root, bad, key)


def test_proof_encoding_roundtrip_and_size():
    tree = ads.build([rec(i) for i in range(9)])
    p = tree.prove(b"key004")
    assert MerkleProof.decode(p.encode()) == p
    assert len(p.leaves[0].siblings) == p.height() == 4
    assert p.size_words() * 32 >= len(p.encode())


def test_padding_node_cannot_be_claimed():
    tree = ads.build([rec(i) for i in range(3)])
    p = tree.prove(b"key002")
    lp = p.leaves[0]
    ghost = replace(p, leaves=(replace(lp, index=3),))
    assert not ads.verify(tree.root, ghost, b"key002")


def test_verify_charges_hash_gas():
    tree = ads.build([rec(i) for i in range(8)])
    m = GasMeter()
    assert ads.verify(tree.root, tree.prove(b"key001"), b"key001", meter=m)
    assert m.units["hash_per_word"] > 0


def test_cross_epoch_freshness_example():
    # w1(K), w2(K') in one epoch, then the latest write of K is still w1
    tree = MerkleTree()
    w1 = Record(b"K", 1, b"d1", 0)
    w2 = Record(b"K'", 2, b"d2", 0)
    root = ads.apply_epoch(tree, [w1, w2])
    p = tree.prove(b"K")
    assert ads.verify(root, p, b"K") and p.record.nonce == 1
