"""Merkle tree over the latest write of every key.

Leaves are sorted by key. Odd levels are padded by duplicating their last
node. The published root also commits to the leaf count, which pins down
where padding happens and so rules out proofs for phantom duplicate leaves.
Absence of a key is shown by its two neighbouring leaves (or a single edge
leaf when the key sorts before the first or after the last).
"""

from dataclasses import dataclass
from typing import Iterable, Optional

from .core import H, DecodeError, Reader, Writer

EMPTY_ROOT = H(b"\x02", b"empty-tree")

MEMBER = 1
ABSENT = 2


class DuplicateKey(Exception):
    pass


@dataclass(frozen=True)
class Record:
    key: bytes
    nonce: int
    digest: bytes
    epoch: int

    def encode(self, w: Writer) -> None:
        w.blob(self.key).u128(self.nonce).blob(self.digest).u64(self.epoch)

    @staticmethod
    def decode(r: Reader) -> "Record":
        return Record(r.blob(), r.u128(), r.blob(), r.u64())

    def leaf_hash(self) -> bytes:
        w = Writer()
        self.encode(w)
        return H(b"\x00", w.bytes())


def _node(left: bytes, right: bytes) -> bytes:
    return H(b"\x01", left, right)


def _seal(n: int, top: bytes) -> bytes:
    return H(b"\x03", n.to_bytes(8, "big"), top)


@dataclass(frozen=True)
class LeafProof:
    index: int
    record: Record
    siblings: tuple  # one hash per level, bottom-up


@dataclass(frozen=True)
class MerkleProof:
    key: bytes
    kind: int
    leaves: tuple  # LeafProof entries (1 for membership, 0-2 for absence)
    leaf_count: int
    root: bytes

    @property
    def record(self) -> Optional[Record]:
        return self.leaves[0].record if self.kind == MEMBER else None

    def height(self) -> int:
        return tree_height(self.leaf_count)

    def encode(self) -> bytes:
        w = Writer()
        w.u8(0x50).u8(self.kind).blob(self.key).u64(self.leaf_count).raw(self.root)
        w.u8(len(self.leaves))
        for lp in self.leaves:
            w.u64(lp.index)
            lp.record.encode(w)
            w.u8(len(lp.siblings))
            for s in lp.siblings:
                w.raw(s)
        return w.bytes()

    @staticmethod
    def decode(data: bytes) -> "MerkleProof":
        r = Reader(data)
        if r.u8() != 0x50:
            raise DecodeError("not a proof")
        kind = r.u8()
        key = r.blob()
        n = r.u64()
        root = r.raw(32)
        leaves = []
        for _ in range(r.u8()):
            idx = r.u64()
            rec = Record.decode(r)
            sibs = tuple(r.raw(32) for _ in range(r.u8()))
            leaves.append(LeafProof(idx, rec, sibs))
        r.expect_done()
        return MerkleProof(key, kind, tuple(leaves), n, root)

    def size_words(self) -> int:
        return -(-len(self.encode()) // 32)


def tree_height(n: int) -> int:
    h = 0
    while n > 1:
        n = (n + 1) // 2
        h += 1
    return h


class MerkleTree:
    def __init__(self, records: Iterable[Record] = ()):
        self._recs: dict = {}
        for rec in records:
            if rec.key in self._recs:
                raise DuplicateKey(rec.key)
            self._recs[rec.key] = rec
        self._levels = None
        self._keys = None

    def __len__(self) -> int:
        return len(self._recs)

    def get(self, key: bytes) -> Optional[Record]:
        return self._recs.get(key)

    def records(self) -> list:
        return [self._recs[k] for k in sorted(self._recs)]

    def _build(self):
        if self._levels is not None:
            return
        self._keys = sorted(self._recs)
        level = [self._recs[k].leaf_hash() for k in self._keys]
        levels = [level]
        while len(level) > 1:
            if len(level) % 2:
                level = level + [level[-1]]
            level = [_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]
            levels.append(level)
        self._levels = levels

    @property
    def root(self) -> bytes:
        self._build()
        if not self._keys:
            return EMPTY_ROOT
        return _seal(len(self._keys), self._levels[-1][0])

    def _path(self, index: int) -> tuple:
        sibs = []
        for level in self._levels[:-1]:
            sib = index ^ 1
            sibs.append(level[sib] if sib < len(level) else level[index])
            index //= 2
        return tuple(sibs)

    def _leaf(self, index: int) -> LeafProof:
        return LeafProof(index, self._recs[self._keys[index]], self._path(index))

    def prove(self, key: bytes) -> MerkleProof:
        self._build()
        n = len(self._keys)
        if key in self._recs:
            i = self._keys.index(key)
            return MerkleProof(key, MEMBER, (self._leaf(i),), n, self.root)
        import bisect
        i = bisect.bisect_left(self._keys, key)
        idx = [j for j in (i - 1, i) if 0 <= j < n]
        return MerkleProof(key, ABSENT, tuple(self._leaf(j) for j in idx), n, self.root)

    def upsert(self, rec: Record) -> None:
        self._recs[rec.key] = rec
        self._levels = None

    def copy(self) -> "MerkleTree":
        t = MerkleTree()
        t._recs = dict(self._recs)
        return t


def build(records: Iterable[Record]) -> MerkleTree:
    return MerkleTree(records)


def prove(tree: MerkleTree, key: bytes) -> MerkleProof:
    return tree.prove(key)


def _fold(lp: LeafProof, n: int) -> Optional[bytes]:
    if lp.index >= n or len(lp.siblings) != tree_height(n):
        return None
    h = lp.record.leaf_hash()
    index, width = lp.index, n
    for sib in lp.siblings:
        if index % 2 == 0:
            if index + 1 >= width and sib != h:
                return None  # padding level: the sibling must be the node itself
            h = _node(h, sib)
        else:
            h = _node(sib, h)
        index //= 2
        width = (width + 1) // 2
    return _seal(n, h)


def verify(root: bytes, proof: MerkleProof, key: Optional[bytes] = None, meter=None) -> bool:
    """Check a proof against a trusted root; optionally pin the queried key.

    When a gas meter is supplied the path hashing is charged to it.
    """
    if key is not None and proof.key != key:
        return False
    if proof.root != root:
        return False
    n = proof.leaf_count
    if meter is not None:
        meter.charge("hash_per_word", 3 * (1 + tree_height(n)) * max(1, len(proof.leaves)))
    if n == 0:
        return proof.kind == ABSENT and not proof.leaves and root == EMPTY_ROOT
    for lp in proof.leaves:
        if _fold(lp, n) != root:
            return False
    k = proof.key
    if proof.kind == MEMBER:
        return len(proof.leaves) == 1 and proof.leaves[0].record.key == k
    if proof.kind != ABSENT:
        return False
    if len(proof.leaves) == 2:
        a, b = proof.leaves
        return b.index == a.index + 1 and a.record.key < k < b.record.key
    if len(proof.leaves) == 1:
        lp = proof.leaves[0]
        if lp.index == 0 and k < lp.record.key:
            return True
        return lp.index == n - 1 and lp.record.key < k
    return False


def verify_bytes(root: bytes, data: bytes, key: Optional[bytes] = None) -> bool:
    try:
        return verify(root, MerkleProof.decode(data), key)
    except DecodeError:
        return False


def apply_epoch(tree: MerkleTree, writes) -> bytes:
    """Upsert the latest write per key (later entries win) and return the new root."""
    for rec in writes:
        tree.upsert(rec)
    return tree.root
