"""Domain types, identities, signatures, nonces and canonical serialization."""

import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

HASH_LEN = 32
ADDRESS_LEN = 20
NONCE_BITS = 128


def H(*parts: bytes) -> bytes:
    """The single 256-bit hash used throughout the package."""
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


class Kind(Enum):
    WRITE = 1
    READ = 2


class Role(Enum):
    CLIENT = 1
    SERVER = 2
    IDP = 3


class CoreError(Exception):
    pass


class DecodeError(CoreError):
    pass


class UnknownParty(CoreError):
    pass


@dataclass(frozen=True)
class PartyId:
    address: bytes
    role: Role

    def short(self) -> str:
        return f"{self.role.name.lower()}:{self.address.hex()[:8]}"


@dataclass(frozen=True)
class Signature:
    signer: PartyId
    bytes: bytes


# ---------------------------------------------------------------- signatures

class KeyedHashScheme:
    """Deterministic keyed-hash signatures for simulation.

    The public key is a hash of the secret. Verification needs the secret,
    so the scheme keeps a private table from public key to secret; it stands
    in for the verifier side of a real asymmetric scheme. Without the secret
    a caller can neither produce nor guess a valid tag.
    """

    name = "keyed-hash"

    def __init__(self):
        self._secrets: dict = {}

    def public_key(self, secret: bytes) -> bytes:
        return H(b"pk", secret)

    def keygen(self, seed: bytes) -> tuple:
        secret = H(b"sk", seed)
        pub = self.public_key(secret)
        self._secrets[pub] = secret
        return secret, pub

    def sign(self, message: bytes, secret: bytes) -> bytes:
        return hmac.new(secret, message, hashlib.sha256).digest()

    def verify(self, message: bytes, sig: bytes, public: bytes) -> bool:
        secret = self._secrets.get(public)
        if secret is None:
            return False
        return hmac.compare_digest(self.sign(message, secret), sig)


class Ed25519Scheme:
    """Real asymmetric signatures, pluggable in place of the keyed-hash scheme."""

    name = "ed25519"

    def __init__(self):
        from cryptography.hazmat.primitives.asymmetric import ed25519
        from cryptography.hazmat.primitives import serialization
        self._ed = ed25519
        self._ser = serialization

    def public_key(self, secret: bytes) -> bytes:
        sk = self._ed.Ed25519PrivateKey.from_private_bytes(secret)
        return sk.public_key().public_bytes(self._ser.Encoding.Raw, self._ser.PublicFormat.Raw)

    def keygen(self, seed: bytes) -> tuple:
        secret = H(b"sk", seed)
        return secret, self.public_key(secret)

    def sign(self, message: bytes, secret: bytes) -> bytes:
        return self._ed.Ed25519PrivateKey.from_private_bytes(secret).sign(message)

    def verify(self, message: bytes, sig: bytes, public: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature
        try:
            self._ed.Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
            return True
        except (InvalidSignature, ValueError):
            return False


SCHEME = KeyedHashScheme()


def use_scheme(scheme) -> None:
    global SCHEME
    SCHEME = scheme


def address_of(public: bytes) -> bytes:
    return H(b"addr", public)[:ADDRESS_LEN]


@dataclass(frozen=True)
class KeyPair:
    party: PartyId
    secret: bytes = field(repr=False)
    public: bytes


def keygen(role: Role, seed) -> KeyPair:
    if isinstance(seed, str):
        seed = seed.encode()
    elif isinstance(seed, int):
        seed = seed.to_bytes(16, "big", signed=False)
    secret, pub = SCHEME.keygen(role.name.encode() + b"|" + seed)
    return KeyPair(PartyId(address_of(pub), role), secret, pub)


def sign(message: bytes, key: KeyPair) -> Signature:
    return Signature(key.party, SCHEME.sign(message, key.secret))


def verify(message: bytes, sig: Signature, public: bytes) -> bool:
    if sig is None or address_of(public) != sig.signer.address:
        return False
    return SCHEME.verify(message, sig.bytes, public)


class Registry:
    """Identity map: address -> (PartyId, public key)."""

    def __init__(self, parties: Sequence = ()):
        self._by_addr: dict = {}
        for kp in parties:
            self.add(kp.party, kp.public)

    def add(self, party: PartyId, public: bytes) -> None:
        if address_of(public) != party.address:
            raise CoreError("address does not derive from public key")
        self._by_addr[party.address] = (party, public)

    def __contains__(self, address: bytes) -> bool:
        return address in self._by_addr

    def party(self, address: bytes) -> PartyId:
        try:
            return self._by_addr[address][0]
        except KeyError:
            raise UnknownParty(address.hex()) from None

    def public(self, address: bytes) -> bytes:
        try:
            return self._by_addr[address][1]
        except KeyError:
            raise UnknownParty(address.hex()) from None

    def check(self, message: bytes, sig: Optional[Signature], signer: PartyId) -> bool:
        """True iff sig is a valid signature by exactly `signer` over message."""
        if sig is None or sig.signer != signer or signer.address not in self._by_addr:
            return False
        return verify(message, sig, self._by_addr[signer.address][1])

    def copy(self) -> "Registry":
        r = Registry()
        r._by_addr = dict(self._by_addr)
        return r


# ---------------------------------------------------------------- operations

@dataclass(frozen=True)
class Operation:
    nonce: int
    client: PartyId
    kind: Kind
    key: bytes
    value_digest: bytes
    t_begin: int
    t_end: int
    source: Optional[int] = None  # write nonce a read reflects; None means NOT_FOUND
    client_sig: Optional[Signature] = None
    server_sig: Optional[Signature] = None

    def __post_init__(self):
        if not 0 <= self.t_begin < self.t_end:
            raise ValueError(f"need 0 <= t_begin < t_end, got [{self.t_begin}, {self.t_end}]")

    @property
    def is_read(self) -> bool:
        return self.kind is Kind.READ

    @property
    def is_write(self) -> bool:
        return self.kind is Kind.WRITE

    def body(self) -> bytes:
        """Bytes covered by both signatures."""
        return encode_operation(self, with_sigs=False)

    def content_hash(self) -> bytes:
        return H(self.body())

    def unsigned(self) -> "Operation":
        return replace(self, client_sig=None, server_sig=None)

    def label(self) -> str:
        k = "w" if self.is_write else "r"
        return f"{k}{self.nonce:x}"[:12]


NOT_FOUND = b"\x00NOT_FOUND"


def read_digest(write_value_digest: Optional[bytes], write_nonce: Optional[int]) -> bytes:
    if write_nonce is None:
        return H(b"read", NOT_FOUND)
    return H(b"read", write_value_digest, write_nonce.to_bytes(16, "big"))


def make_write(nonce: int, client: PartyId, key: bytes, value: bytes, t_begin: int, t_end: int) -> Operation:
    return Operation(nonce, client, Kind.WRITE, key, H(b"value", value), t_begin, t_end)


def make_read(nonce: int, client: PartyId, key: bytes, source: Optional[Operation], t_begin: int, t_end: int) -> Operation:
    if source is None:
        return Operation(nonce, client, Kind.READ, key, read_digest(None, None), t_begin, t_end, None)
    return Operation(nonce, client, Kind.READ, key, read_digest(source.value_digest, source.nonce),
                     t_begin, t_end, source.nonce)


def sign_as_client(op: Operation, key: KeyPair) -> Operation:
    return replace(op, client_sig=sign(op.body(), key))


def sign_as_server(op: Operation, key: KeyPair) -> Operation:
    return replace(op, server_sig=sign(op.body(), key))


@dataclass(frozen=True)
class Attestation:
    epoch: int
    party: PartyId
    ops: tuple
    total_order_declared: bool = False
    active: tuple = ()  # server only: addresses of clients active in the epoch
    part: int = 0
    parts: int = 1
    sig: Optional[Signature] = None

    def body(self) -> bytes:
        return encode_attestation(self, with_sig=False)

    def signed(self, key: KeyPair) -> "Attestation":
        a = replace(self, sig=None)
        return replace(a, sig=sign(a.body(), key))


# ---------------------------------------------------------------- nonces

class NonceSource:
    """Seeded 128-bit nonces; a bijection of a counter, so never repeats."""

    _MULT = 0x9E3779B97F4A7C15F39CC0605CEDC835  # odd, hence invertible mod 2**128
    _MASK = (1 << NONCE_BITS) - 1

    def __init__(self, seed: int = 0):
        s = int.from_bytes(H(b"nonce", seed.to_bytes(16, "big", signed=False)), "big")
        self._offset = s & self._MASK
        self._xor = (s >> NONCE_BITS) & self._MASK
        self._counter = 0

    def next(self) -> int:
        c = (self._counter + self._offset) & self._MASK
        self._counter += 1
        v = (c * self._MULT) & self._MASK
        return v ^ self._xor

    __call__ = next


# ---------------------------------------------------------------- encoding

class Writer:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, v: int):
        self.buf += struct.pack(">B", v)
        return self

    def u32(self, v: int):
        self.buf += struct.pack(">I", v)
        return self

    def u64(self, v: int):
        self.buf += struct.pack(">Q", v)
        return self

    def u128(self, v: int):
        self.buf += v.to_bytes(16, "big")
        return self

    def blob(self, b: bytes):
        self.u32(len(b))
        self.buf += b
        return self

    def raw(self, b: bytes):
        self.buf += b
        return self

    def bytes(self) -> bytes:
        return bytes(self.buf)


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        b = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return b

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def u128(self) -> int:
        return int.from_bytes(self._take(16), "big")

    def blob(self) -> bytes:
        return self._take(self.u32())

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_done(self):
        if not self.done():
            raise DecodeError("trailing bytes")


_OP_TAG = 0x4F
_ATT_TAG = 0x41


def _enum(cls, v):
    try:
        return cls(v)
    except ValueError:
        raise DecodeError(f"bad {cls.__name__} value {v}") from None


def write_party(w: Writer, p: PartyId):
    w.u8(p.role.value).blob(p.address)


def read_party(r: Reader) -> PartyId:
    role = _enum(Role, r.u8())
    return PartyId(r.blob(), role)


def _write_sig(w: Writer, sig: Optional[Signature]):
    if sig is None:
        w.u8(0)
    else:
        w.u8(1)
        write_party(w, sig.signer)
        w.blob(sig.bytes)


def _read_sig(r: Reader) -> Optional[Signature]:
    flag = r.u8()
    if flag == 0:
        return None
    if flag != 1:
        raise DecodeError("bad signature flag")
    return Signature(read_party(r), r.blob())


def _write_op(w: Writer, op: Operation, with_sigs: bool):
    w.u8(_OP_TAG).u128(op.nonce)
    write_party(w, op.client)
    w.u8(op.kind.value).blob(op.key).blob(op.value_digest)
    if op.source is None:
        w.u8(0)
    else:
        w.u8(1).u128(op.source)
    w.u64(op.t_begin).u64(op.t_end)
    if with_sigs:
        _write_sig(w, op.client_sig)
        _write_sig(w, op.server_sig)


def _read_op(r: Reader) -> Operation:
    if r.u8() != _OP_TAG:
        raise DecodeError("not an operation record")
    nonce = r.u128()
    client = read_party(r)
    kind = _enum(Kind, r.u8())
    key = r.blob()
    vd = r.blob()
    flag = r.u8()
    if flag not in (0, 1):
        raise DecodeError("bad source flag")
    source = r.u128() if flag else None
    tb, te = r.u64(), r.u64()
    cs = _read_sig(r)
    ss = _read_sig(r)
    return Operation(nonce, client, kind, key, vd, tb, te, source, cs, ss)


def encode_operation(op: Operation, with_sigs: bool = True) -> bytes:
    w = Writer()
    _write_op(w, op, with_sigs)
    return w.bytes()


def decode_operation(data: bytes) -> Operation:
    r = Reader(data)
    op = _read_op(r)
    r.expect_done()
    return op


def _write_att(w: Writer, a: Attestation, with_sig: bool):
    w.u8(_ATT_TAG).u64(a.epoch)
    write_party(w, a.party)
    w.u8(1 if a.total_order_declared else 0)
    w.u32(a.part).u32(a.parts)
    w.u32(len(a.active))
    for addr in a.active:
        w.blob(addr)
    w.u32(len(a.ops))
    for op in a.ops:
        _write_op(w, op, True)
    if with_sig:
        _write_sig(w, a.sig)


def encode_attestation(a: Attestation, with_sig: bool = True) -> bytes:
    w = Writer()
    _write_att(w, a, with_sig)
    return w.bytes()


def read_attestation(r: Reader) -> Attestation:
    if r.u8() != _ATT_TAG:
        raise DecodeError("not an attestation record")
    epoch = r.u64()
    party = read_party(r)
    tod = r.u8()
    if tod not in (0, 1):
        raise DecodeError("bad order flag")
    part, parts = r.u32(), r.u32()
    active = tuple(r.blob() for _ in range(r.u32()))
    ops = tuple(_read_op(r) for _ in range(r.u32()))
    sig = _read_sig(r)
    return Attestation(epoch, party, ops, bool(tod), active, part, parts, sig)


def decode_attestation(data: bytes) -> Attestation:
    r = Reader(data)
    a = read_attestation(r)
    r.expect_done()
    return a


def canonical_bytes(x) -> bytes:
    if isinstance(x, Operation):
        return encode_operation(x)
    if isinstance(x, Attestation):
        return encode_attestation(x)
    raise TypeError(f"no canonical encoding for {type(x).__name__}")


def decode(data: bytes):
    if not data:
        raise DecodeError("empty input")
    if data[0] == _OP_TAG:
        return decode_operation(data)
    if data[0] == _ATT_TAG:
        return decode_attestation(data)
    raise DecodeError("unknown record tag")


def write_records(path, records) -> None:
    """On-disk trace format: a sequence of length-prefixed canonical records."""
    with open(path, "wb") as fh:
        for rec in records:
            b = canonical_bytes(rec)
            fh.write(struct.pack(">I", len(b)))
            fh.write(b)


def read_records(path) -> list:
    out = []
    with open(path, "rb") as fh:
        data = fh.read()
    r = Reader(data)
    while not r.done():
        out.append(decode(r.blob()))
    return out


def precedes(a: Operation, b: Operation) -> bool:
    """Real-time precedence; equal endpoints count as concurrent."""
    return a.t_end < b.t_begin
