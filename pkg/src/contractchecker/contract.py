"""The on-chain checker contract, executed by the chain simulator.

Call payload layout (big-endian):

    byte 0        function id (see ``Fn``)
    bytes 1..8    epoch number, u64
    bytes 9..     body, a canonical record:
                    ATTEST_CLIENT / ATTEST_SERVER  encoded Attestation
                    REGISTER                       role u8, address blob, public key blob
                    DEREGISTER                     role u8, address blob
                    ANSWER_CHALLENGE               u32 count, then that many proof blobs
                    TICK                           empty

Attestations may be split into parts (one per transaction); each part is
signed on its own and the epoch's log is the concatenation in part order.
"""

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional

from . import ads
from .chainsim import Receipt, Suspended
from .consistency import ORDER_BREAK, MalformedRead, Status, Verdict, audit_ordered
from .core import (H, Attestation, DecodeError, PartyId, Reader, Registry, Role, Writer,
                   decode_attestation, encode_attestation, read_party, write_party)
from .cost import OFF, ON, PlacementConfig
from .crosscheck import (AC1, CrosscheckReport, IrreparableConflict, attribute, crosscheck, ident,
                         repair_server_log, verify_client_log, verify_server_log)


class Fn(IntEnum):
    ATTEST_CLIENT = 1
    ATTEST_SERVER = 2
    REGISTER = 3
    DEREGISTER = 4
    ANSWER_CHALLENGE = 5
    TICK = 6


def encode_call(fn: Fn, epoch: int, body: bytes = b"") -> bytes:
    return Writer().u8(int(fn)).u64(epoch).raw(body).bytes()


def decode_call(payload: bytes) -> tuple:
    if len(payload) < 9:
        raise DecodeError("short payload")
    r = Reader(payload)
    try:
        fn = Fn(r.u8())
    except ValueError:
        raise DecodeError("unknown function id") from None
    epoch = r.u64()
    return fn, epoch, bytes(payload[9:])


def encode_member(party: PartyId, public: Optional[bytes] = None) -> bytes:
    w = Writer()
    write_party(w, party)
    if public is not None:
        w.blob(public)
    return w.bytes()


def encode_proofs(proofs) -> bytes:
    w = Writer().u32(len(proofs))
    for p in proofs:
        w.blob(p.encode())
    return w.bytes()


class ContractError(Exception):
    pass


class UnauthorizedCaller(ContractError):
    pass


class BadSignature(ContractError):
    pass


class ClientForkDetected(ContractError):
    pass


class ServerForkDetected(ContractError):
    pass


class BadProof(ContractError):
    pass


class Reentrancy(ContractError):
    pass


CONSISTENT = "Consistent"
INCONSISTENT = "Inconsistent"
ATTACK_DETECTED = "AttackDetected"
ATTACK_SUSPECTED = "AttackSuspected"


@dataclass(frozen=True)
class EpochVerdict:
    epoch: int
    status: str
    audit: Verdict
    attributions: tuple = ()
    missing: tuple = ()
    order: tuple = ()  # nonces of the audited (repaired) order
    revision: int = 0
    note: str = ""

    @property
    def effective(self) -> str:
        """Consistent/Inconsistent of the audited order, whatever else was detected."""
        return self.audit.status.value

    @property
    def codes(self) -> list:
        return sorted({a.code for a in self.attributions})


class _NotReady:
    def __bool__(self):
        return False

    def __repr__(self):
        return "NotReady"


NotReady = _NotReady()


@dataclass(frozen=True)
class ContractConfig:
    placement: PlacementConfig = PlacementConfig()
    double_signed: bool = True
    lock: bool = True
    wait_for: str = "active"  # or "all": every whitelisted client must attest
    epoch_ticks: int = 15_000
    finality: int = 6
    timeout_blocks: Optional[int] = None

    @property
    def timeout(self) -> int:
        return self.timeout_blocks if self.timeout_blocks is not None else 2 * self.finality


@dataclass
class EpochLog:
    client_parts: dict = field(default_factory=dict)  # address -> {part: Attestation}
    client_tx: dict = field(default_factory=dict)  # address -> [tx ids]
    server_parts: dict = field(default_factory=dict)  # part -> Attestation
    server_tx: list = field(default_factory=list)
    first_height: Optional[int] = None
    server_height: Optional[int] = None
    verdict: Optional[EpochVerdict] = None
    verdict_tx: Optional[int] = None
    waiting: tuple = ()  # keys whose latest committed write must be proven
    proofs: Optional[dict] = None  # key -> nonce or None, from verified proofs

    def copy(self) -> "EpochLog":
        return EpochLog({a: dict(p) for a, p in self.client_parts.items()},
                        {a: list(t) for a, t in self.client_tx.items()},
                        dict(self.server_parts), list(self.server_tx), self.first_height,
                        self.server_height, self.verdict, self.verdict_tx, self.waiting,
                        None if self.proofs is None else dict(self.proofs))


def _complete(parts: dict) -> bool:
    if not parts:
        return False
    n = next(iter(parts.values())).parts
    return len(parts) == n and all(a.parts == n for a in parts.values())


def _merge_parts(parts: dict) -> Attestation:
    ordered = [parts[k] for k in sorted(parts)]
    first = ordered[0]
    ops = tuple(op for a in ordered for op in a.ops)
    active = tuple(sorted({x for a in ordered for x in a.active}))
    return Attestation(first.epoch, first.party, ops, first.total_order_declared, active)


class ContractState:
    def __init__(self, config: ContractConfig, registry: Registry, server: PartyId, idp: PartyId,
                 clients=()):
        self.config = config
        self.registry = registry
        self.server = server
        self.idp = idp
        self.members: dict = {c.address: (0, None) for c in clients}
        self.epochs: dict = {}
        self.persistent: dict = {}  # key -> (nonce, digest, epoch) when kept on-chain
        self.ads_root = ads.EMPTY_ROOT
        self.challenge_var = b""
        self.evidence: list = []  # (kind, epoch, address hex)
        self.lock = False

    @property
    def placement(self) -> PlacementConfig:
        return self.config.placement

    @property
    def verdicts(self) -> dict:
        return {e: log.verdict for e, log in sorted(self.epochs.items()) if log.verdict is not None}

    def copy(self) -> "ContractState":
        s = ContractState.__new__(ContractState)
        s.config = self.config
        s.registry = self.registry.copy()
        s.server, s.idp = self.server, self.idp
        s.members = dict(self.members)
        s.epochs = {e: log.copy() for e, log in self.epochs.items()}
        s.persistent = dict(self.persistent)
        s.ads_root = self.ads_root
        s.challenge_var = self.challenge_var
        s.evidence = list(self.evidence)
        s.lock = self.lock
        return s

    def is_member(self, address: bytes, epoch: int) -> bool:
        span = self.members.get(address)
        if span is None:
            return False
        start, end = span
        return start <= epoch and (end is None or epoch < end)

    def whitelist(self, epoch: int) -> list:
        return sorted(a for a in self.members if self.is_member(a, epoch))

    def digest(self) -> bytes:
        w = Writer()
        for addr in sorted(self.members):
            s, e = self.members[addr]
            w.blob(addr).u64(s).u64(0 if e is None else e + 1)
        for epoch in sorted(self.epochs):
            log = self.epochs[epoch]
            w.u64(epoch)
            for addr in sorted(log.client_parts):
                for k in sorted(log.client_parts[addr]):
                    w.blob(encode_attestation(log.client_parts[addr][k]))
            for k in sorted(log.server_parts):
                w.blob(encode_attestation(log.server_parts[k]))
            v = log.verdict
            if v is not None:
                w.blob(repr((v.status, v.effective, v.codes, v.order, v.revision)).encode())
        for key in sorted(self.persistent):
            n, d, e = self.persistent[key]
            w.blob(key).u128(n).blob(d).u64(e)
        w.raw(self.ads_root).blob(self.challenge_var)
        w.blob(repr(self.evidence).encode())
        return H(w.bytes())


def op_words(op) -> int:
    return math.ceil(len(op.body()) / 32)


RECORD_WORDS = 3  # nonce, digest, epoch
SIG_WORDS = 2


class Contract:
    """Stateless executor; all mutable data lives in ContractState.

    `tree` is the server-held Merkle tree used when the persistent log is
    off-chain. The contract only keeps its root; the root transition after
    an audit is taken from the tree (see the decisions ledger for why).
    """

    def __init__(self, tree: Optional[ads.MerkleTree] = None):
        self.tree = tree if tree is not None else ads.MerkleTree()

    # ---------------------------------------------------------- dispatch

    def execute(self, state: ContractState, tx, ctx):
        try:
            fn, epoch, body = decode_call(tx.payload)
        except DecodeError:
            return Receipt(tx.id, False, "BadPayload")
        handler = {
            Fn.ATTEST_CLIENT: self.attest_client_log,
            Fn.ATTEST_SERVER: self.attest_server_log,
            Fn.REGISTER: self.register_client,
            Fn.DEREGISTER: self.deregister_client,
            Fn.ANSWER_CHALLENGE: self.answer_challenge,
            Fn.TICK: self.tick,
        }[fn]
        try:
            res = handler(state, tx.sender, epoch, body, ctx)
        except (ContractError, DecodeError) as e:
            return Receipt(tx.id, False, type(e).__name__)
        if hasattr(res, "send"):
            return Suspended(self._drive(res, tx.id), ctx.meter)
        return Receipt(tx.id, True, value=res)

    @staticmethod
    def _drive(gen, tx_id):
        value = yield from gen
        return Receipt(tx_id, True, value=value)

    # ---------------------------------------------------------- calls

    def _check_caller(self, state, caller: PartyId, epoch: int):
        if caller.address == state.server.address and caller == state.server:
            return
        if caller == state.idp:
            return
        if caller.role is Role.CLIENT and state.is_member(caller.address, epoch):
            return
        raise UnauthorizedCaller(caller.short())

    def attest_client_log(self, state: ContractState, caller: PartyId, epoch: int, body: bytes, ctx):
        if caller.role is not Role.CLIENT or not state.is_member(caller.address, epoch):
            raise UnauthorizedCaller(caller.short())
        att = decode_attestation(body)
        m = ctx.meter
        m.charge("hash_per_word", math.ceil(len(body) / 32) + SIG_WORDS * (1 + len(att.ops)), "client_log")
        if att.party != caller or att.epoch != epoch or not verify_client_log(
                att, state.registry, state.server, state.config.double_signed, check_counter_sigs=False):
            raise BadSignature(caller.short())
        self._check_timeouts(state, ctx)
        log = state.epochs.setdefault(epoch, EpochLog())
        if log.first_height is None:
            log.first_height = ctx.height
        parts = log.client_parts.setdefault(caller.address, {})
        prev = parts.get(att.part)
        if prev is not None:
            if encode_attestation(prev) == encode_attestation(att):
                return "duplicate"
            state.evidence.append(("ClientFork", epoch, caller.address.hex()))
            raise ClientForkDetected(caller.short())
        parts[att.part] = att
        log.client_tx.setdefault(caller.address, []).append(ctx.tx.id)
        words = sum(op_words(op) for op in att.ops)
        if state.placement.client_log is ON:
            m.charge("storage_word_write", words, "client_log")
        else:
            m.charge("memory_word", words, "client_log")
        if log.verdict is not None:
            return self._late(state, epoch, ctx)
        return self._maybe_audit(state, epoch, ctx)

    def attest_server_log(self, state: ContractState, caller: PartyId, epoch: int, body: bytes, ctx):
        if caller != state.server:
            raise UnauthorizedCaller(caller.short())
        att = decode_attestation(body)
        m = ctx.meter
        m.charge("hash_per_word", math.ceil(len(body) / 32) + SIG_WORDS * (1 + len(att.ops)), "server_log")
        if att.party != caller or att.epoch != epoch or not verify_server_log(
                att, state.registry, state.config.double_signed, check_counter_sigs=False):
            raise BadSignature(caller.short())
        self._check_timeouts(state, ctx)
        log = state.epochs.setdefault(epoch, EpochLog())
        if log.first_height is None:
            log.first_height = ctx.height
        prev = log.server_parts.get(att.part)
        if prev is not None:
            if encode_attestation(prev) == encode_attestation(att):
                return "duplicate"
            if state.config.lock:
                state.evidence.append(("ServerFork", epoch, caller.address.hex()))
                raise ServerForkDetected(caller.short())
            # lock disabled: the stored server log is simply replaced
        elif log.server_parts and state.config.lock and next(iter(log.server_parts.values())).parts != att.parts:
            state.evidence.append(("ServerFork", epoch, caller.address.hex()))
            raise ServerForkDetected(caller.short())
        log.server_parts[att.part] = att
        log.server_tx.append(ctx.tx.id)
        words = sum(op_words(op) for op in att.ops)
        if state.placement.server_log is ON:
            m.charge("storage_word_write", words, "server_log")
        else:
            m.charge("storage_word_write", 1, "server_log")  # running digest of the log
            m.charge("memory_word", words, "server_log")
        if _complete(log.server_parts) and log.server_height is None:
            log.server_height = ctx.height
        if prev is not None:
            return "replaced"
        return self._maybe_audit(state, epoch, ctx)

    def register_client(self, state, caller, epoch, body, ctx):
        if caller != state.idp:
            raise UnauthorizedCaller(caller.short())
        r = Reader(body)
        party = read_party(r)
        public = r.blob()
        r.expect_done()
        if party.role is not Role.CLIENT:
            raise ContractError("only clients can be registered")
        state.registry.add(party, public)
        start = ctx.tick // state.config.epoch_ticks + 1
        state.members[party.address] = (start, None)
        ctx.meter.charge("storage_word_write", 2, "membership")
        return start

    def deregister_client(self, state, caller, epoch, body, ctx):
        if caller != state.idp:
            raise UnauthorizedCaller(caller.short())
        r = Reader(body)
        party = read_party(r)
        r.expect_done()
        span = state.members.get(party.address)
        if span is None:
            raise ContractError("not a member")
        end = ctx.tick // state.config.epoch_ticks + 1
        state.members[party.address] = (span[0], end)
        ctx.meter.charge("storage_word_write", 1, "membership")
        return end

    def tick(self, state, caller, epoch, body, ctx):
        self._check_caller(state, caller, epoch)
        return self._check_timeouts(state, ctx)

    # ---------------------------------------------------------- challenge variable

    def post_challenge(self, state: ContractState, epoch: int, keys, meter) -> None:
        w = Writer().u64(epoch).u32(len(keys))
        for k in keys:
            w.blob(k)
        state.challenge_var = w.bytes()
        meter.charge("storage_word_write", 1, "persistent_log")

    @staticmethod
    def poll_challenge(state: ContractState, caller: PartyId):
        """Heartbeat read of the shared variable; returns (epoch, keys) or None."""
        if caller != state.server:
            raise UnauthorizedCaller(caller.short())
        if not state.challenge_var:
            return None
        r = Reader(state.challenge_var)
        epoch = r.u64()
        keys = tuple(r.blob() for _ in range(r.u32()))
        return epoch, keys

    def answer_challenge(self, state, caller, epoch, body, ctx):
        if caller != state.server:
            raise UnauthorizedCaller(caller.short())
        log = state.epochs.get(epoch)
        if log is None or not log.waiting or log.verdict is not None:
            return "no challenge"
        r = Reader(body)
        proofs = [ads.MerkleProof.decode(r.blob()) for _ in range(r.u32())]
        r.expect_done()
        found = {}
        for p in proofs:
            if not ads.verify(state.ads_root, p, meter=ctx.meter):
                raise BadProof(p.key.hex())
            rec = p.record
            found[p.key] = rec.nonce if rec is not None else None
        if any(k not in found for k in log.waiting):
            raise BadProof("missing keys")
        log.proofs = {k: found[k] for k in log.waiting}
        log.waiting = ()
        state.challenge_var = b""
        ctx.meter.charge("storage_word_write", 1, "persistent_log")
        return self._maybe_audit(state, epoch, ctx)

    # ---------------------------------------------------------- audit scheduling

    def _required(self, state: ContractState, epoch: int, log: EpochLog) -> list:
        if state.config.wait_for == "all":
            return state.whitelist(epoch)
        return sorted(_merge_parts(log.server_parts).active)

    def _missing(self, state, epoch, log) -> list:
        return [a for a in self._required(state, epoch, log) if not _complete(log.client_parts.get(a, {}))]

    def _blocked_by_earlier(self, state, epoch) -> bool:
        return any(e < epoch and _complete(l.server_parts) and l.verdict is None
                   for e, l in state.epochs.items())

    def _maybe_audit(self, state: ContractState, epoch: int, ctx):
        log = state.epochs[epoch]
        if log.verdict is not None or not _complete(log.server_parts):
            return None
        if self._missing(state, epoch, log) or self._blocked_by_earlier(state, epoch):
            return None
        if not state.config.lock:
            return self._staged_audit(state, epoch, ctx)
        return self._locked(state, epoch, ctx)

    def _locked(self, state, epoch, ctx, missing=()):
        if state.lock:
            raise Reentrancy()
        state.lock = True
        try:
            v = self.run_epoch_audit(state, epoch, ctx, missing)
        finally:
            state.lock = False
        if v is not None:
            self._cascade(state, ctx)
        return v

    def _cascade(self, state, ctx):
        for e in sorted(state.epochs):
            log = state.epochs[e]
            if log.verdict is None and _complete(log.server_parts) and not log.waiting:
                if self._missing(state, e, log) or self._blocked_by_earlier(state, e):
                    continue
                state.lock = True
                try:
                    self.run_epoch_audit(state, e, ctx)
                finally:
                    state.lock = False

    def _check_timeouts(self, state: ContractState, ctx):
        fired = []
        for e in sorted(state.epochs):
            log = state.epochs[e]
            if log.verdict is not None:
                continue
            since = log.server_height if log.server_height is not None else log.first_height
            if since is None or ctx.height < since + state.config.timeout:
                continue
            if not _complete(log.server_parts):
                missing = (state.server.address,)
            else:
                missing = tuple(self._missing(state, e, log))
                if log.waiting:
                    missing += (state.server.address,)
            if self._blocked_by_earlier(state, e):
                continue
            state.lock = True
            try:
                self.run_epoch_audit(state, e, ctx, missing or (state.server.address,), force=True)
            finally:
                state.lock = False
            fired.append(e)
        if fired:
            self._cascade(state, ctx)
        return fired

    # ---------------------------------------------------------- the audit

    def _prior(self, state: ContractState, epoch: int, log: EpochLog, keys, ctx, force: bool):
        m = ctx.meter
        if not keys:
            return {}
        if state.placement.persistent_log is ON:
            m.charge("storage_word_read", RECORD_WORDS * len(keys), "persistent_log")
            return {k: state.persistent[k][0] if k in state.persistent else None for k in keys}
        if log.proofs is not None and all(k in log.proofs for k in keys):
            return {k: log.proofs[k] for k in keys}
        if force:
            return {}
        log.waiting = tuple(keys)
        self.post_challenge(state, epoch, keys, m)
        return None

    def _read_logs(self, state, server_att, client_atts, m):
        pl = state.placement
        cw = sum(op_words(op) for a in client_atts for op in a.ops)
        sw = sum(op_words(op) for op in server_att.ops)
        if pl.client_log is ON:
            m.charge("storage_word_read", cw, "client_log")
        else:
            m.charge("memory_word", cw, "client_log")
        if pl.server_log is ON:
            m.charge("storage_word_read", 2 * sw, "server_log")
        else:
            m.charge("hash_per_word", 2 * sw, "server_log")
        m.charge("hash_per_word", cw + sw, "audit")

    def _gather(self, state, log):
        server_att = _merge_parts(log.server_parts) if log.server_parts else None
        clients = [_merge_parts(p) for a, p in log.client_parts.items() if _complete(p)]
        return server_att, clients

    def run_epoch_audit(self, state: ContractState, epoch: int, ctx, missing=(), force: bool = False):
        """crosscheck -> attribute -> repair -> audit, then store and merge."""
        log = state.epochs[epoch]
        m = ctx.meter
        server_att, clients = self._gather(state, log)
        if server_att is None:
            server_att = Attestation(epoch, state.server, (), True)
        keys = sorted({op.key for a in clients for op in a.ops if op.is_read}
                      | {op.key for op in server_att.ops if op.is_read})
        prior = self._prior(state, epoch, log, keys, ctx, force)
        if prior is None:
            return None
        self._read_logs(state, server_att, clients, m)
        reg = state.registry
        report = crosscheck(clients, server_att, reg)
        atts = attribute(report, state.config.double_signed, reg)
        # ops of a client that never attested are unconfirmed, not omitted by it
        atts = [a for a in atts if not (a.code == AC1 and a.blamed in missing)]
        return self._conclude(state, epoch, log, server_att, clients, atts, prior, missing, ctx)

    def _conclude(self, state, epoch, log, server_att, clients, atts, prior, missing, ctx,
                  skip_order=False, revision=0):
        note = ""
        order = server_att.ops
        if atts and state.config.double_signed:
            try:
                order = repair_server_log(server_att, clients, atts, state.registry, prior)
            except IrreparableConflict as e:
                note = f"IrreparableConflict {e}"
        try:
            verdict = audit_ordered(order, prior)
        except MalformedRead as e:
            verdict = Verdict(Status.INCONSISTENT, ())
            note = note or f"MalformedRead {e}"
        if skip_order:
            kept = tuple(v for v in verdict.violations if v.kind != ORDER_BREAK)
            verdict = Verdict(Status.INCONSISTENT, kept) if kept else Verdict(Status.CONSISTENT, ())
        if atts:
            status = ATTACK_DETECTED
        elif missing:
            status = ATTACK_SUSPECTED
        else:
            status = verdict.status.value
        ev = EpochVerdict(epoch, status, verdict, tuple(atts), tuple(missing),
                          tuple(op.nonce for op in order), revision, note)
        log.verdict = ev
        log.verdict_tx = ctx.tx.id
        ctx.meter.charge("storage_word_write", 1, "audit")
        self._merge(state, epoch, order, ctx.meter)
        return ev

    def _merge(self, state: ContractState, epoch: int, order, m) -> None:
        latest = {}
        for op in order:
            if op.is_write:
                latest[op.key] = op
        if not latest:
            return
        recs = [ads.Record(k, op.nonce, op.value_digest, epoch) for k, op in sorted(latest.items())]
        if state.placement.persistent_log is ON:
            for rec in recs:
                state.persistent[rec.key] = (rec.nonce, rec.digest, rec.epoch)
            m.charge("storage_word_write", RECORD_WORDS * len(recs), "persistent_log")
        else:
            state.ads_root = ads.apply_epoch(self.tree, recs)
            h = ads.tree_height(len(self.tree))
            m.charge("hash_per_word", 3 * (h + 1) * len(recs), "persistent_log")
            m.charge("storage_word_write", 1, "persistent_log")

    def _late(self, state: ContractState, epoch: int, ctx):
        """A client attestation arriving after the verdict can only escalate it."""
        log = state.epochs[epoch]
        old = log.verdict
        server_att, clients = self._gather(state, log)
        if server_att is None:
            return None
        report = crosscheck(clients, server_att, state.registry)
        atts = attribute(report, state.config.double_signed, state.registry)
        if not atts or {ident(x.evidence[0]) + (x.code,) for x in atts} <= \
                {ident(x.evidence[0]) + (x.code,) for x in old.attributions}:
            return old
        prior = self._prior(state, epoch, log, sorted({op.key for a in clients for op in a.ops if op.is_read}
                                                    | {op.key for op in server_att.ops if op.is_read}),
                            ctx, force=True)
        self._read_logs(state, server_att, clients, ctx.meter)
        later_done = any(e > epoch and l.verdict is not None for e, l in state.epochs.items())
        snapshot = (dict(state.persistent), state.ads_root)
        ev = self._conclude(state, epoch, log, server_att, clients, atts, prior, old.missing, ctx,
                            revision=old.revision + 1)
        if later_done:
            state.persistent, state.ads_root = snapshot
        return ev

    def _staged_audit(self, state: ContractState, epoch: int, ctx):
        """Audit with the lock off: one client log per stage, re-reading the
        stored server log at each stage, so a concurrent call can swap it."""
        log = state.epochs[epoch]
        _, clients = self._gather(state, log)
        client_only, breaks = [], []
        for att in clients:
            srv = _merge_parts(log.server_parts)
            ids = {ident(op) for op in srv.ops}
            pos = {op.nonce: i for i, op in enumerate(srv.ops)}
            for op in att.ops:
                if ident(op) not in ids:
                    client_only.append(op)
                    continue
                for later in srv.ops[pos[op.nonce] + 1:]:
                    if later.t_end < op.t_begin:
                        breaks.append((op, later))
            ctx.meter.charge("hash_per_word", sum(op_words(op) for op in att.ops), "audit")
            yield
        srv = _merge_parts(log.server_parts)
        union = {ident(op) for a in clients for op in a.ops}
        server_only = tuple(op for op in srv.ops if ident(op) not in union)
        report = CrosscheckReport(srv.party, server_only, tuple(client_only), (), tuple(breaks), ())
        atts = attribute(report, state.config.double_signed, state.registry)
        keys = sorted({op.key for op in srv.ops if op.is_read})
        prior = self._prior(state, epoch, log, keys, ctx, force=True)
        self._read_logs(state, srv, clients, ctx.meter)
        return self._conclude(state, epoch, log, srv, clients, atts, prior, (), ctx, skip_order=True)


def consistency_result(chain, epoch: int, fork: Optional[int] = None):
    """The stored verdict once it and every attestation behind it are final."""
    from .chainsim import TxStatus
    state = chain.state(fork)
    log = state.epochs.get(epoch)
    if log is None or log.verdict is None:
        return NotReady
    txs = [log.verdict_tx] + log.server_tx + [t for ts in log.client_tx.values() for t in ts]
    for txid in txs:
        if chain.finality_status(txid, fork) is not TxStatus.FINALIZED:
            return NotReady
    return log.verdict
