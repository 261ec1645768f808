"""Client and server agents, with pluggable attack strategies.

A client issues signed requests, records the dual-signed operations it gets
back, attests its log at the end of each epoch and watches the chain until
that attestation is final. The server executes requests against its store,
countersigns them and attests a declared total order, possibly edited by an
attack strategy.
"""

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from . import ads
from .chainsim import SimChain, TxStatus
from .consistency import NoConsistentOrder, find_consistent_order
from .contract import Contract, Fn, NotReady, consistency_result, encode_call, encode_proofs
from .core import (H, Attestation, Kind, KeyPair, Operation, PartyId, Registry, Signature, Writer,
                   encode_attestation, read_digest, sign, sign_as_client, sign_as_server, write_party)
from .cost import chunks
from .crosscheck import AC1, AC2, AC3, AC4, AS1, AS2, AS3, AS4

HONEST = "Honest"
SELECTIVE_OMISSION = "SelectiveOmission"
FORK_BY_RACES = "ForkByRaces"
FORK_BY_CHAIN_FORKS = "ForkByChainForks"
IRRATIONAL = "Irrational"
CLIENT_STRATEGIES = (HONEST, AC1, AC2, AC3, AC4)
SERVER_STRATEGIES = (HONEST, AS1, AS2, AS3, AS4, SELECTIVE_OMISSION, FORK_BY_RACES,
                     FORK_BY_CHAIN_FORKS, IRRATIONAL)


class BadClientSignature(Exception):
    pass


class BadServerResponse(Exception):
    pass


class AttestationTimedOut(Exception):
    pass


@dataclass(frozen=True)
class EpochSchedule:
    block_time: int = 15_000
    blocks_per_epoch: int = 1
    finality: int = 6

    @property
    def epoch_ticks(self) -> int:
        return self.blocks_per_epoch * self.block_time

    def start(self, epoch: int) -> int:
        return epoch * self.epoch_ticks

    def deadline(self, epoch: int) -> int:
        """Tick at which the epoch's attestations are sent."""
        return (epoch + 1) * self.epoch_ticks

    @property
    def verdict_wait(self) -> int:
        return 2 * self.finality

    def max_epochs_held(self) -> int:
        return math.ceil(2 * self.finality * self.block_time / self.epoch_ticks) + 1


@dataclass(frozen=True)
class FeePolicy:
    initial: int = 10
    ceiling: int = 1000
    escalate_after: Optional[int] = None  # blocks; None means the finality depth


# ---------------------------------------------------------------- wire messages

@dataclass(frozen=True)
class Request:
    nonce: int
    client: PartyId
    kind: Kind
    key: bytes
    value_digest: bytes  # empty for reads
    t_begin: int
    sig: Optional[Signature] = None

    def body(self) -> bytes:
        w = Writer().u8(0x52).u128(self.nonce)
        write_party(w, self.client)
        return w.u8(1 if self.kind is Kind.WRITE else 2).blob(self.key).blob(self.value_digest) \
            .u64(self.t_begin).bytes()


@dataclass(frozen=True)
class Response:
    nonce: int
    source: Optional[int]  # write nonce served to a read
    digest: bytes
    sig: Optional[Signature] = None

    def body(self) -> bytes:
        w = Writer().u8(0x53).u128(self.nonce).u8(0 if self.source is None else 1)
        if self.source is not None:
            w.u128(self.source)
        return w.blob(self.digest).bytes()


# ---------------------------------------------------------------- client

@dataclass
class _Submitted:
    epoch: int
    parts: list  # encoded payloads
    txs: list  # current tx id per part
    submitted_at: int
    height: int
    resubmitted: bool = False
    final_at: Optional[int] = None
    timed_out: bool = False
    ops: int = 0
    poked_at: Optional[int] = None


class ClientAgent:
    def __init__(self, key: KeyPair, server: PartyId, registry: Registry, schedule: EpochSchedule = EpochSchedule(),
                 fee: FeePolicy = FeePolicy(), strategy: str = HONEST, skew: int = 0, resubmit: bool = True,
                 batch_size: Optional[int] = None, seed: int = 0):
        if strategy not in CLIENT_STRATEGIES:
            raise ValueError(f"unknown client strategy {strategy}")
        self.key = key
        self.server = server
        self.registry = registry
        self.schedule = schedule
        self.fee = fee
        self.strategy = strategy
        self.skew = skew
        self.resubmit = resubmit
        self.batch_size = batch_size
        self.rng = random.Random(seed)
        self.local: dict = {}  # epoch -> [dual-signed ops]
        self.submitted: dict = {}  # epoch -> _Submitted
        self.verdicts: dict = {}
        self.timed_out: list = []
        self.fees_paid: list = []  # (epoch, fee) per submission
        self.units = 0.0
        self.unit_ops = 0
        self.max_epochs_held = 0
        self.max_resident_ops = 0

    @property
    def party(self) -> PartyId:
        return self.key.party

    # ------------------------------------------------ serving

    def request(self, nonce: int, kind: Kind, key: bytes, value: bytes, t_begin: int) -> Request:
        vd = H(b"value", value) if kind is Kind.WRITE else b""
        req = Request(nonce, self.party, kind, key, vd, max(0, t_begin + self.skew))
        return replace(req, sig=sign(req.body(), self.key))

    def complete(self, req: Request, resp: Response, t_end: int) -> Operation:
        t_end = max(req.t_begin + 1, t_end + self.skew)
        if resp.nonce != req.nonce or not self.registry.check(resp.body(), resp.sig, self.server):
            raise BadServerResponse(f"{req.nonce:x}")
        if req.kind is Kind.WRITE:
            op = Operation(req.nonce, self.party, Kind.WRITE, req.key, req.value_digest, req.t_begin,
                           t_end)
        else:
            op = Operation(req.nonce, self.party, Kind.READ, req.key, resp.digest, req.t_begin,
                           t_end, resp.source)
        return sign_as_client(op, self.key)

    def record(self, epoch: int, op: Operation) -> None:
        if op.client != self.party:
            raise ValueError("a client only stores its own operations")
        if not self.registry.check(op.body(), op.server_sig, self.server):
            raise BadServerResponse(f"missing server signature on {op.nonce:x}")
        self.local.setdefault(epoch, []).append(op)
        self._measure()

    def _measure(self) -> None:
        self.max_epochs_held = max(self.max_epochs_held, len(self.local))
        self.max_resident_ops = max(self.max_resident_ops, sum(len(v) for v in self.local.values()))

    # ------------------------------------------------ attestation

    def attested_ops(self, epoch: int) -> list:
        ops = list(self.local.get(epoch, []))
        s = self.strategy
        if s == HONEST or not ops:
            return ops
        if s == AC1:
            del ops[self.rng.randrange(len(ops))]
        elif s == AC2:
            forged = self._forge(epoch, ops)
            at = sum(1 for op in ops if op.t_begin <= forged.t_begin)
            ops.insert(at, forged)
        elif s == AC3:
            i = self.rng.randrange(len(ops))
            ops.insert(i + 1, ops[i])
        elif s == AC4:
            pairs = [i for i in range(len(ops) - 1) if ops[i].t_end < ops[i + 1].t_begin]
            if pairs:
                i = self.rng.choice(pairs)
                ops[i], ops[i + 1] = ops[i + 1], ops[i]
        return ops

    def _forge(self, epoch: int, ops: list) -> Operation:
        # a write the server never saw, so it can only carry the client's signature
        t0 = self.schedule.start(epoch)
        tb = t0 + self.rng.randrange(max(1, self.schedule.epoch_ticks - 2))
        nonce = self.rng.getrandbits(128)
        op = Operation(nonce, self.party, Kind.WRITE, ops[0].key, H(b"value", b"forged%d" % nonce), tb, tb + 1)
        return sign_as_client(op, self.key)

    def attestation_parts(self, epoch: int, ops=None) -> list:
        ops = self.attested_ops(epoch) if ops is None else list(ops)
        groups = chunks(ops, self.batch_size)
        return [Attestation(epoch, self.party, tuple(g), False, (), i, len(groups)).signed(self.key)
                for i, g in enumerate(groups)]

    def is_active(self, epoch: int) -> bool:
        return bool(self.local.get(epoch))

    def attest(self, chain: SimChain, epoch: int, force: bool = False, fee: Optional[int] = None,
               parts=None) -> list:
        """Submit this epoch's attestation; inactive clients stay silent unless forced."""
        if not force and not self.is_active(epoch):
            return []
        parts = self.attestation_parts(epoch) if parts is None else parts
        payloads = [encode_call(Fn.ATTEST_CLIENT, epoch, encode_attestation(p)) for p in parts]
        fee = self.fee.initial if fee is None else fee
        txs = [chain.submit(self.party, pl, fee, meta={"epoch": epoch, "kind": "attest_client",
                                                       "party": self.party.address.hex()})
               for pl in payloads]
        self.fees_paid.append((epoch, fee))
        n = sum(len(p.ops) for p in parts)
        self.submitted[epoch] = _Submitted(epoch, payloads, txs, chain.tick, chain.height(chain.fork_of(self.party)),
                                           ops=n)
        self.local.setdefault(epoch, [])
        return txs

    # ------------------------------------------------ after each block

    def _fork(self, chain: SimChain) -> int:
        return chain.fork_of(self.party)

    def on_block(self, chain: SimChain) -> None:
        fork = self._fork(chain)
        height = chain.height(fork)
        F = self.schedule.finality
        wait = self.fee.escalate_after if self.fee.escalate_after is not None else F
        for epoch in sorted(self.submitted):
            sub = self.submitted[epoch]
            status = [chain.finality_status(t, fork) for t in sub.txs]
            elapsed = height - sub.height
            if sub.final_at is None:
                if all(s is TxStatus.FINALIZED for s in status):
                    sub.final_at = chain.tick
                    self._truncate(epoch, sub)
                else:
                    stuck = [i for i, s in enumerate(status) if s in (TxStatus.PENDING, TxStatus.DROPPED)]
                    if stuck and elapsed >= wait and self.resubmit and not sub.resubmitted:
                        for i in stuck:
                            sub.txs[i] = chain.submit(self.party, sub.parts[i], self.fee.ceiling,
                                                      meta={"epoch": epoch, "kind": "attest_client",
                                                            "party": self.party.address.hex(), "retry": True})
                        self.fees_paid.append((epoch, self.fee.ceiling))
                        sub.resubmitted = True
                    if elapsed >= 2 * F + (wait if sub.resubmitted else 0) and not sub.timed_out:
                        sub.timed_out = True
                        self.timed_out.append(epoch)
                        chain.emit("attestation_timed_out", epoch=epoch, party=self.party.address.hex())
            if epoch not in self.verdicts and elapsed >= 2 * F:
                v = consistency_result(chain, epoch, fork)
                if v is not NotReady:
                    self.verdicts[epoch] = v
                elif sub.final_at is not None:
                    self._poke(chain, epoch, sub, height, fork)
        self._measure()

    def _poke(self, chain: SimChain, epoch: int, sub: _Submitted, height: int, fork) -> None:
        # no verdict stored yet: ask the contract to evaluate its timeout
        log = chain.state(fork).epochs.get(epoch)
        if log is None or log.verdict is not None:
            return
        if sub.poked_at is not None and height - sub.poked_at < self.schedule.finality:
            return
        sub.poked_at = height
        chain.submit(self.party, encode_call(Fn.TICK, epoch), self.fee.initial,
                     meta={"epoch": epoch, "kind": "tick", "party": self.party.address.hex()})

    def _truncate(self, epoch: int, sub: _Submitted) -> None:
        n = len(self.local.pop(epoch, []))
        if n:
            self.units += n * (sub.final_at - sub.submitted_at) / self.schedule.epoch_ticks
            self.unit_ops += n

    @property
    def unit_cost(self) -> float:
        return self.units / self.unit_ops if self.unit_ops else 0.0

    def done(self) -> bool:
        return all(s.final_at is not None or s.timed_out for s in self.submitted.values())


# ---------------------------------------------------------------- server

class ServerAgent:
    """Storage server. `stale(request)` may return "previous" or "initial" to
    serve a read from an older version (a scripted man-in-the-middle)."""

    def __init__(self, key: KeyPair, registry: Registry, strategy: str = HONEST,
                 stale: Optional[Callable] = None, batch_size: Optional[int] = None, seed: int = 0,
                 edits: int = 1, fee: int = 1000, tree: Optional[ads.MerkleTree] = None,
                 schedule: EpochSchedule = EpochSchedule()):
        if strategy not in SERVER_STRATEGIES:
            raise ValueError(f"unknown server strategy {strategy}")
        self.key = key
        self.registry = registry
        self.strategy = strategy
        self.stale = stale
        self.batch_size = batch_size
        self.rng = random.Random(seed)
        self.edits = edits
        self.fee = fee
        self.tree = tree if tree is not None else ads.MerkleTree()
        self.schedule = schedule
        self.versions: dict = {}  # key -> [(epoch, write op)]
        self.epoch_ops: dict = {}  # epoch -> {nonce: dual-signed op}
        self.exec_order: dict = {}  # epoch -> [nonce] in execution order
        self.served: dict = {}  # nonce -> (request, source nonce)
        self.committed: dict = {}  # key -> latest write nonce of attested epochs
        self.declared: dict = {}  # epoch -> honest declared order
        self.injected: dict = {}  # epoch -> [(code, nonces)]
        self.answered: set = set()
        self.attest_txs: dict = {}  # epoch -> [tx ids]

    @property
    def party(self) -> PartyId:
        return self.key.party

    # ------------------------------------------------ serving

    def serve(self, req: Request, epoch: int) -> Response:
        if not self.registry.check(req.body(), req.sig, req.client):
            raise BadClientSignature(f"{req.nonce:x}")
        if req.nonce in self.served:
            raise BadClientSignature(f"replayed request {req.nonce:x}")
        self.exec_order.setdefault(epoch, []).append(req.nonce)
        if req.kind is Kind.WRITE:
            w = Operation(req.nonce, req.client, Kind.WRITE, req.key, req.value_digest, req.t_begin, req.t_begin + 1)
            self.versions.setdefault(req.key, []).append((epoch, w))
            self.served[req.nonce] = (req, None)
            resp = Response(req.nonce, None, req.value_digest)
        else:
            src = self._read(req, epoch)
            self.served[req.nonce] = (req, None if src is None else src.nonce)
            if src is None:
                resp = Response(req.nonce, None, read_digest(None, None))
            else:
                resp = Response(req.nonce, src.nonce, read_digest(src.value_digest, src.nonce))
        return replace(resp, sig=sign(resp.body(), self.key))

    def _read(self, req: Request, epoch: int) -> Optional[Operation]:
        vs = self.versions.get(req.key, [])
        mode = self.stale(req) if self.stale is not None else None
        if not mode:
            return vs[-1][1] if vs else None
        if mode == "previous":
            return vs[-2][1] if len(vs) >= 2 else None
        if mode == "initial":
            older = [w for e, w in vs if e < epoch]
            return older[-1] if older else None
        raise ValueError(f"unknown staleness mode {mode}")

    def countersign(self, op: Operation, epoch: int) -> Operation:
        if not self.registry.check(op.body(), op.client_sig, op.client):
            raise BadClientSignature(f"{op.nonce:x}")
        req, src = self.served.get(op.nonce, (None, None))
        if req is None or req.client != op.client or req.key != op.key or req.kind is not op.kind \
                or req.t_begin != op.t_begin or (op.is_read and op.source != src):
            raise BadClientSignature(f"operation {op.nonce:x} does not match the served request")
        op = sign_as_server(op, self.key)
        self.epoch_ops.setdefault(epoch, {})[op.nonce] = op
        return op

    # ------------------------------------------------ declaring an order

    def truthful(self, epoch: int) -> list:
        """The epoch's completed operations in execution order."""
        done = self.epoch_ops.get(epoch, {})
        return [done[n] for n in self.exec_order.get(epoch, []) if n in done]

    def prior(self) -> dict:
        return dict(self.committed)

    def declare(self, epoch: int, ops=None) -> tuple:
        ops = self.truthful(epoch) if ops is None else list(ops)
        if self.strategy == IRRATIONAL:
            return tuple(ops)
        found = find_consistent_order(ops, self.prior(), preferred=ops)
        return tuple(ops) if found is NoConsistentOrder else tuple(found)

    def active(self, ops) -> tuple:
        return tuple(sorted({op.client.address for op in ops}))

    def edit(self, epoch: int, ops: list) -> list:
        """Apply the configured attack to an honest declared order."""
        ops = list(ops)
        log = self.injected.setdefault(epoch, [])
        for _ in range(self.edits):
            s = self.strategy
            if s == AS1:
                forged = self._forge(epoch, ops)
                if forged is None:
                    break
                ops.insert(self.rng.randrange(len(ops) + 1), forged)
                log.append((AS1, (forged.nonce,)))
            elif s == AS2 and ops:
                victim = ops.pop(self.rng.randrange(len(ops)))
                log.append((AS2, (victim.nonce,)))
            elif s == AS3 and ops:
                i = self.rng.randrange(len(ops))
                ops.insert(i + 1, ops[i])
                log.append((AS3, (ops[i].nonce,)))
            elif s == AS4:
                pair = self._serial_pair(ops)
                if pair is None:
                    break
                i, j = pair
                ops[i], ops[j] = ops[j], ops[i]
                log.append((AS4, (ops[j].nonce, ops[i].nonce)))
        return ops

    def _forge(self, epoch: int, ops: list) -> Optional[Operation]:
        if not ops:
            return None
        victim = self.rng.choice(ops).client
        tb = self.schedule.start(epoch) + self.rng.randrange(max(1, self.schedule.epoch_ticks - 2))
        nonce = self.rng.getrandbits(128)
        op = Operation(nonce, victim, Kind.WRITE, self.rng.choice(ops).key, H(b"value", b"forged%d" % nonce),
                       tb, tb + 1)
        # no client key is available, so the "client" signature is the server's own
        fake = Signature(victim, sign(op.body(), self.key).bytes)
        return sign_as_server(replace(op, client_sig=fake), self.key)

    def _serial_pair(self, ops: list):
        pairs = [(i, i + 1) for i in range(len(ops) - 1) if ops[i].t_end < ops[i + 1].t_begin]
        if not pairs:
            pairs = [(i, j) for i in range(len(ops)) for j in range(i + 1, len(ops))
                     if ops[i].t_end < ops[j].t_begin][:1]
        return self.rng.choice(pairs) if pairs else None

    def attestation_parts(self, epoch: int, ops, active) -> list:
        groups = chunks(list(ops), self.batch_size)
        return [Attestation(epoch, self.party, tuple(g), True, tuple(active), i, len(groups)).signed(self.key)
                for i, g in enumerate(groups)]

    def commit(self, epoch: int, order) -> None:
        for op in order:
            if op.is_write:
                self.committed[op.key] = op.nonce

    # ------------------------------------------------ submitting

    def _submit(self, chain: SimChain, epoch: int, parts, fee: Optional[int] = None, forks=None) -> list:
        txs = []
        for p in parts:
            pl = encode_call(Fn.ATTEST_SERVER, epoch, encode_attestation(p))
            txs.append(chain.submit(self.party, pl, self.fee if fee is None else fee, forks=forks,
                                    meta={"epoch": epoch, "kind": "attest_server",
                                          "party": self.party.address.hex()}))
        self.attest_txs.setdefault(epoch, []).extend(txs)
        return txs

    def attest(self, chain: SimChain, epoch: int, clients=(), dropped=None) -> list:
        """Attest one epoch. `dropped` lets SelectiveOmission name the client
        attestations the chain lost; by default it reads their status."""
        truthful = self.truthful(epoch)
        order = list(self.declare(epoch, truthful))
        self.declared[epoch] = tuple(order)
        self.commit(epoch, order)
        active = self.active(truthful)
        s = self.strategy
        if s in (AS1, AS2, AS3, AS4):
            order = self.edit(epoch, order)
        elif s == SELECTIVE_OMISSION:
            lost = set(dropped if dropped is not None else self.lost_clients(chain, epoch))
            if lost:
                order = [op for op in order if op.client.address not in lost]
                active = tuple(a for a in active if a not in lost)
                self.injected.setdefault(epoch, []).append(
                    (AS2, tuple(op.nonce for op in truthful if op.client.address in lost)))
        elif s == FORK_BY_CHAIN_FORKS and chain.partitioned:
            return self._attest_per_fork(chain, epoch, truthful)
        elif s == FORK_BY_RACES:
            txs = self._submit(chain, epoch, self.attestation_parts(epoch, order, active))
            alt = self._alternative(order)
            if alt is not None:
                txs += self._submit(chain, epoch, self.attestation_parts(epoch, alt, active), fee=1)
            return txs
        return self._submit(chain, epoch, self.attestation_parts(epoch, order, active))

    def _alternative(self, order):
        # a conflicting declaration: swap the first adjacent pair
        if len(order) < 2:
            return None
        alt = list(order)
        alt[0], alt[1] = alt[1], alt[0]
        return alt

    def _attest_per_fork(self, chain: SimChain, epoch: int, truthful) -> list:
        txs = []
        for fid in chain.live_forks():
            members = {a for a, f in chain.groups.items() if f == fid}
            view = [op for op in truthful if op.client.address in members]
            order = self.declare(epoch, view)
            txs += self._submit(chain, epoch, self.attestation_parts(epoch, order, self.active(view)),
                                forks=[fid])
        self.injected.setdefault(epoch, []).append((AS2, ()))
        return txs

    @staticmethod
    def lost_clients(chain: SimChain, epoch: int) -> list:
        lost = set()
        for tx in chain.txs.values():
            if tx.meta.get("epoch") == epoch and tx.meta.get("kind") == "attest_client":
                if chain.finality_status(tx.id) is TxStatus.DROPPED:
                    lost.add(bytes.fromhex(tx.meta["party"]))
        return sorted(lost)

    # ------------------------------------------------ challenges

    def on_block(self, chain: SimChain) -> Optional[int]:
        """Heartbeat: answer a pending freshness challenge with Merkle proofs."""
        state = chain.state()
        ch = Contract.poll_challenge(state, self.party)
        if ch is None:
            return None
        epoch, keys = ch
        tag = (epoch, keys, state.ads_root)
        if tag in self.answered:
            return None
        self.answered.add(tag)
        proofs = [self.tree.prove(k) for k in keys]
        return chain.submit(self.party, encode_call(Fn.ANSWER_CHALLENGE, epoch, encode_proofs(proofs)),
                            self.fee, meta={"epoch": epoch, "kind": "answer_challenge",
                                            "party": self.party.address.hex()})
