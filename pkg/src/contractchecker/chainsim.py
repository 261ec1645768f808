"""Discrete-event blockchain simulation.

One logical miner per fork. Pending transactions are packed by
(fee desc, submitted_at asc, id asc). A transaction is Finalized once F
blocks follow its block on the fork being asked about. Partitions split the
chain into forks with their own mempool and contract-state replica; heal
keeps the longest fork (lowest id on ties) and re-pends whatever the
orphaned forks had included.

The chain knows nothing about contract semantics: an executor callable
``execute(state, tx, ctx) -> Receipt | Suspended`` runs each payload.
"""

import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .core import PartyId

COST_CLASSES = ("tx_base", "tx_byte", "storage_word_write", "storage_word_read",
                "hash_per_word", "memory_word")


@dataclass(frozen=True)
class GasPrices:
    tx_base: int = 21000
    tx_byte: int = 16
    storage_word_write: int = 20000
    storage_word_read: int = 4
    hash_per_word: int = 120
    memory_word: int = 3

    def price(self, cls: str) -> int:
        return getattr(self, cls)


class GasMeter:
    """Counts units per cost class, optionally split by a component tag."""

    def __init__(self, prices: GasPrices = GasPrices()):
        self.prices = prices
        self.units = {c: 0 for c in COST_CLASSES}
        self.by_tag: dict = {}
        self.tag = None

    def charge(self, cls: str, amount, tag: Optional[str] = None) -> None:
        if amount < 0:
            raise ValueError("negative charge")
        if cls not in self.units:
            raise KeyError(cls)
        amount = math.ceil(amount)
        self.units[cls] += amount
        t = tag or self.tag or "other"
        bucket = self.by_tag.setdefault(t, {})
        bucket[cls] = bucket.get(cls, 0) + amount

    def gas(self, cls: Optional[str] = None) -> int:
        if cls is not None:
            return self.units[cls] * self.prices.price(cls)
        return sum(self.units[c] * self.prices.price(c) for c in COST_CLASSES)

    total = property(lambda self: self.gas())

    def tag_gas(self) -> dict:
        return {t: sum(u * self.prices.price(c) for c, u in b.items()) for t, b in sorted(self.by_tag.items())}


def charge(meter: GasMeter, cls: str, amount) -> None:
    meter.charge(cls, amount)


@dataclass(frozen=True)
class ChainParams:
    block_time: int = 15_000  # ticks (1 tick = 1 ms)
    finality: int = 6
    validation_delay: int = 0
    block_capacity: int = 30_000_000  # intrinsic gas per block
    max_txs_per_block: Optional[int] = None
    min_fee: int = 1
    drop_window: int = 50  # blocks
    prices: GasPrices = GasPrices()

    def __post_init__(self):
        if self.block_time <= 0 or self.finality < 1 or self.block_capacity <= 0:
            raise ValueError("need block_time > 0, finality >= 1, capacity > 0")


class TxStatus(Enum):
    PENDING = "Pending"
    INCLUDED = "Included"
    FINALIZED = "Finalized"
    DROPPED = "Dropped"


class ChainError(Exception):
    pass


class UnknownTx(ChainError):
    pass


class PartitionWhilePartitioned(ChainError):
    pass


@dataclass
class Transaction:
    id: int
    sender: PartyId
    fee: int
    payload: bytes
    submitted_at: int
    weight: int = 0
    meta: dict = field(default_factory=dict)

    def priority(self):
        return (-self.fee, self.submitted_at, self.id)


@dataclass(frozen=True)
class Block:
    height: int
    parent: Optional[str]
    fork: int
    txs: tuple
    gas_used: int
    tick: int

    @property
    def id(self) -> str:
        return f"{self.fork}:{self.height}:{self.tick}"


@dataclass
class Receipt:
    tx: int
    ok: bool
    error: str = ""
    value: object = None
    meter: Optional[GasMeter] = None


class Suspended:
    """A payload execution paused at a yield point (only when the contract lock is off)."""

    def __init__(self, gen, meter):
        self.gen = gen
        self.meter = meter
        self.result = None

    def step(self) -> bool:
        """Advance one stage; True once finished."""
        try:
            next(self.gen)
            return False
        except StopIteration as stop:
            self.result = stop.value
            return True


@dataclass
class Fork:
    id: int
    blocks: list
    state: object
    mempool: dict  # tx id -> Transaction
    included: dict = field(default_factory=dict)  # tx id -> height
    dropped: set = field(default_factory=set)
    alive: bool = True
    share: float = 1.0

    @property
    def tip(self) -> int:
        return len(self.blocks) - 1


@dataclass
class ExecContext:
    height: int
    tick: int
    fork: int
    tx: Transaction
    meter: GasMeter


class SimChain:
    def __init__(self, params: ChainParams = ChainParams(), state=None, execute: Optional[Callable] = None,
                 seed: int = 0):
        self.params = params
        self.rng = random.Random(seed)
        self.execute = execute
        genesis = Block(0, None, 0, (), 0, 0)
        self.forks = {0: Fork(0, [genesis], state, {})}
        self.canonical = 0
        self.txs: dict = {}
        self.events: list = []
        self.receipts: dict = {}  # (fork, tx id) -> Receipt
        self.drop_rules: list = []
        self.groups: dict = {}  # address -> fork id while partitioned
        self.partitioned = False
        self.permanent = False
        self.tick = 0
        self._next_id = 0

    # ------------------------------------------------------------ events

    def emit(self, event: str, **fields) -> None:
        rec = {"seq": len(self.events), "tick": self.tick, "event": event}
        rec.update(fields)
        self.events.append(rec)

    def event_bytes(self) -> bytes:
        return b"".join(json.dumps(e, sort_keys=True, separators=(",", ":")).encode() + b"\n"
                        for e in self.events)

    # ------------------------------------------------------------ views

    def live_forks(self) -> list:
        return [f.id for f in self.forks.values() if f.alive]

    def state(self, fork: Optional[int] = None):
        return self.forks[self.canonical if fork is None else fork].state

    def height(self, fork: Optional[int] = None) -> int:
        return self.forks[self.canonical if fork is None else fork].tip

    def fork_of(self, party: PartyId) -> int:
        return self.groups.get(party.address, self.canonical)

    def intrinsic_gas(self, payload: bytes) -> int:
        p = self.params.prices
        return p.tx_base + len(payload) * p.tx_byte

    def finality_status(self, tx_id: int, fork: Optional[int] = None) -> TxStatus:
        if tx_id not in self.txs:
            raise UnknownTx(tx_id)
        f = self.forks[self.canonical if fork is None else fork]
        h = f.included.get(tx_id)
        if h is not None:
            return TxStatus.FINALIZED if f.tip >= h + self.params.finality else TxStatus.INCLUDED
        if tx_id in f.dropped:
            return TxStatus.DROPPED
        return TxStatus.PENDING

    status = finality_status

    def inclusion_height(self, tx_id: int, fork: Optional[int] = None) -> Optional[int]:
        return self.forks[self.canonical if fork is None else fork].included.get(tx_id)

    def receipt(self, tx_id: int, fork: Optional[int] = None) -> Optional[Receipt]:
        return self.receipts.get((self.canonical if fork is None else fork, tx_id))

    # ------------------------------------------------------------ submission

    def submit(self, sender: PartyId, payload: bytes, fee: int, forks=None, meta: Optional[dict] = None) -> int:
        if fee < 0:
            raise ValueError("fee must be >= 0")
        tx = Transaction(self._next_id, sender, fee, payload, self.tick, self.intrinsic_gas(payload), dict(meta or {}))
        self._next_id += 1
        self.txs[tx.id] = tx
        if forks is None:
            forks = [self.fork_of(sender)] if self.partitioned and sender.address in self.groups \
                else self.live_forks()
        self.emit("submit", tx=tx.id, sender=sender.address.hex(), fee=fee, bytes=len(payload),
                  forks=list(forks), meta=tx.meta)
        for rule in self.drop_rules:
            if rule(tx):
                for fid in forks:
                    self.forks[fid].dropped.add(tx.id)
                self.emit("drop", tx=tx.id, reason="scripted", forks=list(forks))
                return tx.id
        for fid in forks:
            self.forks[fid].mempool[tx.id] = tx
        return tx.id

    def add_drop_rule(self, rule: Callable) -> None:
        self.drop_rules.append(rule)

    # ------------------------------------------------------------ blocks

    def _select(self, fork: Fork, tick: int) -> list:
        p = self.params
        eligible = [tx for tx in fork.mempool.values()
                    if tx.submitted_at + p.validation_delay <= tick and tx.fee >= p.min_fee]
        eligible.sort(key=Transaction.priority)
        chosen, used = [], 0
        for tx in eligible:
            if p.max_txs_per_block is not None and len(chosen) >= p.max_txs_per_block:
                break
            if used + tx.weight > p.block_capacity:
                continue
            chosen.append(tx)
            used += tx.weight
        return chosen

    def _run(self, fork: Fork, height: int, tick: int, chosen: list) -> None:
        running = []
        for tx in chosen:
            before = list(running)
            res = self._exec_one(fork, height, tick, tx)
            if isinstance(res, Suspended) and res.step():
                # the first stage runs in the transaction's own slot
                self._finish(fork, tx, res.result, res.meter)
                res = None
            for s in before:
                if s[1].step():
                    running.remove(s)
                    self._finish(fork, s[0], s[1].result, s[1].meter)
            if isinstance(res, Suspended):
                running.append((tx, res))
        for tx, s in running:
            while not s.step():
                pass
            self._finish(fork, tx, s.result, s.meter)

    def _exec_one(self, fork: Fork, height: int, tick: int, tx: Transaction):
        meter = GasMeter(self.params.prices)
        meter.charge("tx_base", 1, "tx")
        meter.charge("tx_byte", len(tx.payload), "tx")
        if self.execute is None:
            rec = Receipt(tx.id, True, meter=meter)
            self._finish(fork, tx, rec, meter)
            return rec
        res = self.execute(fork.state, tx, ExecContext(height, tick, fork.id, tx, meter))
        if isinstance(res, Suspended):
            return res
        self._finish(fork, tx, res, meter)
        return res

    def _finish(self, fork: Fork, tx: Transaction, rec: Receipt, meter: GasMeter) -> None:
        if rec is None:
            rec = Receipt(tx.id, True)
        rec.meter = meter
        self.receipts[(fork.id, tx.id)] = rec
        self.emit("exec", tx=tx.id, fork=fork.id, ok=rec.ok, error=rec.error, fee=tx.fee,
                  gas=meter.total, units=dict(meter.units), tags=meter.tag_gas(), meta=tx.meta)

    def _drop_stale(self, fork: Fork, chosen: list, height: int) -> None:
        p = self.params
        waiting = sum(tx.weight for tx in fork.mempool.values())
        saturated = waiting > p.block_capacity or (
            p.max_txs_per_block is not None and len(fork.mempool) > p.max_txs_per_block)
        if not saturated:
            return
        cutoff = min((tx.fee for tx in chosen), default=None)
        cutoff = p.min_fee if cutoff is None else max(cutoff, p.min_fee)
        window_ticks = p.drop_window * p.block_time
        for tx in sorted(fork.mempool.values(), key=lambda t: t.id):
            if tx.fee < cutoff and self.tick - tx.submitted_at > window_ticks:
                del fork.mempool[tx.id]
                fork.dropped.add(tx.id)
                self.emit("drop", tx=tx.id, reason="policy", fork=fork.id, height=height)

    def set_time(self, tick: int) -> None:
        if tick < self.tick:
            raise ChainError("clock went backwards")
        self.tick = tick

    def advance_block(self, tick: Optional[int] = None, forks=None) -> dict:
        """Mine one block on each live fork (or the given ones). Returns fork id -> Block."""
        if tick is not None:
            if tick < self.tick:
                raise ChainError("clock went backwards")
            self.tick = tick
        targets = self.live_forks() if forks is None else list(forks)
        if forks is None and self.partitioned:
            targets = [fid for fid in targets if self.rng.random() < self.forks[fid].share]
        out = {}
        for fid in targets:
            fork = self.forks[fid]
            height = fork.tip + 1
            chosen = self._select(fork, self.tick)
            for tx in chosen:
                del fork.mempool[tx.id]
                fork.included[tx.id] = height
            block = Block(height, fork.blocks[-1].id, fid, tuple(tx.id for tx in chosen),
                          sum(tx.weight for tx in chosen), self.tick)
            fork.blocks.append(block)
            self.emit("block", fork=fid, height=height, txs=list(block.txs), gas_used=block.gas_used)
            for tx in chosen:
                self.emit("include", tx=tx.id, fork=fid, height=height)
            self._run(fork, height, self.tick, chosen)
            self._drop_stale(fork, chosen, height)
            fin = height - self.params.finality
            if fin >= 1:
                for txid in fork.blocks[fin].txs:
                    self.emit("finalize", tx=txid, fork=fid, height=fin)
            out[fid] = block
        return out

    def mine(self, n: int, forks=None) -> None:
        for _ in range(n):
            self.advance_block(self.tick + self.params.block_time, forks)

    # ------------------------------------------------------------ forks

    def partition(self, groups, shares=None, permanent: bool = False) -> list:
        """Split into len(groups) forks; group i mines fork ids[i]."""
        if self.partitioned:
            raise PartitionWhilePartitioned()
        flat = [a for g in groups for a in g]
        if len(flat) != len(set(flat)):
            raise ChainError("groups must be disjoint")
        base = self.forks[self.canonical]
        ids = [base.id]
        for _ in groups[1:]:
            fid = max(self.forks) + 1
            self.forks[fid] = Fork(fid, list(base.blocks), _copy_state(base.state), dict(base.mempool),
                                   dict(base.included), set(base.dropped))
            ids.append(fid)
        self.groups = {}
        for fid, g in zip(ids, groups):
            for member in g:
                addr = member.address if isinstance(member, PartyId) else member
                self.groups[addr] = fid
        if shares is not None:
            for fid, s in zip(ids, shares):
                self.forks[fid].share = s
        self.partitioned = True
        self.permanent = permanent
        self.emit("partition", forks=ids, permanent=permanent)
        return ids

    def heal(self) -> int:
        if not self.partitioned:
            raise ChainError("not partitioned")
        live = self.live_forks()
        win = min(live, key=lambda fid: (-self.forks[fid].tip, fid))
        w = self.forks[win]
        for fid in live:
            if fid == win:
                continue
            f = self.forks[fid]
            f.alive = False
            for txid in sorted(f.included):
                if txid not in w.included and txid not in w.mempool:
                    w.mempool[txid] = self.txs[txid]
                    w.dropped.discard(txid)
                    self.emit("orphan", tx=txid, fork=fid)
            for txid in sorted(f.mempool):
                if txid not in w.included:
                    w.mempool.setdefault(txid, self.txs[txid])
        self.canonical = win
        self.partitioned = False
        self.groups = {}
        self.emit("heal", canonical=win)
        return win


def _copy_state(state):
    if state is None:
        return None
    return state.copy()
