"""End-to-end protocol simulation: agents, contract and chain on one clock."""

import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional

from .. import ads
from ..actors import (HONEST, SELECTIVE_OMISSION, ClientAgent, EpochSchedule, FeePolicy, ServerAgent)
from ..chainsim import SimChain
from ..consistency import Status, is_linearizable
from ..contract import Contract, ContractConfig, ContractState
from ..core import Kind, NonceSource, Registry, Role, keygen
from ..cost import aggregate
from .config import ScenarioConfig
from .workload import generate, load_trace


@dataclass(frozen=True)
class Item:
    """One scheduled operation: begin, server execution point and end ticks."""
    client: int
    kind: str  # "r" | "w"
    key: str
    value: str
    t_begin: int
    t_exec: int
    t_end: int


@dataclass
class RunResult:
    verdicts: dict
    events: list
    report: object
    truth: dict
    sim: "Simulation"

    @property
    def statuses(self) -> dict:
        return {e: v.status for e, v in self.verdicts.items()}

    @property
    def attacked(self) -> bool:
        return any(v.status in ("AttackDetected", "AttackSuspected") for v in self.verdicts.values())


class Simulation:
    def __init__(self, cfg: ScenarioConfig, trace=None, stale: Optional[Callable] = None,
                 n_clients: Optional[int] = None, drop_rules=()):
        self.cfg = cfg
        seed = cfg.seed
        self.rng = random.Random(seed)
        self.schedule = EpochSchedule(cfg.chain.block_time, cfg.blocks_per_epoch, cfg.chain.finality)
        if trace is None:
            trace = load_trace(cfg.workload.trace) if cfg.workload.trace else generate(cfg.workload.spec(), seed)
        self.trace = list(trace)
        n = n_clients or max(cfg.workload.clients, 1 + max((op.client for op in self.trace), default=0))

        self.server_key = keygen(Role.SERVER, f"server-{seed}")
        self.idp_key = keygen(Role.IDP, f"idp-{seed}")
        self.client_keys = [keygen(Role.CLIENT, f"client-{seed}-{i}") for i in range(n)]
        self.registry = Registry([self.server_key, self.idp_key, *self.client_keys])

        self.tree = ads.MerkleTree()
        self.contract = Contract(self.tree)
        t = cfg.toggles
        ccfg = ContractConfig(cfg.placement.placement(), t.double_signed, t.lock, t.wait_for,
                              self.schedule.epoch_ticks, cfg.chain.finality)
        self.state = ContractState(ccfg, self.registry.copy(), self.server_key.party, self.idp_key.party,
                                   [k.party for k in self.client_keys])
        self.chain = SimChain(cfg.chain.params(), self.state, self.contract.execute, seed)
        for rule in drop_rules:
            self.chain.add_drop_rule(rule)

        a = cfg.agents
        if stale is None and a.stale_probability > 0:
            srng = random.Random(seed ^ 0x5EED)
            p, mode = a.stale_probability, a.stale_mode

            def stale(req):
                return mode if req.kind is Kind.READ and srng.random() < p else None
        self.server = ServerAgent(self.server_key, self.registry, a.server_strategy, stale, a.batch_size,
                                  seed, a.edits, a.server_fee, self.tree, self.schedule)
        fee = FeePolicy(a.fee, a.fee_ceiling)
        self.clients = [ClientAgent(k, self.server_key.party, self.registry, self.schedule, fee,
                                    a.client_strategies.get(i, HONEST), a.skew, t.resubmission, a.batch_size,
                                    seed * 1000 + i)
                        for i, k in enumerate(self.client_keys)]
        self.nonces = NonceSource(seed)
        self.truth: dict = {}
        self.hooks: dict = defaultdict(list)  # tick -> [callable]
        self.epochs_run = 0

    # ------------------------------------------------------------ operations

    def plan(self, epoch: int, ops) -> list:
        """Give each op an interval inside the epoch. A client's ops never
        overlap each other; ops of different clients may."""
        ops = list(ops)
        start = self.schedule.start(epoch)
        limit = start + self.schedule.epoch_ticks - 2
        if not ops:
            return []
        slot = max(3, (self.schedule.epoch_ticks * 7 // 10) // len(ops))
        span = max(3, slot * 3 // 2)
        while True:
            cursor: dict = {}
            items = []
            for j, op in enumerate(ops):
                tb = max(start + 1 + j * slot, cursor.get(op.client, start) + 1)
                te = tb + self.rng.randint(2, span)
                cursor[op.client] = te
                items.append(Item(op.client, op.kind, op.key, op.value, tb, self.rng.randint(tb + 1, te - 1), te))
            if max(i.t_end for i in items) <= limit:
                return items
            if span == 2 and slot == 3:
                raise ValueError("too many operations for one epoch")
            span = max(2, span // 2)
            slot = max(3, slot * 3 // 4)

    def execute(self, epoch: int, items) -> list:
        """Run the scheduled ops through client and server; returns the dual-signed ops."""
        reqs = {}
        for idx, it in enumerate(items):
            c = self.clients[it.client]
            kind = Kind.WRITE if it.kind == "w" else Kind.READ
            reqs[idx] = c.request(self.nonces.next(), kind, it.key.encode(), it.value.encode(), it.t_begin)
        out = []
        for idx in sorted(range(len(items)), key=lambda i: (items[i].t_exec, i)):
            it = items[idx]
            c = self.clients[it.client]
            resp = self.server.serve(reqs[idx], epoch)
            op = self.server.countersign(c.complete(reqs[idx], resp, it.t_end), epoch)
            c.record(epoch, op)
            out.append(op)
        self.chain.emit("epoch_ops", epoch=epoch, ops=len(out))
        return out

    def ground_truth(self, epoch: int) -> str:
        ops = self.server.truthful(epoch)
        ok = is_linearizable(ops, self.server.prior())
        return (Status.CONSISTENT if ok else Status.INCONSISTENT).value

    # ------------------------------------------------------------ chain clock

    def attest(self, epoch: int, server: bool = True, force_all: bool = False) -> None:
        self.truth[epoch] = self.ground_truth(epoch)
        force = force_all or self.cfg.toggles.wait_for == "all"
        for c in self.clients:
            c.attest(self.chain, epoch, force=force)
        if not server:
            return
        if self.server.strategy == SELECTIVE_OMISSION:
            # wait one block to see which client attestations the chain dropped
            self.at(self.chain.tick + self.schedule.block_time, lambda: self.server.attest(self.chain, epoch))
        else:
            self.server.attest(self.chain, epoch)

    def at(self, tick: int, fn: Callable) -> None:
        self.hooks[tick].append(fn)

    def block(self, tick: int, before: Optional[Callable] = None) -> None:
        self.chain.set_time(tick)
        for fn in self.hooks.pop(tick, []):
            fn()
        if before is not None:
            before()
        self.chain.advance_block(tick)
        self.after_block()

    def after_block(self) -> None:
        self.server.on_block(self.chain)
        for c in self.clients:
            c.on_block(self.chain)

    def next_block_tick(self) -> int:
        B = self.schedule.block_time
        return (self.chain.tick // B + 1) * B

    def mine(self, n: int) -> None:
        for _ in range(n):
            self.block(self.next_block_tick())

    def settle(self, max_blocks: Optional[int] = None) -> None:
        """Mine until every attestation is final and every verdict is in."""
        F = self.schedule.finality
        limit = max_blocks if max_blocks is not None else 4 * F + 8
        for _ in range(limit):
            if self._settled():
                break
            self.mine(1)

    def _settled(self) -> bool:
        if any(self.hooks.values()):
            return False
        if not all(c.done() for c in self.clients):
            return False
        for c in self.clients:
            for e in c.submitted:
                if e not in c.verdicts and e not in c.timed_out:
                    return False
        return True

    # ------------------------------------------------------------ whole runs

    def run_epoch(self, epoch: int, ops) -> None:
        self.execute(epoch, self.plan(epoch, ops))
        B = self.schedule.block_time
        start = self.schedule.start(epoch)
        for b in range(1, self.schedule.blocks_per_epoch + 1):
            t = start + b * B
            due = t == self.schedule.deadline(epoch)
            self.block(t, (lambda: self.attest(epoch)) if due else None)
        self.epochs_run = max(self.epochs_run, epoch + 1)

    def run(self) -> RunResult:
        by_epoch = defaultdict(list)
        for op in self.trace:
            by_epoch[op.epoch].append(op)
        epochs = max(by_epoch) + 1 if by_epoch else 0
        for e in range(epochs):
            self.run_epoch(e, by_epoch.get(e, []))
        self.settle()
        return self.finish()

    def finish(self) -> RunResult:
        ch = self.chain
        for e, v in self.state_verdicts().items():
            ch.emit("verdict", epoch=e, status=v.status, effective=v.effective, codes=v.codes,
                    missing=[m.hex() for m in v.missing], revision=v.revision,
                    truth=self.truth.get(e))
        for c in self.clients:
            ch.emit("client_units", party=c.party.address.hex(), units=c.units, ops=c.unit_ops,
                    max_epochs_held=c.max_epochs_held, timed_out=list(c.timed_out))
        ch.emit("end", prices=vars(ch.params.prices), epochs=self.epochs_run, height=ch.height(),
                digest=self.chain.state().digest().hex())
        return RunResult(self.state_verdicts(), ch.events, aggregate(ch.events), dict(self.truth), self)

    def state_verdicts(self) -> dict:
        return self.chain.state().verdicts


def simulate(cfg: ScenarioConfig, **kw) -> RunResult:
    return Simulation(cfg, **kw).run()
