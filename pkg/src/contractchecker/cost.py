"""Log placement, batching, gas aggregation and the client cost model."""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .chainsim import COST_CLASSES, GasPrices


class Where(Enum):
    ON = "onchain"
    OFF = "offchain"


ON, OFF = Where.ON, Where.OFF


@dataclass(frozen=True)
class PlacementConfig:
    client_log: Where = OFF
    server_log: Where = ON
    persistent_log: Where = ON

    @staticmethod
    def all():
        return [PlacementConfig(c, s, p) for c in (ON, OFF) for s in (ON, OFF) for p in (ON, OFF)]

    def label(self) -> str:
        short = {ON: "on", OFF: "off"}
        return f"client={short[self.client_log]},server={short[self.server_log]},persistent={short[self.persistent_log]}"


# ---------------------------------------------------------------- batching

@dataclass(frozen=True)
class BatchTx:
    ops: tuple
    nbytes: int

    def fee(self, prices: GasPrices = GasPrices()) -> int:
        return prices.tx_base + self.nbytes * prices.tx_byte


def chunks(seq, size: Optional[int]) -> list:
    seq = list(seq)
    if size is None or size >= len(seq):
        return [seq]
    if size < 1:
        raise ValueError("batch size must be >= 1")
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def batch(ops, batch_size: int) -> list:
    """Pack ops into ceil(n / batch_size) transactions."""
    from .core import encode_operation
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    ops = list(ops)
    out = []
    for i in range(0, len(ops), batch_size):
        group = tuple(ops[i:i + batch_size])
        out.append(BatchTx(group, sum(len(encode_operation(op)) for op in group)))
    return out


def total_fee(txs, prices: GasPrices = GasPrices()) -> int:
    return sum(t.fee(prices) for t in txs)


# ---------------------------------------------------------------- analytic model

def finality_delay(B: float, F: int, P: float, r: float = 1.0) -> float:
    return r * (B * F + P)


def predict_client_cost(E, B, F, P, r, N, M=1, T=1) -> tuple:
    """(per-op-per-epoch units for the contract protocol, client-audit lower bound).

    A client keeps each op until its attestation is final, i.e. for
    F_t = r*(B*F + P) ticks, which is F_t/E epochs. In client-side auditing
    every client stores every client's ops each epoch, so T*M*N units per
    client and at least N per op per epoch.
    """
    if min(E, B, F, r, N, M, T) <= 0 or P < 0:
        raise ValueError("parameters must be positive")
    if E < B:
        raise ValueError("epoch shorter than a block")
    return finality_delay(B, F, P, r) / E, N


def client_audit_total(T: int, M: int, N: int) -> int:
    return T * M * N


def ops_per_budget(budget: float, price_per_gas: float, gas_per_op: float) -> float:
    return budget / (price_per_gas * gas_per_op)


# ---------------------------------------------------------------- aggregation

class IncompleteLog(Exception):
    pass


@dataclass
class CostReport:
    per_epoch: dict = field(default_factory=dict)  # epoch -> {class: gas}
    per_epoch_tags: dict = field(default_factory=dict)  # epoch -> {tag: gas}
    ops_per_epoch: dict = field(default_factory=dict)
    fees: int = 0
    txs: int = 0
    client_units: float = 0.0
    client_ops: int = 0

    @property
    def totals(self) -> dict:
        out = {c: 0 for c in COST_CLASSES}
        for row in self.per_epoch.values():
            for c, g in row.items():
                out[c] += g
        return out

    @property
    def total(self) -> int:
        return sum(self.totals.values())

    def tag_total(self, tag: str) -> int:
        return sum(row.get(tag, 0) for row in self.per_epoch_tags.values())

    def epoch_total(self, epoch: int) -> int:
        return sum(self.per_epoch.get(epoch, {}).values())

    def per_op(self, epoch: int, tag: Optional[str] = None) -> float:
        n = self.ops_per_epoch.get(epoch, 0)
        if not n:
            return 0.0
        g = self.per_epoch_tags.get(epoch, {}).get(tag, 0) if tag else self.epoch_total(epoch)
        return g / n

    @property
    def client_unit_cost(self) -> float:
        return self.client_units / self.client_ops if self.client_ops else 0.0

    def records(self) -> list:
        rows = []
        for e in sorted(self.per_epoch):
            row = {"epoch": e, "ops": self.ops_per_epoch.get(e, 0), "total": self.epoch_total(e)}
            row.update({c: self.per_epoch[e].get(c, 0) for c in COST_CLASSES})
            row.update({f"tag_{t}": g for t, g in sorted(self.per_epoch_tags.get(e, {}).items())})
            rows.append(row)
        return rows

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def to_csv(self) -> str:
        rows = self.records()
        cols = ["epoch", "ops", "total", *COST_CLASSES]
        cols += sorted({k for r in rows for k in r if k.startswith("tag_")})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, restval=0, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{'class':<20}{'gas':>16}"]
        for c, g in self.totals.items():
            lines.append(f"{c:<20}{g:>16,}")
        lines.append(f"{'total':<20}{self.total:>16,}")
        lines.append(f"transactions {self.txs}, fees paid {self.fees:,}")
        if self.client_ops:
            lines.append(f"client units per op {self.client_unit_cost:.3f}")
        return "\n".join(lines)


def aggregate(events, fork: Optional[int] = None) -> CostReport:
    """Build a CostReport from a chain event log.

    Gas of an executed transaction is booked to the epoch in its metadata
    (or -1 when it has none). A non-empty log must end with an "end" record.
    """
    events = list(events)
    rep = CostReport()
    if not events:
        return rep
    if events[-1].get("event") != "end":
        raise IncompleteLog("event log has no end record")
    prices = GasPrices(**events[-1]["prices"]) if "prices" in events[-1] else GasPrices()
    for ev in events:
        kind = ev.get("event")
        if kind == "exec":
            if fork is not None and ev.get("fork") != fork:
                continue
            epoch = ev.get("meta", {}).get("epoch", -1)
            row = rep.per_epoch.setdefault(epoch, {})
            for c, u in ev["units"].items():
                row[c] = row.get(c, 0) + u * prices.price(c)
            trow = rep.per_epoch_tags.setdefault(epoch, {})
            for t, g in ev["tags"].items():
                trow[t] = trow.get(t, 0) + g
            rep.fees += ev["gas"] * ev["fee"]
            rep.txs += 1
        elif kind == "epoch_ops":
            rep.ops_per_epoch[ev["epoch"]] = rep.ops_per_epoch.get(ev["epoch"], 0) + ev["ops"]
        elif kind == "client_units":
            rep.client_units += ev["units"]
            rep.client_ops += ev["ops"]
    return rep


def read_events(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
