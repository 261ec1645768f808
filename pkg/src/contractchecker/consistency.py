"""Linearizability auditing of declared orders, a brute-force oracle, and
the order search a rational server runs before attesting.

Histories are plain sequences of `Operation`. Freshness is judged per key:
a read must reflect the nearest preceding write on its key in the declared
order, or NOT_FOUND (``source is None``) when there is none. Reads that
reflect writes from earlier epochs are resolved through an optional
``prior`` mapping of key -> latest committed write nonce.
"""

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

from .core import Operation

DEFAULT_ORACLE_BOUND = 8
DEFAULT_SEARCH_BUDGET = 200_000


class Status(Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"


class ConsistencyError(Exception):
    pass


class DuplicateNonce(ConsistencyError):
    pass


class MalformedRead(ConsistencyError):
    pass


class OracleBoundExceeded(ConsistencyError):
    pass


STALE_READ = "StaleRead"
ORDER_BREAK = "RealTimeOrderBreak"


@dataclass(frozen=True)
class Violation:
    kind: str
    nonces: tuple
    expected: Optional[int] = None
    returned: Optional[int] = None

    def explain(self) -> str:
        if self.kind == STALE_READ:
            exp = "NOT_FOUND" if self.expected is None else f"{self.expected:x}"
            got = "NOT_FOUND" if self.returned is None else f"{self.returned:x}"
            return f"read {self.nonces[0]:x} returned {got}, freshest was {exp}"
        a, b = self.nonces
        return f"{a:x} is ordered before {b:x} but {b:x} ended before {a:x} began"


@dataclass(frozen=True)
class Verdict:
    status: Status
    violations: tuple = ()

    @property
    def consistent(self) -> bool:
        return self.status is Status.CONSISTENT

    def stale_reads(self) -> list:
        return [v.nonces[0] for v in self.violations if v.kind == STALE_READ]


CONSISTENT = Verdict(Status.CONSISTENT, ())


class _NoOrder:
    def __bool__(self):
        return False

    def __repr__(self):
        return "NoConsistentOrder"


NoConsistentOrder = _NoOrder()

_MISSING = object()


def order_breaks(ops: Sequence[Operation]) -> list:
    """Pairs (i, j), i < j, where op j ended before op i began."""
    n = len(ops)
    if n < 2:
        return []
    # fast path: no break iff every t_end is >= the max t_begin seen so far
    mx = ops[0].t_begin
    clean = True
    for op in ops[1:]:
        if op.t_end < mx:
            clean = False
            break
        if op.t_begin > mx:
            mx = op.t_begin
    if clean:
        return []
    out = []
    for j in range(1, n):
        te = ops[j].t_end
        for i in range(j):
            if te < ops[i].t_begin:
                out.append((i, j))
    out.sort()
    return out


def _check_unique(ops):
    seen = set()
    for op in ops:
        if op.nonce in seen:
            raise DuplicateNonce(f"{op.nonce:x}")
        seen.add(op.nonce)
    return seen


def audit_ordered(ops: Sequence[Operation], prior: Optional[Mapping] = None) -> Verdict:
    """Audit a declared total order for real-time compatibility and freshness."""
    ops = list(ops)
    nonces = _check_unique(ops)
    violations = []
    for i, j in order_breaks(ops):
        violations.append(Violation(ORDER_BREAK, (ops[i].nonce, ops[j].nonce)))

    latest: dict = {}
    for op in ops:
        if op.is_write:
            latest[op.key] = op.nonce
            continue
        src = op.source
        if src is not None and src not in nonces:
            if prior is None:
                raise MalformedRead(f"read {op.nonce:x} reflects unknown write {src:x}")
        expected = latest.get(op.key, _MISSING)
        if expected is _MISSING:
            expected = prior.get(op.key) if prior is not None else None
        if src != expected:
            violations.append(Violation(STALE_READ, (op.nonce,), expected, src))
    if violations:
        return Verdict(Status.INCONSISTENT, tuple(violations))
    return CONSISTENT


# ---------------------------------------------------------------- oracle

def oracle_linearizable(ops, bound: int = DEFAULT_ORACLE_BOUND, prior: Optional[Mapping] = None):
    """Brute-force search over linear extensions of real-time precedence.

    Returns (True, witness) or (False, None). Prefixes whose last placed read
    is already stale are cut, since no completion can repair them.
    """
    ops = sorted(ops, key=lambda o: o.nonce)
    n = len(ops)
    if n > bound:
        raise OracleBoundExceeded(f"{n} operations > bound {bound}")
    nonces = _check_unique(ops)
    for op in ops:
        if op.is_read and op.source is not None and op.source not in nonces and prior is None:
            raise MalformedRead(f"read {op.nonce:x} reflects unknown write {op.source:x}")
    preds = [0] * n
    for j in range(n):
        for i in range(n):
            if ops[i].t_end < ops[j].t_begin:
                preds[j] |= 1 << i
    full = (1 << n) - 1
    order: list = []

    def initial(key):
        return prior.get(key) if prior is not None else None

    def dfs(placed, state):
        if placed == full:
            return True
        for j in range(n):
            bit = 1 << j
            if placed & bit or (preds[j] & placed) != preds[j]:
                continue
            op = ops[j]
            if op.is_write:
                nxt = dict(state)
                nxt[op.key] = op.nonce
            else:
                cur = state[op.key] if op.key in state else initial(op.key)
                if cur != op.source:
                    continue
                nxt = state
            order.append(op)
            if dfs(placed | bit, nxt):
                return True
            order.pop()
        return False

    if dfs(0, {}):
        return True, tuple(order)
    return False, None


# ---------------------------------------------------------------- order search

def _greedy_sweep(ops):
    ops = sorted(ops, key=lambda o: (o.t_begin, o.t_end, o.nonce))
    groups, cur, reach = [], [], None
    for op in ops:
        if cur and op.t_begin > reach:
            groups.append(cur)
            cur = []
        if not cur:
            reach = op.t_end
        cur.append(op)
        reach = max(reach, op.t_end)
    if cur:
        groups.append(cur)

    out = []
    for g in groups:
        writes = {o.nonce: o for o in g if o.is_write}
        wanted = {o.source for o in g if o.is_read and o.source in writes}
        placed = set()
        for o in g:
            if o.is_write and o.nonce not in wanted:
                out.append(o)
                placed.add(o.nonce)
        for o in g:
            if o.is_read:
                w = writes.get(o.source)
                if w is not None and w.nonce not in placed:
                    out.append(w)
                    placed.add(w.nonce)
                out.append(o)
        for o in g:
            if o.is_write and o.nonce not in placed:
                out.append(o)
                placed.add(o.nonce)
    return out


class _BudgetExceeded(Exception):
    pass


def _search_key(kops, init, budget):
    """Exact register linearization of one key's operations (memoized DFS)."""
    n = len(kops)
    preds = [0] * n
    for j in range(n):
        tb = kops[j].t_begin
        for i in range(n):
            if kops[i].t_end < tb:
                preds[j] |= 1 << i
    full = (1 << n) - 1
    failed = set()
    order = []
    steps = [0]

    def dfs(placed, cur):
        if placed == full:
            return True
        if (placed, cur) in failed:
            return False
        steps[0] += 1
        if steps[0] > budget:
            raise _BudgetExceeded()
        # reads that can go now without changing state come first
        cands = [j for j in range(n) if not placed & (1 << j) and (preds[j] & placed) == preds[j]]
        for j in cands:
            op = kops[j]
            if op.is_read:
                if op.source != cur:
                    continue
                order.append(op)
                if dfs(placed | (1 << j), cur):
                    return True
                order.pop()
        for j in cands:
            op = kops[j]
            if op.is_write:
                order.append(op)
                if dfs(placed | (1 << j), op.nonce):
                    return True
                order.pop()
        failed.add((placed, cur))
        return False

    return list(order) if dfs(0, init) else None


def _merge(ops, per_key_orders):
    index = {op.nonce: i for i, op in enumerate(ops)}
    n = len(ops)
    indeg = [0] * n
    succ = [[] for _ in range(n)]
    for korder in per_key_orders:
        for a, b in zip(korder, korder[1:]):
            ia, ib = index[a.nonce], index[b.nonce]
            succ[ia].append(ib)
            indeg[ib] += 1
    for i in range(n):
        te = ops[i].t_end
        for j in range(n):
            if te < ops[j].t_begin:
                succ[i].append(j)
                indeg[j] += 1
    heap = [(ops[i].t_begin, ops[i].t_end, ops[i].nonce, i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        *_, i = heapq.heappop(heap)
        out.append(ops[i])
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, (ops[j].t_begin, ops[j].t_end, ops[j].nonce, j))
    return out if len(out) == n else None


def find_consistent_order(ops, prior: Optional[Mapping] = None, preferred: Optional[Sequence] = None,
                          bound: int = DEFAULT_ORACLE_BOUND, budget: int = DEFAULT_SEARCH_BUDGET):
    """Return a declared order that audits Consistent, or NoConsistentOrder.

    Tries, in turn: the caller's preferred order, the greedy sweep, then an
    exact per-key search merged under real-time precedence. Up to `bound`
    operations the search is unbudgeted; above it the search gives up after
    `budget` steps per key. Every returned order has been audited.
    """
    ops = list(ops)
    if not ops:
        return ()
    _check_unique(ops)

    def ok(order):
        try:
            return audit_ordered(order, prior).consistent
        except MalformedRead:
            return False

    if preferred is not None and len(preferred) == len(ops) and ok(preferred):
        return tuple(preferred)
    greedy = _greedy_sweep(ops)
    if ok(greedy):
        return tuple(greedy)

    nonces = {o.nonce for o in ops}
    by_key: dict = {}
    for op in sorted(ops, key=lambda o: (o.t_begin, o.t_end, o.nonce)):
        if op.is_read and op.source is not None and op.source not in nonces and prior is None:
            return NoConsistentOrder
        by_key.setdefault(op.key, []).append(op)
    limit = float("inf") if len(ops) <= bound else budget
    orders = []
    try:
        for key in sorted(by_key):
            init = prior.get(key) if prior is not None else None
            korder = _search_key(by_key[key], init, limit)
            if korder is None:
                return NoConsistentOrder
            orders.append(korder)
    except _BudgetExceeded:
        return NoConsistentOrder
    merged = _merge(ops, orders)
    if merged is not None and ok(merged):
        return tuple(merged)
    return NoConsistentOrder


def is_linearizable(ops, prior: Optional[Mapping] = None) -> bool:
    return bool(find_consistent_order(ops, prior)) or not list(ops)
