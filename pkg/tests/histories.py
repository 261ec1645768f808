"""History generators and a reference linearizability checker for tests."""

import itertools
import random

from contractchecker.core import Kind, PartyId, Role, make_read, make_write

CLIENTS = [PartyId(Role.CLIENT, bytes([i]) * 20) for i in range(4)]
KEYS = [b"K0", b"K1", b"K2"]


def interval_shapes(a: int, b: int):
    """Distinct real-time precedence shapes of two sequential clients with
    a and b operations; one interval assignment per shape."""
    seen = set()
    n = a + b
    for pos in itertools.combinations(range(2 * n), 2 * a):
        mine = set(pos)
        ca = cb = 0
        ends = {}
        for t in range(2 * n):
            if t in mine:
                ends.setdefault(("a", ca // 2), []).append(t)
                ca += 1
            else:
                ends.setdefault(("b", cb // 2), []).append(t)
                cb += 1
        iv = [tuple(ends[("a", i)]) for i in range(a)] + [tuple(ends[("b", i)]) for i in range(b)]
        rel = tuple(iv[i][1] < iv[j][0] for i in range(n) for j in range(n))
        if rel not in seen:
            seen.add(rel)
            yield iv


def build(specs, intervals, clients):
    """specs: per op (kind, key index, source index or None); the source
    index points at a write in the same list."""
    ops = []
    for i, ((kind, k, _), (tb, te), c) in enumerate(zip(specs, intervals, clients)):
        if kind == "w":
            ops.append(make_write(i + 1, CLIENTS[c], KEYS[k], b"v%d" % i, tb * 10, te * 10))
        else:
            ops.append(None)
    for i, ((kind, k, src), (tb, te), c) in enumerate(zip(specs, intervals, clients)):
        if kind == "r":
            ops[i] = make_read(i + 1, CLIENTS[c], KEYS[k], ops[src] if src is not None else None, tb * 10, te * 10)
    return ops


def label_choices(n: int, keys: int = 2):
    """Every assignment of kind and key to n ops, then every read source.
    Key 0 is used first, so key-renamed duplicates are skipped."""
    for kk in itertools.product(range(2 * keys), repeat=n):
        key_seq = [x % keys for x in kk]
        if keys > 1 and key_seq and key_seq[0] != 0:
            continue
        kinds = ["w" if x < keys else "r" for x in kk]
        options = []
        for i in range(n):
            if kinds[i] == "w":
                options.append([None])
            else:
                ws = [j for j in range(n) if kinds[j] == "w" and key_seq[j] == key_seq[i]]
                options.append([None] + ws)
        for srcs in itertools.product(*options):
            yield [(kinds[i], key_seq[i], srcs[i]) for i in range(n)]


def exhaustive(max_ops: int = 5, keys: int = 2):
    """Every history of up to max_ops operations over `keys` keys and two
    sequential clients, up to renaming keys and clients."""
    for n in range(1, max_ops + 1):
        for a in range(n, (n - 1) // 2, -1):  # a >= b: client renaming
            b = n - a
            shapes = list(interval_shapes(a, b))
            clients = [0] * a + [1] * b
            for labels in label_choices(n, keys):
                for iv in shapes:
                    yield build(labels, iv, clients)


def random_history(rng: random.Random, n: int, keys: int = 2, clients: int = 3, stale: float = 0.3):
    """Random history from a simulated execution: each op takes effect at a
    point inside its interval; reads mostly see the latest write and are
    sometimes stale."""
    cursor = [0] * clients
    ops, effects = [], []
    for i in range(n):
        c = rng.randrange(clients)
        tb = cursor[c] + rng.randint(0, 6)
        te = tb + rng.randint(1, 12)
        cursor[c] = te + 1
        effects.append((rng.uniform(tb, te), i, c, tb, te))
    latest: dict = {}
    writes: dict = {}
    out = [None] * n
    for at, i, c, tb, te in sorted(effects):
        k = KEYS[rng.randrange(keys)]
        if rng.random() < 0.5:
            op = make_write(i + 1, CLIENTS[c], k, b"v%d" % i, tb, te)
            latest[k] = op
            writes.setdefault(k, []).append(op)
        else:
            src = latest.get(k)
            if rng.random() < stale:
                src = rng.choice([None] + writes.get(k, []))
            op = make_read(i + 1, CLIENTS[c], k, src, tb, te)
        out[i] = op
    return out


def reference_linearizable(ops) -> bool:
    """Plain permutation search, independent of the library code."""
    for perm in itertools.permutations(ops):
        pos = {op.nonce: i for i, op in enumerate(perm)}
        if any(a.t_end < b.t_begin and pos[a.nonce] > pos[b.nonce] for a in ops for b in ops):
            continue
        last: dict = {}
        good = True
        for op in perm:
            if op.kind is Kind.WRITE:
                last[op.key] = op.nonce
            elif op.source != last.get(op.key):
                good = False
                break
        if good:
            return True
    return False
