"""Log verification, client/server crosschecking, attack attribution and repair."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import Attestation, Operation, PartyId, Registry, Role, UnknownParty
from .consistency import MalformedRead, audit_ordered, order_breaks

AS1, AS2, AS3, AS4 = "AS1", "AS2", "AS3", "AS4"
AC1, AC2, AC3, AC4 = "AC1", "AC2", "AC3", "AC4"
UNATTRIBUTED = "DetectedUnattributed"
SERVER_CODES = (AS1, AS2, AS3, AS4)
CLIENT_CODES = (AC1, AC2, AC3, AC4)


class IrreparableConflict(Exception):
    pass


def ident(op: Operation) -> tuple:
    return (op.nonce, op.content_hash())


def _sort_key(op: Operation):
    return (op.t_begin, op.nonce)


# ---------------------------------------------------------------- verification

def verify_client_log(a: Attestation, registry: Registry, server: Optional[PartyId] = None,
                      double_signed: bool = True, check_counter_sigs: bool = True) -> bool:
    party = registry.party(a.party.address)
    if party != a.party or party.role is not Role.CLIENT:
        return False
    if not registry.check(a.body(), a.sig, party):
        return False
    for op in a.ops:
        if op.client != party or not registry.check(op.body(), op.client_sig, party):
            return False
        if double_signed and check_counter_sigs:
            if server is None or not registry.check(op.body(), op.server_sig, server):
                return False
    return True


def verify_server_log(a: Attestation, registry: Registry, double_signed: bool = True,
                      check_counter_sigs: bool = True) -> bool:
    party = registry.party(a.party.address)
    if party != a.party or party.role is not Role.SERVER:
        return False
    if not registry.check(a.body(), a.sig, party):
        return False
    for op in a.ops:
        if double_signed and not registry.check(op.body(), op.server_sig, party):
            return False
        if check_counter_sigs and not client_sig_ok(op, registry):
            return False
    return True


def client_sig_ok(op: Operation, registry: Registry) -> bool:
    try:
        signer = registry.party(op.client.address)
    except UnknownParty:
        return False
    return signer == op.client and registry.check(op.body(), op.client_sig, op.client)


def server_sig_ok(op: Operation, registry: Registry, server: PartyId) -> bool:
    return registry.check(op.body(), op.server_sig, server)


# ---------------------------------------------------------------- crosscheck

@dataclass(frozen=True)
class CrosscheckReport:
    server: Optional[PartyId]
    server_only: tuple = ()
    client_only: tuple = ()
    duplicates: tuple = ()  # (side, party address, op)
    order_breaks: tuple = ()  # (earlier-declared op, later-declared op) in the server order
    client_order_breaks: tuple = ()  # (party address, op, op) within one client's own sequence

    @property
    def matched(self) -> bool:
        return not (self.server_only or self.client_only or self.duplicates
                    or self.order_breaks or self.client_order_breaks)


def _dedupe(ops):
    seen, out, dups = set(), [], []
    for op in ops:
        if op.nonce in seen:
            dups.append(op)
        else:
            seen.add(op.nonce)
            out.append(op)
    return out, dups


def _breaks(seq):
    return [(seq[i], seq[j]) for i, j in order_breaks(seq)]


def crosscheck(clients: Sequence[Attestation], server: Attestation,
               registry: Optional[Registry] = None) -> CrosscheckReport:
    """Compare the client-log union with the server log by (nonce, content hash).

    Real-time order breaks are computed on the server order after dropping
    replayed copies and (when a registry is given) ops with no valid client
    signature, so a forged or replayed op is not double-counted as a reorder.
    """
    s_ops, s_dups = _dedupe(server.ops)
    duplicates = [("server", server.party.address, op) for op in s_dups]
    union: dict = {}
    c_breaks = []
    for att in clients:
        c_ops, c_dups = _dedupe(att.ops)
        duplicates += [("client", att.party.address, op) for op in c_dups]
        for a, b in _breaks(c_ops):
            c_breaks.append((att.party.address, a, b))
        for op in c_ops:
            union.setdefault(ident(op), op)
    s_ids = {ident(op) for op in s_ops}
    server_only = sorted((op for op in s_ops if ident(op) not in union), key=_sort_key)
    client_only = sorted((op for k, op in union.items() if k not in s_ids), key=_sort_key)
    authentic = s_ops if registry is None else [op for op in s_ops if client_sig_ok(op, registry)]
    duplicates.sort(key=lambda d: (d[2].t_begin, d[2].nonce, d[0], d[1]))
    c_breaks.sort(key=lambda d: (d[1].t_begin, d[1].nonce, d[2].nonce))
    return CrosscheckReport(server.party, tuple(server_only), tuple(client_only), tuple(duplicates),
                            tuple(_breaks(authentic)), tuple(c_breaks))


# ---------------------------------------------------------------- attribution

@dataclass(frozen=True)
class Attribution:
    code: str
    evidence: tuple  # offending operations
    facts: tuple = ()  # (nonce, "client_sig" | "server_sig", valid)
    blamed: Optional[bytes] = None  # address of the party held responsible

    @property
    def against_server(self) -> bool:
        return self.code in SERVER_CODES


def attribute(report: CrosscheckReport, double_signed: bool = True,
              registry: Optional[Registry] = None) -> list:
    if report.matched:
        return []
    if not double_signed or registry is None:
        ev = report.server_only + report.client_only + tuple(d[2] for d in report.duplicates)
        return [Attribution(UNATTRIBUTED, ev)]
    server = report.server
    out = []
    for op in report.server_only:
        ok = client_sig_ok(op, registry)
        code, blamed = (AC1, op.client.address) if ok else (AS1, server.address)
        out.append(Attribution(code, (op,), ((op.nonce, "client_sig", ok),), blamed))
    for op in report.client_only:
        ok = server_sig_ok(op, registry, server)
        code, blamed = (AS2, server.address) if ok else (AC2, op.client.address)
        out.append(Attribution(code, (op,), ((op.nonce, "server_sig", ok),), blamed))
    for side, party, op in report.duplicates:
        code = AS3 if side == "server" else AC3
        out.append(Attribution(code, (op,), ((op.nonce, "client_sig", client_sig_ok(op, registry)),), party))
    for a, b in report.order_breaks:
        out.append(Attribution(AS4, (a, b), ((a.nonce, "server_sig", server_sig_ok(a, registry, server)),
                                             (b.nonce, "server_sig", server_sig_ok(b, registry, server))),
                               server.address))
    for party, a, b in report.client_order_breaks:
        out.append(Attribution(AC4, (a, b), ((a.nonce, "client_sig", client_sig_ok(a, registry)),
                                             (b.nonce, "client_sig", client_sig_ok(b, registry))), party))
    return out


def codes(attributions) -> list:
    return sorted({a.code for a in attributions})


def recheck_facts(att: Attribution, registry: Registry, server: PartyId) -> bool:
    """Re-verify the signature facts an attribution relies on."""
    ops = {op.nonce: op for op in att.evidence}
    for nonce, which, valid in att.facts:
        op = ops[nonce]
        now = client_sig_ok(op, registry) if which == "client_sig" else server_sig_ok(op, registry, server)
        if now != valid:
            return False
    return True


# ---------------------------------------------------------------- repair

def _fix_order(ops: list) -> list:
    # Undo swaps: take the earliest position in any break and exchange it
    # with the furthest position it conflicts with.
    for _ in range(len(ops) * len(ops) + 1):
        br = order_breaks(ops)
        if not br:
            return ops
        i = br[0][0]
        j = max(b for a, b in br if a == i)
        ops[i], ops[j] = ops[j], ops[i]
    return _stable_topo(ops)


def _stable_topo(ops: list) -> list:
    rest = list(ops)
    out = []
    while rest:
        for k, op in enumerate(rest):
            if all(not (o.t_end < op.t_begin) for o in rest if o is not op):
                out.append(rest.pop(k))
                break
    return out


def _violation_count(ops, prior) -> int:
    try:
        return len(audit_ordered(ops, prior if prior is not None else {}).violations)
    except MalformedRead:
        return len(ops) + 1


def insertion_window(ops: Sequence[Operation], new: Operation) -> tuple:
    """Positions where `new` can be inserted without breaking real time."""
    lo = 0
    hi = len(ops)
    for i, op in enumerate(ops):
        if op.t_end < new.t_begin:
            lo = i + 1
    for i, op in enumerate(ops):
        if new.t_end < op.t_begin:
            hi = i
            break
    return lo, max(lo, hi)


def repair_server_log(server: Attestation, clients: Sequence[Attestation], attributions,
                      registry: Optional[Registry] = None, prior=None) -> tuple:
    """Rebuild the server order the attributions imply.

    Forged ops are dropped, replays deduplicated, reorders undone, and
    omitted dual-signed ops copied back from client logs. An omitted op goes
    to the last timestamp-admissible slot unless another admissible slot
    audits with fewer violations.
    """
    by_code: dict = {}
    for att in attributions:
        by_code.setdefault(att.code, []).append(att)
    ops = list(server.ops)
    if AS1 in by_code:
        forged = {ident(a.evidence[0]) for a in by_code[AS1]}
        ops = [op for op in ops if ident(op) not in forged]
    if AS3 in by_code or AC3 in by_code:
        ops, _ = _dedupe(ops)
    if AS4 in by_code:
        ops = _fix_order(ops)
    if AS2 in by_code:
        omitted = sorted({ident(a.evidence[0]): a.evidence[0] for a in by_code[AS2]}.values(),
                         key=lambda o: (o.is_read, o.t_begin, o.nonce))
        for new in omitted:
            present = {ident(op) for op in ops}
            if ident(new) in present:
                continue
            clash = [op for op in ops if op.nonce == new.nonce]
            if clash:
                raise IrreparableConflict(f"nonce {new.nonce:x} has two signed contents")
            lo, hi = insertion_window(ops, new)
            best, best_score = hi, None
            for pos in range(hi, lo - 1, -1):
                cand = ops[:pos] + [new] + ops[pos:]
                score = _violation_count(cand, prior)
                if best_score is None or score < best_score:
                    best, best_score = pos, score
                if score == 0:
                    break
            ops.insert(best, new)
    return tuple(ops)
