import random
from dataclasses import replace

import pytest
from hypothesis import assume, given, settings, strategies as st

from contractchecker.consistency import audit_ordered
from contractchecker.core import Attestation, Signature, UnknownParty, keygen, Role, make_write, sign_as_client
from contractchecker.crosscheck import (AC1, AC2, AC3, AC4, AS1, AS2, AS3, AS4, UNATTRIBUTED, IrreparableConflict,
                                        attribute, codes, crosscheck, recheck_facts, repair_server_log,
                                        verify_client_log, verify_server_log)


def client_att(fx, key, ops, epoch=0):
    return Attestation(epoch, key.party, tuple(ops)).signed(key)


def server_att(fx, ops, epoch=0):
    return Attestation(epoch, fx.server.party, tuple(ops), True).signed(fx.server)


def logs(fx, server_ops, c1=None, c2=None):
    c1 = [fx.w1, fx.r3] if c1 is None else c1
    c2 = [fx.w2] if c2 is None else c2
    return [client_att(fx, fx.c1, c1), client_att(fx, fx.c2, c2)], server_att(fx, server_ops)


def flip(sig: Signature) -> Signature:
    b = bytearray(sig.bytes)
    b[0] ^= 1
    return Signature(sig.signer, bytes(b))


# ---------------------------------------------------------------- verification

def test_verify_client_log(two_clients):
    att = client_att(two_clients, two_clients.c1, [two_clients.w1, two_clients.r3])
    assert verify_client_log(att, two_clients.registry, two_clients.server.party)
    assert not verify_client_log(replace(att, sig=flip(att.sig)), two_clients.registry, two_clients.server.party)
    foreign = client_att(two_clients, two_clients.c1, [two_clients.w1, two_clients.w2])  # w2 belongs to client 2
    assert not verify_client_log(foreign, two_clients.registry, two_clients.server.party)
    bad_counter = client_att(two_clients, two_clients.c1, [replace(two_clients.w1, server_sig=flip(two_clients.w1.server_sig))])
    assert not verify_client_log(bad_counter, two_clients.registry, two_clients.server.party)
    assert verify_client_log(bad_counter, two_clients.registry, two_clients.server.party, double_signed=False)


def test_verify_server_log(two_clients):
    att = server_att(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3])
    assert verify_server_log(att, two_clients.registry)
    assert not verify_server_log(replace(att, sig=flip(att.sig)), two_clients.registry)
    forged = sign_as_client(make_write(9, two_clients.c1.party, b"K", b"x", 0, 1), two_clients.c2)  # wrong signer
    att2 = server_att(two_clients, [two_clients.w1, two_clients.dual(forged, two_clients.c2)])
    assert not verify_server_log(att2, two_clients.registry)


def test_unknown_party(two_clients):
    att = client_att(two_clients, two_clients.other, [])
    with pytest.raises(UnknownParty):
        verify_client_log(att, two_clients.registry, two_clients.server.party)


# ---------------------------------------------------------------- crosscheck

def test_fig2_logs_match(two_clients):
    clients, server = logs(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3])
    rep = crosscheck(clients, server, two_clients.registry)
    assert rep.matched and attribute(rep, True, two_clients.registry) == []


def test_omitted_op_is_client_only(two_clients):
    clients, server = logs(two_clients, [two_clients.w1, two_clients.r3])
    rep = crosscheck(clients, server)
    assert rep.client_only == (two_clients.w2,) and not rep.server_only and not rep.matched


def test_empty_logs_match(two_clients):
    rep = crosscheck([client_att(two_clients, two_clients.c1, [])], server_att(two_clients, []))
    assert rep.matched


# ---------------------------------------------------------------- attribution table

def forged_w3(fx):
    w3 = make_write(30, fx.c2.party, b"K", b"fake", 2, 3)
    return replace(fx.dual(w3, fx.c2), client_sig=Signature(fx.c2.party, b"\x00" * 32))


def attributed(fx, server_ops, c1=None, c2=None, double=True):
    clients, server = logs(fx, server_ops, c1, c2)
    return attribute(crosscheck(clients, server, fx.registry), double, fx.registry)


def test_as1_forged_op(two_clients):
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, forged_w3(two_clients), two_clients.r3])) == [AS1]


def test_as2_omitted_op(two_clients):
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.r3])) == [AS2]


def test_ac1_client_omits_own_op(two_clients):
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3], c2=[])) == [AC1]


def test_ac2_client_forges_op(two_clients):
    fake = sign_as_client(make_write(40, two_clients.c2.party, b"K", b"fake", 2, 3), two_clients.c2)
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3], c2=[two_clients.w2, fake])) == [AC2]


def test_as3_and_ac3_replays(two_clients):
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, two_clients.w2, two_clients.r3])) == [AS3]
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3], c1=[two_clients.w1, two_clients.w1, two_clients.r3])) == [AC3]


def test_as4_and_ac4_reorders(two_clients):
    assert codes(attributed(two_clients, [two_clients.w2, two_clients.w1, two_clients.r3])) == [AS4]
    assert codes(attributed(two_clients, [two_clients.w1, two_clients.w2, two_clients.r3], c1=[two_clients.r3, two_clients.w1])) == [AC4]


def test_without_double_signatures_attribution_degrades(two_clients):
    out = attributed(two_clients, [two_clients.w1, two_clients.r3], double=False)
    assert [a.code for a in out] == [UNATTRIBUTED]


def test_evidence_rechecks(two_clients):
    cases = [[two_clients.w1, two_clients.w2, forged_w3(two_clients), two_clients.r3], [two_clients.w1, two_clients.r3], [two_clients.w2, two_clients.w1, two_clients.r3]]
    for ops in cases:
        for att in attributed(two_clients, ops):
            assert recheck_facts(att, two_clients.registry, two_clients.server.party)


# ---------------------------------------------------------------- repair

def repaired(fx, server_ops, c1=None, c2=None):
    clients, server = logs(fx, server_ops, c1, c2)
    atts = attribute(crosscheck(clients, server, fx.registry), True, fx.registry)
    return repair_server_log(server, clients, atts, fx.registry), clients, server


def test_as2_reinserted_by_timestamps(two_clients):
    order, _, _ = repaired(two_clients, [two_clients.w1, two_clients.r3])
    assert order == (two_clients.w1, two_clients.w2, two_clients.r3)


def test_repair_identity_and_idempotence(two_clients):
    truthful = [two_clients.w1, two_clients.w2, two_clients.r3]
    order, clients, server = repaired(two_clients, truthful)
    assert order == tuple(truthful)
    for ops in ([two_clients.w1, two_clients.r3], [two_clients.w2, two_clients.w1, two_clients.r3], [two_clients.w1, two_clients.w2, two_clients.w2, two_clients.r3]):
        once, clients, _ = repaired(two_clients, ops)
        again = server_att(two_clients, once)
        atts = attribute(crosscheck(clients, again, two_clients.registry), True, two_clients.registry)
        assert atts == [] and repair_server_log(again, clients, atts, two_clients.registry) == once


def test_repair_matches_truthful_audit(two_clients):
    truth = audit_ordered([two_clients.w1, two_clients.w2, two_clients.r3]).status
    for ops in ([two_clients.w1, two_clients.w2, forged_w3(two_clients), two_clients.r3], [two_clients.w1, two_clients.r3], [two_clients.w2, two_clients.w1, two_clients.r3],
                [two_clients.w1, two_clients.w1, two_clients.w2, two_clients.r3]):
        order, _, _ = repaired(two_clients, ops)
        assert audit_ordered(order).status == truth


def test_irreparable_conflict(two_clients):
    twin = two_clients.dual(make_write(2, two_clients.c2.party, b"K", b"other", 2, 3), two_clients.c2)  # nonce of w2, other content
    clients, server = logs(two_clients, [two_clients.w1, twin, two_clients.r3])
    atts = attribute(crosscheck(clients, server, two_clients.registry), True, two_clients.registry)
    with pytest.raises(IrreparableConflict):
        repair_server_log(server, clients, atts, two_clients.registry)


EDITS = ("delete", "insert", "duplicate", "swap", "modify")


def honest_epoch(seed):
    from contractchecker.harness.scenarios import _cfg, truthful_trace
    from contractchecker.harness.sim import Simulation
    sim = Simulation(_cfg(seed), trace=truthful_trace(seed))
    sim.execute(0, sim.plan(0, sim.trace))
    clients = [Attestation(0, c.party, tuple(c.local.get(0, ()))).signed(c.key) for c in sim.clients]
    return sim, list(sim.server.declare(0)), clients


def test_honest_epochs_match():
    for seed in range(20):
        sim, declared, clients = honest_epoch(seed)
        server = Attestation(0, sim.server.party, tuple(declared), True).signed(sim.server.key)
        rep = crosscheck(clients, server, sim.registry)
        assert rep.matched and attribute(rep, True, sim.registry) == []
        assert repair_server_log(server, clients, [], sim.registry) == tuple(declared)


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(EDITS), st.integers(0, 999), st.integers(0, 2 ** 32))
def test_single_edit_is_detected(edit, seed, pick):
    sim, ops, clients = honest_epoch(seed)
    rng = random.Random(pick)
    i = rng.randrange(len(ops))
    if edit == "delete":
        ops.pop(i)
    elif edit == "insert":
        ops.insert(i, make_write(rng.getrandbits(100) + 1, ops[i].client, b"K", b"new", 1, 2))
    elif edit == "duplicate":
        ops.insert(i, ops[i])
    elif edit == "swap":
        serial = [j for j in range(len(ops) - 1) if ops[j].t_end < ops[j + 1].t_begin]
        assume(serial)
        j = rng.choice(serial)
        ops[j], ops[j + 1] = ops[j + 1], ops[j]
    else:
        ops[i] = replace(ops[i], key=ops[i].key + b"!")
    server = Attestation(0, sim.server.party, tuple(ops), True).signed(sim.server.key)
    assert not crosscheck(clients, server, sim.registry).matched
