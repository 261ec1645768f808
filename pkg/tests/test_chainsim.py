import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from contractchecker.chainsim import (COST_CLASSES, ChainError, ChainParams, GasMeter, GasPrices,
                                      PartitionWhilePartitioned, Receipt, SimChain, TxStatus, UnknownTx, charge)
from contractchecker.core import Role, keygen

A = keygen(Role.CLIENT, "a").party
B = keygen(Role.CLIENT, "b").party


def heights(chain, ids):
    return [chain.inclusion_height(i) for i in ids]


def test_finalized_after_f_blocks():
    ch = SimChain(ChainParams(finality=3))
    t = ch.submit(A, b"x", 5)
    assert ch.finality_status(t) is TxStatus.PENDING
    ch.mine(1)
    h = ch.inclusion_height(t)
    assert h == 1
    ch.mine(2)
    assert ch.finality_status(t) is TxStatus.INCLUDED  # tip h+F-1
    ch.mine(1)
    assert ch.finality_status(t) is TxStatus.FINALIZED  # tip h+F


def test_unknown_tx():
    with pytest.raises(UnknownTx):
        SimChain().finality_status(42)


def test_empty_block():
    ch = SimChain()
    out = ch.advance_block(ch.params.block_time)
    assert out[0].txs == () and out[0].gas_used == 0 and ch.height() == 1


def test_same_fee_earlier_first():
    ch = SimChain(ChainParams(max_txs_per_block=1))
    first = ch.submit(A, b"x", 5)
    ch.set_time(10)
    second = ch.submit(B, b"x", 5)
    ch.mine(2)
    assert heights(ch, [first, second]) == [1, 2]


def test_inclusion_order_matches_reference_sort():
    rng = random.Random(50)
    ch = SimChain(ChainParams(max_txs_per_block=7))
    txs = []
    for i in range(50):
        if rng.random() < 0.3:
            ch.set_time(ch.tick + rng.randint(1, 5))
        fee = rng.choice([1, 2, 3, 5, 8])
        txs.append((fee, ch.tick, ch.submit(A if i % 2 else B, b"p" * rng.randint(0, 40), fee)))
    ch.set_time(1000)
    ch.mine(8)
    expected = [t for _, _, t in sorted(txs, key=lambda x: (-x[0], x[1], x[2]))]
    got = sorted((ch.inclusion_height(t), pos, t) for pos, t in enumerate(
        [tx for b in ch.forks[0].blocks for tx in b.txs]))
    assert [t for _, _, t in got] == expected
    assert all(b.gas_used <= ch.params.block_capacity for b in ch.forks[0].blocks)


def test_low_fee_dropped_after_window():
    p = ChainParams(block_time=10, min_fee=3, max_txs_per_block=1, drop_window=4)
    ch = SimChain(p)
    low = ch.submit(A, b"x", 1)
    for _ in range(3):
        ch.submit(B, b"y", 10)
    # the mempool is saturated from the start; the low-fee tx waits more than
    # drop_window blocks, so it is dropped in the first block past that window
    drop_block = p.drop_window + 1
    for h in range(1, drop_block):
        ch.submit(B, b"z", 10)
        ch.mine(1)
        assert ch.finality_status(low) is TxStatus.PENDING, h
    ch.submit(B, b"z", 10)
    ch.mine(1)
    assert ch.finality_status(low) is TxStatus.DROPPED
    drop = [e for e in ch.events if e["event"] == "drop" and e["tx"] == low]
    assert drop[0]["tick"] == drop_block * p.block_time


def test_scripted_drop_rule():
    ch = SimChain()
    ch.add_drop_rule(lambda tx: tx.fee < 10)
    a, b = ch.submit(A, b"x", 5), ch.submit(A, b"x", 50)
    ch.mine(1)
    assert ch.finality_status(a) is TxStatus.DROPPED and ch.inclusion_height(b) == 1


def test_partition_longest_chain_wins():
    ch = SimChain(ChainParams(finality=2))
    f0, f1 = ch.partition([[A], [B]])
    ta = ch.submit(A, b"a", 1)
    tb = ch.submit(B, b"b", 1)
    for _ in range(3):
        ch.advance_block(ch.tick + 1, forks=[f0])
    for _ in range(2):
        ch.advance_block(ch.tick + 1, forks=[f1])
    with pytest.raises(PartitionWhilePartitioned):
        ch.partition([[A], [B]])
    assert ch.heal() == f0
    assert ch.finality_status(ta) is TxStatus.FINALIZED
    assert ch.finality_status(tb) is TxStatus.PENDING
    ch.mine(1)
    assert ch.inclusion_height(tb) == 4


def test_heal_tie_prefers_lowest_fork_id():
    ch = SimChain()
    f0, f1 = ch.partition([[A], [B]])
    ch.advance_block(1, forks=[f0])
    ch.advance_block(2, forks=[f1])
    assert ch.heal() == f0


def test_permanent_fork_both_persist():
    ch = SimChain()
    f0, f1 = ch.partition([[A], [B]], permanent=True)
    t = ch.submit(A, b"retry", 1, forks=[f0, f1])
    ch.advance_block(1)
    assert ch.live_forks() == [f0, f1]
    assert ch.inclusion_height(t, f0) == 1 and ch.inclusion_height(t, f1) == 1


def test_clock_cannot_go_back():
    ch = SimChain()
    ch.set_time(10)
    with pytest.raises(ChainError):
        ch.advance_block(5)


def test_charge_arithmetic():
    m = GasMeter()
    charge(m, "storage_word_write", 3)
    assert m.gas("storage_word_write") == 3 * 20000
    charge(m, "hash_per_word", 2.5)
    assert m.units["hash_per_word"] == math.ceil(2.5)
    assert m.total == sum(m.units[c] * GasPrices().price(c) for c in COST_CLASSES)
    with pytest.raises(ValueError):
        charge(m, "tx_base", -1)


def test_default_price_ordering():
    p = GasPrices()
    assert p.storage_word_write > p.hash_per_word > p.tx_byte > p.storage_word_read
    assert abs(p.storage_word_read - p.memory_word) <= 1


def test_invalid_params():
    for kw in ({"block_time": 0}, {"finality": 0}, {"block_capacity": 0}):
        with pytest.raises(ValueError):
            ChainParams(**kw)
    with pytest.raises(ValueError):
        SimChain().submit(A, b"", -1)


def test_executor_state_and_gas():
    def execute(state, tx, ctx):
        state.append(tx.payload)
        ctx.meter.charge("storage_word_write", 1)
        return Receipt(tx.id, True)
    ch = SimChain(ChainParams(), [], execute)
    t = ch.submit(A, b"abc", 1)
    ch.mine(1)
    assert ch.state() == [b"abc"]
    ex = [e for e in ch.events if e["event"] == "exec"][0]
    assert ex["gas"] == 21000 + 3 * 16 + 20000 and ch.receipt(t).ok


def scripted_run(seed):
    ch = SimChain(ChainParams(max_txs_per_block=3), seed=seed)
    rng = random.Random(seed)
    for i in range(30):
        ch.submit(A if i % 3 else B, bytes(rng.randrange(20)), rng.randrange(1, 9))
        if i % 7 == 0:
            ch.mine(1)
    ch.partition([[A], [B]], shares=[0.6, 0.4])
    ch.mine(5)
    ch.heal()
    ch.mine(5)
    return ch.event_bytes()


def test_determinism():
    assert scripted_run(3) == scripted_run(3)
    assert scripted_run(3) != scripted_run(4)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 20), st.integers(1, 30))
def test_fee_monotonicity(seed, fee, bump):
    def height_of(target_fee):
        rng = random.Random(seed)
        ch = SimChain(ChainParams(max_txs_per_block=2))
        for _ in range(12):
            ch.submit(B, b"x", rng.randrange(1, 25))
        t = ch.submit(A, b"me", target_fee)
        ch.mine(10)
        return ch.inclusion_height(t)
    assert height_of(fee + bump) <= height_of(fee)


def test_finalized_never_changes():
    ch = SimChain(ChainParams(finality=2))
    t = ch.submit(A, b"x", 1)
    ch.mine(3)
    assert ch.finality_status(t) is TxStatus.FINALIZED
    ch.partition([[A], [B]])
    ch.mine(4)
    ch.heal()
    ch.mine(2)
    assert ch.finality_status(t) is TxStatus.FINALIZED
