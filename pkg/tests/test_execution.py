import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridbft.checkpoint import end_epoch
from hybridbft.domain import BOTTOM, Object, ObjType, OpKind, OpSpec, make_block, signed_tx
from hybridbft.execution import ExecutionViolation, Executor, ObjectStore, Status, fill_noop
from hybridbft.partition import Assigner, route
from hybridbft.sim.workload import WorkloadSpec, generate_workload

from conftest import pay

B = BOTTOM


def running_blocks(tx0, tx1, tx2):
    """Blocks of the two-instance running example, keyed by (ins, sn)."""
    return {
        (0, 0): make_block([tx0], 0, 0, (B, B), 1),
        (0, 1): make_block([tx1], 0, 1, (0, B), 2),
        (1, 0): make_block([tx1], 1, 0, (0, B), 2),
        (0, 2): make_block([tx2], 0, 2, (1, 0), 3),
        (1, 1): make_block([tx2], 1, 1, (1, 0), 4),
        (0, 3): fill_noop(0, 3, 5, (2, 1)),
    }


def status(ex, tx_id):
    return ex.txs[tx_id].record.status


def test_running_example_end_to_end(running_example):
    objects, tx0, tx1, tx2 = running_example
    ex = Executor(2, objects, Assigner(2, {"Alice": 0, "Bob": 1}), rng=np.random.default_rng(0))
    blocks = running_blocks(tx0, tx1, tx2)

    # Bob's half of tx1 refers to S = {0, ⊥}: it waits for instance 0's first block
    ex.deliver(blocks[(1, 0)], t=1)
    assert ex.first_pending(1) is None
    assert ex.store.value("Bob") == 0 and len(ex.elog) == 0

    ex.deliver(blocks[(0, 0)], t=2)
    assert status(ex, "tx0") is Status.SUCCESS  # single payer, executed at once
    assert ex.txs["tx0"].record.path == "partial"
    assert ex.store.value("Bob") == 1  # +2 from tx0, then Bob's escrow of 1 for tx1
    assert status(ex, "tx1") is Status.PENDING  # Alice's half not delivered yet

    ex.deliver(blocks[(0, 1)], t=3)
    assert status(ex, "tx1") is Status.SUCCESS
    assert ex.store.value("Carol") == 2

    ex.deliver(blocks[(0, 2)], t=4)
    ex.deliver(blocks[(1, 1)], t=5)
    # both escrows done, but the contract runs only at its last glog position
    assert ex.store.value("Alice") == 0 and ex.store.value("Bob") == 0
    assert status(ex, "tx2") is Status.PENDING and len(ex.elog) == 2
    ex.deliver(blocks[(0, 3)], t=6)
    assert status(ex, "tx2") is Status.SUCCESS
    assert ex.txs["tx2"].record.path == "global"
    assert [(r[1], r[2]) for r in ex.glog.records][:5] == [(1, 0), (2, 0), (2, 1), (3, 0), (4, 1)]
    # the contract's second occurrence sits after four earlier blocks
    assert [(r[2], r[3]) for r in ex.glog.records].index((1, 1)) == 4
    assert ex.store.snapshot() == {"Alice": 0, "Bob": 0, "Carol": 2, "pool": 2}
    assert len(ex.elog) == 0


def test_empty_logs_have_nothing_pending():
    ex = Executor(2, [Object("A", 1)], Assigner(2))
    assert ex.first_pending(0) is None and ex.first_pending(1) is None


def test_block_without_dependencies_is_pending_at_once():
    ex = Executor(2, [Object("A", 5), Object("B", 0)], Assigner(2, {"A": 1}), rng=None)
    ex.plogs[1].put(make_block([pay("t", {"A": 1}, {"B": 1})], 1, 0, (B, B), 1))
    assert ex.first_pending(1) is not None


def test_insufficient_funds_abort_everywhere():
    objects = [Object("A", 1), Object("B", 5), Object("C", 0)]
    tx = pay("t", {"A": 3, "B": 1}, {"C": 4})
    outcomes = []
    for seed in range(3):
        ex = Executor(2, objects, Assigner(2, {"A": 0, "B": 1}), rng=np.random.default_rng(seed))
        ex.deliver(make_block([tx], 1, 0, (B, B), 1), 1)
        ex.deliver(make_block([tx], 0, 0, (B, B), 2), 2)
        outcomes.append((status(ex, "t"), ex.store.snapshot(), len(ex.elog)))
    assert outcomes[0][0] is Status.ABORT
    assert outcomes[0][1] == {"A": 1, "B": 5, "C": 0}  # B's escrow refunded
    assert outcomes[0][2] == 0
    assert all(o == outcomes[0] for o in outcomes)


def test_contract_with_failed_payer_leaves_shared_untouched():
    objects = [Object("A", 0), Object("s", 10, 0, ObjType.SHARED)]
    tx = signed_tx("c", [OpSpec("A", OpKind.DECREMENT, 1), OpSpec("s", OpKind.ASSIGN, 99, ObjType.SHARED)])
    ex = Executor(1, objects, Assigner(1))
    ex.deliver(make_block([tx], 0, 0, (B,), 1), 1)
    assert status(ex, "c") is Status.ABORT
    assert ex.store.value("s") == 10


def test_contract_assignment_agrees_across_replicas():
    objects = [Object("A", 5), Object("Bq", 5), Object("s", 0, 0, ObjType.SHARED)]
    c1 = signed_tx("c1", [OpSpec("A", OpKind.DECREMENT, 1), OpSpec("s", OpKind.ASSIGN, 1, ObjType.SHARED)])
    c2 = signed_tx("c2", [OpSpec("Bq", OpKind.DECREMENT, 1), OpSpec("s", OpKind.ASSIGN, 2, ObjType.SHARED)])
    blocks = [make_block([c1], 0, 0, (B, B), 2), make_block([c2], 1, 0, (B, B), 1),
              fill_noop(0, 1, 3, (0, 0)), fill_noop(1, 1, 4, (0, 0))]
    finals = set()
    for order in ([0, 1, 2, 3], [1, 0, 3, 2], [1, 3, 0, 2]):
        ex = Executor(2, objects, Assigner(2, {"A": 0, "Bq": 1}), rng=np.random.default_rng(7))
        for k in order:
            ex.deliver(blocks[k], k)
        finals.add(ex.store.value("s"))
    assert finals == {1}  # c2 (rank 1) runs first, c1 (rank 2) last


def test_payment_does_not_wait_for_contract_with_same_payer():
    objects = [Object("A", 10), Object("B", 0), Object("s", 0, 0, ObjType.SHARED)]
    contract = signed_tx("c", [OpSpec("A", OpKind.DECREMENT, 4), OpSpec("s", OpKind.INCREMENT, 4, ObjType.SHARED)])
    payment = pay("p", {"A": 5}, {"B": 5})
    ex = Executor(2, objects, Assigner(2, {"A": 0, "B": 1}))
    ex.deliver(make_block([contract], 0, 0, (B, B), 1), 1)
    ex.deliver(make_block([payment], 0, 1, (0, B), 2), 2)
    # instance 1 never delivered, so nothing is globally ordered yet
    assert len(ex.glog) == 0
    assert status(ex, "c") is Status.PENDING
    assert status(ex, "p") is Status.SUCCESS
    assert ex.store.value("A") == 1  # 10 - 4 (escrowed) - 5


def test_global_all_confirms_payments_only_in_glog():
    objects = [Object("A", 10), Object("B", 0)]
    ex = Executor(2, objects, Assigner(2, {"A": 0, "B": 1}), mode="global_all")
    ex.deliver(make_block([pay("p", {"A": 5}, {"B": 5})], 0, 0, (B, B), 1), 1)
    assert status(ex, "p") is Status.PENDING
    ex.deliver(fill_noop(1, 0, 2, (0, B)), 2)
    ex.deliver(fill_noop(0, 1, 3, (0, 0)), 3)
    assert status(ex, "p") is Status.SUCCESS and ex.txs["p"].record.path == "global"


def test_duplicate_occurrence_is_a_placeholder():
    objects = [Object("A", 10), Object("B", 0)]
    tx = pay("p", {"A": 1}, {"B": 1})
    ex = Executor(1, objects, Assigner(1))
    ex.deliver(make_block([tx], 0, 0, (B,), 1), 1)
    ex.deliver(make_block([tx], 0, 1, (0,), 2), 2)
    assert ex.store.snapshot() == {"A": 9, "B": 1}


def test_shared_writes_only_from_glog():
    s = ObjectStore([Object("s", 1, 0, ObjType.SHARED), Object("A", 1)])
    with pytest.raises(ExecutionViolation):
        s.set_value("s", 2)
    with pytest.raises(ExecutionViolation):
        s.set_value("A", -1)


def test_store_hash_is_order_independent():
    a = ObjectStore([Object("x", 1), Object("y", 2)])
    b = ObjectStore([Object("y", 2), Object("x", 1)])
    assert a.hash == b.hash
    a.set_value("x", 5)
    a.set_value("x", 1)
    assert a.hash == b.hash


def _random_history(seed, m, spec):
    """Blocks of a plausible run: S is the frontier of blocks proposed so far."""
    w = generate_workload(spec, seed)
    rng = random.Random(seed)
    a = Assigner(m)
    queues = [[] for _ in range(m)]
    for tx in w.txs:
        for i in route(tx, m, a):
            queues[i].append(tx)
    frontier = [B] * m
    rank = 0
    per_instance = [[] for _ in range(m)]
    while any(queues):
        i = rng.choice([k for k in range(m) if queues[k]])
        k = rng.randint(1, 4)
        take, queues[i] = queues[i][:k], queues[i][k:]
        rank += 1
        sn = frontier[i] + 1
        per_instance[i].append(make_block(take, i, sn, tuple(frontier), rank))
        frontier[i] = sn
    rank += 1
    for i in range(m):  # close the glog
        sn = frontier[i] + 1
        per_instance[i].append(fill_noop(i, sn, rank + i, tuple(frontier)))
    return w, a, per_instance


def _replay(w, a, per_instance, seed, mode="orthrus"):
    rng = random.Random(seed)
    ex = Executor(len(per_instance), w.objects, a, mode=mode, rng=np.random.default_rng(seed))
    cursors = [0] * len(per_instance)
    t = 0
    while any(c < len(p) for c, p in zip(cursors, per_instance)):
        i = rng.choice([k for k, p in enumerate(per_instance) if cursors[k] < len(p)])
        t += 1
        ex.deliver(per_instance[i][cursors[i]], t)
        cursors[i] += 1
    return ex


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_any_interleaving_gives_the_same_result(seed, m):
    spec = WorkloadSpec(accounts=12, total_txs=40, initial_balance=8, multi_payer_fraction=0.4,
                        payment_proportion=0.7, shared_objects=3)
    w, a, per_instance = _random_history(seed, m, spec)
    first = _replay(w, a, per_instance, seed)
    second = _replay(w, a, per_instance, seed + 1)
    assert first.store.snapshot() == second.store.snapshot()
    assert {k: s.record.status for k, s in first.txs.items()} == \
        {k: s.record.status for k, s in second.txs.items()}
    assert first.state_key() == second.state_key()
    assert first.store.hash == second.store.hash
    assert len(first.elog) == 0 and all(s.record.status is not Status.PENDING for s in first.txs.values())
    # epochs of one block per instance: every replica signs the same checkpoint digest
    for e in range(min(len(p) for p in per_instance)):
        assert end_epoch(0, first, e, 1).digest == end_epoch(1, second, e, 1).digest


def test_noop_fill_carries_nothing():
    b = fill_noop(2, 7, 9, (B, B, 6))
    assert b.noop and b.txs == () and (b.ins, b.sn, b.rank) == (2, 7, 9)
