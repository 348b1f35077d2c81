import ast
import copy
import dataclasses
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

import hybridbft.oracle as oracle
from hybridbft.domain import Object, ObjType, OpKind, OpSpec, signed_tx
from hybridbft.oracle import (BlockView, all_pass, balance_formula, compare_replicas, expected_glog, interpret,
                              permutation_check, permutation_report, sequential_replay, verdicts,
                              write_verdicts)
from hybridbft.sim.scenario import run_scenario

from conftest import pay, small_config


def test_running_example_balances(running_example):
    objects, tx0, tx1, tx2 = running_example
    init = {o.key: o.value for o in objects}
    confirmed = [tx0, tx1, tx2]
    got = {k: balance_formula(k, confirmed, init[k]) for k in ("Alice", "Bob", "Carol")}
    assert got == {"Alice": 0, "Bob": 0, "Carol": 2}


def test_no_confirmed_txs_keeps_initial():
    assert balance_formula("Alice", [], 4) == 4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_formula_equals_sequential_replay(seed):
    rng = random.Random(seed)
    keys = [f"a{k}" for k in range(5)]
    objects = [Object(k, rng.randint(0, 10)) for k in keys]
    txs = []
    for k in range(rng.randint(0, 12)):
        src, dst = rng.sample(keys, 2)
        amount = rng.randint(1, 5)
        txs.append(pay(f"t{k}", {src: amount}, {dst: amount}))
    values, ok = sequential_replay(objects, txs)
    ok_txs = [tx for tx in txs if tx.id in ok]
    for o in objects:
        assert values[o.key] == balance_formula(o.key, ok_txs, o.value)
        assert values[o.key] >= 0


# -- permutation examples ---------------------------------------------------------
def test_independent_payments_commute():
    objects = [Object("Alice", 10), Object("Bob", 10), Object("Carol", 0)]
    txs = [pay("tx1", {"Alice": 3}, {"Carol": 3}), pay("tx2", {"Bob": 4}, {"Carol": 4})]
    rep = permutation_report(txs, objects)
    assert rep.agree and len(rep.success_orders) == 2


def test_dependent_payment_needs_funding_first():
    objects = [Object("Alice", 5), Object("Bob", 0), Object("Carol", 0)]
    tx3 = pay("tx3", {"Alice": 5}, {"Bob": 5})
    tx2 = pay("tx2", {"Bob": 5}, {"Carol": 5})
    rep = permutation_report([tx2, tx3], objects)
    assert rep.success_orders == [("tx3", "tx2")]
    assert rep.outcomes[("tx2", "tx3")] == ("tx3",)
    assert rep.agree


def test_conflicting_payments_depend_on_order():
    objects = [Object("Alice", 5), Object("Bob", 0), Object("Carol", 0)]
    tx1 = pay("tx1", {"Alice": 4}, {"Bob": 4})
    tx2 = pay("tx2", {"Alice": 3}, {"Carol": 3})
    rep = permutation_report([tx1, tx2], objects)
    assert rep.success_orders == []
    assert rep.outcomes[("tx1", "tx2")] == ("tx1",)
    assert rep.outcomes[("tx2", "tx1")] == ("tx2",)
    assert rep.agree  # vacuously: no order runs both


def test_permutation_check_limits():
    with pytest.raises(ValueError):
        permutation_check([pay(f"t{k}", {"A": 1}, {"B": 1}) for k in range(9)], [Object("A", 9), Object("B", 0)])
    contract = signed_tx("c", [OpSpec("A", OpKind.DECREMENT, 1), OpSpec("s", OpKind.READ, 0, ObjType.SHARED)])
    with pytest.raises(ValueError):
        permutation_check([contract], [Object("A", 1)])


def test_interpreter_respects_floor():
    ops = [OpSpec("s", OpKind.DECREMENT, 5, ObjType.SHARED)]
    assert interpret(ops, {"s": 3}, {"s": 0}) == (False, {"s": 3})
    assert interpret(ops, {"s": 7}, {"s": 0}) == (True, {"s": 2})


def test_expected_glog_cuts_at_bar():
    d = {0: [BlockView(0, 0, 1, 1), BlockView(0, 1, 3, 2)], 1: [BlockView(1, 0, 3, 3), BlockView(1, 1, 4, 4)]}
    assert [(b.ins, b.sn) for b in expected_glog(d, 2)] == [(0, 0), (0, 1), (1, 0)]
    assert expected_glog({0: d[0]}, 2) == []


def test_oracle_only_depends_on_domain():
    tree = ast.parse(Path(oracle.__file__).read_text())
    local = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level > 0:
            local.add(node.module)
    assert local == {"domain"}


# -- run-level checks and mutation sensitivity ----------------------------------------
@pytest.fixture(scope="module")
def run():
    return run_scenario(small_config(workload={"total_txs": 200, "multi_payer_fraction": 0.3}))


def test_clean_run_passes(run):
    v = verdicts(run.snapshot)
    assert all_pass(v)
    assert compare_replicas(run.snapshot) == {"pairs": 6, "divergences": []}


def test_store_mutation_detected(run):
    rs = copy.deepcopy(run.snapshot)
    rep = rs.replicas[2]
    key = sorted(k for k in rep.store if k.startswith("acct"))[0]
    rep.store[key] += 1
    v = verdicts(rs)
    assert not v["safety"]["pass"] and not v["balances"]["pass"]
    assert "objects" in v["safety"]["counterexamples"][0]


def test_outcome_mutation_detected(run):
    rs = copy.deepcopy(run.snapshot)
    rep = rs.replicas[1]
    tx_id = sorted(rep.outcomes)[0]
    rep.outcomes[tx_id] = dataclasses.replace(rep.outcomes[tx_id], status="confirmed_abort")
    assert not verdicts(rs)["safety"]["pass"]


def test_glog_mutation_detected(run):
    rs = copy.deepcopy(run.snapshot)
    rep = rs.replicas[0]
    rep.glog[0], rep.glog[1] = rep.glog[1], rep.glog[0]
    assert not verdicts(rs)["glog_order"]["pass"]


def test_missing_confirmation_detected(run):
    rs = copy.deepcopy(run.snapshot)
    rs.replicas[3].outcomes.pop(sorted(rs.replicas[3].outcomes)[0])
    assert not verdicts(rs)["liveness"]["pass"]


def test_leftover_escrow_detected(run):
    rs = copy.deepcopy(run.snapshot)
    rs.replicas[0].elog_size = 1
    assert not verdicts(rs)["atomicity"]["pass"]


def test_extra_checks_and_verdict_file(run, tmp_path):
    v = verdicts(run.snapshot, {"custom": ["boom"]})
    assert v["custom"] == {"pass": False, "counterexamples": ["boom"]}
    write_verdicts(tmp_path / "v.json", v)
    assert '"custom"' in (tmp_path / "v.json").read_text()
