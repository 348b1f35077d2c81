"""Release acceptance: the eleven criteria at their pinned tolerances.

Slow by design (a few minutes). Each test carries ``acceptance`` plus a
``criterion_K`` marker; the terminal summary prints one line per criterion.
"""
import random
import time
from pathlib import Path

import numpy as np
import pytest

from hybridbft import cli, suites
from hybridbft.domain import Object, ObjType, OpKind, TxKind
from hybridbft.metrics import STAGES, breakdown, mean_latency_ms, throughput_series
from hybridbft.oracle import compare_replicas, permutation_report
from hybridbft.sim.config import load_config
from hybridbft.sim.scenario import run_scenario

from conftest import pay

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

pytestmark = pytest.mark.acceptance

SAFETY_SCENARIOS = 50
STRAGGLER_SEEDS = range(1, 11)


def _failures(v, names):
    return {n: v[n]["counterexamples"][:3] for n in names if not v[n]["pass"]}


# -- criteria 1 and 2: one pass over the safety scenarios --------------------------------
@pytest.fixture(scope="module")
def safety_runs():
    t0 = time.perf_counter()
    runs = [run_scenario(suites.safety_scenario(k)) for k in range(SAFETY_SCENARIOS)]
    return runs, time.perf_counter() - t0


@pytest.mark.criterion_1
def test_safety_suite(safety_runs):
    runs, elapsed = safety_runs
    assert len(runs) == SAFETY_SCENARIOS
    assert {r.n for r in runs} == {4, 8, 16}
    behaviours = {f["behavior"] for r in runs for f in r.config["faults"]}
    assert behaviours == {b.value for b in suites.SAFETY_BEHAVIORS}
    for r in runs:
        assert len(r.faulty) <= r.f
        assert r.error is None, r.error
        report = compare_replicas(r.snapshot)
        assert report["divergences"] == [], (r.seed, report["divergences"][:2])
        v = suites.evaluate(r)
        assert not _failures(v, ("safety", "checkpoint_digests", "fatal_assertions"))
    assert elapsed < 300, f"safety suite took {elapsed:.0f}s"


@pytest.mark.criterion_2
def test_oracle_equality(safety_runs):
    runs, _ = safety_runs
    for r in runs:
        v = suites.evaluate(r)
        assert not _failures(v, ("balances", "shared_replay")), r.seed
        # the same check spelled out: integer equality with the closed form
        for rep in r.snapshot.judged():
            confirmed = [r.snapshot.txs[t] for t, o in rep.outcomes.items() if o.status == "confirmed_success"]
            for o in r.snapshot.objects:
                if o.type is ObjType.OWNED:
                    delta = sum(_delta(tx, o.key) for tx in confirmed)
                    assert rep.store[o.key] == o.value + delta


def _delta(tx, key):
    out = 0
    for op in tx.ops:
        if op.target_key == key and op.obj_type is ObjType.OWNED:
            out += op.amount if op.kind is OpKind.INCREMENT else -op.amount
    return out


# -- criterion 3 ---------------------------------------------------------------------------
@pytest.mark.criterion_3
def test_atomicity():
    aborted_total = 0
    for k in range(20):
        cfg = suites.atomicity_scenario(k)
        assert cfg.workload.multi_payer_fraction >= 0.2 and cfg.workload.overdraft_fraction > 0
        r = run_scenario(cfg)
        assert r.error is None
        v = suites.evaluate(r)
        assert not _failures(v, ("atomicity", "balances", "safety", "liveness"))
        supply = r.workload.total_supply
        assert all(tx.kind is TxKind.PAYMENT for tx in r.workload.txs)
        for rep in r.snapshot.judged():
            assert rep.elog_size == 0
            owned = sum(rep.store[o.key] for o in r.snapshot.objects if o.type is ObjType.OWNED)
            assert owned == supply
            aborted_total += sum(o.status == "confirmed_abort" for o in rep.outcomes.values())
        multi = sum(len(tx.payer_ops) > 1 for tx in r.workload.txs) / len(r.workload.txs)
        assert multi >= 0.2
    assert aborted_total > 0  # the forced insufficient-funds cases did fire


# -- criterion 4 ---------------------------------------------------------------------------
@pytest.mark.criterion_4
def test_global_ordering():
    for k in range(20):
        r = run_scenario(suites.ordering_scenario(k))
        assert r.error is None  # a bar violation aborts the run with an error
        v = suites.evaluate(r)
        assert not _failures(v, ("glog_order", "ranks", "rank_monotonicity", "fatal_assertions")), k
        assert r.stats["rank_violations"] == 0
        assert all(len(rep.glog) > 0 for rep in r.snapshot.judged())


# -- criterion 5 ---------------------------------------------------------------------------
@pytest.mark.criterion_5
def test_liveness():
    for k in range(SAFETY_SCENARIOS):
        cfg = suites.safety_scenario(k)
        clean, faulty = suites.liveness_run(cfg)
        assert clean.quiescent_at is not None
        v = suites.evaluate(faulty)
        assert v["liveness"]["pass"], (k, v["liveness"]["counterexamples"][:2])
        assert faulty.quiescent_at is not None
        assert faulty.quiescent_at <= max(10 * clean.quiescent_at, 1_000_000_000)  # the horizon


# -- criteria 6 and 8: paired straggler runs -----------------------------------------------
@pytest.fixture(scope="module")
def straggler_pairs():
    cfg = load_config(CONFIGS / "straggler.yaml")
    assert cfg.system.n == 16 and cfg.network.stragglers == {0: 10}
    assert cfg.workload.payment_proportion == 0.46
    pairs = []
    for seed in STRAGGLER_SEEDS:
        runs = {}
        for mode in ("orthrus", "global_all"):
            c = cfg.copy()
            c.system.mode = mode
            runs[mode] = run_scenario(c, seed=seed)
        pairs.append((seed, runs))
    return pairs


@pytest.mark.criterion_6
def test_straggler_benefit(straggler_pairs):
    for seed, runs in straggler_pairs:
        o, g = runs["orthrus"], runs["global_all"]
        assert o.workload.txs == g.workload.txs  # paired
        pay_o, pay_g = mean_latency_ms(o, "payment"), mean_latency_ms(g, "payment")
        con_o, con_g = mean_latency_ms(o, "contract"), mean_latency_ms(g, "contract")
        assert pay_o <= 0.5 * pay_g, (seed, pay_o, pay_g)
        assert abs(con_o - con_g) <= 0.2 * con_g, (seed, con_o, con_g)


@pytest.mark.criterion_8
def test_breakdown_integrity(straggler_pairs):
    for seed, runs in straggler_pairs:
        for mode, r in runs.items():
            rows = breakdown(r)
            assert len(rows) == len(r.workload.txs)
            for st in rows:
                d = st.durations()
                assert all(v >= 0 for v in d.values())
                stamps = [st.submit] + [st.stamps[s] for s in STAGES]
                assert stamps == sorted(stamps)
                assert abs(sum(d.values()) - st.total) <= 1  # one ns quantum
                if st.kind == "payment" and st.path == "partial":
                    assert d["global_order"] == 0
            contracts = [st for st in rows if st.kind == "contract"]
            means = {s: np.mean([st.durations()[s] for st in contracts]) for s in STAGES}
            others = [means[s] for s in STAGES if s != "global_order"]
            assert means["global_order"] > max(others), (seed, mode, means)


# -- criterion 7 ---------------------------------------------------------------------------
@pytest.mark.criterion_7
def test_proportion_trend():
    cfg = load_config(CONFIGS / "straggler.yaml")
    curve = []
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        c = cfg.copy()
        c.workload.payment_proportion = p
        lat = [mean_latency_ms(run_scenario(c, seed=s)) for s in (1, 2, 3)]
        curve.append(float(np.mean(lat)))
    for a, b in zip(curve, curve[1:]):
        assert b <= 1.05 * a, curve
    assert curve[-1] <= 0.6 * curve[0], curve


# -- criterion 9 ---------------------------------------------------------------------------
@pytest.mark.criterion_9
def test_fault_recovery_timeline():
    cfg = load_config(CONFIGS / "fault.yaml")
    assert cfg.system.view_change_timeout_s == 10
    assert cfg.faults.faults[0].start_epoch == 2
    r = run_scenario(cfg)
    assert r.error is None
    (_, vc_start, vc_done, _, _), = r.view_changes
    onset = vc_start - int(cfg.system.view_change_timeout_s * 1e9)
    assert onset > 0
    series = throughput_series(r, 1.0)
    t_onset, t_start, t_done = onset / 1e9, vc_start / 1e9, vc_done / 1e9
    before = [tps for t, tps in series if 1.0 <= t and t + 1.0 <= t_onset]
    during = [tps for t, tps in series if t >= t_onset + 1.0 and t + 1.0 <= t_start]
    after = [tps for t, tps in series if t >= t_done - 1.0]
    assert before and during and after
    assert np.mean(during) < 0.5 * np.mean(before)  # the drop
    assert max(after) > np.mean(before)  # the recovery burst drains the backlog
    confirmed = sum(rec.client_confirm(r.f) is not None for rec in r.times.values())
    assert confirmed == len(r.workload.txs) == cfg.workload.total_txs
    assert suites.evaluate(r)["liveness"]["pass"]


# -- criterion 10 --------------------------------------------------------------------------
DETERMINISM = [
    ("default.yaml", ["total_txs=600", "run.trace=true"]),
    ("straggler.yaml", ["total_txs=600"]),
    ("fault.yaml", ["total_txs=3000"]),
]


@pytest.mark.criterion_10
@pytest.mark.parametrize("name,sets", DETERMINISM, ids=[d[0] for d in DETERMINISM])
def test_determinism(name, sets, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        argv = ["run", "--config", str(CONFIGS / name), "--out", str(out)]
        for s in sets:
            argv += ["--set", s]
        assert cli.main(argv) == cli.EXIT_OK
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    assert "verdicts.json" in files and "latency.csv" in files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


# -- criterion 11 --------------------------------------------------------------------------
def _random_payment_set(rng):
    keys = [f"a{k}" for k in range(rng.randint(2, 5))]
    objects = [Object(k, rng.randint(0, 12)) for k in keys]
    txs = []
    for t in range(rng.randint(1, 6)):
        payers = rng.sample(keys, rng.randint(1, min(2, len(keys) - 1)))
        payee = rng.choice([k for k in keys if k not in payers])
        amounts = {p: rng.randint(1, 6) for p in payers}
        txs.append(pay(f"t{t}", amounts, {payee: sum(amounts.values())}))
    return txs, objects


@pytest.mark.criterion_11
def test_permutation_property():
    rng = random.Random(20240611)
    nontrivial = 0
    for _ in range(200):
        txs, objects = _random_payment_set(rng)
        rep = permutation_report(txs, objects)
        assert rep.agree, [tx.id for tx in txs]
        nontrivial += len(rep.success_orders) > 1
    assert nontrivial > 50

    # independent payments into one account: both succeed in any order
    objs = [Object("Alice", 10), Object("Bob", 10), Object("Carol", 0)]
    rep = permutation_report([pay("tx1", {"Alice": 3}, {"Carol": 3}), pay("tx2", {"Bob": 4}, {"Carol": 4})], objs)
    assert rep.agree and len(rep.success_orders) == 2

    # Bob must be funded by tx3 before tx2 can pay
    objs = [Object("Alice", 5), Object("Bob", 0), Object("Carol", 0)]
    rep = permutation_report([pay("tx2", {"Bob": 5}, {"Carol": 5}), pay("tx3", {"Alice": 5}, {"Bob": 5})], objs)
    assert rep.success_orders == [("tx3", "tx2")] and rep.agree

    # Alice cannot afford both: whichever runs first wins
    rep = permutation_report([pay("tx1", {"Alice": 4}, {"Bob": 4}), pay("tx2", {"Alice": 3}, {"Carol": 3})], objs)
    assert rep.success_orders == []
    assert rep.outcomes[("tx1", "tx2")] == ("tx1",) and rep.outcomes[("tx2", "tx1")] == ("tx2",)
