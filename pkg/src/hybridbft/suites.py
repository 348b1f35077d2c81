"""Seeded scenario families and run-level verdicts used by ``check`` and the acceptance tests."""
from __future__ import annotations

import numpy as np

from . import oracle
from .sim.config import ScenarioConfig, from_dict
from .sim.faults import Behavior
from .sim.scenario import RunResult, run_scenario

SAFETY_BEHAVIORS = (Behavior.CRASH_SILENT, Behavior.CENSOR, Behavior.SPOOF_STATE, Behavior.LEAD_ONLY)
SUITES = ("safety", "liveness", "atomicity", "ordering")


def run_checks(result: RunResult) -> dict:
    """Protocol-side facts the snapshot cannot show, as counterexample lists."""
    out = {"fatal_assertions": [result.error] if result.error else []}
    digests: dict = {}
    bad = []
    for rid in result.honest:
        for epoch, digest in result.checkpoints.get(rid, []):
            prev = digests.setdefault(epoch, (rid, digest))
            if prev[1] != digest:
                bad.append(f"epoch {epoch}: replica {rid} digest differs from replica {prev[0]}")
    out["checkpoint_digests"] = bad
    rv = result.stats.get("rank_violations", 0)
    out["rank_monotonicity"] = [f"{rv} blocks proposed without exceeding the leader's delivered rank"] if rv else []
    delta = result.config["network"]["delta_ms"]
    worst = result.stats.get("max_post_gst_delay_ms", 0.0)
    out["partial_synchrony"] = [f"post-GST delay {worst} ms exceeds delta {delta} ms"] if worst > delta else []
    return out


def evaluate(result: RunResult) -> dict:
    return oracle.verdicts(result.snapshot, run_checks(result))


def passed(verdicts: dict, names=None) -> bool:
    names = verdicts.keys() if names is None else names
    return all(verdicts[n]["pass"] for n in names)


# -- scenario families -----------------------------------------------------------------
def _base(n: int, txs: int, rate: float, seed: int) -> dict:
    return {
        "system": {"n": n, "view_change_timeout_s": 2.0, "batch_timeout_ms": 50.0},
        "network": {"delta_ms": 400.0},
        "workload": {"total_txs": txs, "rate_tps": rate, "accounts": 300},
        "run": {"seed": seed, "horizon_s": 120.0},
    }


def safety_scenario(index: int, base_seed: int = 0) -> ScenarioConfig:
    """One of the mixed-fault scenarios: n cycles through 4, 8, 16."""
    seed = base_seed + index
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA17]))
    n = (4, 8, 16)[index % 3]
    fmax = (n - 1) // 3
    txs = {4: 600, 8: 500, 16: 400}[n]
    d = _base(n, txs, 300.0, seed)
    d["system"]["epoch_length"] = 4
    d["system"]["engine"] = "pbft_like" if index % 5 else "ideal"
    if index % 4 == 3:
        d["network"].update({"gst_s": 1.0, "pre_gst_extra_ms": 300.0})
        d["system"]["view_change_timeout_s"] = 3.0
    nfaulty = int(rng.integers(0, fmax + 1))
    victims = rng.choice(n, size=nfaulty, replace=False)
    faults = []
    for r in sorted(int(v) for v in victims):
        beh = SAFETY_BEHAVIORS[int(rng.integers(len(SAFETY_BEHAVIORS)))]
        spec = {"replica": r, "behavior": beh.value}
        if rng.random() < 0.5:
            spec["start_epoch"] = int(rng.integers(0, 3))
        else:
            spec["start_time_s"] = round(float(rng.uniform(0.0, 1.5)), 3)
        if beh is Behavior.SPOOF_STATE:
            spec["spoof"] = "tx" if rng.random() < 0.5 else "state"
        faults.append(spec)
    d["faults"] = faults
    return from_dict(d)


def atomicity_scenario(index: int, base_seed: int = 0) -> ScenarioConfig:
    """All payments, many two-payer ones, tight balances and guaranteed overdrafts."""
    seed = base_seed + index
    n = (4, 8)[index % 2]
    d = _base(n, 600, 300.0, seed)
    d["workload"].update({"payment_proportion": 1.0, "multi_payer_fraction": 0.3,
                          "overdraft_fraction": 0.05, "initial_balance": 12, "max_amount": 10,
                          "accounts": 120, "skew": 1.1})
    if index % 3 == 2:
        d["faults"] = [{"replica": n - 1, "behavior": "crash_silent", "start_epoch": 1}]
    return from_dict(d)


def ordering_scenario(index: int, base_seed: int = 0) -> ScenarioConfig:
    seed = base_seed + index
    n = (4, 8, 16)[index % 3]
    d = _base(n, 400, 300.0, seed)
    if index % 2:
        d["network"]["stragglers"] = {index % n: 10.0}
        d["network"]["delta_ms"] = 1000.0
        d["system"]["view_change_timeout_s"] = 4.0
    d["system"]["epoch_length"] = 4
    return from_dict(d)


def fault_free(cfg: ScenarioConfig) -> ScenarioConfig:
    clean = cfg.copy()
    clean.faults.faults = []
    return clean


def liveness_run(cfg: ScenarioConfig) -> tuple:
    """Run a fault-free twin, then the faulty run with horizon 10x its completion time."""
    clean = run_scenario(fault_free(cfg))
    done = clean.quiescent_at if clean.quiescent_at is not None else clean.end_time
    faulty = cfg.copy()
    faulty.run.horizon_s = max(10.0 * done / 1e9, 1.0)
    return clean, run_scenario(faulty)


SUITE_CHECKS = {
    "safety": ("safety", "balances", "shared_replay", "checkpoint_digests", "fatal_assertions"),
    "liveness": ("liveness",),
    "atomicity": ("atomicity", "balances", "safety", "fatal_assertions"),
    "ordering": ("glog_order", "ranks", "rank_monotonicity", "fatal_assertions"),
}


def run_suite(name: str, seeds: int, base_seed: int = 0):
    """Yield (label, verdict subset, passed) for each scenario in a suite."""
    for k in range(seeds):
        if name == "safety":
            result = run_scenario(safety_scenario(k, base_seed))
        elif name == "liveness":
            _, result = liveness_run(safety_scenario(k, base_seed))
        elif name == "atomicity":
            result = run_scenario(atomicity_scenario(k, base_seed))
        elif name == "ordering":
            result = run_scenario(ordering_scenario(k, base_seed))
        else:
            raise ValueError(f"unknown suite {name!r}")
        v = evaluate(result)
        picked = {c: v[c] for c in SUITE_CHECKS[name]}
        yield f"{name}[{k}] n={result.n} seed={result.seed} faults={len(result.faulty)}", picked, \
            passed(picked)
