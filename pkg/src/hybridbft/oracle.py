"""Independent correctness oracles over completed runs.

Only :mod:`hybridbft.domain` is shared with the protocol code. Runs are
handed over as plain snapshots (:class:`RunSnapshot`), and every check here
recomputes its expectation from scratch: closed-form balances, sequential
replay, brute-force global order and a reference contract interpreter.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .domain import Object, ObjType, OpKind, Transaction, TxKind

SUCCESS = "confirmed_success"
ABORT = "confirmed_abort"


@dataclass(frozen=True)
class BlockView:
    ins: int
    sn: int
    rank: int
    digest: int
    tx_ids: tuple = ()
    noop: bool = False

    @property
    def key(self) -> tuple:
        return (self.rank, self.ins)


@dataclass(frozen=True)
class TxOutcome:
    status: str
    path: str = ""
    reason: str = ""


@dataclass
class ReplicaSnapshot:
    rid: int
    honest: bool = True
    alive: bool = True
    store: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)  # tx id -> TxOutcome (confirmed only)
    state_hashes: dict = field(default_factory=dict)  # state key -> store hash
    final_key: tuple = ()
    delivered: dict = field(default_factory=dict)  # ins -> [BlockView] in sn order
    glog: list = field(default_factory=list)  # [BlockView] in confirmation order
    elog_size: int = 0


@dataclass
class RunSnapshot:
    m: int
    objects: list
    txs: dict  # tx id -> Transaction
    routes: dict  # tx id -> tuple of instances
    replicas: list
    mode: str = "orthrus"

    def judged(self) -> list:
        """Replicas the oracles speak for: honest and not crashed."""
        return [r for r in self.replicas if r.honest and r.alive]


# -- closed forms and sequential replay ------------------------------------------------
def tx_delta(tx: Transaction) -> dict:
    """Net change a successful tx makes to owned objects."""
    out: dict = {}
    for op in tx.ops:
        if op.obj_type is not ObjType.OWNED:
            continue
        sign = 1 if op.kind is OpKind.INCREMENT else -1
        out[op.target_key] = out.get(op.target_key, 0) + sign * op.amount
    return out


def balance_formula(key: str, confirmed_txs: Iterable[Transaction], initial: int) -> int:
    """initial + incoming - outgoing over successfully confirmed transactions."""
    value = initial
    for tx in confirmed_txs:
        value += tx_delta(tx).get(key, 0)
    return value


def interpret(ops, values: Mapping[str, int], cons: Mapping[str, int]):
    """Reference interpreter for shared-object ops. Returns (ok, new values)."""
    cur = dict(values)
    for op in ops:
        v = cur[op.target_key]
        if op.kind is OpKind.INCREMENT:
            v += op.amount_or_value
        elif op.kind is OpKind.DECREMENT:
            v -= op.amount_or_value
            if v < cons.get(op.target_key, 0):
                return False, dict(values)
        elif op.kind is OpKind.ASSIGN:
            v = op.amount_or_value
        cur[op.target_key] = v
    return True, cur


def sequential_replay(objects: Iterable[Object], txs: Iterable[Transaction]) -> tuple:
    """Run txs one after another on a plain ledger. Returns (values, success ids)."""
    objects = list(objects)
    values = {o.key: o.value for o in objects}
    cons = {o.key: o.con for o in objects}
    ok_ids = []
    for tx in txs:
        debit: dict = {}
        for op in tx.ops:
            if op.obj_type is ObjType.OWNED and op.kind is OpKind.DECREMENT:
                debit[op.target_key] = debit.get(op.target_key, 0) + op.amount
        if any(k not in values or values[k] - a < cons[k] for k, a in debit.items()):
            continue
        shared = [op for op in tx.ops if op.obj_type is ObjType.SHARED]
        ok, after = interpret(shared, values, cons)
        if not ok:
            continue
        values = after
        for key, d in tx_delta(tx).items():
            values[key] = values.get(key, 0) + d
        ok_ids.append(tx.id)
    return values, ok_ids


@dataclass
class PermutationReport:
    agree: bool
    success_orders: list  # orders (tuples of tx ids) in which every tx succeeded
    outcomes: dict  # order -> ids that succeeded
    finals: dict  # order -> final owned values (only for all-success orders)


def permutation_report(txs, objects) -> PermutationReport:
    txs, objects = list(txs), list(objects)
    if len(txs) > 8:
        raise ValueError("permutation_check is limited to 8 transactions")
    if any(tx.kind is not TxKind.PAYMENT for tx in txs):
        raise ValueError("permutation_check takes payment transactions only")
    outcomes, finals, success = {}, {}, []
    owned = [o.key for o in objects if o.type is ObjType.OWNED]
    for perm in itertools.permutations(txs):
        order = tuple(tx.id for tx in perm)
        values, ok_ids = sequential_replay(objects, perm)
        outcomes[order] = tuple(ok_ids)
        if len(ok_ids) == len(txs):
            success.append(order)
            finals[order] = tuple(values[k] for k in owned)
    agree = len(set(finals.values())) <= 1
    return PermutationReport(agree, success, outcomes, finals)


def permutation_check(txs, objects) -> bool:
    """True iff every order in which all txs succeed ends in the same owned values."""
    return permutation_report(txs, objects).agree


# -- run checks ---------------------------------------------------------------------------
def _confirmed(rs: RunSnapshot, rep: ReplicaSnapshot) -> list:
    return [rs.txs[t] for t in sorted(rep.outcomes)
            if rep.outcomes[t].status == SUCCESS and t in rs.txs]


def check_balances(rs: RunSnapshot) -> list:
    """Owned values equal the closed form over each replica's successful txs."""
    bad = []
    owned = [o for o in rs.objects if o.type is ObjType.OWNED]
    for rep in rs.judged():
        ok_txs = _confirmed(rs, rep)
        deltas: dict = {}
        for tx in ok_txs:
            for k, d in tx_delta(tx).items():
                deltas[k] = deltas.get(k, 0) + d
        for o in owned:
            want = o.value + deltas.get(o.key, 0)
            got = rep.store.get(o.key)
            if got != want:
                bad.append(f"replica {rep.rid}: {o.key} = {got}, formula says {want}")
    return bad


def _last_occurrences(rs: RunSnapshot, glog: list) -> list:
    """(block index, tx id) where each tx's route is first completed in glog order."""
    seen: dict = {}
    out = []
    for bi, b in enumerate(glog):
        for tx_id in b.tx_ids:
            route = rs.routes.get(tx_id)
            if route is None or b.ins not in route:
                continue
            got = seen.setdefault(tx_id, set())
            if b.ins in got:
                continue
            got.add(b.ins)
            if len(got) == len(route):
                out.append((bi, tx_id))
    return out


def check_shared(rs: RunSnapshot) -> list:
    """Shared values equal a sequential replay of contracts in glog order."""
    bad = []
    shared = {o.key: o.value for o in rs.objects if o.type is ObjType.SHARED}
    cons = {o.key: o.con for o in rs.objects}
    for rep in rs.judged():
        values = dict(shared)
        for _, tx_id in _last_occurrences(rs, rep.glog):
            tx = rs.txs.get(tx_id)
            if tx is None or (tx.kind is TxKind.PAYMENT and rs.mode == "orthrus"):
                continue
            out = rep.outcomes.get(tx_id)
            if out is None or (out.status == ABORT and out.reason == "escrow"):
                continue
            ops = [op for op in tx.ops if op.obj_type is ObjType.SHARED]
            ok, after = interpret(ops, values, cons)
            if out.status == SUCCESS and not ok:
                bad.append(f"replica {rep.rid}: {tx_id} succeeded but fails in sequential replay")
            elif out.status == ABORT and ok:
                bad.append(f"replica {rep.rid}: {tx_id} aborted in execution but replays fine")
            if out.status == SUCCESS and ok:
                values = after
        for key, want in values.items():
            if rep.store.get(key) != want:
                bad.append(f"replica {rep.rid}: shared {key} = {rep.store.get(key)}, replay says {want}")
    return bad


def expected_glog(delivered: Mapping[int, list], m: int) -> list:
    """Brute force: delivered blocks sorted by (rank, ins), cut at the final bar."""
    blocks = [b for seq in delivered.values() for b in seq]
    blocks.sort(key=lambda b: b.key)
    lasts = [delivered.get(i, [])[-1] if delivered.get(i) else None for i in range(m)]
    if any(b is None for b in lasts):
        return []
    low = min(lasts, key=lambda b: b.key)
    bar = (low.rank + 1, low.ins)
    return [b for b in blocks if b.key < bar]


def check_glog(rs: RunSnapshot) -> list:
    bad = []
    for rep in rs.judged():
        want = [(b.ins, b.sn) for b in expected_glog(rep.delivered, rs.m)]
        got = [(b.ins, b.sn) for b in rep.glog]
        if got != want:
            k = next((j for j, (x, y) in enumerate(zip(got, want)) if x != y), min(len(got), len(want)))
            bad.append(f"replica {rep.rid}: glog differs from brute-force order at position {k} "
                       f"(len {len(got)} vs {len(want)})")
        keys = [b.key for b in rep.glog]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            bad.append(f"replica {rep.rid}: glog not strictly increasing in (rank, ins)")
    return bad


def check_ranks(rs: RunSnapshot) -> list:
    """Ranks strictly increase along every plog and agree across replicas."""
    bad = []
    ranks: dict = {}
    for rep in rs.judged():
        for ins, seq in rep.delivered.items():
            for a, b in zip(seq, seq[1:]):
                if b.rank <= a.rank:
                    bad.append(f"replica {rep.rid}: instance {ins} rank {b.rank} at sn {b.sn} "
                               f"does not exceed {a.rank}")
            for b in seq:
                prev = ranks.setdefault((b.ins, b.sn), (b.rank, b.digest))
                if prev != (b.rank, b.digest):
                    bad.append(f"block ({b.ins}, {b.sn}) differs across replicas")
    return bad


def compare_replicas(rs: RunSnapshot, replicas: list | None = None) -> dict:
    """Divergences between honest replicas at equal system states."""
    reps = replicas if replicas is not None else rs.judged()
    divergences = []
    for a, b in itertools.combinations(reps, 2):
        common = a.state_hashes.keys() & b.state_hashes.keys()
        for key in sorted(common):
            if a.state_hashes[key] != b.state_hashes[key]:
                divergences.append({"replicas": [a.rid, b.rid], "state": repr(key), "what": "store hash"})
                break
        if a.final_key == b.final_key:
            keys = sorted(k for k in a.store.keys() | b.store.keys() if a.store.get(k) != b.store.get(k))
            if keys:
                divergences.append({"replicas": [a.rid, b.rid], "state": repr(a.final_key),
                                    "what": "objects", "keys": keys[:20]})
            sa = {t: o.status for t, o in a.outcomes.items()}
            sb = {t: o.status for t, o in b.outcomes.items()}
            if sa != sb:
                diff = sorted(t for t in sa.keys() | sb.keys() if sa.get(t) != sb.get(t))
                divergences.append({"replicas": [a.rid, b.rid], "state": repr(a.final_key),
                                    "what": "confirmed set", "txs": diff[:20]})
    return {"pairs": len(reps) * (len(reps) - 1) // 2, "divergences": divergences}


def check_atomicity(rs: RunSnapshot) -> list:
    bad = []
    initial = sum(o.value for o in rs.objects if o.type is ObjType.OWNED)
    owned = [o.key for o in rs.objects if o.type is ObjType.OWNED]
    for rep in rs.judged():
        if rep.elog_size:
            bad.append(f"replica {rep.rid}: {rep.elog_size} escrow entries left")
        burned = sum(-sum(tx_delta(tx).values()) for tx in _confirmed(rs, rep))
        total = sum(rep.store.get(k, 0) for k in owned)
        if total != initial - burned:
            bad.append(f"replica {rep.rid}: owned total {total} != {initial} - {burned}")
    return bad


def check_liveness(rs: RunSnapshot) -> list:
    bad = []
    for rep in rs.judged():
        missing = [t for t in rs.txs if t not in rep.outcomes]
        if missing:
            bad.append(f"replica {rep.rid}: {len(missing)} txs unconfirmed (first {sorted(missing)[0]})")
    return bad


def verdicts(rs: RunSnapshot, extra: Mapping[str, list] | None = None) -> dict:
    """Pass/fail per property with counterexample pointers."""
    cmp = compare_replicas(rs)
    checks = {
        "safety": [json.dumps(d, sort_keys=True) for d in cmp["divergences"]],
        "balances": check_balances(rs),
        "shared_replay": check_shared(rs),
        "glog_order": check_glog(rs),
        "ranks": check_ranks(rs),
        "atomicity": check_atomicity(rs),
        "liveness": check_liveness(rs),
    }
    for name, problems in (extra or {}).items():
        checks[name] = list(problems)
    return {name: {"pass": not problems, "counterexamples": problems[:10]}
            for name, problems in checks.items()}


def all_pass(v: Mapping[str, dict]) -> bool:
    return all(item["pass"] for item in v.values())


def write_verdicts(path, v: Mapping[str, dict]) -> None:
    Path(path).write_text(json.dumps(v, sort_keys=True, indent=2) + "\n")
