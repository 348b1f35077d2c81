"""Synthetic payment/contract workloads and the line-oriented trace format.

Trace format, one record per line::

    object <key> <value> <con> <owned|shared>
    <tx_id> <payment|contract> <payer:amt[,payer:amt]> <payee:amt[,...]|-> [<op>:<key>:<value> ...] @<submit_ns> <client>

Contract ops use the shared-object op names ``increment``, ``decrement``,
``assign`` and ``read``. Blank lines and lines starting with ``#`` are
ignored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..domain import Object, ObjType, OpKind, OpSpec, Transaction, TxKind, signed_tx
from .events import sec


@dataclass
class WorkloadSpec:
    accounts: int = 1000
    total_txs: int = 10_000
    payment_proportion: float = 0.46
    multi_payer_fraction: float = 0.0
    skew: float = 0.8  # Zipf exponent of account popularity
    initial_balance: int = 1000
    max_amount: int = 10
    shared_objects: int = 16
    shared_initial: int = 100
    overdraft_fraction: float = 0.0  # payments that can never be funded
    rate_tps: float = 2000.0
    clients: int = 4
    payload_bytes: int = 500
    trace: str | None = None  # replay this trace instead of generating

    def validate(self) -> None:
        if not 0.0 <= self.payment_proportion <= 1.0:
            raise ValueError("workload.payment_proportion must be in [0, 1]")
        if not 0.0 <= self.multi_payer_fraction <= 1.0 or not 0.0 <= self.overdraft_fraction <= 1.0:
            raise ValueError("workload fractions must be in [0, 1]")
        if self.accounts < 3 or self.total_txs < 0 or self.clients < 1 or self.rate_tps <= 0:
            raise ValueError("workload needs >= 3 accounts, >= 1 client and a positive rate")
        if self.max_amount < 1 or self.shared_objects < 1:
            raise ValueError("workload.max_amount and shared_objects must be >= 1")


@dataclass
class Workload:
    objects: list
    txs: list
    client_of: dict = field(default_factory=dict)  # tx id -> client index

    @property
    def total_supply(self) -> int:
        return sum(o.value for o in self.objects if o.type is ObjType.OWNED)


def account_key(k: int) -> str:
    return f"acct{k:05d}"


def shared_key(k: int) -> str:
    return f"shared{k:03d}"


def zipf_weights(count: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, count + 1, dtype=float) ** s
    return w / w.sum()


def _contract_ops(rng, spec: WorkloadSpec) -> list:
    ops = []
    for _ in range(int(rng.integers(1, 4))):
        key = shared_key(int(rng.integers(spec.shared_objects)))
        kind = (OpKind.INCREMENT, OpKind.DECREMENT, OpKind.ASSIGN, OpKind.READ)[int(rng.integers(4))]
        if kind in (OpKind.INCREMENT, OpKind.DECREMENT):
            value = int(rng.integers(1, 6))
        elif kind is OpKind.ASSIGN:
            value = int(rng.integers(0, 2 * spec.shared_initial + 1))
        else:
            value = 0
        ops.append(OpSpec(key, kind, value, ObjType.SHARED))
    return ops


def generate_workload(spec: WorkloadSpec, seed: int) -> Workload:
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    objects = [Object(account_key(k), spec.initial_balance) for k in range(spec.accounts)]
    objects += [Object(shared_key(k), spec.shared_initial, 0, ObjType.SHARED)
                for k in range(spec.shared_objects)]
    supply = spec.accounts * spec.initial_balance
    N = spec.total_txs
    n_pay = int(round(spec.payment_proportion * N))
    kinds = np.array([1] * n_pay + [0] * (N - n_pay), dtype=np.int8)
    rng.shuffle(kinds)
    weights = zipf_weights(spec.accounts, spec.skew)
    gaps = rng.exponential(1.0 / spec.rate_tps, size=N)
    submit = np.cumsum(gaps)
    txs, client_of = [], {}
    for k in range(N):
        tx_id = f"tx{k:06d}"
        t = sec(float(submit[k]))
        client = k % spec.clients
        if kinds[k]:
            multi = rng.random() < spec.multi_payer_fraction
            overdraft = rng.random() < spec.overdraft_fraction
            picks = rng.choice(spec.accounts, size=3 if multi else 2, replace=False, p=weights)
            payers = [account_key(int(a)) for a in picks[:-1]]
            payee = account_key(int(picks[-1]))
            amounts = [int(rng.integers(1, spec.max_amount + 1)) for _ in payers]
            if overdraft:
                amounts[0] = supply + 1
            ops = [OpSpec(p, OpKind.DECREMENT, a) for p, a in zip(payers, amounts)]
            ops.append(OpSpec(payee, OpKind.INCREMENT, sum(amounts)))
        else:
            payer = account_key(int(rng.choice(spec.accounts, p=weights)))
            ops = [OpSpec(payer, OpKind.DECREMENT, 1)] + _contract_ops(rng, spec)
        txs.append(signed_tx(tx_id, ops, t, f"c{client}"))
        client_of[tx_id] = client
    return Workload(objects, txs, client_of)


# -- trace I/O -------------------------------------------------------------------
def _fmt_side(ops) -> str:
    return ",".join(f"{op.target_key}:{op.amount}" for op in ops) or "-"


def format_tx(tx: Transaction) -> str:
    parts = [tx.id, tx.kind.value, _fmt_side(tx.payer_ops), _fmt_side(tx.payee_ops)]
    parts += [f"{op.kind.value}:{op.target_key}:{op.amount_or_value}" for op in tx.shared_ops]
    parts += [f"@{tx.submit_time}", tx.client or "-"]
    return " ".join(parts)


def write_trace(workload: Workload, path) -> None:
    lines = [f"object {o.key} {o.value} {o.con} {o.type.value}" for o in workload.objects]
    lines += [format_tx(tx) for tx in workload.txs]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_side(text: str, kind: OpKind) -> list:
    if text == "-":
        return []
    out = []
    for item in text.split(","):
        key, amount = item.rsplit(":", 1)
        out.append(OpSpec(key, kind, int(amount)))
    return out


def parse_tx(line: str) -> Transaction:
    fields = line.split()
    if len(fields) < 6 or not fields[-2].startswith("@"):
        raise ValueError(f"malformed trace line: {line!r}")
    tx_id, kind, payers, payees = fields[:4]
    ops = _parse_side(payers, OpKind.DECREMENT) + _parse_side(payees, OpKind.INCREMENT)
    for item in fields[4:-2]:
        op, key, value = item.split(":")
        ops.append(OpSpec(key, OpKind(op), int(value), ObjType.SHARED))
    client = fields[-1] if fields[-1] != "-" else ""
    tx = signed_tx(tx_id, ops, int(fields[-2][1:]), client)
    if tx.kind is not TxKind(kind):
        raise ValueError(f"{tx_id}: declared {kind} but ops make it {tx.kind.value}")
    return tx


def read_trace(path, clients: int = 1) -> Workload:
    objects, txs, client_of = [], [], {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("object "):
            _, key, value, con, typ = line.split()
            objects.append(Object(key, int(value), int(con), ObjType(typ)))
            continue
        tx = parse_tx(line)
        txs.append(tx)
        c = tx.client[1:] if tx.client.startswith("c") else ""
        client_of[tx.id] = int(c) % clients if c.isdigit() else len(txs) % clients
    txs.sort(key=lambda tx: (tx.submit_time, tx.id))
    return Workload(objects, txs, client_of)
