"""Execution of partial logs (payments) and the global log (contracts).

Escrow outcomes must not depend on how a replica interleaves its partial
logs, otherwise two honest replicas could disagree. Each payer decision at a
plog position is therefore taken against a conservative balance ``L`` that
is a pure function of plog contents:

    L(o, S) = init(o) + credits(o) covered by S - debits(o) decided so far

where a credit is booked once every plog position of the crediting
transaction has been processed (a committed payment's payee amounts, or the
refund of an aborted transaction's successful debits) and is tagged with
the transaction's position vector. Credits whose vector is covered by the
block's ``S`` are counted. The live object value is never below ``L``, so a
positive decision always escrows successfully on the live store. Contract
refunds and contract credits to owned objects are left out of ``L``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .domain import (Block, Object, ObjType, OpKind, Transaction, TxKind, key_hash, make_block,
                     state_covers)
from .escrow import EscrowLog, abort_escrow, all_escrowed, commit_escrow, escrow
from .ordering import GlobalLog, OrderingState, PartialLog, global_order

MASK64 = (1 << 64) - 1


class ExecutionViolation(AssertionError):
    pass


class Status(str, enum.Enum):
    PENDING = "pending"
    SUCCESS = "confirmed_success"
    ABORT = "confirmed_abort"


class Mode(str, enum.Enum):
    ORTHRUS = "orthrus"
    GLOBAL_ALL = "global_all"


class ObjectStore:
    """Key -> value map with an order-independent running hash.

    ``hash = sum(mix64(blake2b64(key), value)) mod 2**64``.
    """

    def __init__(self, objects: Iterable[Object]):
        self._values: dict[str, int] = {}
        self._con: dict[str, int] = {}
        self._type: dict[str, ObjType] = {}
        self._kh: dict[str, int] = {}
        self.hash = 0
        self.glog_writer = False  # set only while a glog step runs
        for o in objects:
            if o.key in self._values:
                raise ValueError(f"duplicate object key {o.key}")
            self._values[o.key] = o.value
            self._con[o.key] = o.con
            self._type[o.key] = o.type
            self._kh[o.key] = key_hash(o.key)
            self.hash = (self.hash + kernels.mix64(self._kh[o.key], o.value)) & MASK64

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def keys(self):
        return sorted(self._values)

    def value(self, key: str) -> int:
        return self._values[key]

    def con(self, key: str) -> int:
        return self._con[key]

    def type(self, key: str) -> ObjType:
        return self._type[key]

    def set_value(self, key: str, v: int) -> None:
        if self._type[key] is ObjType.SHARED and not self.glog_writer:
            raise ExecutionViolation(f"shared object {key} written outside glog execution")
        if v < self._con[key]:
            raise ExecutionViolation(f"{key} would drop to {v} below con {self._con[key]}")
        old = self._values[key]
        if old == v:
            return
        kh = self._kh[key]
        self.hash = (self.hash - kernels.mix64(kh, old) + kernels.mix64(kh, v)) & MASK64
        self._values[key] = v

    def snapshot(self) -> dict:
        return {k: self._values[k] for k in sorted(self._values)}


class CreditRecords:
    """Credit rows (position vector, amount) for one owned object."""

    def __init__(self, m: int):
        self.points = np.empty((4, m), dtype=np.int64)
        self.amounts = np.empty(4, dtype=np.int64)
        self.n = 0

    def add(self, point: np.ndarray, amount: int) -> None:
        if self.n == len(self.amounts):
            cap = 2 * self.n
            pts = np.empty((cap, self.points.shape[1]), dtype=np.int64)
            pts[:self.n] = self.points
            amt = np.empty(cap, dtype=np.int64)
            amt[:self.n] = self.amounts
            self.points, self.amounts = pts, amt
        self.points[self.n] = point
        self.amounts[self.n] = amount
        self.n += 1

    def covered(self, state: np.ndarray) -> int:
        if self.n == 0:
            return 0
        return kernels.covered_sum(self.points, self.amounts, self.n, state)


@dataclass
class ConfirmationRecord:
    tx_id: str
    status: Status = Status.PENDING
    confirm_time: int | None = None
    path: str = ""  # "partial" | "global"
    reason: str = ""  # abort cause: "escrow" | "exec"
    partial_time: int | None = None
    deciding_block: tuple | None = None
    deciding_broadcast: int | None = None

    def confirm(self, status: Status, t: int, path: str, reason: str = "") -> None:
        if self.status is not Status.PENDING:
            raise ExecutionViolation(f"{self.tx_id} confirmed twice")
        self.status, self.confirm_time, self.path, self.reason = status, t, path, reason


@dataclass
class TxState:
    tx: Transaction
    route: tuple
    record: ConfirmationRecord
    positions: dict = field(default_factory=dict)
    decisions: dict = field(default_factory=dict)
    remaining: int = 0
    failed: bool = False
    aborted_live: bool = False
    glog_seen: set = field(default_factory=set)
    glog_done: bool = False
    inflight: bool = False  # global_all: debits counted in pending_debits


def payer_amounts(tx: Transaction) -> dict:
    out: dict[str, int] = {}
    for op in tx.payer_ops:
        out[op.target_key] = out.get(op.target_key, 0) + op.amount
    return out


def interpret_shared(ops, read: Callable[[str], int], con: Callable[[str], int]):
    """Run contract ops on shared objects; returns (ok, writes)."""
    writes: dict[str, int] = {}
    for op in ops:
        cur = writes.get(op.target_key, read(op.target_key))
        if op.kind is OpKind.INCREMENT:
            cur += op.amount
        elif op.kind is OpKind.DECREMENT:
            cur -= op.amount
            if cur < con(op.target_key):
                return False, {}
        elif op.kind is OpKind.ASSIGN:
            cur = op.amount_or_value
        else:
            continue
        writes[op.target_key] = cur
    return True, writes


def fill_noop(instance: int, sn: int, rank: int, S, proposer: int = -1, t: int = 0) -> Block:
    return make_block((), instance, sn, S, rank, proposer=proposer, noop=True, proposed_at=t)


class BalanceProjection:
    """Leader-side lower bound on a payer's balance while drafting a block."""

    def __init__(self, executor: "Executor", instance: int):
        self.ex = executor
        self.instance = instance
        self.draft: dict[str, int] = {}

    def _local(self, tx: Transaction) -> dict:
        assign = self.ex.assigner
        return {k: a for k, a in payer_amounts(tx).items() if assign(k) == self.instance}

    def reserve(self, tx: Transaction, S=None) -> bool:
        local = self._local(tx)
        for key, amt in local.items():
            if key not in self.ex.store:
                return False
            if self.ex.lower_bound(key) - self.draft.get(key, 0) - amt < self.ex.store.con(key):
                return False
        for key, amt in local.items():
            self.draft[key] = self.draft.get(key, 0) + amt
        return True

    def force(self, tx: Transaction) -> None:
        for key, amt in self._local(tx).items():
            self.draft[key] = self.draft.get(key, 0) + amt


class Executor:
    """Per-replica logs, escrow log, object store and confirmation tracking."""

    def __init__(self, m: int, objects: Iterable[Object], assigner: Callable[[str], int],
                 mode: Mode | str = Mode.ORTHRUS, rng=None,
                 on_confirm: Callable[[TxState, int], None] | None = None,
                 track_states: bool = True):
        objects = list(objects)
        self.m = m
        self.mode = Mode(mode)
        self.assigner = assigner
        self.rng = rng
        self.on_confirm = on_confirm
        self.store = ObjectStore(objects)
        self.init = {o.key: o.value for o in objects}
        self.elog = EscrowLog()
        self.plogs = [PartialLog(i) for i in range(m)]
        self.ordering = OrderingState(m)
        self.glog = GlobalLog()
        self.cursor = [[0, 0] for _ in range(m)]
        self.executed = np.full(m, -1, dtype=np.int64)
        self._exec_list = [-1] * m  # python mirror of ``executed`` for cheap covering checks
        self._S_arrays: dict = {}
        self.processed = [0] * m
        self.glog_pos = [0, 0]
        self.glog_done = 0
        self.txs: dict[str, TxState] = {}
        self.credits: dict[str, CreditRecords] = {}
        self.debits: dict[str, int] = {}
        self.pending_debits: dict[str, int] = {}
        self.track_states = track_states
        self.state_hashes: dict[tuple, int] = {}
        self.noops = 0
        self.now = 0
        if track_states:
            self._record_state()

    # -- bookkeeping -------------------------------------------------------
    def delivered_state(self) -> tuple:
        return tuple(p.max_sn for p in self.plogs)

    def executed_state(self) -> tuple:
        return tuple(self._exec_list)

    def state_key(self) -> tuple:
        return (tuple(self.processed), self.glog_done)

    def _record_state(self) -> None:
        self.state_hashes[self.state_key()] = self.store.hash

    def _tx_state(self, tx: Transaction) -> TxState:
        st = self.txs.get(tx.id)
        if st is None:
            route = tuple(sorted({self.assigner(op.target_key) for op in tx.payer_ops}))
            st = TxState(tx, route, ConfirmationRecord(tx.id), remaining=len(route))
            self.txs[tx.id] = st
        return st

    def lower_bound(self, key: str) -> int:
        """Balance the leader may count on for ``key`` when drafting a block."""
        if self.mode is Mode.GLOBAL_ALL:
            return self.store.value(key) - self.pending_debits.get(key, 0)
        rec = self.credits.get(key)
        covered = rec.covered(self.executed) if rec is not None else 0
        return (self.init[key] + covered - self.debits.get(key, 0)
                - self.pending_debits.get(key, 0))

    def _L(self, key: str, S: np.ndarray) -> int:
        rec = self.credits.get(key)
        covered = rec.covered(S) if rec is not None else 0
        return self.init[key] + covered - self.debits.get(key, 0)

    def _credit(self, key: str, point: np.ndarray, amount: int) -> None:
        rec = self.credits.get(key)
        if rec is None:
            rec = self.credits[key] = CreditRecords(self.m)
        rec.add(point, amount)

    def _confirm(self, st: TxState, status: Status, t: int, path: str, reason: str = "") -> None:
        st.record.confirm(status, t, path, reason)
        if self.on_confirm is not None:
            self.on_confirm(st, t)

    # -- delivery ------------------------------------------------------------
    def deliver(self, b: Block, t: int) -> list:
        """Append ``b`` to its plog, run global ordering and execute what is ready."""
        self.now = t
        plog = self.plogs[b.ins]
        if b.sn in plog.blocks or b.sn < plog.pruned_below:
            return []
        plog.put(b)
        if b.noop:
            self.noops += 1
        for tx in b.txs:
            st = self._tx_state(tx)
            if self.mode is Mode.GLOBAL_ALL:
                if not st.inflight and not st.glog_done:
                    st.inflight = True
                    for key, amt in payer_amounts(tx).items():
                        self.pending_debits[key] = self.pending_debits.get(key, 0) + amt
                continue
            for key, amt in payer_amounts(tx).items():
                if self.assigner(key) == b.ins:
                    self.pending_debits[key] = self.pending_debits.get(key, 0) + amt
        confirmed = global_order(b, self.ordering, self.glog, t)
        self.pump(t)
        return confirmed

    # -- partial logs --------------------------------------------------------
    def first_pending(self, i: int):
        """(block, index) of the next unprocessed plog position, or None."""
        sn, idx = self.cursor[i]
        b = self.plogs[i].blocks.get(sn)
        if b is None:
            return None
        ex = self._exec_list
        for j, s_j in enumerate(b.S):
            if ex[j] < s_j:
                return None
        return b, idx

    def _ready(self) -> list:
        return [i for i in range(self.m) if self.first_pending(i) is not None]

    def pump(self, t: int) -> int:
        """Process ready positions one at a time in a seeded random interleaving."""
        self.now = t
        steps = 0
        ready = self._ready()
        while True:
            glog_ready = self._glog_ready()
            choices = len(ready) + (1 if glog_ready else 0)
            if choices == 0:
                return steps
            pick = int(self.rng.integers(choices)) if (self.rng is not None and choices > 1) else 0
            if pick < len(ready):
                i = ready[pick]
                before = self._exec_list[i]
                self.exec_plog_step(i, t)
                if self._exec_list[i] != before:
                    ready = self._ready()  # a finished block may unblock other instances
                elif self.first_pending(i) is None:
                    ready.remove(i)
            else:
                self.exec_glog_step(t)
            steps += 1

    def exec_plog_step(self, i: int, t: int) -> None:
        found = self.first_pending(i)
        if found is None:
            raise ExecutionViolation(f"no pending position in plog[{i}]")
        b, idx = found
        if idx < len(b.txs):
            self._process_position(i, b, idx, b.txs[idx], t)
            self.processed[i] += 1
            idx += 1
        if idx >= len(b.txs):
            self.executed[i] = b.sn
            self._exec_list[i] = b.sn
            self._S_arrays.pop((i, b.sn), None)
            self.cursor[i] = [b.sn + 1, 0]
        else:
            self.cursor[i] = [b.sn, idx]
        if self.track_states:
            self._record_state()

    def _process_position(self, i: int, b: Block, idx: int, tx: Transaction, t: int) -> None:
        st = self._tx_state(tx)
        local = {k: a for k, a in payer_amounts(tx).items() if self.assigner(k) == i}
        if self.mode is Mode.ORTHRUS:
            for key, amt in local.items():
                self.pending_debits[key] -= amt
        if i in st.positions or i not in st.route:
            return  # duplicate or misrouted occurrence: placeholder
        st.positions[i] = (b.sn, idx)
        if self.mode is Mode.ORTHRUS:
            S = self._S_arrays.get((i, b.sn))
            if S is None:
                S = self._S_arrays[(i, b.sn)] = np.asarray(b.S, dtype=np.int64)
            for key, amt in local.items():
                ok = self._L(key, S) - amt >= self.store.con(key)
                st.decisions[(i, key)] = ok
                if ok:
                    self.debits[key] = self.debits.get(key, 0) + amt
                if st.failed:
                    continue
                if ok:
                    if not escrow(self.store, key, tx, self.elog):
                        raise ExecutionViolation(
                            f"live escrow of {tx.id} on {key} failed although L allowed it")
                else:
                    st.failed = True
            if st.failed and not st.aborted_live:
                abort_escrow(tx, self.elog, self.store)
                st.aborted_live = True
                st.record.partial_time = t
                st.record.deciding_block = (b.ins, b.sn)
                st.record.deciding_broadcast = b.proposed_at
                self._confirm(st, Status.ABORT, t, "partial", "escrow")
        st.remaining -= 1
        if st.remaining > 0:
            return
        if st.record.partial_time is None:
            st.record.partial_time = t
            st.record.deciding_block = (b.ins, b.sn)
            st.record.deciding_broadcast = b.proposed_at
        if self.mode is not Mode.ORTHRUS:
            return
        point = np.full(self.m, -1, dtype=np.int64)
        for j, (sn, _) in st.positions.items():
            point[j] = sn
        if st.failed:
            for (j, key), ok in sorted(st.decisions.items()):
                if ok:
                    self._credit(key, point, payer_amounts(tx)[key])
        elif tx.kind is TxKind.PAYMENT:
            if not all_escrowed(tx, self.elog):
                raise ExecutionViolation(f"{tx.id} completed without all escrows")
            commit_escrow(tx, self.elog)
            for op in tx.payee_ops:
                self.store.set_value(op.target_key, self.store.value(op.target_key) + op.amount)
                self._credit(op.target_key, point, op.amount)
            self._confirm(st, Status.SUCCESS, t, "partial")

    # -- global log ----------------------------------------------------------
    def _glog_ready(self) -> bool:
        pos, idx = self.glog_pos
        if pos >= len(self.glog):
            return False
        b = self.glog.get(pos)
        if idx >= len(b.txs):
            return True
        tx = b.txs[idx]
        st = self.txs[tx.id]
        if (self.mode is Mode.ORTHRUS and tx.kind is TxKind.CONTRACT and b.ins not in st.glog_seen
                and len(st.glog_seen) + 1 == len(st.route) and b.ins in st.route
                and st.remaining > 0):
            return False  # last occurrence of a contract waits for its plog positions
        return True

    def exec_glog_step(self, t: int) -> None:
        pos, idx = self.glog_pos
        b = self.glog.get(pos)
        if idx >= len(b.txs):
            self.glog_pos = [pos + 1, 0]
            return
        tx = b.txs[idx]
        st = self.txs[tx.id]
        if b.ins in st.route and b.ins not in st.glog_seen:
            st.glog_seen.add(b.ins)
            if len(st.glog_seen) == len(st.route):
                self._exec_last(st, t)
        self.glog_done += 1
        idx += 1
        self.glog_pos = [pos + 1, 0] if idx >= len(b.txs) else [pos, idx]
        if self.track_states:
            self._record_state()

    def _exec_last(self, st: TxState, t: int) -> None:
        tx = st.tx
        st.glog_done = True
        if self.mode is Mode.ORTHRUS:
            if tx.kind is TxKind.PAYMENT or st.failed:
                return
            if st.remaining > 0:
                raise ExecutionViolation(f"{tx.id} executed in glog before its plog positions")
            ok, writes = interpret_shared(tx.shared_ops, self.store.value, self.store.con)
            if ok:
                self._write_shared(writes)
                commit_escrow(tx, self.elog)
                for op in tx.payee_ops:
                    self.store.set_value(op.target_key, self.store.value(op.target_key) + op.amount)
                self._confirm(st, Status.SUCCESS, t, "global")
            else:
                abort_escrow(tx, self.elog, self.store)
                self._confirm(st, Status.ABORT, t, "global", "exec")
            return
        # global_all: the whole transaction runs here, sequentially
        debits = payer_amounts(tx)
        for key, amt in debits.items():
            self.pending_debits[key] -= amt
        funded = all(self.store.value(k) - a >= self.store.con(k) for k, a in debits.items())
        ok, writes = interpret_shared(tx.shared_ops, self.store.value, self.store.con)
        if funded and ok:
            for key, amt in debits.items():
                self.store.set_value(key, self.store.value(key) - amt)
            for op in tx.payee_ops:
                self.store.set_value(op.target_key, self.store.value(op.target_key) + op.amount)
            self._write_shared(writes)
            self._confirm(st, Status.SUCCESS, t, "global")
        else:
            self._confirm(st, Status.ABORT, t, "global", "escrow" if not funded else "exec")

    def _write_shared(self, writes: dict) -> None:
        self.store.glog_writer = True
        try:
            for key in sorted(writes):
                self.store.set_value(key, writes[key])
        finally:
            self.store.glog_writer = False

    # -- garbage collection ----------------------------------------------------
    def footprint(self) -> int:
        return (sum(len(p.blocks) for p in self.plogs) + len(self.glog.blocks)
                + sum(1 for st in self.txs.values() if st.tx is not None))

    def prune(self, upto_sn: int) -> int:
        """Discard plog blocks with sn < ``upto_sn`` that are fully processed."""
        dropped = 0
        for i, plog in enumerate(self.plogs):
            limit = min(upto_sn, int(self.executed[i]) + 1)
            for sn in range(plog.pruned_below, limit):
                b = plog.blocks.get(sn)
                if b is None:
                    continue
                for tx in b.txs:
                    st = self.txs.get(tx.id)
                    if st is not None and st.record.status is not Status.PENDING and st.remaining == 0:
                        st.decisions = {}
            dropped += plog.prune(limit)
        dropped += self.glog.prune(self.glog_pos[0])
        self.glog_pos = [max(self.glog_pos[0], self.glog.offset), self.glog_pos[1]]
        return dropped
