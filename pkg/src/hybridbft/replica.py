"""One replica: buckets, leader loop, execution and checkpoints."""
from __future__ import annotations

from typing import Callable

from .checkpoint import CheckpointMsg, CheckpointTracker, end_epoch, epoch_executed, epoch_pending, \
    garbage_collect
from .domain import OpKind, OpSpec, Signature, Transaction
from .execution import BalanceProjection, Executor, Status, TxState
from .ordering import RankHistory
from .partition import Bucket, pull_valid_txs
from .sb import Evidence


class Replica:
    def __init__(self, rid: int, cfg, objects, assigner, mode, rng, sim, net,
                 fault=None, collector=None, track_states: bool = True):
        self.id = rid
        self.cfg = cfg  # SBConfig
        self.sim = sim
        self.net = net
        self.assigner = assigner
        self.fault = fault  # FaultSpec or None
        self.collector = collector
        self.sb = None
        self.ranks = RankHistory()
        self.buckets = [Bucket(i) for i in range(cfg.m)]
        self.seen: set = set()
        self.delivered_tx: set = set()  # (instance, tx id)
        self.executor = Executor(cfg.m, objects, assigner, mode, rng, on_confirm=self._on_confirm,
                                 track_states=track_states)
        self.waiting: dict = {}  # instance -> sn the leader is batching for
        self.fault_active = False  # switched on by a scheduled event or at the start epoch
        self.checkpoints = CheckpointTracker(2 * cfg.f + 1, cfg.epoch_length)
        self.next_epoch = 0
        self.epoch_wait: dict = {}  # epoch -> set of pending tx ids
        self.emitted: list = []  # CheckpointMsg sent by this replica
        self.gc_dropped = 0
        self.footprint_trace: list = []  # (time, footprint) after each collection
        self.proposals = 0
        self.crashed_at = None

    # -- fault helpers -----------------------------------------------------------
    @property
    def byzantine(self) -> bool:
        return self.fault is not None

    def behaving(self, behavior: str) -> bool:
        return self.fault_active and self.fault.behavior.value == behavior

    def activate_fault(self, t: int) -> None:
        if self.fault_active or self.fault is None:
            return
        self.fault_active = True
        if self.fault.behavior.value == "crash_silent":
            self.crashed_at = t
            self.sb.on_crash(self.id, t)
        elif self.fault.behavior.value == "lead_only":
            self.sb.faults.lead_only_from[self.id] = t
            self.sb.on_lead_only(self.id, t)

    def alive(self, t: int) -> bool:
        return self.sb.faults.alive(self.id, t)

    # -- client traffic ---------------------------------------------------------------
    def on_client_tx(self, tx: Transaction, from_client: bool) -> None:
        t = self.sim.now
        if not self.alive(t):
            return
        if self.collector is not None and from_client:
            self.collector.on_receipt(tx.id, t)
        if tx.id in self.seen:
            return
        self.seen.add(tx.id)
        route = [i for i in sorted({self.assigner(op.target_key) for op in tx.payer_ops})
                 if (i, tx.id) not in self.delivered_tx]
        for i in route:
            self.buckets[i].push(tx, self.sb.delivered_sn(self.id, i), t)
        if from_client and not self.byzantine:
            for r in range(self.cfg.n):
                if r == self.id:
                    continue
                at = self.net.send(self.id, r, t, nbytes=self.cfg.payload_bytes)
                if at is not None:
                    self.sim.schedule(at, self.sb.replicas[r].on_client_tx, tx, False)
        for i in route:
            sn = self.waiting.get(i)
            if sn is not None and self._live_count(i) >= self.cfg.batch_size:
                self._propose(i, sn)

    def _live_count(self, i: int) -> int:
        count = 0
        for _ in self.buckets[i].live():
            count += 1
            if count >= self.cfg.batch_size:
                break
        return count

    # -- leading ---------------------------------------------------------------------------
    def leader_ready(self, i: int, sn: int, t: int) -> None:
        if not self.alive(t) or self.sb.quiescent or not self.sb.is_leader(self.id, i):
            return
        if self.fault is not None and not self.fault_active and self.fault.start_epoch is not None \
                and sn >= self.fault.start_epoch * self.cfg.epoch_length:
            self.activate_fault(t)
            if not self.alive(t):
                return
        if self.waiting.get(i) == sn:
            return
        self.waiting[i] = sn
        if self._live_count(i) >= self.cfg.batch_size:
            self._propose(i, sn)
        else:
            self.sim.after(self.cfg.batch_timeout, self._batch_timeout, i, sn)

    def _batch_timeout(self, i: int, sn: int) -> None:
        if self.waiting.get(i) == sn:
            self._propose(i, sn)

    def _propose(self, i: int, sn: int) -> None:
        t = self.sim.now
        del self.waiting[i]
        if not self.alive(t) or self.sb.quiescent:
            return
        S = list(self.sb.delivered_state(self.id))
        txs = []
        if not self.behaving("censor"):
            proj = BalanceProjection(self.executor, i)
            txs = pull_valid_txs(self.buckets[i], tuple(S), self.cfg.batch_size, proj,
                                 delivered=lambda tx_id: (i, tx_id) in self.delivered_tx, current_sn=sn,
                                 expire_after=self.cfg.epoch_length)
        drafts = [(txs, tuple(S), None)]
        if self.behaving("spoof_state"):
            if self.fault.spoof == "tx":
                drafts = [(txs + [self._forged_tx(sn)], tuple(S), None)]
            else:
                j = (i + 1) % self.cfg.m
                S[j] += 1000
                drafts = [(txs, tuple(S), None)]
        elif self.behaving("equivocate") and txs:
            others = [r for r in range(self.cfg.n) if r != self.id]
            half = len(others) // 2
            drafts = [(txs, tuple(S), [self.id] + others[:half]),
                      (txs[:-1], tuple(S), [self.id] + others[half:])]
        self.proposals += 1
        if not self.sb.propose(self.id, i, sn, drafts, t):
            self.buckets[i].restore(tx.id for tx in txs)

    def _forged_tx(self, sn: int) -> Transaction:
        victim = sorted(self.executor.init)[0]
        ops = (OpSpec(victim, OpKind.DECREMENT, 1), OpSpec(f"replica{self.id}-sink", OpKind.INCREMENT, 1))
        tx = Transaction(f"forged-{self.id}-{sn}", ops, (), self.sim.now, "")
        return Transaction(tx.id, ops, (Signature(f"replica{self.id}", tx.digest),), self.sim.now, "")

    # -- delivery -------------------------------------------------------------------------------
    def on_sb_deliver(self, b, t: int) -> None:
        self.ranks.observe(t, b.rank)
        bucket = self.buckets[b.ins]
        for tx in b.txs:
            self.delivered_tx.add((b.ins, tx.id))
            bucket.remove(tx.id)
        if not b.noop and len(b.txs) < self.cfg.batch_size and b.proposer != self.id:
            oldest = bucket.oldest()
            if oldest is not None and b.sn - oldest.arrival_sn > self.cfg.censorship_window:
                self.sb.detect_failure(self.id, b.ins, Evidence.CENSORSHIP, t)
        self.executor.deliver(b, t)
        if self.collector is not None:
            self.collector.on_deliver(self.id, b, t)
        self._check_epochs(t)

    def _on_confirm(self, st: TxState, t: int) -> None:
        if self.collector is not None:
            self.collector.on_confirm(self, st, t)
        for wait in self.epoch_wait.values():
            wait.discard(st.tx.id)

    # -- checkpoints --------------------------------------------------------------------------------
    def _check_epochs(self, t: int) -> None:
        E = self.cfg.epoch_length
        ex = self.executor
        while epoch_executed(ex, self.next_epoch, E):
            e = self.next_epoch
            if e not in self.epoch_wait:
                self.epoch_wait[e] = epoch_pending(ex, e, E)
            if self.epoch_wait[e]:
                return
            del self.epoch_wait[e]
            msg = end_epoch(self.id, ex, e, E)
            if self.behaving("spoof_state"):
                msg = CheckpointMsg(e, msg.digest ^ 1, self.id)
            self.emitted.append(msg)
            self.next_epoch += 1
            if e in self.checkpoints.stable:
                self._collect(self.checkpoints.stable[e])
            for r in range(self.cfg.n):
                if r == self.id:
                    self.on_checkpoint(msg)
                    continue
                at = self.net.send(self.id, r, t, nbytes=64)
                if at is not None:
                    self.sim.schedule(at, self.sb.replicas[r].on_checkpoint, msg)

    def on_checkpoint(self, msg: CheckpointMsg) -> None:
        if not self.alive(self.sim.now):
            return
        stable = self.checkpoints.receive(msg)
        if stable is None:
            return
        if stable.epoch >= self.next_epoch:
            return  # not there yet; a later epoch's checkpoint will cover it
        self._collect(stable)

    def _collect(self, stable) -> None:
        if stable.epoch <= self.checkpoints.collected:
            return
        self.gc_dropped += garbage_collect(self.executor, stable, self.cfg.epoch_length, self.buckets)
        self.checkpoints.collected = stable.epoch
        self.footprint_trace.append((self.sim.now, self.executor.footprint()))

    # -- snapshots ----------------------------------------------------------------------------------
    def status_of(self, tx_id: str) -> Status:
        st = self.executor.txs.get(tx_id)
        return st.record.status if st is not None else Status.PENDING
