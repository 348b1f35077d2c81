"""Sequenced broadcast: ideal and PBFT-like engines, failure detector, view change.

The PBFT-like engine does not schedule one event per protocol message.
When a block is broadcast, the pre-prepare arrival at every replica is
sampled, and prepared/committed times follow from order statistics:

    prepared_q  = max(a_q, k-th smallest prepare arrival at q)
    committed_q = k-th smallest commit arrival at q,   k = 2f + 1

Quorums are counted per block digest, so an equivocating leader cannot
assemble a certificate for two blocks. A replica that crashes or moves to
a view change stops sending from that moment; the in-flight block's
timeline is then recomputed with those sends removed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .domain import Block, make_block, validate_tx
from .execution import fill_noop
from .ordering import AgreementViolation, assign_rank

NEVER = kernels.NEVER


class Engine(str, enum.Enum):
    IDEAL = "ideal"
    PBFT = "pbft_like"


class Evidence(str, enum.Enum):
    TIMEOUT = "timeout"
    CENSORSHIP = "censorship"
    SPOOFED_STATE = "spoofed_state"
    MISSING_BLOCK = "missing_block"
    JOIN = "join"  # f+1 suspicions seen from others


@dataclass
class SBConfig:
    n: int
    f: int
    m: int
    engine: Engine = Engine.PBFT
    batch_size: int = 64
    batch_timeout: int = 50_000_000
    view_change_timeout: int = 10_000_000_000
    epoch_length: int = 16
    censorship_window: int = 32  # instance sns
    payload_bytes: int = 500

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1


@dataclass
class InFlight:
    """A broadcast block (or an equivocating pair) whose timeline is known in closed form."""

    instance: int
    view: int
    sn: int
    t0: int
    leader: int
    variants: list  # [(Block, receivers tuple)]
    pp: np.ndarray
    pp_extra: object
    prep: np.ndarray
    prep_extra: object
    com: np.ndarray
    com_extra: object
    version: int = 0
    prepared: list = field(default_factory=list)  # per variant: array of prepared times
    committed: list = field(default_factory=list)
    arrive: list = field(default_factory=list)


@dataclass
class ViewChangeState:
    """One replica's view of one instance's leadership."""

    view: int = 0
    in_vc: bool = False
    left: dict = field(default_factory=dict)  # view -> time this replica stopped acting in it
    suspected: set = field(default_factory=set)
    suspicions: dict = field(default_factory=dict)  # view -> set of senders
    last_progress: int = 0
    delivered: int = -1
    pending: dict = field(default_factory=dict)  # sn -> Block awaiting in-order delivery


@dataclass
class SBInstance:
    instance: int
    n: int
    engine: Engine
    view: int = 0
    proposed_sn: int = -1  # last sn handed to SB by the current view's leader
    max_broadcast: int = -1  # ideal engine: highest valid sn ever broadcast
    delivered: dict = field(default_factory=dict)  # global certified store: sn -> Block
    max_certified: int = -1
    inflight: list = field(default_factory=list)
    vc_msgs: dict = field(default_factory=dict)  # view -> {sender: payload}
    formed: set = field(default_factory=set)
    view_changes: list = field(default_factory=list)  # (start, done, from_view, to_view)
    vc_started: dict = field(default_factory=dict)  # view -> first suspicion time

    def leader(self, view: int | None = None) -> int:
        return (self.instance + (self.view if view is None else view)) % self.n

    @property
    def next_local_sn(self) -> int:
        return self.proposed_sn + 1


@dataclass
class FaultState:
    """Runtime view of the fault plan as seen by the engines."""

    crash_time: dict = field(default_factory=dict)
    lead_only_from: dict = field(default_factory=dict)
    byzantine: set = field(default_factory=set)

    def alive(self, q: int, t: int) -> bool:
        return t < self.crash_time.get(q, NEVER)

    def lead_only(self, q: int, t: int) -> bool:
        return t >= self.lead_only_from.get(q, NEVER)


class SBService:
    def __init__(self, sim, net, cfg: SBConfig, replicas, faults: FaultState,
                 assigner: Callable[[str], int], trace: list | None = None, log: Callable | None = None):
        self.sim = sim
        self.net = net
        self.cfg = cfg
        self.replicas = replicas
        self.faults = faults
        self.assigner = assigner
        self.trace = trace
        self.log = log or (lambda *a: None)
        self.instances = [SBInstance(i, cfg.n, cfg.engine) for i in range(cfg.m)]
        self.vcs = [[ViewChangeState() for _ in range(cfg.m)] for _ in range(cfg.n)]
        self.quiescent = False
        self.dropped_proposals = 0
        self.detections: list = []  # (time, replica, instance, view, evidence)
        self.rank_violations = 0

    # -- lifecycle -------------------------------------------------------------
    def start(self) -> None:
        for inst in self.instances:
            for q in range(self.cfg.n):
                self.sim.schedule(self.cfg.view_change_timeout, self._watchdog, q, inst.instance)
        for inst in self.instances:
            self.sim.schedule(0, self._ready, inst.leader(), inst.instance, 0)

    def _ready(self, q: int, i: int, sn: int) -> None:
        self.replicas[q].leader_ready(i, sn, self.sim.now)

    def is_leader(self, q: int, i: int) -> bool:
        inst = self.instances[i]
        if self.cfg.engine is Engine.IDEAL:
            return inst.leader() == q
        vc = self.vcs[q][i]
        return not vc.in_vc and inst.leader(vc.view) == q

    def delivered_sn(self, q: int, i: int) -> int:
        return self.vcs[q][i].delivered

    def delivered_state(self, q: int) -> tuple:
        return tuple(self.vcs[q][i].delivered for i in range(self.cfg.m))

    # -- ranks ------------------------------------------------------------------
    def _participates(self, q: int, i: int, t: int, leader: int) -> bool:
        if not self.faults.alive(q, t):
            return False
        return q == leader or not self.faults.lead_only(q, t)

    def _piggyback_rank(self, q: int, i: int, t: int) -> int | None:
        reports = [self.replicas[q].ranks.current()]
        for r in range(self.cfg.n):
            if r == q:
                continue
            seen = max(0, t - int(self.net.base_ns(r, q)))
            if not self._participates(r, i, seen, q):
                continue
            reports.append(self.replicas[r].ranks.at(seen))
        if len(reports) < self.cfg.quorum:
            return None
        return assign_rank(reports)

    # -- proposing ----------------------------------------------------------------
    def propose(self, q: int, i: int, sn: int, drafts: list, t: int) -> bool:
        """Leader ``q`` hands drafts [(txs, S, receivers|None)] for ``sn`` to SB."""
        inst = self.instances[i]
        vc = self.vcs[q][i]
        if self.quiescent or not self.is_leader(q, i) or sn != vc.delivered + 1 \
                or sn != inst.proposed_sn + 1 or not self.faults.alive(q, t):
            self.dropped_proposals += 1
            self.log("drop-proposal", t, q, i, sn)
            return False
        inst.proposed_sn = sn
        view = inst.view if self.cfg.engine is Engine.IDEAL else vc.view
        if self.cfg.engine is Engine.IDEAL:
            self._ideal_rank_query(q, i, sn, view, drafts, t)
        else:
            rank = self._piggyback_rank(q, i, t)
            if rank is None:
                inst.proposed_sn = sn - 1
                self.sim.after(self.cfg.batch_timeout, self._ready, q, i, sn)
                return False
            self._broadcast(q, i, sn, view, rank, drafts, t)
        return True

    def _ideal_rank_query(self, q, i, sn, view, drafts, t) -> None:
        replies = []
        for r in range(self.cfg.n):
            if r == q:
                continue
            out = self.net.latency(q, r, t)
            if not self.faults.alive(r, t + out):
                continue
            back = self.net.latency(r, q, t + out)
            replies.append((t + out + back, t + out, r))
        replies.sort()
        need = self.cfg.quorum - 1
        if len(replies) < need:
            inst = self.instances[i]
            inst.proposed_sn = sn - 1
            self.sim.after(self.cfg.batch_timeout, self._ready, q, i, sn)
            return
        chosen = replies[:need]
        done = max([t] + [c[0] for c in chosen])
        self.sim.schedule(done, self._ideal_rank_done, q, i, sn, view, drafts,
                          [(c[1], c[2]) for c in chosen])

    def _ideal_rank_done(self, q, i, sn, view, drafts, seen) -> None:
        t = self.sim.now
        inst = self.instances[i]
        if inst.view != view or inst.leader() != q or not self.faults.alive(q, t):
            if inst.proposed_sn == sn:
                inst.proposed_sn = sn - 1
            return
        reports = [self.replicas[q].ranks.current()] + [self.replicas[r].ranks.at(at) for at, r in seen]
        self._broadcast(q, i, sn, view, assign_rank(reports), drafts, t)

    def _broadcast(self, q, i, sn, view, rank, drafts, t) -> None:
        if rank <= self.replicas[q].ranks.current():
            self.rank_violations += 1
        variants = []
        all_r = tuple(range(self.cfg.n))
        for txs, S, receivers in drafts:
            b = make_block(txs, i, sn, S, rank, proposer=q, proposed_at=t)
            variants.append((b, tuple(receivers) if receivers is not None else all_r))
        nbytes = self.cfg.payload_bytes * max(len(b.txs) for b, _ in variants)
        pp, ppx = self.net.sample_matrix(nbytes, q)
        if self.cfg.engine is Engine.PBFT:
            prep, prepx = self.net.sample_matrix()
            com, comx = self.net.sample_matrix()
        else:
            prep = com = pp
            prepx = comx = None
        rec = InFlight(i, view, sn, t, q, variants, pp, ppx, prep, prepx, com, comx)
        inst = self.instances[i]
        inst.inflight = [r for r in inst.inflight if r.sn > inst.max_certified or r.view == view][-4:]
        inst.inflight.append(rec)
        self._schedule(rec)

    # -- validation ----------------------------------------------------------------
    def check_block(self, b: Block) -> Evidence | None:
        inst = self.instances[b.ins]
        if len(b.S) != self.cfg.m or b.S[b.ins] >= b.sn:
            return Evidence.MISSING_BLOCK
        for j, s in enumerate(b.S):
            if s > self.instances[j].max_certified:
                return Evidence.MISSING_BLOCK
        if b.sn > 0:
            prev = inst.delivered.get(b.sn - 1)
            if prev is None:
                return Evidence.MISSING_BLOCK
            if b.rank <= prev.rank:
                return Evidence.SPOOFED_STATE
        seen = set()
        for tx in b.txs:
            if tx.id in seen or not validate_tx(tx):
                return Evidence.SPOOFED_STATE
            seen.add(tx.id)
            if not any(self.assigner(op.target_key) == b.ins for op in tx.payer_ops):
                return Evidence.SPOOFED_STATE
        return None

    # -- timelines ------------------------------------------------------------------
    def _schedule(self, rec: InFlight) -> None:
        if self.cfg.engine is Engine.IDEAL:
            self._ideal_timeline(rec)
        else:
            self._pbft_timeline(rec)

    def _ideal_timeline(self, rec: InFlight) -> None:
        n = self.cfg.n
        (b, receivers), = rec.variants[:1]
        send = np.full(n, NEVER, dtype=np.int64)
        send[rec.leader] = rec.t0
        lat = self.net.effective(rec.pp, rec.pp_extra, send)
        evidence = self.check_block(b)
        for r in receivers:
            a = rec.t0 + int(lat[rec.leader, r])
            if not self.faults.alive(r, a):
                continue
            if evidence is not None:
                if r != rec.leader:
                    self.sim.schedule(a, self._on_invalid, rec, rec.version, r, evidence)
                continue
            self.sim.schedule(a, self._on_commit, rec, rec.version, r, 0)
        if evidence is None:
            inst = self.instances[rec.instance]
            inst.max_broadcast = max(inst.max_broadcast, rec.sn)

    def _pbft_timeline(self, rec: InFlight) -> None:
        n, k = self.cfg.n, self.cfg.quorum
        i, L, t0 = rec.instance, rec.leader, rec.t0
        cuts = np.array([self.vcs[q][i].left.get(rec.view, NEVER) for q in range(n)], dtype=np.int64)
        alive_until = np.array([self.faults.crash_time.get(q, NEVER) for q in range(n)], dtype=np.int64)
        stop = np.minimum(cuts, alive_until)
        lead_only = np.array([self.faults.lead_only_from.get(q, NEVER) if q != L else NEVER
                              for q in range(n)], dtype=np.int64)
        send_stop = np.minimum(stop, lead_only)
        leader_send = np.full(n, NEVER, dtype=np.int64)
        leader_send[L] = t0 if t0 < stop[L] else NEVER
        pp = self.net.effective(rec.pp, rec.pp_extra, leader_send)
        rec.prepared, rec.committed, rec.arrive = [], [], []
        invalid_events = []
        for d, (b, receivers) in enumerate(rec.variants):
            evidence = self.check_block(b)
            a = np.full(n, NEVER, dtype=np.int64)
            if leader_send[L] < NEVER:
                for r in receivers:
                    a[r] = t0 + int(pp[L, r])
                a[L] = t0
            a[a >= stop] = NEVER
            if evidence is not None:
                for r in range(n):
                    if r != L and a[r] < NEVER:
                        invalid_events.append((int(a[r]), r, evidence))
                a[:] = NEVER
                a_send = a
            else:
                a_send = np.where(a < send_stop, a, NEVER)
            self._trace_row(rec, "pre-prepare", L, a, b)
            prep = self.net.effective(rec.prep, rec.prep_extra, a_send)
            kth = kernels.kth_arrivals(np.ascontiguousarray(a_send), prep, k)
            prepared = np.where(a < NEVER, np.maximum(a, kth), NEVER)
            prepared[prepared >= stop] = NEVER
            c_send = np.where(prepared < send_stop, prepared, NEVER)
            com = self.net.effective(rec.com, rec.com_extra, c_send)
            committed = kernels.kth_arrivals(np.ascontiguousarray(c_send), com, k)
            committed = np.where(committed < stop, committed, NEVER)
            self.net.count_phase(int((a_send < NEVER).sum() + (c_send < NEVER).sum()) * (n - 1) + n - 1)
            if self.trace is not None:
                self._trace_matrix(rec, "prepare", a_send, prep, b)
                self._trace_matrix(rec, "commit", c_send, com, b)
            rec.arrive.append(a)
            rec.prepared.append(prepared)
            rec.committed.append(committed)
            now = self.sim.now
            for q in range(n):
                tq = int(committed[q])
                if tq < NEVER and tq >= now:
                    self.sim.schedule(tq, self._on_commit, rec, rec.version, q, d)
        now = self.sim.now
        for at, r, ev in invalid_events:
            if at >= now:
                self.sim.schedule(at, self._on_invalid, rec, rec.version, r, ev)

    def _trace_row(self, rec, phase, src, arrivals, b) -> None:
        if self.trace is None:
            return
        for r in range(self.cfg.n):
            if r != src and arrivals[r] < NEVER:
                self.trace.append((int(arrivals[r]), src, r, rec.instance, phase, rec.sn, b.digest))

    def _trace_matrix(self, rec, phase, send, lat, b) -> None:
        for s in range(self.cfg.n):
            if send[s] >= NEVER:
                continue
            for r in range(self.cfg.n):
                if r != s:
                    self.trace.append((int(send[s] + lat[s, r]), s, r, rec.instance, phase, rec.sn, b.digest))

    def _recompute(self, i: int) -> None:
        inst = self.instances[i]
        for rec in inst.inflight:
            if rec.sn <= inst.max_certified and all(
                    self.vcs[q][i].delivered >= rec.sn for q in range(self.cfg.n)
                    if self.faults.alive(q, self.sim.now)):
                continue
            rec.version += 1
            self._schedule(rec)

    def on_crash(self, q: int, t: int) -> None:
        self.faults.crash_time[q] = min(self.faults.crash_time.get(q, NEVER), t)
        if self.cfg.engine is Engine.PBFT:
            for i in range(self.cfg.m):
                self._recompute(i)

    def on_lead_only(self, q: int, t: int) -> None:
        if self.cfg.engine is Engine.PBFT:
            for i in range(self.cfg.m):
                self._recompute(i)

    # -- delivery ----------------------------------------------------------------------
    def _on_commit(self, rec: InFlight, version: int, q: int, d: int) -> None:
        if version != rec.version:
            return
        t = self.sim.now
        if not self.faults.alive(q, t):
            return
        vc = self.vcs[q][rec.instance]
        # a new-view block may overtake NEW-VIEW itself; the in-order buffer holds it
        if self.cfg.engine is Engine.PBFT and rec.view < vc.view:
            return
        self._deliver(q, rec.variants[d][0], t)

    def _deliver(self, q: int, b: Block, t: int) -> None:
        i = b.ins
        vc = self.vcs[q][i]
        inst = self.instances[i]
        if b.sn <= vc.delivered:
            known = inst.delivered.get(b.sn)
            if known is not None and known.digest != b.digest:
                raise AgreementViolation(f"replica {q} got a second block at ({i}, {b.sn})")
            return
        vc.pending[b.sn] = b
        while vc.delivered + 1 in vc.pending:
            nb = vc.pending.pop(vc.delivered + 1)
            known = inst.delivered.get(nb.sn)
            if known is None:
                inst.delivered[nb.sn] = nb
                inst.max_certified = max(inst.max_certified, nb.sn)
            elif known.digest != nb.digest:
                raise AgreementViolation(f"conflicting blocks delivered at ({i}, {nb.sn})")
            vc.delivered = nb.sn
            vc.last_progress = t
            self.replicas[q].on_sb_deliver(nb, t)
            if self.is_leader(q, i) and nb.sn == inst.proposed_sn and not self.quiescent:
                self.replicas[q].leader_ready(i, nb.sn + 1, t)

    # -- failure detection ------------------------------------------------------------
    def detect_failure(self, q: int, i: int, evidence: Evidence, t: int, view: int | None = None) -> None:
        if not self.faults.alive(q, t) or self.quiescent:
            return
        vc = self.vcs[q][i]
        inst = self.instances[i]
        v = vc.view if view is None else view
        if self.cfg.engine is Engine.IDEAL:
            v = inst.view if view is None else view
            if v != inst.view or v in vc.suspected:
                return
            vc.suspected.add(v)
            self.detections.append((t, q, i, v, Evidence(evidence).value))
            self._ideal_view_change(i, v, q, t)
            return
        if v < vc.view or v in vc.suspected:
            return
        vc.suspected.add(v)
        self.detections.append((t, q, i, v, Evidence(evidence).value))
        inst.vc_started.setdefault(v, t)
        for r in range(self.cfg.n):
            if r == q:
                self._on_suspect(r, i, v, q)
                continue
            at = self.net.send(q, r, t)
            if at is not None:
                self.sim.schedule(at, self._on_suspect, r, i, v, q)

    def _on_invalid(self, rec: InFlight, version: int, q: int, evidence: Evidence) -> None:
        if version != rec.version:
            return
        self.detect_failure(q, rec.instance, evidence, self.sim.now, view=rec.view)

    def _on_suspect(self, q: int, i: int, v: int, sender: int) -> None:
        t = self.sim.now
        if not self.faults.alive(q, t) or self.quiescent:
            return
        vc = self.vcs[q][i]
        if v < vc.view:
            return
        senders = vc.suspicions.setdefault(v, set())
        senders.add(sender)
        if len(senders) >= self.cfg.f + 1 and v not in vc.suspected:
            self.detect_failure(q, i, Evidence.JOIN, t, view=v)
        if len(senders) >= self.cfg.quorum and vc.view == v:
            self._enter_vc(q, i, v + 1, t)

    def _watchdog(self, q: int, i: int) -> None:
        t = self.sim.now
        if self.quiescent or not self.faults.alive(q, t):
            return
        vc = self.vcs[q][i]
        deadline = vc.last_progress + self.cfg.view_change_timeout
        if t < deadline:
            self.sim.schedule(deadline, self._watchdog, q, i)
            return
        self.detect_failure(q, i, Evidence.TIMEOUT, t)
        vc.last_progress = t
        self.sim.schedule(t + self.cfg.view_change_timeout, self._watchdog, q, i)

    # -- view change (pbft_like) --------------------------------------------------------------
    def _leave(self, q: int, i: int, w: int, t: int) -> None:
        vc = self.vcs[q][i]
        changed = False
        for u in range(vc.view, w):
            if u not in vc.left:
                vc.left[u] = t
                changed = True
        if changed:
            self._recompute(i)

    def _enter_vc(self, q: int, i: int, w: int, t: int) -> None:
        self._leave(q, i, w, t)
        vc = self.vcs[q][i]
        vc.view, vc.in_vc, vc.last_progress = w, True, t
        prepared = {}
        for rec in self.instances[i].inflight:
            if rec.view >= w or rec.sn <= vc.delivered:
                continue
            for d, (b, _) in enumerate(rec.variants):
                if d < len(rec.prepared) and rec.prepared[d][q] <= t:
                    if rec.sn not in prepared or prepared[rec.sn][0] < rec.view:
                        prepared[rec.sn] = (rec.view, b)
        payload = (vc.delivered, prepared)
        L = self.instances[i].leader(w)
        if L == q:
            self._on_vc(L, i, w, q, payload)
            return
        at = self.net.send(q, L, t, nbytes=64 * (1 + len(prepared)))
        if at is not None:
            self.sim.schedule(at, self._on_vc, L, i, w, q, payload)

    def _on_vc(self, L: int, i: int, w: int, sender: int, payload) -> None:
        t = self.sim.now
        inst = self.instances[i]
        if not self.faults.alive(L, t) or w in inst.formed or self.quiescent:
            return
        if self.vcs[L][i].view > w:
            return
        msgs = inst.vc_msgs.setdefault(w, {})
        msgs[sender] = payload
        if len(msgs) < self.cfg.quorum:
            return
        inst.formed.add(w)
        D = max(p[0] for p in msgs.values())
        D = max(D, self.vcs[L][i].delivered)
        repro = []
        sn = D + 1
        while True:
            cands = [p[1][sn] for p in msgs.values() if sn in p[1]]
            if not cands:
                break
            top = max(v for v, _ in cands)
            chosen = {b.digest: b for v, b in cands if v == top}
            if len(chosen) > 1:
                raise AgreementViolation(f"two blocks prepared in view {top} at ({i}, {sn})")
            repro.append(next(iter(chosen.values())))
            sn += 1
        noops = self._noop_fill(L, i, sn, [b.rank for b in repro], t)
        self._install_blocks(i, repro + noops)
        inst.view = w
        inst.proposed_sn = (noops[-1].sn if noops else (repro[-1].sn if repro else D))
        inst.view_changes.append((inst.vc_started.get(w - 1, t), t, w - 1, w))
        nv = (w, D, tuple(repro + noops))
        for r in range(self.cfg.n):
            if r == L:
                self._on_new_view(r, i, nv)
                continue
            at = self.net.send(L, r, t, nbytes=64 * (1 + len(nv[2])))
            if at is not None:
                self.sim.schedule(at, self._on_new_view, r, i, nv)

    def _noop_fill(self, L: int, i: int, start_sn: int, extra_ranks: list, t: int) -> list:
        E = self.cfg.epoch_length
        end = (start_sn // E + 1) * E
        r0 = max([self.replicas[L].ranks.current(), self.instances[i].delivered[start_sn - 1].rank
                  if start_sn > 0 and (start_sn - 1) in self.instances[i].delivered else 0] + extra_ranks)
        out = []
        for k, sn in enumerate(range(start_sn, end)):
            S = [-1] * self.cfg.m
            S[i] = sn - 1
            out.append(fill_noop(i, sn, r0 + 1 + k, S, proposer=L, t=t))
        return out

    def _install_blocks(self, i: int, blocks: list) -> None:
        inst = self.instances[i]
        for b in blocks:
            known = inst.delivered.get(b.sn)
            if known is not None:
                if known.digest != b.digest:
                    raise AgreementViolation(f"new view overrides delivered block ({i}, {b.sn})")
                continue
            inst.delivered[b.sn] = b
            inst.max_certified = max(inst.max_certified, b.sn)

    def _on_new_view(self, q: int, i: int, nv) -> None:
        t = self.sim.now
        if not self.faults.alive(q, t):
            return
        w, D, blocks = nv
        vc = self.vcs[q][i]
        if vc.view > w or (vc.view == w and not vc.in_vc and w > 0 and vc.delivered >= D
                           and all(b.sn <= vc.delivered for b in blocks)):
            return
        self._leave(q, i, w, t)
        vc.view, vc.in_vc, vc.last_progress = w, False, t
        inst = self.instances[i]
        for sn in range(vc.delivered + 1, D + 1):
            self._deliver(q, inst.delivered[sn], t)
        for b in blocks:
            self._deliver(q, b, t)
        if self.is_leader(q, i) and vc.delivered == inst.proposed_sn and not self.quiescent:
            self.replicas[q].leader_ready(i, vc.delivered + 1, t)

    # -- view change (ideal) -------------------------------------------------------------------
    def _ideal_view_change(self, i: int, v: int, q: int, t: int) -> None:
        inst = self.instances[i]
        inst.view = v + 1
        inst.vc_started.setdefault(v, t)
        for r in range(self.cfg.n):
            self.vcs[r][i].view = v + 1
            self.vcs[r][i].last_progress = t
        L = inst.leader()
        self.sim.schedule(t + self.net.latency(q, L, t), self._ideal_install, i, v + 1)

    def _ideal_install(self, i: int, w: int) -> None:
        t = self.sim.now
        inst = self.instances[i]
        if inst.view != w or self.quiescent:
            return
        L = inst.leader()
        if not self.faults.alive(L, t):
            return
        D = max(inst.max_certified, inst.max_broadcast)
        pending = [rec for rec in inst.inflight if rec.sn > inst.max_certified]
        noops = self._noop_fill(L, i, D + 1, [rec.variants[0][0].rank for rec in pending], t)
        self._install_blocks(i, noops)
        inst.proposed_sn = noops[-1].sn if noops else D
        inst.view_changes.append((inst.vc_started.get(w - 1, t), t, w - 1, w))
        for r in range(self.cfg.n):
            at = t + self.net.latency(L, r, t)
            for b in noops:
                self.sim.schedule(at, self._deliver_alive, r, b)
            if not noops and r == L:
                self.sim.schedule(t, self._kick_leader, L, i)

    def _deliver_alive(self, q: int, b: Block) -> None:
        if self.faults.alive(q, self.sim.now):
            self._deliver(q, b, self.sim.now)

    def _kick_leader(self, q: int, i: int) -> None:
        inst = self.instances[i]
        vc = self.vcs[q][i]
        if self.is_leader(q, i) and vc.delivered == inst.proposed_sn and not self.quiescent:
            self.replicas[q].leader_ready(i, vc.delivered + 1, self.sim.now)
