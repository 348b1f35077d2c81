"""Wire a scenario together, run it, and hand back everything the oracles need."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..checkpoint import CheckpointConflict
from ..escrow import EscrowError
from ..execution import ExecutionViolation, Status
from ..oracle import BlockView, ReplicaSnapshot, RunSnapshot, TxOutcome
from ..ordering import AgreementViolation, BarViolation
from ..partition import Assigner
from ..replica import Replica
from ..sb import Engine, FaultState, SBConfig, SBService
from .client import ClientPool, Collector
from .config import ScenarioConfig
from .events import NS_PER_MS, Simulator, ms, sec
from .network import NetworkModel
from .workload import Workload, generate_workload, read_trace

FATAL = (AgreementViolation, BarViolation, ExecutionViolation, EscrowError, CheckpointConflict)


@dataclass
class RunResult:
    config: dict
    seed: int
    n: int
    f: int
    m: int
    mode: str
    workload: Workload
    times: dict  # tx id -> TxTimes
    snapshot: RunSnapshot
    honest: list
    faulty: list
    end_time: int
    quiescent_at: int | None
    events: int
    trace_digest: str
    error: str | None = None
    view_changes: list = field(default_factory=list)  # (instance, start, done, from_view, to_view)
    detections: list = field(default_factory=list)
    noops: int = 0
    stats: dict = field(default_factory=dict)
    footprints: dict = field(default_factory=dict)  # replica -> [(t, footprint)]
    checkpoints: dict = field(default_factory=dict)  # replica -> [(epoch, digest)]
    message_trace: list | None = None
    glog_records: dict = field(default_factory=dict)  # replica -> [(t, rank, ins, sn, ntx)]

    @property
    def kinds(self) -> dict:
        return {tx.id: tx.kind.value for tx in self.workload.txs}


def load_workload(cfg: ScenarioConfig, seed: int) -> Workload:
    if cfg.workload.trace:
        return read_trace(cfg.workload.trace, cfg.workload.clients)
    return generate_workload(cfg.workload, seed)


def build_sb_config(cfg: ScenarioConfig) -> SBConfig:
    s = cfg.system
    return SBConfig(n=s.n, f=s.f, m=s.m, engine=Engine(s.engine), batch_size=s.batch_size,
                    batch_timeout=ms(s.batch_timeout_ms),
                    view_change_timeout=sec(s.view_change_timeout_s),
                    epoch_length=s.epoch_length, censorship_window=s.censorship_window,
                    payload_bytes=cfg.workload.payload_bytes)


def run_scenario(cfg: ScenarioConfig, seed: int | None = None, workload: Workload | None = None,
                 overrides: dict | None = None) -> RunResult:
    """Execute one scenario to quiescence or the horizon.

    ``overrides`` maps replica id -> assignment override map (tests only).
    """
    cfg = cfg.copy()
    if seed is not None:
        cfg.run.seed = int(seed)
    cfg.validate()
    seed = cfg.run.seed
    s = cfg.system
    n, f, m = s.n, s.f, s.m
    root = np.random.SeedSequence(seed)
    net_ss, exec_ss, client_ss = root.spawn(3)
    if workload is None:
        workload = load_workload(cfg, seed)
    assigner = Assigner(m, dict(overrides or {}))
    sim = Simulator()
    net = NetworkModel(cfg.network, n, np.random.default_rng(net_ss))
    sbcfg = build_sb_config(cfg)
    faulty = cfg.faults.faulty()
    honest = [r for r in range(n) if r not in faulty]
    fstate = FaultState(byzantine=set(faulty))
    exec_rngs = [np.random.default_rng(x) for x in exec_ss.spawn(n)]
    collector = Collector(n, f, sim, net, set(honest), workload.txs, workload.client_of)
    replicas = [
        Replica(r, sbcfg, workload.objects, assigner, s.mode, exec_rngs[r], sim, net,
                fault=cfg.faults.for_replica(r), collector=collector, track_states=cfg.run.track_states)
        for r in range(n)
    ]
    message_trace = [] if cfg.run.trace else None
    sb = SBService(sim, net, sbcfg, replicas, fstate, assigner, trace=message_trace)
    for rep in replicas:
        rep.sb = sb

    def quiesce(t):
        sb.quiescent = True

    collector.on_quiescent = quiesce
    for spec in cfg.faults.faults:
        if spec.start_ns is not None:
            sim.schedule(spec.start_ns, replicas[spec.replica].activate_fault, spec.start_ns)
    clients = ClientPool(n, f, s.client_fanout, sim, net, replicas, np.random.default_rng(client_ss),
                         cfg.workload.payload_bytes)
    clients.schedule(workload.txs, workload.client_of)
    if not workload.txs:
        sb.quiescent = True
        collector.quiescent_at = 0
    sb.start()
    error = None
    try:
        sim.run(until=sec(cfg.run.horizon_s))
    except FATAL as exc:
        error = f"{type(exc).__name__}: {exc}"
    return _collect(cfg, seed, workload, sim, net, sb, replicas, collector, honest, faulty,
                    assigner, error, message_trace)


def _block_view(b) -> BlockView:
    return BlockView(b.ins, b.sn, b.rank, b.digest, tuple(tx.id for tx in b.txs), b.noop)


def _collect(cfg, seed, workload, sim, net, sb, replicas, collector, honest, faulty, assigner,
             error, message_trace) -> RunResult:
    s = cfg.system
    m = s.m
    views = {}
    for inst in sb.instances:
        views[inst.instance] = {sn: _block_view(b) for sn, b in inst.delivered.items()}
    snaps = []
    for rep in replicas:
        ex = rep.executor
        delivered = {i: [views[i][sn] for sn in range(sb.vcs[rep.id][i].delivered + 1)] for i in range(m)}
        glog = [views[ins][sn] for (_, _, ins, sn, _) in ex.glog.records]
        outcomes = {tx_id: TxOutcome(st.record.status.value, st.record.path, st.record.reason)
                    for tx_id, st in ex.txs.items() if st.record.status is not Status.PENDING}
        snaps.append(ReplicaSnapshot(
            rid=rep.id, honest=rep.id in honest, alive=rep.alive(sim.now),
            store=ex.store.snapshot(), outcomes=outcomes, state_hashes=dict(ex.state_hashes),
            final_key=ex.state_key(), delivered=delivered, glog=glog, elog_size=len(ex.elog)))
    routes = {tx.id: tuple(sorted({assigner(op.target_key) for op in tx.payer_ops})) for tx in workload.txs}
    snapshot = RunSnapshot(m, list(workload.objects), {tx.id: tx for tx in workload.txs}, routes, snaps,
                           s.mode)
    vcs = [(inst.instance,) + tuple(vc) for inst in sb.instances for vc in inst.view_changes]
    vcs.sort()
    stats = {
        "messages_sent": net.sent,
        "messages_dropped": net.dropped,
        "phase_messages": net.phase_messages,
        "max_post_gst_delay_ms": net.max_post_gst_delay / NS_PER_MS,
        "dropped_proposals": sb.dropped_proposals,
        "rank_violations": sb.rank_violations,
        "gc_dropped": {r.id: r.gc_dropped for r in replicas},
    }
    return RunResult(
        config=cfg.to_dict(), seed=seed, n=s.n, f=s.f, m=m, mode=s.mode, workload=workload,
        times=collector.times, snapshot=snapshot, honest=honest, faulty=faulty, end_time=sim.now,
        quiescent_at=collector.quiescent_at, events=sim.processed, trace_digest=sim.trace_digest,
        error=error, view_changes=vcs, detections=list(sb.detections),
        noops=max((r.executor.noops for r in replicas), default=0), stats=stats,
        footprints={r.id: list(r.footprint_trace) for r in replicas},
        checkpoints={r.id: [(c.epoch, c.digest) for c in r.emitted] for r in replicas},
        message_trace=message_trace,
        glog_records={r.id: list(r.executor.glog.records) for r in replicas})
