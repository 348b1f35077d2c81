"""Throughput, latency and the five-stage latency breakdown.

Stages of a transaction, measured at replica R, the replica whose confirm
time is the (f+1)-th smallest (the earliest point a client can hold f+1
matching replies):

    send           submit -> first replica receives the tx
    preprocess     -> leader broadcast of the block that decided the tx
    partial_order  -> every plog position of the tx processed at R
    global_order   -> confirmed at R (exactly 0 on the partial path)
    reply          -> client holds f+1 replies

The stages telescope, so their sum is the end-to-end latency exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sim.events import NS_PER_S

STAGES = ("send", "preprocess", "partial_order", "global_order", "reply")


class StageOrderError(AssertionError):
    pass


@dataclass
class StageTimestamps:
    tx_id: str
    kind: str
    path: str
    status: str
    submit: int
    stamps: dict  # stage -> absolute end time

    def record_stage(self, stage: str, t: int) -> None:
        if stage in self.stamps:
            raise StageOrderError(f"{self.tx_id}: stage {stage} stamped twice")
        k = STAGES.index(stage)
        prev = self.submit if k == 0 else self.stamps.get(STAGES[k - 1])
        if prev is None or t < prev:
            raise StageOrderError(f"{self.tx_id}: stage {stage} at {t} before previous stage {prev}")
        self.stamps[stage] = t

    def durations(self) -> dict:
        out, prev = {}, self.submit
        for stage in STAGES:
            out[stage] = self.stamps[stage] - prev
            prev = self.stamps[stage]
        return out

    @property
    def total(self) -> int:
        return self.stamps["reply"] - self.submit


def breakdown(result) -> list:
    """StageTimestamps for every tx confirmed at the client."""
    kinds = result.kinds
    out = []
    f = result.f
    for tx_id in sorted(result.times):
        rec = result.times[tx_id]
        client_t = rec.client_confirm(f)
        honest = [(v[0], r, v) for r, v in rec.confirms.items() if r in set(result.honest)]
        if client_t is None or len(honest) < f + 1 or rec.first_receipt is None:
            continue
        honest.sort()
        confirm, partial, broadcast, status, path = honest[f][2]
        partial = confirm if partial is None else min(partial, confirm)
        broadcast = partial if broadcast is None else min(max(broadcast, rec.first_receipt), partial)
        st = StageTimestamps(tx_id, kinds[tx_id], path, status, rec.submit, {})
        st.record_stage("send", rec.first_receipt)
        st.record_stage("preprocess", broadcast)
        st.record_stage("partial_order", partial)
        st.record_stage("global_order", confirm)
        st.record_stage("reply", client_t)
        out.append(st)
    return out


def throughput_series(result, bucket_s: float = 0.5) -> list:
    """(bucket start in s, tps) by client-confirm time; the integral is the confirmed count."""
    width = int(round(bucket_s * NS_PER_S))
    counts: dict = {}
    for rec in result.times.values():
        t = rec.client_confirm(result.f)
        if t is not None:
            counts[t // width] = counts.get(t // width, 0) + 1
    if not counts:
        return []
    last = max(counts)
    return [(k * bucket_s, counts.get(k, 0) / bucket_s) for k in range(last + 1)]


def _stats(values) -> dict:
    if len(values) == 0:
        return {"count": 0, "mean_ms": 0.0, "median_ms": 0.0, "p99_ms": 0.0}
    arr = np.asarray(values, dtype=float) / 1e6
    return {"count": int(arr.size), "mean_ms": float(arr.mean()), "median_ms": float(np.median(arr)),
            "p99_ms": float(np.percentile(arr, 99))}


def summarize(result, stamps: list | None = None) -> dict:
    stamps = breakdown(result) if stamps is None else stamps
    groups = {"all": stamps}
    for st in stamps:
        groups.setdefault(f"kind={st.kind}", []).append(st)
        groups.setdefault(f"path={st.path}", []).append(st)
        groups.setdefault(f"kind={st.kind},path={st.path}", []).append(st)
    out = {}
    for name in sorted(groups):
        items = groups[name]
        row = _stats([st.total for st in items])
        for stage in STAGES:
            vals = [st.durations()[stage] for st in items]
            row[f"{stage}_mean_ms"] = float(np.mean(vals)) / 1e6 if vals else 0.0
        out[name] = row
    return out


def mean_latency_ms(result, kind: str | None = None) -> float:
    vals = [st.total for st in breakdown(result) if kind is None or st.kind == kind]
    return float(np.mean(vals)) / 1e6 if vals else float("nan")


def _fmt(x) -> str:
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def report(result, out_dir, bucket_s: float = 0.5) -> dict:
    """Write throughput.csv, latency.csv, summary.csv, confirmations.csv and glog dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamps = breakdown(result)
    series = throughput_series(result, bucket_s)
    (out / "throughput.csv").write_text(_csv(series, ["t_s", "tps"]))
    lat_rows = []
    for st in stamps:
        d = st.durations()
        lat_rows.append([st.tx_id, st.kind, st.path, st.status] + [d[s] for s in STAGES] + [st.total])
    (out / "latency.csv").write_text(
        _csv(lat_rows, ["tx_id", "kind", "path", "status"] + [f"{s}_ns" for s in STAGES] + ["total_ns"]))
    summary = summarize(result, stamps)
    cols = ["count", "mean_ms", "median_ms", "p99_ms"] + [f"{s}_mean_ms" for s in STAGES]
    (out / "summary.csv").write_text(
        _csv([[name] + [summary[name][c] for c in cols] for name in summary], ["group"] + cols))
    conf_rows = []
    kinds = result.kinds
    for tx_id in sorted(result.times):
        rec = result.times[tx_id]
        client_t = rec.client_confirm(result.f)
        honest = sorted((v[0], r, v) for r, v in rec.confirms.items() if r in set(result.honest))
        status = honest[0][2][3] if honest else "pending"
        path = honest[0][2][4] if honest else ""
        conf_rows.append([tx_id, kinds[tx_id], rec.submit, "" if client_t is None else client_t, status, path])
    (out / "confirmations.csv").write_text(
        _csv(conf_rows, ["tx_id", "kind", "submit_time", "confirm_time", "status", "path"]))
    for rid, records in sorted(result.glog_records.items()):
        if rid not in result.honest:
            continue
        lines = [f"{t} {rank} {ins} {sn} {ntx}" for (t, rank, ins, sn, ntx) in records]
        (out / f"glog_r{rid}.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    if result.message_trace is not None:
        lines = [f"{t} {src} {dst} {ins} {phase} {sn} {digest:016x}"
                 for (t, src, dst, ins, phase, sn, digest) in sorted(result.message_trace)]
        (out / "trace.txt").write_text("\n".join(lines) + ("\n" if lines else ""))
    return summary
