"""Clients: submission to f+1 replicas and reply counting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TxTimes:
    submit: int
    client: int
    first_receipt: int | None = None
    replies: list = field(default_factory=list)  # reply arrival times at the client
    confirms: dict = field(default_factory=dict)  # replica -> (confirm, partial, broadcast, status, path)

    def client_confirm(self, f: int) -> int | None:
        """Time the client holds f+1 replies."""
        if len(self.replies) < f + 1:
            return None
        return sorted(self.replies)[f]


class Collector:
    """Scenario-wide observer of receipts, confirmations and replies."""

    def __init__(self, n: int, f: int, sim, net, honest: set, txs, client_of: dict,
                 on_quiescent=None):
        self.n, self.f = n, f
        self.sim, self.net = sim, net
        self.honest = set(honest)
        self.times = {tx.id: TxTimes(tx.submit_time, client_of.get(tx.id, 0)) for tx in txs}
        self.total = len(self.times)
        self.done = {r: 0 for r in sorted(self.honest)}
        self.on_quiescent = on_quiescent
        self.quiescent_at = None
        self.deliveries = 0

    def client_node(self, client: int) -> int:
        return self.n + client

    def on_receipt(self, tx_id: str, t: int) -> None:
        rec = self.times.get(tx_id)
        if rec is not None and (rec.first_receipt is None or t < rec.first_receipt):
            rec.first_receipt = t

    def on_deliver(self, rid: int, b, t: int) -> None:
        self.deliveries += 1

    def on_confirm(self, replica, st, t: int) -> None:
        rec = self.times.get(st.tx.id)
        if rec is None:
            return
        r = st.record
        rec.confirms[replica.id] = (t, r.partial_time, r.deciding_broadcast, r.status.value, r.path)
        if not replica.byzantine:
            at = self.net.send(replica.id, self.client_node(rec.client), t)
            if at is not None:
                rec.replies.append(at)
        if replica.id in self.done:
            self.done[replica.id] += 1
            self._check_quiescent(t)

    def _check_quiescent(self, t: int) -> None:
        # faulty replicas are not waited for; honest ones never crash
        if self.quiescent_at is None and all(v >= self.total for v in self.done.values()):
            self.quiescent_at = t
            if self.on_quiescent is not None:
                self.on_quiescent(t)


class ClientPool:
    def __init__(self, n: int, f: int, fanout: int, sim, net, replicas, rng: np.random.Generator,
                 payload_bytes: int = 500):
        self.n, self.f, self.fanout = n, f, fanout
        self.sim, self.net = sim, net
        self.replicas = replicas
        self.rng = rng
        self.payload_bytes = payload_bytes

    def schedule(self, txs, client_of: dict) -> None:
        for tx in txs:
            self.sim.schedule(tx.submit_time, self.client_submit, tx, client_of.get(tx.id, 0))

    def client_submit(self, tx, client: int) -> None:
        t = self.sim.now
        node = self.n + client
        targets = self.rng.choice(self.n, size=self.fanout, replace=False)
        for r in sorted(int(x) for x in targets):
            at = self.net.send(node, r, t, nbytes=self.payload_bytes)
            if at is not None:
                self.sim.schedule(at, self.replicas[r].on_client_tx, tx, True)
