"""Partial logs, ranks and the dynamic global ordering of delivered blocks."""
from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass, field
from typing import Iterable

from .domain import Block


class AgreementViolation(AssertionError):
    pass


class BarViolation(AssertionError):
    pass


def precedes(b: Block, b2: Block) -> bool:
    if b.rank == b2.rank and b.ins == b2.ins and b is not b2 and b.digest != b2.digest:
        raise AgreementViolation(f"distinct blocks share (rank={b.rank}, ins={b.ins})")
    return (b.rank, b.ins) < (b2.rank, b2.ins)


def key_precedes(key: tuple, key2: tuple) -> bool:
    return key < key2


def find_lowest_block(V: Iterable[Block]) -> Block | None:
    best = None
    for b in V:
        if best is None or precedes(b, best):
            best = b
    return best


def assign_rank(reports: Iterable[int]) -> int:
    """One more than the highest rank reported by the quorum."""
    reports = list(reports)
    if not reports:
        raise ValueError("rank quorum is empty")
    return 1 + max(reports)


class RankHistory:
    """Step function of a replica's highest delivered rank over time."""

    def __init__(self):
        self.times = [0]
        self.values = [0]

    def observe(self, t: int, rank: int) -> None:
        if rank <= self.values[-1]:
            return
        if t == self.times[-1]:
            self.values[-1] = rank
        else:
            self.times.append(t)
            self.values.append(rank)

    def current(self) -> int:
        return self.values[-1]

    def at(self, t: int) -> int:
        k = bisect.bisect_right(self.times, t) - 1
        return self.values[k] if k >= 0 else 0


class PartialLog:
    """``plog[i][sn]`` for one instance, filled only by delivery."""

    def __init__(self, instance: int):
        self.instance = instance
        self.blocks: dict[int, Block] = {}
        self.max_sn = -1  # highest contiguously delivered sn
        self.pruned_below = 0

    def __contains__(self, sn: int) -> bool:
        return sn in self.blocks

    def __getitem__(self, sn: int) -> Block:
        return self.blocks[sn]

    def put(self, b: Block) -> None:
        if b.sn in self.blocks:
            if self.blocks[b.sn].digest != b.digest:
                raise AgreementViolation(f"two blocks delivered at ({b.ins}, {b.sn})")
            return
        if b.sn != self.max_sn + 1:
            raise ValueError(f"out-of-order delivery ({b.ins}, {b.sn}) after {self.max_sn}")
        self.blocks[b.sn] = b
        self.max_sn = b.sn

    def get(self, sn: int) -> Block | None:
        return self.blocks.get(sn)

    def prune(self, below_sn: int) -> int:
        dropped = 0
        for sn in range(self.pruned_below, below_sn):
            if self.blocks.pop(sn, None) is not None:
                dropped += 1
        self.pruned_below = max(self.pruned_below, below_sn)
        return dropped


@dataclass
class GlobalLog:
    """Confirmed blocks in global order, plus a light (time, rank, ins, sn, n) record."""

    blocks: list = field(default_factory=list)
    records: list = field(default_factory=list)
    offset: int = 0  # number of pruned blocks at the front

    def append(self, b: Block, t: int = 0) -> None:
        self.blocks.append(b)
        self.records.append((t, b.rank, b.ins, b.sn, len(b.txs)))

    def __len__(self) -> int:
        return self.offset + len(self.blocks)

    def get(self, pos: int) -> Block:
        return self.blocks[pos - self.offset]

    def last_key(self) -> tuple | None:
        if not self.records:
            return None
        r = self.records[-1]
        return (r[1], r[2])

    def prune(self, upto: int) -> int:
        k = max(0, upto - self.offset)
        del self.blocks[:k]
        self.offset += k
        return k


class OrderingState:
    """W (heap keyed by (rank, ins)), last delivered block per instance, and the bar."""

    def __init__(self, m: int):
        self.m = m
        self.W: list = []
        self.last: list = [None] * m
        self.bar = (0, 0)
        self.delivered_count = 0

    def compute_bar(self) -> tuple:
        if any(b is None for b in self.last):
            return self.bar
        lowest = find_lowest_block(self.last)
        return (lowest.rank + 1, lowest.ins)


def global_order(b: Block, state: OrderingState, glog: GlobalLog, t: int = 0) -> list:
    """Add a delivered block and confirm every waiting block below the bar."""
    last_key = glog.last_key()
    if last_key is not None and (b.rank, b.ins) < last_key:
        raise BarViolation(f"block ({b.ins},{b.sn}) rank {b.rank} delivered below confirmed {last_key}")
    heapq.heappush(state.W, (b.rank, b.ins, b.sn, b))
    prev = state.last[b.ins]
    if prev is not None and (prev.sn >= b.sn or prev.rank >= b.rank):
        raise AgreementViolation(
            f"instance {b.ins}: block sn={b.sn} rank={b.rank} follows sn={prev.sn} rank={prev.rank}")
    state.last[b.ins] = b
    state.delivered_count += 1
    bar = state.compute_bar()
    if bar < state.bar:
        raise BarViolation(f"bar moved backwards {state.bar} -> {bar}")
    state.bar = bar
    confirmed = []
    while state.W and (state.W[0][0], state.W[0][1]) < bar:
        _, _, _, cand = heapq.heappop(state.W)
        glog.append(cand, t)
        confirmed.append(cand)
    return confirmed
