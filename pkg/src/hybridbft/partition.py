"""Object-to-instance assignment and per-instance transaction buckets."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .domain import OpKind, OpSpec, ObjType, Transaction


def _hash64(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def assign(o_key: str, m: int, overrides: Mapping[str, int] | None = None) -> int:
    """Instance owning ``o_key``: ``blake2b64(utf-8 key) mod m`` unless overridden."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if overrides is not None and o_key in overrides:
        return overrides[o_key] % m
    return _hash64(o_key) % m


@dataclass
class Assigner:
    """Memoised ``assign`` with an optional override map (used for worked examples)."""

    m: int
    overrides: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, key: str) -> int:
        idx = self._cache.get(key)
        if idx is None:
            idx = assign(key, self.m, self.overrides)
            self._cache[key] = idx
        return idx


def route(tx: Transaction, m: int, assigner: Callable[[str], int] | None = None) -> tuple:
    """Sorted instances that must order ``tx``: one per debited owned object."""
    pick = assigner or (lambda key: assign(key, m))
    out = sorted({pick(op.target_key) for op in tx.payer_ops})
    if not out:
        raise ValueError(f"transaction {tx.id} has no owned decremental operation to route on")
    return tuple(out)


def anchor_fee(ops: Iterable[OpSpec], client: str, fee: int = 1) -> tuple:
    """Give a contract with no owned decrement a unit fee debit from its client."""
    ops = tuple(ops)
    if any(op.owned_decrement for op in ops):
        return ops
    return (OpSpec(client, OpKind.DECREMENT, fee, ObjType.OWNED),) + ops


@dataclass
class BucketEntry:
    tx: Transaction
    arrival_sn: int  # instance sn frontier when the tx entered the bucket
    arrival_time: int
    removed: bool = False


class Bucket:
    """Append-only FIFO of transactions for one instance.

    Backups only append. The instance leader removes entries when it pulls
    them (or finds them already delivered) so they are never proposed twice.
    """

    def __init__(self, instance: int):
        self.instance = instance
        self.entries: list[BucketEntry] = []
        self.index: dict[str, BucketEntry] = {}
        self._head = 0

    def __len__(self) -> int:
        return sum(1 for _ in self.live())

    def __contains__(self, tx_id: str) -> bool:
        return tx_id in self.index

    def push(self, tx: Transaction, arrival_sn: int = -1, arrival_time: int = 0) -> bool:
        if tx.id in self.index:
            return False
        entry = BucketEntry(tx, arrival_sn, arrival_time)
        self.entries.append(entry)
        self.index[tx.id] = entry
        return True

    def live(self):
        for k in range(self._head, len(self.entries)):
            entry = self.entries[k]
            if not entry.removed:
                yield entry

    def remove(self, tx_id: str) -> None:
        entry = self.index.get(tx_id)
        if entry is not None:
            entry.removed = True
        while self._head < len(self.entries) and self.entries[self._head].removed:
            self._head += 1

    def restore(self, tx_ids: Iterable[str]) -> None:
        """Undo a pull whose proposal never reached SB."""
        for tx_id in tx_ids:
            entry = self.index.get(tx_id)
            if entry is None or not entry.removed:
                continue
            entry.removed = False
            pos = self.entries.index(entry, 0)
            self._head = min(self._head, pos)

    def oldest(self, skip: Callable[[str], bool] | None = None) -> BucketEntry | None:
        for entry in self.live():
            if skip is None or not skip(entry.tx.id):
                return entry
        return None

    def compact(self) -> int:
        """Drop removed entries from storage (ids stay in the index for dedup)."""
        before = len(self.entries)
        self.entries = [e for e in self.entries[self._head:] if not e.removed]
        self._head = 0
        return before - len(self.entries)


def pull_valid_txs(bucket: Bucket, S, max_count: int, projection=None,
                   delivered: Callable[[str], bool] | None = None,
                   current_sn: int | None = None, expire_after: int | None = None) -> list:
    """Pull up to ``max_count`` of the oldest transactions valid under ``S``.

    ``projection.reserve(tx, S)`` answers whether the tx's debits on this
    instance are covered by the leader's balance projection at ``S`` and, if
    so, books them against the draft block. Entries that stayed unfundable
    for more than ``expire_after`` instance sequence numbers are pulled
    anyway so they reach a deterministic abort instead of waiting forever.
    Already-delivered entries are dropped on the way. Waiting for a full
    batch is the caller's business.
    """
    out = []
    if max_count <= 0:
        return out
    for entry in list(bucket.live()):
        tx = entry.tx
        if delivered is not None and delivered(tx.id):
            bucket.remove(tx.id)
            continue
        ok = projection is None or projection.reserve(tx, S)
        if not ok and expire_after is not None and current_sn is not None:
            ok = current_sn - entry.arrival_sn > expire_after
            if ok and projection is not None:
                projection.force(tx)
        if ok:
            out.append(tx)
            bucket.remove(tx.id)
            if len(out) >= max_count:
                break
    return out
