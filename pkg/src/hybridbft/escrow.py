"""Tentative decremental reservations with commit and abort.

The functions work against any store exposing ``value(key)``, ``con(key)``
and ``set_value(key, v)``; :class:`hybridbft.execution.ObjectStore` is the
one used by replicas.
"""
from __future__ import annotations

from dataclasses import dataclass

from .domain import OpSpec, Transaction, apply, undo


class EscrowError(AssertionError):
    """Protocol misuse of the escrow log (fatal)."""


@dataclass(frozen=True)
class EscrowEntry:
    object_key: str
    tx_id: str
    op: OpSpec
    prior_value: int


class EscrowLog:
    def __init__(self):
        self.entries: dict[tuple, EscrowEntry] = {}  # insertion ordered
        self.by_tx: dict[str, list] = {}
        self.by_object: dict[str, dict] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: tuple) -> bool:
        return key in self.entries

    def add(self, entry: EscrowEntry) -> None:
        key = (entry.object_key, entry.tx_id)
        self.entries[key] = entry
        self.by_tx.setdefault(entry.tx_id, []).append(entry)
        self.by_object.setdefault(entry.object_key, {})[entry.tx_id] = entry

    def pop_tx(self, tx_id: str) -> list:
        items = self.by_tx.pop(tx_id, [])
        for entry in items:
            del self.entries[(entry.object_key, entry.tx_id)]
            per_obj = self.by_object[entry.object_key]
            del per_obj[tx_id]
            if not per_obj:
                del self.by_object[entry.object_key]
        return items

    def pending_amount(self, object_key: str) -> int:
        return sum(e.op.amount for e in self.by_object.get(object_key, {}).values())


def _payer_op(tx: Transaction, key: str) -> OpSpec:
    total = 0
    for op in tx.payer_ops:
        if op.target_key == key:
            total += op.amount
    if total == 0:
        raise EscrowError(f"{tx.id} has no owned decrement on {key}")
    return OpSpec(key, tx.payer_ops[0].kind, total)


def escrow(store, key: str, tx: Transaction, elog: EscrowLog) -> bool:
    """Reserve ``tx``'s debit on ``key`` if the result stays at or above ``con``."""
    if (key, tx.id) in elog:
        return True
    op = _payer_op(tx, key)
    prior = store.value(key)
    value = apply(prior, op)
    if value < store.con(key):
        return False
    store.set_value(key, value)
    elog.add(EscrowEntry(key, tx.id, op, prior))
    return True


def all_escrowed(tx: Transaction, elog: EscrowLog) -> bool:
    for op in tx.payer_ops:
        if (op.target_key, tx.id) not in elog:
            return False
    return True


def commit_escrow(tx: Transaction, elog: EscrowLog) -> None:
    if not all_escrowed(tx, elog):
        raise EscrowError(f"commit of {tx.id} with missing escrow entries")
    elog.pop_tx(tx.id)


def abort_escrow(tx: Transaction, elog: EscrowLog, store) -> None:
    # Undo in reverse so repeated reservations on one key restore exactly.
    for entry in reversed(elog.pop_tx(tx.id)):
        store.set_value(entry.object_key, undo(store.value(entry.object_key), entry.op))
