"""Core value types: objects, operations, transactions, blocks, system states.

Content digests
---------------
Every digest in the package is ``blake2b(payload, digest_size=8)`` read as a
big-endian unsigned 64-bit integer, where ``payload`` is the canonical JSON
encoding (``sort_keys=True``, ``separators=(",", ":")``) of the fields listed
in each ``canonical()`` method, in that order. Keys are UTF-8 strings. The
definition is stable across processes and Python hash seeds, so traces and
checkpoints reproduce byte for byte.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

BOTTOM = -1  # "no block delivered yet" entry of a SystemState

SystemState = tuple  # tuple[int, ...] of per-instance sequence numbers


def digest64(payload) -> int:
    data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def key_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


class ObjType(str, enum.Enum):
    OWNED = "owned"
    SHARED = "shared"


class OpKind(str, enum.Enum):
    INCREMENT = "increment"
    DECREMENT = "decrement"
    ASSIGN = "assign"
    READ = "read"


class TxKind(str, enum.Enum):
    PAYMENT = "payment"
    CONTRACT = "contract"


class ContractViolation(RuntimeError):
    """Internal misuse of a primitive (e.g. applying a read)."""


@dataclass(frozen=True)
class Object:
    key: str
    value: int
    con: int = 0
    type: ObjType = ObjType.OWNED


@dataclass(frozen=True)
class OpSpec:
    target_key: str
    kind: OpKind
    amount_or_value: int = 0
    obj_type: ObjType = ObjType.OWNED

    def __post_init__(self):
        if self.kind in (OpKind.INCREMENT, OpKind.DECREMENT) and self.amount_or_value <= 0:
            raise ValueError(f"{self.kind.value} amount must be positive, got {self.amount_or_value}")
        if self.kind in (OpKind.ASSIGN, OpKind.READ) and self.obj_type is not ObjType.SHARED:
            raise ValueError(f"{self.kind.value} is only allowed on shared objects")

    @property
    def amount(self) -> int:
        return self.amount_or_value

    @property
    def owned_decrement(self) -> bool:
        return self.obj_type is ObjType.OWNED and self.kind is OpKind.DECREMENT

    def canonical(self) -> list:
        return [self.target_key, self.kind.value, self.amount_or_value, self.obj_type.value]


@dataclass(frozen=True)
class Signature:
    signer: str
    payload_digest: int


def sign(signer: str, payload_digest: int) -> Signature:
    return Signature(signer, payload_digest)


def verify(sig: Signature, payload_digest: int, expected_signer: str) -> bool:
    return sig.signer == expected_signer and sig.payload_digest == payload_digest


@dataclass(frozen=True)
class Transaction:
    id: str
    ops: tuple
    sigs: tuple = ()
    submit_time: int = 0
    client: str = ""

    def canonical(self) -> list:
        return [self.id, [op.canonical() for op in self.ops]]

    @cached_property
    def digest(self) -> int:
        return digest64(self.canonical())

    @cached_property
    def kind(self) -> TxKind:
        if all(op.obj_type is ObjType.OWNED and op.kind in (OpKind.INCREMENT, OpKind.DECREMENT)
               for op in self.ops):
            return TxKind.PAYMENT
        return TxKind.CONTRACT

    @cached_property
    def payer_ops(self) -> tuple:
        return tuple(op for op in self.ops if op.owned_decrement)

    @cached_property
    def payee_ops(self) -> tuple:
        return tuple(op for op in self.ops
                     if op.obj_type is ObjType.OWNED and op.kind is OpKind.INCREMENT)

    @cached_property
    def shared_ops(self) -> tuple:
        return tuple(op for op in self.ops if op.obj_type is ObjType.SHARED)


def signed_tx(tx_id: str, ops: Sequence[OpSpec], submit_time: int = 0, client: str = "") -> Transaction:
    """Build a transaction carrying one owner signature per debited owned object."""
    unsigned = Transaction(tx_id, tuple(ops), (), submit_time, client)
    owners = []
    for op in unsigned.payer_ops:
        if op.target_key not in owners:
            owners.append(op.target_key)
    sigs = tuple(sign(owner, unsigned.digest) for owner in owners)
    return Transaction(tx_id, tuple(ops), sigs, submit_time, client or (owners[0] if owners else ""))


def validate_tx(tx) -> bool:
    """Format, conservation and owner-signature checks. Never raises."""
    try:
        if not isinstance(tx, Transaction) or not tx.id or not tx.ops:
            return False
        for op in tx.ops:
            if not isinstance(op, OpSpec):
                return False
        payers = tx.payer_ops
        if not payers:
            return False
        if tx.kind is TxKind.PAYMENT:
            if sum(op.amount for op in payers) != sum(op.amount for op in tx.payee_ops):
                return False
        digest = tx.digest
        signed_by = {sig.signer: sig for sig in tx.sigs}
        for op in payers:
            sig = signed_by.get(op.target_key)
            if sig is None or not verify(sig, digest, op.target_key):
                return False
        return True
    except Exception:  # noqa: BLE001 - malformed input must not propagate
        return False


def apply(value: int, op: OpSpec) -> int:
    if op.kind is OpKind.INCREMENT:
        return value + op.amount_or_value
    if op.kind is OpKind.DECREMENT:
        return value - op.amount_or_value
    if op.kind is OpKind.ASSIGN:
        return op.amount_or_value
    raise ContractViolation(f"apply() called with {op.kind.value}")


def undo(value: int, op: OpSpec) -> int:
    if op.kind is OpKind.INCREMENT:
        return value - op.amount_or_value
    if op.kind is OpKind.DECREMENT:
        return value + op.amount_or_value
    raise ContractViolation(f"undo() is only defined for increment/decrement, got {op.kind.value}")


def bottom_state(m: int) -> tuple:
    return (BOTTOM,) * m


def state_covers(a: Sequence[int], b: Sequence[int]) -> bool:
    """True iff ``a`` is componentwise >= ``b`` (``BOTTOM`` sorts below 0)."""
    if len(a) != len(b):
        raise ValueError(f"state length mismatch: {len(a)} != {len(b)}")
    for x, y in zip(a, b):
        if x < y:
            return False
    return True


@dataclass(frozen=True)
class Block:
    txs: tuple
    ins: int
    sn: int
    S: tuple
    rank: int
    sig: Signature | None = None
    proposer: int = -1
    noop: bool = False
    proposed_at: int = field(default=0, compare=False)

    def canonical(self) -> list:
        return [self.ins, self.sn, list(self.S), self.rank, [tx.id for tx in self.txs], self.noop]

    @cached_property
    def digest(self) -> int:
        return digest64(self.canonical())

    @property
    def order_key(self) -> tuple:
        return (self.rank, self.ins)


def make_block(txs: Iterable[Transaction], ins: int, sn: int, S: Sequence[int], rank: int,
               proposer: int = -1, noop: bool = False, proposed_at: int = 0) -> Block:
    unsigned = Block(tuple(txs), ins, sn, tuple(S), rank, None, proposer, noop, proposed_at)
    return Block(unsigned.txs, ins, sn, unsigned.S, rank,
                 sign(f"replica{proposer}", unsigned.digest), proposer, noop, proposed_at)
