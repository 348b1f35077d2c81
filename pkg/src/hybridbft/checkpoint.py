"""Epoch checkpoints and garbage collection."""
from __future__ import annotations

from dataclasses import dataclass, field

from .domain import digest64


class EpochNotComplete(AssertionError):
    pass


class CheckpointConflict(AssertionError):
    pass


@dataclass(frozen=True)
class CheckpointMsg:
    epoch: int
    digest: int
    signer: int


@dataclass(frozen=True)
class StableCheckpoint:
    epoch: int
    digest: int
    quorum: tuple


def epoch_range(epoch: int, E: int) -> range:
    return range(epoch * E, (epoch + 1) * E)


def epoch_digest(epoch: int, blocks, statuses: dict) -> int:
    """Digest over the epoch's blocks (ins, sn, rank, digest) and its tx outcomes.

    Object values are left out on purpose: a tx confirmed in this epoch may
    have been executed alongside positions from the next one, so values at
    the close are not a function of the epoch alone.
    """
    rows = sorted((b.ins, b.sn, b.rank, b.digest) for b in blocks)
    outcome = sorted((tx_id, str(statuses[tx_id])) for tx_id in statuses)
    return digest64([epoch, rows, outcome])


def epoch_blocks(executor, epoch: int, E: int) -> list:
    out = []
    for plog in executor.plogs:
        for sn in epoch_range(epoch, E):
            b = plog.get(sn)
            if b is None:
                raise EpochNotComplete(f"epoch {epoch}: block ({plog.instance}, {sn}) not available")
            out.append(b)
    return out


def epoch_pending(executor, epoch: int, E: int) -> set:
    """Ids of txs in the epoch's blocks that are not confirmed yet."""
    pending = set()
    for b in epoch_blocks(executor, epoch, E):
        for tx in b.txs:
            st = executor.txs.get(tx.id)
            if st is not None and st.record.status.value == "pending":
                pending.add(tx.id)
    return pending


def epoch_executed(executor, epoch: int, E: int) -> bool:
    end = (epoch + 1) * E - 1
    return all(int(x) >= end for x in executor.executed)


def end_epoch(replica_id: int, executor, epoch: int, E: int) -> CheckpointMsg:
    if not epoch_executed(executor, epoch, E):
        raise EpochNotComplete(f"epoch {epoch} still has unexecuted sequence numbers")
    blocks = epoch_blocks(executor, epoch, E)
    statuses = {}
    for b in blocks:
        for tx in b.txs:
            status = executor.txs[tx.id].record.status
            if status.value == "pending":
                raise EpochNotComplete(f"epoch {epoch}: {tx.id} is still pending")
            statuses[tx.id] = status.value
    return CheckpointMsg(epoch, epoch_digest(epoch, blocks, statuses), replica_id)


def collect_checkpoint(msgs, quorum: int) -> StableCheckpoint | None:
    """Stable checkpoint once ``quorum`` distinct signers agree on one digest."""
    by_digest: dict = {}
    epoch = None
    for msg in msgs:
        if epoch is None:
            epoch = msg.epoch
        elif msg.epoch != epoch:
            raise ValueError("checkpoint messages from different epochs")
        by_digest.setdefault(msg.digest, set()).add(msg.signer)
    stable = [(d, s) for d, s in by_digest.items() if len(s) >= quorum]
    if len(stable) > 1:
        raise CheckpointConflict(f"epoch {epoch}: two digests reached a quorum")
    if not stable:
        return None
    digest, signers = stable[0]
    return StableCheckpoint(epoch, digest, tuple(sorted(signers)))


@dataclass
class CheckpointTracker:
    """Per-replica checkpoint bookkeeping."""

    quorum: int
    E: int
    inbox: dict = field(default_factory=dict)  # epoch -> {signer: CheckpointMsg}
    stable: dict = field(default_factory=dict)  # epoch -> StableCheckpoint
    collected: int = -1  # highest epoch garbage collected

    def receive(self, msg: CheckpointMsg) -> StableCheckpoint | None:
        if msg.epoch in self.stable:
            return None
        box = self.inbox.setdefault(msg.epoch, {})
        box.setdefault(msg.signer, msg)
        cp = collect_checkpoint(box.values(), self.quorum)
        if cp is not None:
            self.stable[msg.epoch] = cp
            del self.inbox[msg.epoch]
        return cp


def garbage_collect(executor, stable: StableCheckpoint, E: int, buckets=()) -> int:
    """Drop state of epochs up to ``stable.epoch``. Idempotent."""
    dropped = executor.prune((stable.epoch + 1) * E)
    for bucket in buckets:
        dropped += bucket.compact()
    return dropped
