"""Fault plans: which replica misbehaves, how, and from when."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .events import sec


class Behavior(str, enum.Enum):
    CRASH_SILENT = "crash_silent"
    CENSOR = "censor"  # leads with empty blocks only
    SPOOF_STATE = "spoof_state"  # blocks referencing a state it cannot back, or a forged tx
    LEAD_ONLY = "lead_only"  # keeps leading its instance, ignores all others
    EQUIVOCATE = "equivocate"  # different blocks to different halves of the replicas


DETECTABLE = {Behavior.CRASH_SILENT, Behavior.CENSOR, Behavior.SPOOF_STATE}


@dataclass
class FaultSpec:
    replica: int
    behavior: Behavior
    start_time_s: float | None = None
    start_epoch: int | None = None
    spoof: str = "state"  # spoof_state flavour: "state" | "tx"

    def __post_init__(self):
        self.behavior = Behavior(self.behavior)
        if self.start_time_s is None and self.start_epoch is None:
            self.start_time_s = 0.0
        if self.spoof not in ("state", "tx"):
            raise ValueError(f"unknown spoof flavour {self.spoof!r}")

    @property
    def start_ns(self) -> int | None:
        return None if self.start_time_s is None else sec(self.start_time_s)

    def to_dict(self) -> dict:
        out = {"replica": self.replica, "behavior": self.behavior.value}
        if self.start_time_s is not None:
            out["start_time_s"] = self.start_time_s
        if self.start_epoch is not None:
            out["start_epoch"] = self.start_epoch
        if self.behavior is Behavior.SPOOF_STATE:
            out["spoof"] = self.spoof
        return out


@dataclass
class FaultPlan:
    faults: list = field(default_factory=list)

    @classmethod
    def from_list(cls, items) -> "FaultPlan":
        return cls([f if isinstance(f, FaultSpec) else FaultSpec(**f) for f in (items or [])])

    def faulty(self) -> list:
        return sorted({f.replica for f in self.faults})

    def validate(self, n: int, f: int) -> None:
        seen = set()
        for spec in self.faults:
            if not 0 <= spec.replica < n:
                raise ValueError(f"fault on replica {spec.replica} outside [0, {n})")
            if spec.replica in seen:
                raise ValueError(f"replica {spec.replica} has more than one fault behaviour")
            seen.add(spec.replica)
        if len(seen) > f:
            raise ValueError(f"{len(seen)} faulty replicas exceed the budget f={f}")

    def for_replica(self, rid: int) -> FaultSpec | None:
        for spec in self.faults:
            if spec.replica == rid:
                return spec
        return None
