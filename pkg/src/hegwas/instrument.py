"""Operation counting for depth/rotation contracts.

Counters are installed with ``track_ops()``; every scheme operation reports to
all counters active in the current context.  Counters from worker threads can
be folded together with ``merge``.
"""
from __future__ import annotations

import contextvars
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field


@dataclass
class OpCounter:
    ct_mults: int = 0
    pt_mults: int = 0
    rotations: int = 0
    conjugations: int = 0
    keyswitches: int = 0
    rescales_ct: int = 0
    rescales_pt: int = 0
    rotation_amounts: list[int] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, **deltas):
        with self._lock:
            for name, delta in deltas.items():
                if name == "rotation_amounts":
                    self.rotation_amounts.extend(delta)
                else:
                    setattr(self, name, getattr(self, name) + delta)

    def merge(self, other: "OpCounter"):
        with self._lock:
            self.ct_mults += other.ct_mults
            self.pt_mults += other.pt_mults
            self.rotations += other.rotations
            self.conjugations += other.conjugations
            self.keyswitches += other.keyswitches
            self.rescales_ct += other.rescales_ct
            self.rescales_pt += other.rescales_pt
            self.rotation_amounts.extend(other.rotation_amounts)

    def all_rotations_power_of_two(self) -> bool:
        return all(r > 0 and (r & (r - 1)) == 0 for r in self.rotation_amounts)

    def snapshot(self) -> dict:
        return {
            "ct_mults": self.ct_mults,
            "pt_mults": self.pt_mults,
            "rotations": self.rotations,
            "conjugations": self.conjugations,
            "keyswitches": self.keyswitches,
            "rescales_ct": self.rescales_ct,
            "rescales_pt": self.rescales_pt,
        }


_ACTIVE: contextvars.ContextVar[tuple] = contextvars.ContextVar("hegwas_op_counters", default=())


@contextmanager
def track_ops(counter: OpCounter | None = None):
    counter = counter or OpCounter()
    token = _ACTIVE.set(_ACTIVE.get() + (counter,))
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


def record(**deltas):
    for counter in _ACTIVE.get():
        counter.bump(**deltas)
