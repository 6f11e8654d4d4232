"""Disk-spilling ciphertext cache with prefetch and plan-driven eviction.

Bounds the number of in-memory ciphertexts: entries beyond capacity spill to
disk through writer workers and come back through reader workers, ideally
before the compute side blocks on them.  When an access plan is installed the
eviction victim is the resident entry whose next use is farthest away
(entries with no planned use go first, oldest first); with no plan the policy
degrades to plain LRU.
"""
from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .ckks import Ciphertext
from .errors import CacheCorruptionError, CacheError
from .params import CkksParams
from .serialize import SerializationError, ciphertext_from_bytes, ciphertext_to_bytes

RESIDENT = "resident"
ON_DISK = "on-disk"
IN_FLIGHT = "in-flight"


@dataclass
class CacheConfig:
    capacity: int
    reader_workers: int = 2
    writer_workers: int = 1
    spill_dir: str | os.PathLike = "."

    def __post_init__(self):
        if self.capacity < 2 + self.reader_workers:
            raise CacheError(
                f"capacity {self.capacity} must be at least 2 + reader_workers "
                f"({2 + self.reader_workers})"
            )
        if self.reader_workers < 1 or self.writer_workers < 1:
            raise CacheError("need at least one reader and one writer worker")


@dataclass
class CacheHandle:
    id: str
    pinned: bool = False

    @property
    def state(self) -> str:  # set by the owning cache
        return self._state  # type: ignore[attr-defined]


@dataclass
class _Entry:
    handle: CacheHandle
    ct: Ciphertext | None
    path: Path | None
    last_use: int
    dirty: bool  # not yet represented on disk
    reading: bool = False
    writing: bool = False
    error: Exception | None = None


@dataclass
class CacheStats:
    hits: int = 0
    blocking_reads: int = 0
    disk_reads: int = 0
    disk_writes: int = 0
    checksum_failures: int = 0
    peak_resident: int = 0


class CiphertextCache:
    """Thread-safe ciphertext residency manager.

    ``put`` admits a new ciphertext (applying backpressure while spills drain),
    ``get`` blocks until the ciphertext is resident, ``prefetch`` schedules
    reads ahead of use and ``schedule`` installs the access plan that drives
    eviction.
    """

    def __init__(self, config: CacheConfig, params: CkksParams):
        self.config = config
        self.params = params
        self.spill_dir = Path(config.spill_dir)
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        self.stats = CacheStats()
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._readers = ThreadPoolExecutor(config.reader_workers, thread_name_prefix="cache-rd")
        self._writers = ThreadPoolExecutor(config.writer_workers, thread_name_prefix="cache-wr")
        self._clock = 0
        self._next_id = 0
        self._plan: list[str] = []
        self._plan_positions: dict[str, list[int]] = {}
        self._pending = 0

    # -- public API -----------------------------------------------------------

    def put(self, ct: Ciphertext, pin: bool = False, id: str | None = None) -> CacheHandle:
        with self._cond:
            if id is None:
                id = f"ct{self._next_id:06d}"
                self._next_id += 1
            if id in self._entries:
                raise CacheError(f"duplicate cache id {id!r}")
            # Backpressure before admission keeps peak residency within bounds.
            self._cond.wait_for(lambda: self._resident_count() < self._soft_limit())
            handle = CacheHandle(id=id, pinned=pin)
            entry = _Entry(handle=handle, ct=ct, path=None, last_use=self._tick(), dirty=True)
            handle._state = RESIDENT
            self._entries[id] = entry
            self._note_resident()
            self._evict_to_capacity()
            return handle

    def adopt(self, path: str | os.PathLike, id: str | None = None,
              pin: bool = False) -> CacheHandle:
        """Register an existing serialized ciphertext file without loading it."""
        path = Path(path)
        if not path.exists():
            raise CacheError(f"cannot adopt missing file {path}")
        with self._cond:
            if id is None:
                id = f"ct{self._next_id:06d}"
                self._next_id += 1
            if id in self._entries:
                raise CacheError(f"duplicate cache id {id!r}")
            handle = CacheHandle(id=id, pinned=pin)
            entry = _Entry(handle=handle, ct=None, path=path, last_use=self._tick(), dirty=False)
            handle._state = ON_DISK
            self._entries[id] = entry
            return handle

    def get(self, handle: CacheHandle) -> Ciphertext:
        """Blocking fetch; counts as a blocking read whenever disk I/O is awaited."""
        with self._cond:
            entry = self._lookup(handle)
            self._advance_plan(entry.handle.id)
            entry.last_use = self._tick()
            if entry.ct is not None:
                self.stats.hits += 1
                return entry.ct
            if not entry.reading:
                self._submit_read(entry)
            self._cond.wait_for(lambda: entry.ct is not None or entry.error is not None)
            self._raise_entry_error(entry)
            self.stats.blocking_reads += 1
            entry.last_use = self._tick()
            return entry.ct

    def prefetch(self, handles) -> None:
        """Schedule reads without blocking; already-resident handles are no-ops."""
        with self._cond:
            for handle in handles:
                entry = self._lookup(handle)
                if entry.ct is not None or entry.reading:
                    continue
                self._submit_read(entry)

    def schedule(self, access_plan) -> None:
        """Install the upcoming access order (handle ids) for Belady-style eviction."""
        with self._cond:
            self._plan = [h.id if isinstance(h, CacheHandle) else str(h) for h in access_plan]
            positions: dict[str, list[int]] = {}
            for pos, hid in enumerate(self._plan):
                positions.setdefault(hid, []).append(pos)
            self._plan_positions = positions

    def pin(self, handle: CacheHandle, pinned: bool = True) -> None:
        with self._cond:
            self._lookup(handle).handle.pinned = pinned
            self._cond.notify_all()

    def drain(self) -> None:
        """Wait for all in-flight reads and writes to settle."""
        with self._cond:
            self._cond.wait_for(lambda: self._pending == 0)

    def resident_count(self) -> int:
        with self._cond:
            return self._resident_count()

    def close(self) -> None:
        self.drain()
        self._readers.shutdown(wait=True)
        self._writers.shutdown(wait=True)

    def write_manifest(self) -> Path:
        """Best-effort listing of spilled entries, for crash diagnosis only."""
        with self._cond:
            listing = {
                e.handle.id: {"file": str(e.path), "state": e.handle._state}
                for e in self._entries.values() if e.path is not None
            }
        path = self.spill_dir / "cache_manifest.json"
        path.write_text(json.dumps(listing, indent=2, sort_keys=True))
        return path

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    # -- internals --------------------------------------------------------------

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def _lookup(self, handle: CacheHandle) -> _Entry:
        entry = self._entries.get(handle.id)
        if entry is None:
            raise CacheError(f"unknown cache handle {handle.id!r}")
        return entry

    def _resident_count(self) -> int:
        return sum(1 for e in self._entries.values() if e.ct is not None)

    def _soft_limit(self) -> int:
        return self.config.capacity + self.config.reader_workers

    def _note_resident(self):
        self.stats.peak_resident = max(self.stats.peak_resident, self._resident_count())

    def _raise_entry_error(self, entry: _Entry):
        if entry.error is not None:
            err = entry.error
            entry.error = None
            raise err

    def _advance_plan(self, hid: str):
        positions = self._plan_positions.get(hid)
        if positions:
            positions.pop(0)

    def _next_use(self, hid: str) -> int:
        positions = self._plan_positions.get(hid)
        if positions:
            return positions[0]
        return 1 << 60  # unplanned: treat as never used again

    def _evict_to_capacity(self):
        while self._resident_count() > self.config.capacity:
            victim = self._pick_victim()
            if victim is None:
                break
            self._evict(victim)

    def _pick_victim(self) -> _Entry | None:
        candidates = [
            e for e in self._entries.values()
            if e.ct is not None and not e.handle.pinned and not e.writing and not e.reading
        ]
        if not candidates:
            return None
        if self._plan_positions:
            # farthest next use wins; ties (e.g. both unplanned) fall back to LRU
            return max(candidates, key=lambda e: (self._next_use(e.handle.id), -e.last_use))
        return min(candidates, key=lambda e: e.last_use)

    def _evict(self, entry: _Entry):
        if entry.dirty:
            entry.writing = True
            entry.handle._state = IN_FLIGHT
            self._pending += 1
            self._writers.submit(self._write_job, entry)
        else:
            entry.ct = None
            entry.handle._state = ON_DISK
            self._cond.notify_all()

    def _write_job(self, entry: _Entry):
        try:
            data = ciphertext_to_bytes(entry.ct)
            path = self.spill_dir / f"{entry.handle.id}.ct"
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
            with self._cond:
                entry.path = path
                entry.dirty = False
                entry.ct = None
                entry.writing = False
                entry.handle._state = ON_DISK
                self.stats.disk_writes += 1
                self._pending -= 1
                self._cond.notify_all()
        except Exception as exc:  # surfaced on the next access
            with self._cond:
                entry.error = CacheError(f"spill failed for {entry.handle.id}: {exc}")
                entry.writing = False
                self._pending -= 1
                self._cond.notify_all()

    def _submit_read(self, entry: _Entry):
        entry.reading = True
        entry.handle._state = IN_FLIGHT
        self._pending += 1
        self._readers.submit(self._read_job, entry)

    def _read_job(self, entry: _Entry):
        try:
            data = entry.path.read_bytes()
            try:
                ct = ciphertext_from_bytes(data, self.params)
            except SerializationError as exc:
                with self._cond:
                    self.stats.checksum_failures += 1
                raise CacheCorruptionError(
                    f"spill file for {entry.handle.id} failed verification: {exc}"
                ) from exc
            with self._cond:
                # Respect the residency bound: readers admit into the slack.
                self._cond.wait_for(
                    lambda: self._resident_count() < self._soft_limit()
                )
                entry.ct = ct
                entry.reading = False
                entry.handle._state = RESIDENT
                entry.last_use = self._tick()
                self.stats.disk_reads += 1
                self._note_resident()
                self._pending -= 1
                self._evict_to_capacity()
                self._cond.notify_all()
        except CacheCorruptionError as exc:
            with self._cond:
                entry.error = exc
                entry.reading = False
                self._pending -= 1
                self._cond.notify_all()
        except Exception as exc:
            with self._cond:
                entry.error = CacheError(f"read failed for {entry.handle.id}: {exc}")
                entry.reading = False
                self._pending -= 1
                self._cond.notify_all()
