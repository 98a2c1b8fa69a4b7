"""Host-side page state for one VM.

Each host frame carries residency, access/dirty bits, a lock bit and an LRU
stamp. Flag storage is one bytearray per flag so scans vectorize through
numpy views and the per-access hot path stays cheap.

A frame can also be "staged": its content has been read into host memory by a
prefetch but not mapped into the EPT yet. A staged frame occupies memory and
turns the next touch into a minor fault (map only, no device read).
"""

from array import array
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .addressing import NoTranslationError
from .units import NS, US

RESIDENT = 1
SWAPPED = 0

DEFAULT_HOT_4K = 180 * NS
DEFAULT_HOT_2M = 105 * NS
DEFAULT_COLD_PENALTY = 250 * NS
DEFAULT_SCAN_PER_PTE = 10 * NS
DEFAULT_MINOR_FAULT = 2 * US


class LockedPageError(Exception):
    """Attempt to unmap a frame whose lock bit is set."""


class InvalidStateError(Exception):
    """map/unmap called on a frame in the wrong residency state."""


@dataclass
class FaultEvent:
    """Access to a non-resident frame, enriched with guest-side registers."""
    page: int
    ctx: object = None
    gva: int = None
    ip: int = None
    time: int = 0
    write: bool = False


class Hit:
    __slots__ = ("latency",)

    def __init__(self, latency):
        self.latency = latency


class AccessBitmap:
    """Access bits of one frame range, snapshot at scan_time."""

    def __init__(self, scan_time, start, bits):
        self.scan_time = scan_time
        self.start = start
        self.bits = bits  # np.uint8 array, one byte per frame in range

    def get(self, frame):
        i = frame - self.start
        if i < 0 or i >= len(self.bits):
            return False
        return bool(self.bits[i])

    def set_frames(self):
        """Frame indices whose bit is set."""
        return (np.nonzero(self.bits)[0] + self.start).tolist()

    def count(self):
        return int(np.count_nonzero(self.bits))

    def __len__(self):
        return len(self.bits)


class VmMemory:
    def __init__(self, sim, addr, n_frames, page_size,
                 hot_latency=None, cold_penalty_after_clear=DEFAULT_COLD_PENALTY,
                 c_scan_per_pte=DEFAULT_SCAN_PER_PTE, lru_source="touch"):
        self.sim = sim
        self.addr = addr
        self.n_frames = n_frames
        self.page_size = page_size
        if hot_latency is None:
            hot_latency = DEFAULT_HOT_4K if page_size == 4096 else DEFAULT_HOT_2M
        self.hot_latency = hot_latency
        self.cold_penalty_after_clear = cold_penalty_after_clear
        self.c_scan_per_pte = c_scan_per_pte
        # "touch" stamps recency on every access (omniscient); "scan" only at
        # scan_and_clear, the coarse view a real host actually has
        if lru_source not in ("touch", "scan"):
            raise ValueError(f"unknown lru_source {lru_source!r}")
        self.lru_source = lru_source

        n = n_frames
        self.state = bytearray(n)          # 1 = Resident
        self.desired = bytearray(n)        # swapper's target state, 1 = Resident
        self.access_bit = bytearray(n)
        self.dirty_bit = bytearray(n)
        self.locked = bytearray(n)
        self.staged = bytearray(n)
        self.ever_written = bytearray(n)   # never-written frames swap as zero pages
        self.device_current = bytearray(n)  # backing copy still matches content
        self.penalty = bytearray(n)        # next access pays the post-scan penalty
        self.lru_stamp = array("q", bytes(8 * n))

        # memory-holding frames (resident or staged) in touch order, oldest first
        self.recency = OrderedDict()
        self.cand_epoch = 0       # bumped when an old stamp can resurface
        self.resident_bytes = 0
        self.staged_bytes = 0

    # --- views for vectorized scans ---

    def _np(self, buf):
        return np.frombuffer(buf, dtype=np.uint8)

    # --- population (scenario setup, swapper completions) ---

    def populate_resident(self, frames, written=True, t=0):
        for f in frames:
            if self.state[f]:
                continue
            self.state[f] = 1
            self.desired[f] = 1
            self.resident_bytes += self.page_size
            self.lru_stamp[f] = t
            self.recency[f] = None
            if written:
                self.ever_written[f] = 1

    def populate_swapped(self, frames, written=True):
        """Content starts on the swap device (cold but defined)."""
        for f in frames:
            if written:
                self.ever_written[f] = 1
            self.device_current[f] = 1

    # --- the guest access path ---

    def access(self, ctx, gva, rw="read", ip=None, t=None):
        """One guest memory access. Hit(latency) when resident, FaultEvent
        otherwise; raises NoTranslationError when the guest mapping is absent."""
        hva = self.addr.gva_to_gpa(ctx, gva)
        if hva is None:
            raise NoTranslationError(f"gva {gva:#x} unmapped in ctx {ctx.ctx_id}")
        frame = self.addr.hva_to_frame(self.addr.gpa_to_hva(hva))
        if t is None:
            t = self.sim.now()
        lat = self.touch(frame, rw == "write", t)
        if lat is None:
            return FaultEvent(frame, ctx, gva, ip, t, rw == "write")
        return Hit(lat)

    def touch(self, frame, write, t):
        """Resident fast path: returns the access latency, or None on fault."""
        if not self.state[frame]:
            return None
        lat = self.hot_latency
        if self.penalty[frame]:
            lat += self.cold_penalty_after_clear
            self.penalty[frame] = 0
        self.access_bit[frame] = 1
        if write and not self.dirty_bit[frame]:
            self.dirty_bit[frame] = 1
            self.ever_written[frame] = 1
            self.device_current[frame] = 0
        if self.lru_source == "touch":
            self.lru_stamp[frame] = t
            # pages already admitted for reclaim have left the candidate
            # list; they stay mapped (and fast) until the worker gets to them
            if frame in self.recency:
                self.recency.move_to_end(frame)
        return lat

    def access_frame(self, frame, rw="read", ip=None, t=None):
        """Host-side access by frame index (no guest translation)."""
        if t is None:
            t = self.sim.now()
        lat = self.touch(frame, rw == "write", t)
        if lat is None:
            return FaultEvent(frame, None, None, ip, t, rw == "write")
        return Hit(lat)

    # --- scanning ---

    def scan_cost(self, start, stop):
        return (stop - start) * self.c_scan_per_pte

    def scan_and_clear(self, start=0, stop=None, t=None):
        """Snapshot and clear access bits over [start, stop).

        Resident frames whose bit was set get the one-shot penalty flag: the
        PTE write flushed their partial-walk-cache entry, so the next access
        is slower. The caller charges scan_cost() to its own time budget.
        """
        if stop is None:
            stop = self.n_frames
        if t is None:
            t = self.sim.now()
        acc = self._np(self.access_bit)[start:stop]
        bits = acc.copy()
        st = self._np(self.state)[start:stop]
        pen = self._np(self.penalty)[start:stop]
        np.bitwise_or(pen, bits & st, out=pen)
        acc[:] = 0
        if self.lru_source == "scan":
            # scan-derived recency: every frame seen this interval advances
            # together, index order within the cohort
            for f in np.nonzero(bits)[0]:
                frame = int(f) + start
                self.lru_stamp[frame] = t
                if frame in self.recency:
                    self.recency.move_to_end(frame)
        return AccessBitmap(t, start, bits)

    # --- mapping transitions (driven by the swap worker) ---

    def map_frame(self, frame, t=None):
        """SwappedOut -> Resident. Fault-populated frames count as accessed."""
        if self.state[frame]:
            raise InvalidStateError(f"map of resident frame {frame}")
        if t is None:
            t = self.sim.now()
        if self.staged[frame]:
            self.staged[frame] = 0
            self.staged_bytes -= self.page_size
        self.state[frame] = 1
        self.resident_bytes += self.page_size
        self.access_bit[frame] = 1
        self.dirty_bit[frame] = 0
        self.penalty[frame] = 0
        self.device_current[frame] = 1
        self.lru_stamp[frame] = t
        self.recency[frame] = None
        self.recency.move_to_end(frame)

    def unmap_frame(self, frame):
        """Resident -> SwappedOut. The frame's memory is released by the caller
        once any writeback completes; here we only flip translation state."""
        if not self.state[frame]:
            raise InvalidStateError(f"unmap of non-resident frame {frame}")
        if self.locked[frame]:
            raise LockedPageError(f"frame {frame} is locked")
        self.state[frame] = 0
        self.resident_bytes -= self.page_size
        self.access_bit[frame] = 0
        self.dirty_bit[frame] = 0
        self.penalty[frame] = 0
        self.recency.pop(frame, None)

    def stage_frame(self, frame, t=None):
        """Prefetched content arrives in host memory without a mapping."""
        if self.state[frame] or self.staged[frame]:
            raise InvalidStateError(f"stage of frame {frame} already in memory")
        if t is None:
            t = self.sim.now()
        self.staged[frame] = 1
        self.staged_bytes += self.page_size
        self.device_current[frame] = 1
        self.lru_stamp[frame] = t
        self.recency[frame] = None
        self.recency.move_to_end(frame)

    def discard_staged(self, frame):
        """Drop staged content; the device copy is still current, no writeback."""
        if not self.staged[frame]:
            raise InvalidStateError(f"discard of unstaged frame {frame}")
        self.staged[frame] = 0
        self.staged_bytes -= self.page_size
        self.recency.pop(frame, None)

    def drop_candidate(self, frame):
        """Remove a frame from the recency list ahead of its unmap, so victim
        scans don't crawl over pages whose eviction is already queued."""
        self.recency.pop(frame, None)

    def restore_candidate(self, frame):
        """Put a frame back on the recency list (MRU end) after its queued
        eviction was called off — a lock beat the unmap, or demand
        un-cancelled the reclaim. Either way the page was just wanted, so the
        stamp refreshes with it (keeps stamps non-decreasing in list order)."""
        self.lru_stamp[frame] = self.sim.now()
        self.recency[frame] = None
        self.recency.move_to_end(frame)

    # --- locking (two-step protocol; the fault half runs through the swapper) ---

    def lock(self, frame, t=None):
        """Set the lock bit, then touch the page. Returns None when the page
        was already resident (lock held immediately) or a FaultEvent the
        caller must push through the fault path; the lock bit is already set
        so no reclaim can take the page while the swap-in is pending."""
        self.locked[frame] = 1
        if t is None:
            t = self.sim.now()
        lat = self.touch(frame, False, t)
        if lat is None:
            return FaultEvent(frame, None, None, None, t, False)
        return None

    def unlock(self, frame):
        self.locked[frame] = 0
        # the freed page may carry a stamp older than anything a victim scan
        # cached while it was pinned; bump so cached runs rebuild
        self.cand_epoch += 1

    # --- queries ---

    def holds_memory(self, frame):
        return bool(self.state[frame] or self.staged[frame])

    def resident_frames(self):
        st = self._np(self.state)
        return np.nonzero(st)[0].tolist()

    def memory_bytes(self):
        return self.resident_bytes + self.staged_bytes
