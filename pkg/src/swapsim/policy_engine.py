"""Memory-limit enforcement and the desired-state swap pipeline.

Requests never carry an operation — they flip a page's desired state and
enqueue the page index. Workers read the page's desired state at dequeue time
and do whatever reconciliation requires, which may be nothing at all; a
prefetch cancelled by a reclaim before processing costs zero I/O.

Accounting happens at admission time: usage is what residency will be once the
queue drains, so admission checks against the limit are race-free even while
I/O is in flight.
"""

from collections import deque
import heapq

import numpy as np

from .memory import LockedPageError
from .units import US, NS

FORCED = 0     # limit-keeping reclaims; must free memory before admitted faults map
FAULT = 1
RECLAIM = 2
PREFETCH = 3

CLASS_NAMES = {FORCED: "forced", FAULT: "fault", RECLAIM: "reclaim", PREFETCH: "prefetch"}

# software cost of the fault path up to enqueue, and of the worker after I/O;
# one observed fault therefore costs fault_sw + worker_post + device time
DEFAULT_FAULT_SW_4K = 17 * US
DEFAULT_FAULT_SW_2M = 30 * US
DEFAULT_WORKER_POST = 5 * US
DEFAULT_MINOR_FAULT = 2 * US
DEFAULT_ZERO_4K = 200 * NS


class DeadlockError(Exception):
    """The limit cannot be met: every remaining page is locked or in flight."""


class DuplicateNameError(Exception):
    pass


class SwapQueue:
    """Priority-classed set of page indications, at most one live per page."""

    def __init__(self):
        self._heap = []   # (prio, seq, frame)
        self._seq = 0
        self._pending = {}  # frame -> (prio, seq)

    def __len__(self):
        return len(self._pending)

    def pending_class(self, frame):
        ent = self._pending.get(frame)
        return ent[0] if ent else None

    def push(self, frame, prio):
        """Insert or upgrade; a lower class number outranks. Returns True if
        the queue changed."""
        cur = self._pending.get(frame)
        if cur is not None:
            if prio >= cur[0]:
                return False
        self._seq += 1
        self._pending[frame] = (prio, self._seq)
        heapq.heappush(self._heap, (prio, self._seq, frame))
        return True

    def pop(self):
        """Highest-priority live entry, or None."""
        while self._heap:
            prio, seq, frame = heapq.heappop(self._heap)
            cur = self._pending.get(frame)
            if cur is not None and cur == (prio, seq):
                del self._pending[frame]
                return frame, prio
        return None

    def drop(self, frame):
        self._pending.pop(frame, None)


class _Worker:
    __slots__ = ("wid", "busy")

    def __init__(self, wid):
        self.wid = wid
        self.busy = False


class PolicyEngine:
    def __init__(self, sim, vm, device, zero_pool=None, scan_service=None,
                 memory_limit=None, n_workers=2,
                 fault_sw=None, worker_post=DEFAULT_WORKER_POST,
                 minor_fault_latency=DEFAULT_MINOR_FAULT,
                 zero_fill_4k=DEFAULT_ZERO_4K,
                 forced_reclaim_batch=1,
                 clean_skip_write=True):
        self.sim = sim
        self.vm = vm
        self.device = device
        self.zero_pool = zero_pool
        self.scan_service = scan_service
        ps = vm.page_size
        self.page_size = ps
        if memory_limit is None:
            memory_limit = vm.n_frames * ps
        self.limit = memory_limit
        self.usage = vm.resident_bytes + vm.staged_bytes
        if fault_sw is None:
            fault_sw = DEFAULT_FAULT_SW_4K if ps == 4096 else DEFAULT_FAULT_SW_2M
        self.fault_sw = fault_sw
        self.worker_post = worker_post
        self.minor_fault_latency = minor_fault_latency
        self.zero_fill_4k = zero_fill_4k
        self.forced_reclaim_batch = forced_reclaim_batch
        self.clean_skip_write = clean_skip_write

        self.queue = SwapQueue()
        self.workers = [_Worker(i) for i in range(n_workers)]
        self._parked = deque(self.workers)
        self._inflight = {}   # frame -> "in" | "out" | "minor"
        self._blocked = {}    # frame -> deferred (frame, prio) hit while inflight
        self._waiters = {}    # frame -> [callback(t)] for blocked accesses

        self.limit_reclaimer = None    # policy exposing victim()
        self.policies = {}
        self._subs = {"fault": [], "limit_change": [], "swap_in": [], "swap_out": []}
        self._params = {}

        # counters
        self.pf_count = 0
        self.pf_major = 0
        self.pf_minor = 0
        self.forced_reclaims = 0
        self.reclaims_accepted = 0
        self.reclaims_rejected = 0
        self.prefetch_admitted = 0
        self.prefetch_dropped = 0
        self.swapins_done = 0
        self.swapouts_done = 0
        self.zero_fills = 0

        self.register_parameter("memory_limit",
                                lambda: self.limit,
                                lambda v: self.set_memory_limit(int(v)))
        self.register_parameter("forced_reclaim_batch",
                                lambda: self.forced_reclaim_batch,
                                lambda v: setattr(self, "forced_reclaim_batch", int(v)))

    # ------------------------------------------------------------------ faults

    def on_fault(self, ev, waiter=None):
        """Entry point for every access to a non-resident frame. `waiter` is
        called with the map time once the page is resident."""
        frame = ev.page
        vm = self.vm
        self.pf_count += 1
        if waiter is not None:
            self._waiters.setdefault(frame, []).append(waiter)

        infl = self._inflight.get(frame)
        pending = self.queue.pending_class(frame)

        if infl == "minor":
            # another vcpu is already taking the minor fault; ride along
            self.pf_minor += 1
            ev.minor = True
            self._notify("fault", ev)
            return

        if vm.staged[frame] and infl is None:
            if pending is None and vm.desired[frame]:
                # prefetched content is already in memory: map only
                self.pf_minor += 1
                ev.minor = True
                self._inflight[frame] = "minor"
                self.sim.schedule(self.minor_fault_latency,
                                  lambda f=frame: self._finish_minor(f), "pf.minor")
                self._notify("fault", ev)
                return
            if pending in (RECLAIM, FORCED) and not vm.desired[frame]:
                # demand beats a queued discard of the staged content
                need = self.page_size
                if self.usage + need > self.limit:
                    self._forced_reclaim(need)
                vm.desired[frame] = 1
                self.usage += need
                vm.restore_candidate(frame)
                self.queue.push(frame, FAULT)
                self._kick()
                self.pf_minor += 1
                ev.minor = True
                self._notify("fault", ev)
                return

        self.pf_major += 1
        ev.minor = False
        if pending is not None:
            if pending == PREFETCH:
                # a demanded page outranks its own pending prefetch
                self.queue.push(frame, FAULT)
                self._kick()
            self._notify("fault", ev)
            return
        if vm.desired[frame]:
            # swap-in already admitted: running, staged-and-mapping, or still
            # inside the fault software window
            self._notify("fault", ev)
            return

        need = self.page_size
        if self.usage + need > self.limit:
            self._forced_reclaim(need)
        vm.desired[frame] = 1
        self.usage += need
        self.sim.schedule(self.fault_sw, lambda f=frame: self._enqueue(f, FAULT),
                          "pf.enqueue")
        self._notify("fault", ev)

    def _finish_minor(self, frame):
        self._inflight.pop(frame, None)
        self.vm.map_frame(frame)
        self._wake_waiters(frame)

    def _forced_reclaim(self, need):
        """Synchronously pick victims until `need` bytes fit under the limit.
        forced_reclaim_batch > 1 overshoots to leave headroom (hysteresis)."""
        target = self.limit - need - (self.forced_reclaim_batch - 1) * self.page_size
        guard = self.vm.n_frames + len(self.queue) + 4
        while self.usage > target:
            victim = self.limit_reclaimer.victim() if self.limit_reclaimer else None
            if victim is None:
                raise DeadlockError(
                    f"cannot free {need} bytes: no unlocked victim available")
            if not self._admit_reclaim(victim, FORCED):
                raise DeadlockError(f"limit reclaimer proposed unusable victim {victim}")
            self.forced_reclaims += 1
            guard -= 1
            if guard < 0:
                raise DeadlockError("forced reclaim did not converge")

    # ------------------------------------------------------- policy requests

    def _admit_reclaim(self, frame, prio):
        vm = self.vm
        if vm.locked[frame] or self._inflight.get(frame) is not None:
            return False
        if not vm.desired[frame]:
            return False  # already on its way out (or out)
        pending = self.queue.pending_class(frame)
        if pending in (FAULT, FORCED):
            return False
        if pending == PREFETCH:
            # cancel-by-flip: the queued indication now resolves to a no-op
            vm.desired[frame] = 0
            self.usage -= self.page_size
            vm.drop_candidate(frame)
            return True
        if not vm.holds_memory(frame):
            return False
        vm.desired[frame] = 0
        self.usage -= self.page_size
        vm.drop_candidate(frame)
        self._enqueue(frame, prio)
        return True

    def request_reclaim(self, frame):
        ok = self._admit_reclaim(frame, RECLAIM)
        if ok:
            self.reclaims_accepted += 1
        else:
            self.reclaims_rejected += 1
        return ok

    def request_prefetch(self, frame):
        # a frame mid-writeback (inflight "out") may be prefetched; the worker
        # defers the read until the write lands
        vm = self.vm
        if vm.desired[frame] or vm.holds_memory(frame):
            self.prefetch_dropped += 1
            return False
        if self.usage + self.page_size > self.limit:
            self.prefetch_dropped += 1
            return False
        vm.desired[frame] = 1
        self.usage += self.page_size
        self._enqueue(frame, PREFETCH)
        self.prefetch_admitted += 1
        return True

    def set_memory_limit(self, new_limit):
        old = self.limit
        self.limit = new_limit
        # limit changes are delivered synchronously, before enforcement, so a
        # snapshotting policy observes the pre-enforcement working set
        for cb in self._subs["limit_change"]:
            cb((old, new_limit))
        if self.usage > new_limit:
            guard = self.vm.n_frames + 4
            while self.usage > new_limit:
                victim = self.limit_reclaimer.victim() if self.limit_reclaimer else None
                if victim is None:
                    raise DeadlockError("cannot reach lowered memory limit")
                if not self._admit_reclaim(victim, FORCED):
                    raise DeadlockError("limit reclaimer proposed unusable victim")
                self.forced_reclaims += 1
                guard -= 1
                if guard < 0:
                    raise DeadlockError("limit lowering did not converge")

    # ------------------------------------------------------------ the workers

    def _enqueue(self, frame, prio):
        self.queue.push(frame, prio)
        self._kick()

    def _kick(self):
        while self._parked and len(self.queue):
            w = self._parked.popleft()
            w.busy = True
            self.sim.schedule(0, lambda w=w: self._worker_step(w), "worker.take")

    def _park(self, w):
        w.busy = False
        self._parked.append(w)

    def _worker_step(self, w):
        item = self.queue.pop()
        if item is None:
            self._park(w)
            return
        frame, prio = item
        if self._inflight.get(frame) is not None:
            # an earlier transfer for this frame is still in flight; retry the
            # indication once it lands
            self._blocked[frame] = prio
            self._worker_step(w)
            return
        vm = self.vm
        want_in = bool(vm.desired[frame])
        if want_in:
            if vm.state[frame]:
                self._done(w)  # already satisfied
            elif vm.staged[frame]:
                if self._waiters.get(frame):
                    self._complete_in(w, frame)
                else:
                    self._done(w)
            elif not vm.ever_written[frame]:
                extra = 0
                if self.page_size > 4096:
                    extra = self.zero_pool.take_zero_page() if self.zero_pool else 0
                else:
                    extra = self.zero_fill_4k
                self.zero_fills += 1
                self._complete_in(w, frame, extra=extra)
            else:
                self._inflight[frame] = "in"
                self.device.submit_io(self.page_size, "read",
                                      lambda: self._complete_in(w, frame))
        else:
            if not vm.holds_memory(frame):
                self._done(w)  # already satisfied (or a cancelled prefetch)
            elif vm.staged[frame]:
                vm.discard_staged(frame)
                self.swapouts_done += 1
                self._notify("swap_out", frame)
                self._done(w)
            else:
                need_write = vm.ever_written[frame] and (
                    not vm.device_current[frame] or not self.clean_skip_write)
                try:
                    vm.unmap_frame(frame)
                except LockedPageError:
                    # the lock beat us; the page stays, undo the accounting
                    vm.desired[frame] = 1
                    self.usage += self.page_size
                    vm.restore_candidate(frame)
                    self._done(w)
                    return
                if need_write:
                    self._inflight[frame] = "out"
                    self.device.submit_io(self.page_size, "write",
                                          lambda: self._complete_out(w, frame))
                else:
                    self.swapouts_done += 1
                    self._notify("swap_out", frame)
                    self._done(w)

    def _complete_in(self, w, frame, extra=0):
        """Post-I/O worker half of a swap-in: map (or stage) after worker_post.
        The inflight guard stays held through the window so reclaims cannot
        race the mapping."""
        self._inflight[frame] = "in"

        def finish():
            self._inflight.pop(frame, None)
            vm = self.vm
            came_in = not vm.holds_memory(frame)
            if self._waiters.get(frame):
                if vm.staged[frame] or not vm.state[frame]:
                    vm.map_frame(frame)
                self._wake_waiters(frame)
            elif not vm.holds_memory(frame):
                vm.stage_frame(frame)
            if came_in:
                # a pop that found the page already staged (e.g. an un-cancelled
                # reclaim) moved no data; only real arrivals count
                self.swapins_done += 1
                self._notify("swap_in", frame)
            self._release_blocked(frame)
            self._done(w)
        self.sim.schedule(self.worker_post + extra, finish, "worker.map")

    def _complete_out(self, w, frame):
        def finish():
            self._inflight.pop(frame, None)
            self.vm.device_current[frame] = 1
            self.swapouts_done += 1
            self._notify("swap_out", frame)
            self._release_blocked(frame)
            self._done(w)
        self.sim.schedule(self.worker_post, finish, "worker.writeback")

    def _enforce_limit(self):
        """Re-establish usage <= limit after a reverted unmap gave memory
        back. Best-effort: when no victim is eligible right now (candidates
        locked, in flight, or admissions still in their fault_sw window) it
        simply returns and is retried at the next completion or unlock."""
        guard = self.vm.n_frames + len(self.queue) + 4
        while self.usage > self.limit:
            victim = self.limit_reclaimer.victim() if self.limit_reclaimer else None
            if victim is None:
                return    # retried at the next completion or unlock
            if not self._admit_reclaim(victim, FORCED):
                raise DeadlockError(f"limit reclaimer proposed unusable victim {victim}")
            self.forced_reclaims += 1
            guard -= 1
            if guard < 0:
                raise DeadlockError("limit enforcement did not converge")

    def _done(self, w):
        if self.usage > self.limit:
            self._enforce_limit()
        if len(self.queue):
            self.sim.schedule(0, lambda: self._worker_step(w), "worker.take")
        else:
            self._park(w)

    def _release_blocked(self, frame):
        prio = self._blocked.pop(frame, None)
        if prio is not None:
            self._enqueue(frame, prio)

    def _wake_waiters(self, frame):
        cbs = self._waiters.pop(frame, None)
        if cbs:
            t = self.sim.now()
            for cb in cbs:
                cb(t)

    # --------------------------------------------------------------- locking

    def lock_page(self, frame, on_locked):
        """Two-step pin: set the lock bit, then touch. on_locked(t) fires once
        the page is resident with the bit held."""
        ev = self.vm.lock(frame)
        if ev is None:
            on_locked(self.sim.now())
        else:
            self.on_fault(ev, waiter=on_locked)

    def unlock_page(self, frame):
        self.vm.unlock(frame)
        if self.usage > self.limit:
            # a reverted unmap may have left us over; the unlocked page is
            # now fair game
            self._enforce_limit()

    # ----------------------------------------------------- policies & params

    def register_policy(self, policy, limit_reclaimer=False):
        name = getattr(policy, "name", policy.__class__.__name__)
        if name in self.policies:
            raise DuplicateNameError(f"policy {name!r} already registered")
        self.policies[name] = policy
        if limit_reclaimer:
            self.limit_reclaimer = policy
        policy.attach(PolicyApi(self, name))
        return policy

    def subscribe(self, kind, callback):
        self._subs[kind].append(callback)

    def _notify(self, kind, payload):
        for cb in self._subs[kind]:
            self.sim.schedule(0, lambda cb=cb, p=payload: cb(p), f"notify.{kind}")

    def register_parameter(self, name, read_cb, write_cb=None):
        if name in self._params:
            raise DuplicateNameError(f"parameter {name!r} already registered")
        self._params[name] = (read_cb, write_cb)

    def get_param(self, name):
        return self._params[name][0]()

    def set_param(self, name, value):
        write = self._params[name][1]
        if write is None:
            raise ValueError(f"parameter {name!r} is read-only")
        write(value)

    def param_names(self):
        return sorted(self._params)

    # ---------------------------------------------------------------- queries

    def page_state(self, frame):
        return "resident" if self.vm.state[frame] else "swapped_out"

    def drained(self):
        return len(self.queue) == 0 and not self._inflight and not self._blocked


class PolicyApi:
    """What a policy is allowed to touch. Calls never block and never mutate
    frames directly; unsafe requests come back rejected."""

    def __init__(self, engine, name):
        self._e = engine
        self.name = name

    def now(self):
        return self._e.sim.now()

    def schedule(self, delay, cb, label=None):
        return self._e.sim.schedule(delay, cb, label or f"policy.{self.name}")

    def cancel(self, event_id):
        return self._e.sim.cancel(event_id)

    # Table-style queries
    def page_state(self, frame):
        return self._e.page_state(frame)

    def memory_limit(self):
        return self._e.limit

    def memory_usage(self):
        return self._e.usage

    def pf_count(self):
        return self._e.pf_count

    def page_size(self):
        return self._e.page_size

    def n_frames(self):
        return self._e.vm.n_frames

    # requests
    def request_reclaim(self, frame):
        return self._e.request_reclaim(frame)

    def request_prefetch(self, frame):
        return self._e.request_prefetch(frame)

    def lock_page(self, frame, on_locked):
        self._e.lock_page(frame, on_locked)

    def unlock_page(self, frame):
        self._e.unlock_page(frame)

    # events
    def subscribe(self, kind, callback):
        self._e.subscribe(kind, callback)

    def subscribe_scan(self, interval, callback):
        self._e.scan_service.subscribe(self.name, interval, callback)

    def unsubscribe_scan(self):
        self._e.scan_service.unsubscribe(self.name)

    def set_scan_interval(self, interval):
        self._e.scan_service.set_interval(self.name, interval)

    # parameters
    def register_parameter(self, name, read_cb, write_cb=None):
        self._e.register_parameter(name, read_cb, write_cb)

    # reclaim-candidate introspection. A real system cannot watch every hit;
    # this omniscient recency order stands in for the reclaimers' bookkeeping.
    def pages_by_recency(self):
        """Memory-holding frames, least recently touched first."""
        return iter(self._e.vm.recency)

    def lru_stamp(self, frame):
        return self._e.vm.lru_stamp[frame]

    def candidates_epoch(self):
        """Counter that advances whenever a frame with an old stamp can
        re-enter the eligible set (e.g. an unlock); victim caches key on it."""
        return self._e.vm.cand_epoch

    def eligible_victim(self, frame):
        vm = self._e.vm
        return (vm.desired[frame] and not vm.locked[frame]
                and self._e._inflight.get(frame) is None
                and self._e.queue.pending_class(frame) is None
                and vm.holds_memory(frame))

    def resident_frames(self):
        return self._e.vm.resident_frames()

    def resident_mask(self):
        """Copy of the per-frame residency byte array (1 = mapped)."""
        return np.frombuffer(self._e.vm.state, dtype=np.uint8).copy()

    def gva_to_hva(self, ctx, gva):
        return self._e.vm.addr.gva_to_hva(ctx, gva)

    def hva_to_frame(self, hva):
        return self._e.vm.addr.hva_to_frame(hva)

    def frame_to_hva(self, frame):
        return self._e.vm.addr.frame_to_hva(frame)
