"""Swap backing device and the zero-page pool.

The device is a processor-sharing model over two shared resources — bytes per
second and operations per second — plus a per-transfer latency floor. Each
in-flight transfer owns remaining byte and op work; arrivals and departures
re-split the shared capacity evenly, and a transfer completes once both work
components are drained and its floor has elapsed. max(io_base, n*bytes/cap)
falls out of this for n identical concurrent transfers.
"""

from .units import US, SEC

# Defaults estimated from measured fault costs: a lone 4k swap-in totals 89us
# (22us software + 67us device), a lone 2MB swap-in 847us (35us + 812us).
DEFAULT_IO_BASE_4K = 67 * US
DEFAULT_IO_BASE_2M = 812 * US
DEFAULT_BANDWIDTH = 2_600_000_000          # bytes/s
DEFAULT_IOPS = 250_000                     # ops/s
DEFAULT_ZERO_COST = 100 * US

_EPS_BYTES = 0.5
_EPS_OPS = 1e-7


class _Transfer:
    __slots__ = ("size", "direction", "rem_bytes", "rem_ops", "floor_end",
                 "submit_t", "on_complete")

    def __init__(self, size, direction, floor_end, submit_t, on_complete):
        self.size = size
        self.direction = direction
        self.rem_bytes = float(size)
        self.rem_ops = 1.0
        self.floor_end = floor_end
        self.submit_t = submit_t
        self.on_complete = on_complete


class StorageDevice:
    def __init__(self, sim, io_base_4k=DEFAULT_IO_BASE_4K, io_base_2m=DEFAULT_IO_BASE_2M,
                 bandwidth_cap=DEFAULT_BANDWIDTH, iops_cap=DEFAULT_IOPS, keep_log=True):
        self.sim = sim
        self.io_base_4k = io_base_4k
        self.io_base_2m = io_base_2m
        self.bandwidth_cap = bandwidth_cap
        self.iops_cap = iops_cap
        self.inflight = []
        self.keep_log = keep_log
        self.op_log = []  # (submit_t, complete_t, bytes, direction)
        self.ops_completed = 0
        self.bytes_completed = 0
        self._last_update = 0
        self._tick_id = None
        self._idle_mark = 0
        self._idle_accum = 0

    def io_base(self, size):
        return self.io_base_4k if size <= 4096 else self.io_base_2m

    def submit_io(self, size, direction, on_complete=None):
        """Start a transfer; on_complete() fires when it finishes."""
        now = self.sim.now()
        self._advance(now)
        if not self.inflight:
            self._idle_accum += now - self._idle_mark
        tr = _Transfer(size, direction, now + self.io_base(size), now, on_complete)
        self.inflight.append(tr)
        self._reschedule(now)
        return tr

    def consume_idle(self, now=None):
        """Idle nanoseconds accumulated since the last call (lazy, so a
        currently-idle stretch counts up to now)."""
        if now is None:
            now = self.sim.now()
        total = self._idle_accum
        self._idle_accum = 0
        if not self.inflight:
            total += now - self._idle_mark
            self._idle_mark = now
        return total

    # internal: drain shared-rate work for the elapsed interval
    def _advance(self, now):
        elapsed = now - self._last_update
        self._last_update = now
        if elapsed <= 0 or not self.inflight:
            return
        n = len(self.inflight)
        db = elapsed * (self.bandwidth_cap / n) / SEC
        do = elapsed * (self.iops_cap / n) / SEC
        for tr in self.inflight:
            tr.rem_bytes -= db
            tr.rem_ops -= do

    def _projected_finish(self, tr, now):
        n = len(self.inflight)
        t_bytes = max(0.0, tr.rem_bytes) * n / self.bandwidth_cap * SEC
        t_ops = max(0.0, tr.rem_ops) * n / self.iops_cap * SEC
        t_floor = max(0, tr.floor_end - now)
        return max(t_bytes, t_ops, t_floor)

    def _reschedule(self, now):
        if self._tick_id is not None:
            self.sim.cancel(self._tick_id)
            self._tick_id = None
        if not self.inflight:
            self._idle_mark = now
            return
        delay = min(self._projected_finish(tr, now) for tr in self.inflight)
        self._tick_id = self.sim.schedule(int(delay) + (0 if delay == int(delay) else 1),
                                          self._tick, "storage.tick")

    def _tick(self):
        now = self.sim.now()
        self._tick_id = None
        self._advance(now)
        done = [tr for tr in self.inflight
                if tr.rem_bytes <= _EPS_BYTES and tr.rem_ops <= _EPS_OPS
                and now >= tr.floor_end]
        for tr in done:
            self.inflight.remove(tr)
        self._reschedule(now)
        for tr in done:
            self.ops_completed += 1
            self.bytes_completed += tr.size
            if self.keep_log:
                self.op_log.append((tr.submit_t, now, tr.size, tr.direction))
            if tr.on_complete is not None:
                tr.on_complete()


class ZeroPagePool:
    """Pre-zeroed 2MB pages. A swap-in of a never-written 2MB page takes one
    for free; an empty pool costs zero_cost to zero on demand. Device idle
    time refills the pool."""

    def __init__(self, sim, device, capacity=8, refill_rate=100, zero_cost=DEFAULT_ZERO_COST):
        self.sim = sim
        self.device = device
        self.capacity = capacity
        self.available = capacity
        self.refill_rate = refill_rate  # pages per second of device idle
        self.zero_cost = zero_cost
        self.takes_free = 0
        self.takes_paid = 0

    def refill_idle(self, idle_span):
        self.available = min(self.capacity,
                             self.available + idle_span * self.refill_rate // SEC)

    def take_zero_page(self):
        """Returns the extra latency for materializing one zeroed 2MB page."""
        if self.device is not None:
            self.refill_idle(self.device.consume_idle())
        if self.available > 0:
            self.available -= 1
            self.takes_free += 1
            return 0
        self.takes_paid += 1
        return self.zero_cost
