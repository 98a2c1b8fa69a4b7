"""Periodic access-bit scanning shared by every policy that wants bitmaps.

One base scan runs at the shortest subscribed interval and clears the hardware
bits; each subscriber accumulates the OR of base bitmaps and receives its own
snapshot at its own cadence. That way a 1s subscriber and a 60s subscriber can
coexist without stealing each other's access bits.
"""

import numpy as np

from .memory import AccessBitmap


class _Sub:
    def __init__(self, name, interval, callback, n_frames, next_due):
        self.name = name
        self.interval = interval
        self.callback = callback
        self.acc = np.zeros(n_frames, dtype=np.uint8)
        self.next_due = next_due


class ScanService:
    def __init__(self, sim, vm):
        self.sim = sim
        self.vm = vm
        self.subs = {}
        self.cpu_ns = 0          # scanner thread time spent walking PTEs
        self.scans_done = 0
        self._timer = None

    def subscribe(self, name, interval, callback):
        """A subscriber's first bitmap covers exactly [now, now+interval):
        bits standing at subscribe time are captured for existing subscribers
        and cleared, so the newcomer starts from a clean slate."""
        if name in self.subs:
            raise ValueError(f"scan subscriber {name!r} already registered")
        self._capture()
        now = self.sim.now()
        self.subs[name] = _Sub(name, interval, callback, self.vm.n_frames,
                               now + interval)
        self._rearm()

    def unsubscribe(self, name):
        self.subs.pop(name, None)
        self._rearm()

    def set_interval(self, name, interval):
        sub = self.subs[name]
        sub.interval = interval
        sub.next_due = self.sim.now() + interval
        self._rearm()

    def base_interval(self):
        return min(s.interval for s in self.subs.values()) if self.subs else None

    def _capture(self):
        """One base scan: snapshot-and-clear hardware bits, OR into every
        subscriber's accumulator. Returns the walk cost."""
        bm = self.vm.scan_and_clear(t=self.sim.now())
        cost = self.vm.scan_cost(0, self.vm.n_frames)
        self.cpu_ns += cost
        self.scans_done += 1
        for sub in self.subs.values():
            np.bitwise_or(sub.acc, bm.bits, out=sub.acc)
        return cost

    def _rearm(self):
        if self._timer is not None:
            self.sim.cancel(self._timer)
            self._timer = None
        if not self.subs:
            return
        now = self.sim.now()
        nxt = min(min(s.next_due for s in self.subs.values()),
                  now + self.base_interval())
        self._timer = self.sim.schedule(max(0, nxt - now), self._tick, "scan.tick")

    def _tick(self):
        self._timer = None
        now = self.sim.now()
        cost = self._capture()
        for sub in list(self.subs.values()):
            if now >= sub.next_due:
                snap = AccessBitmap(now, 0, sub.acc)
                sub.acc = np.zeros(self.vm.n_frames, dtype=np.uint8)
                sub.next_due = now + sub.interval
                # deliver after the walk cost; the scan thread pays it, not the guest
                self.sim.schedule(cost, lambda cb=sub.callback, s=snap: cb(s),
                                  "scan.deliver")
        self._rearm()
