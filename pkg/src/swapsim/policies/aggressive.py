"""Phase-change reclaimer.

Sits idle watching the fault rate once a second. A spike — the 1s rate
exceeding both k times the trailing 30-tick mean and an absolute floor —
means the workload probably moved to a new phase, so everything currently
resident is declared old, a fast 1s access-bit scan starts, pages seen by a
scan are pardoned, and whatever stays old is reclaimed at up to
reclaim_budget bytes per tick until the old set is empty.
"""

from collections import deque

import numpy as np

from ..units import SEC, GB

DEFAULT_K = 5.0
DEFAULT_FLOOR = 100.0        # faults/s; spikes below this never trigger
DEFAULT_BUDGET = 2 * GB      # bytes reclaimed per tick in reclaim mode
DEFAULT_WINDOW = 30          # ticks of trailing rate history
FAST_SCAN = 1 * SEC


class AggressiveReclaimer:
    name = "aggressive"

    def __init__(self, k=DEFAULT_K, floor=DEFAULT_FLOOR, budget=DEFAULT_BUDGET,
                 window=DEFAULT_WINDOW, tick=1 * SEC):
        self.k = k
        self.floor = floor
        self.budget = budget
        self.window = window
        self.tick = tick
        self.api = None
        self.mode = "normal"
        self.old = None              # uint8 mask over frames while reclaiming
        self.rates = deque(maxlen=window)
        self._last_pf = 0
        self.episodes = 0
        self.reclaimed_bytes = 0

    def attach(self, api):
        self.api = api
        self._last_pf = api.pf_count()
        api.schedule(self.tick, self._on_tick, "aggressive.tick")
        api.register_parameter("aggressive_k",
                               lambda: self.k, lambda v: setattr(self, "k", float(v)))
        api.register_parameter("aggressive_floor",
                               lambda: self.floor,
                               lambda v: setattr(self, "floor", float(v)))
        api.register_parameter("aggressive_budget",
                               lambda: self.budget,
                               lambda v: setattr(self, "budget", int(v)))

    def _on_tick(self):
        pf = self.api.pf_count()
        rate = (pf - self._last_pf) * SEC / self.tick
        self._last_pf = pf
        if self.mode == "normal":
            mean = sum(self.rates) / len(self.rates) if self.rates else 0.0
            if rate > max(self.k * mean, self.floor):
                self._enter_reclaim()
        # rates accumulate through reclaim episodes too: the spike and any
        # collateral refaults inflate the trailing mean, which is what keeps
        # the detector from re-arming against its own fallout
        self.rates.append(rate)
        self.api.schedule(self.tick, self._on_tick, "aggressive.tick")

    def _enter_reclaim(self):
        self.mode = "reclaim"
        self.episodes += 1
        self.old = self.api.resident_mask()
        self.api.subscribe_scan(FAST_SCAN, self._on_scan)

    def _on_scan(self, bitmap):
        if self.mode != "reclaim":
            return
        accessed = bitmap.bits.astype(bool)
        self.old[accessed] = 0
        api = self.api
        page = api.page_size()
        spent = 0
        for frame in np.nonzero(self.old)[0].tolist():
            if spent + page > self.budget:
                break
            self.old[frame] = 0
            if api.request_reclaim(frame):
                spent += page
        self.reclaimed_bytes += spent
        if not self.old.any():
            self._exit_reclaim()

    def _exit_reclaim(self):
        self.mode = "normal"
        self.old = None
        self.api.unsubscribe_scan()
