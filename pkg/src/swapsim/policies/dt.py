"""Distance-threshold reclaimer.

Watches periodic access bitmaps and keeps a histogram of re-access distances
(in scan intervals). Each interval it proposes the smallest threshold T such
that the pages predicted to return after an absence of T or more intervals —
i.e. the ones a threshold of T would have swapped out prematurely — make up
at most `target_promotion_rate` of the working set. Pages absent from the
last T bitmaps are requested for reclaim.
"""

from collections import deque

import numpy as np

from ..units import SEC

DEFAULT_SCAN_INTERVAL = 60 * SEC
DEFAULT_TARGET_RATE = 0.02
HISTOGRAM_WINDOW = 4      # intervals of distance samples kept for the proposal
SMOOTHING_WINDOW = 3      # threshold = max of this many recent proposals


class DtReclaimer:
    name = "dt"

    def __init__(self, scan_interval=DEFAULT_SCAN_INTERVAL,
                 target_promotion_rate=DEFAULT_TARGET_RATE,
                 histogram_window=HISTOGRAM_WINDOW,
                 smoothing_window=SMOOTHING_WINDOW):
        self.scan_interval = scan_interval
        self.target_rate = target_promotion_rate
        self.histogram_window = histogram_window
        self.api = None
        self.interval_no = 0
        self.last_seen = None            # interval index per frame, -1 = never
        self.hist_ring = deque(maxlen=histogram_window)
        self.proposals = deque(maxlen=smoothing_window)
        self.threshold = 1
        self.reclaim_requests = 0

    def attach(self, api):
        self.api = api
        self.last_seen = np.full(api.n_frames(), -1, dtype=np.int64)
        api.subscribe_scan(self.scan_interval, self.on_scan)
        api.register_parameter("scan_interval",
                               lambda: self.scan_interval,
                               self._set_interval)
        api.register_parameter("target_promotion_rate",
                               lambda: self.target_rate,
                               lambda v: setattr(self, "target_rate", float(v)))
        api.register_parameter("dt_threshold", lambda: self.threshold)

    def _set_interval(self, value):
        self.scan_interval = int(value)
        self.api.set_scan_interval(self.scan_interval)

    def on_scan(self, bitmap):
        self.interval_no += 1
        k = self.interval_no
        seen = np.nonzero(bitmap.bits)[0]
        prev = self.last_seen[seen]
        dists = (k - prev[prev >= 0]).astype(np.int64)
        self.hist_ring.append(np.bincount(dists) if len(dists) else
                              np.zeros(1, dtype=np.int64))
        self.last_seen[seen] = k

        self.proposals.append(self.propose_threshold())
        self.threshold = max(self.proposals)
        if k >= self.threshold:
            self._reclaim_cold(k)

    def working_set_size(self):
        """Pages observed within the histogram window, in pages."""
        k = self.interval_no
        lo = k - self.histogram_window
        return int(np.count_nonzero(self.last_seen > lo))

    def histogram(self):
        """Distance counts summed over the window (index = distance)."""
        if not self.hist_ring:
            return np.zeros(1, dtype=np.int64)
        width = max(len(h) for h in self.hist_ring)
        total = np.zeros(width, dtype=np.int64)
        for h in self.hist_ring:
            total[:len(h)] += h
        return total

    def propose_threshold(self):
        """Smallest T with mass(distance >= T) / WSS <= target rate."""
        hist = self.histogram()
        wss = self.working_set_size()
        if wss == 0 or hist.sum() == 0:
            return self.threshold
        # suffix[t] = number of re-accesses that came back after >= t intervals
        suffix = np.cumsum(hist[::-1])[::-1]
        limit = self.target_rate * wss
        for t in range(1, len(suffix)):
            if suffix[t] <= limit:
                return t
        return len(suffix)

    def _reclaim_cold(self, k):
        api = self.api
        cold = (self.last_seen <= k - self.threshold) & \
               api.resident_mask().astype(bool)
        for frame in np.nonzero(cold)[0].tolist():
            if api.request_reclaim(frame):
                self.reclaim_requests += 1
