"""Reuse-distance limit reclaimer.

Every fault trains an instruction-pointer-keyed predictor with the page's
observed reuse distance, measured in faults. A page entering memory gets an
estimated reuse time ERT = entered_at + predicted_distance - current_faults,
which counts down as other pages fault. The victim is the page with the
largest |ERT|: either it is not expected back for a long time, or its
predicted return is long overdue — both mean the prediction says "not next".

Victim lookup is two lazy heaps over the static key K = entered_at +
predicted (ERT = K - now), one for each side of zero.
"""

import heapq

from .lru import LruReclaimer

DEFAULT_ALPHA = 0.5


class ReuseDistanceReclaimer:
    name = "reuse"

    def __init__(self, alpha=DEFAULT_ALPHA):
        self.alpha = alpha
        self.api = None
        self.faults_seen = 0
        self.predictor = {}     # ip -> smoothed reuse distance (faults)
        self.last_fault = {}    # frame -> faults_seen at its previous fault
        self.entries = {}       # frame -> K
        self._hi = []           # (-K, frame): future-most predictions
        self._lo = []           # (K, frame): most overdue predictions
        self._fallback = LruReclaimer()
        self.trained = 0

    def attach(self, api):
        self.api = api
        self._fallback.attach(api)
        api.subscribe("fault", self.on_fault)
        api.register_parameter("reuse_alpha",
                               lambda: self.alpha,
                               lambda v: setattr(self, "alpha", float(v)))

    def on_fault(self, ev):
        if ev.ip is None:
            return
        self.faults_seen += 1
        n = self.faults_seen
        frame = ev.page
        prev = self.last_fault.get(frame)
        if prev is not None:
            observed = n - prev
            old = self.predictor.get(ev.ip)
            self.predictor[ev.ip] = observed if old is None else \
                self.alpha * observed + (1.0 - self.alpha) * old
            self.trained += 1
        self.last_fault[frame] = n
        predicted = self.predictor.get(ev.ip, 0.0)
        key = n + predicted
        self.entries[frame] = key
        heapq.heappush(self._hi, (-key, frame))
        heapq.heappush(self._lo, (key, frame))

    def _live(self, frame, key):
        return self.entries.get(frame) == key and self.api.eligible_victim(frame)

    def victim(self):
        now = self.faults_seen
        while self._hi and not self._live(self._hi[0][1], -self._hi[0][0]):
            heapq.heappop(self._hi)
        while self._lo and not self._live(self._lo[0][1], self._lo[0][0]):
            heapq.heappop(self._lo)
        best = None
        best_abs = -1.0
        if self._hi:
            key, frame = -self._hi[0][0], self._hi[0][1]
            best, best_abs = frame, abs(key - now)
        if self._lo:
            key, frame = self._lo[0]
            a = abs(key - now)
            if a > best_abs or (a == best_abs and (best is None or frame < best)):
                best, best_abs = frame, a
        if best is not None:
            return best
        return self._fallback.victim()
