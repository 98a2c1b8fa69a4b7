"""Deterministic discrete-event engine.

Events fire in strict (fire_at, seq) order; seq is the insertion counter, so
ties at the same timestamp resolve in scheduling order. That total order is
what makes two runs of the same scenario produce byte-identical traces.
"""

import heapq


class Simulator:
    """Single-threaded event loop over integer-nanosecond simulated time."""

    def __init__(self, trace=False):
        self._now = 0
        self._seq = 0
        self._heap = []  # (fire_at, seq, callback, label)
        self._cancelled = set()
        self._running = False
        self.trace = trace
        self.event_log = []
        self.events_processed = 0

    def now(self):
        return self._now

    def schedule(self, delay, callback, label=None):
        """Enqueue callback at now()+delay. Returns an id usable with cancel()."""
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (self._now + int(delay), seq, callback, label))
        return seq

    def schedule_at(self, fire_at, callback, label=None):
        if fire_at < self._now:
            raise ValueError(f"cannot schedule at {fire_at} before now {self._now}")
        return self.schedule(fire_at - self._now, callback, label)

    def cancel(self, event_id):
        """Lazy cancellation; returns True if the event had not fired yet."""
        if event_id >= self._seq:
            return False
        self._cancelled.add(event_id)
        return True

    def peek_next_time(self):
        """fire_at of the next pending event, or None when the queue is empty."""
        while self._heap and self._heap[0][1] in self._cancelled:
            _, seq, _, _ = heapq.heappop(self._heap)
            self._cancelled.discard(seq)
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end):
        """Process every event with fire_at <= t_end; ends with now() == t_end."""
        if t_end < self._now:
            raise ValueError(f"t_end {t_end} before now {self._now}")
        if self._running:
            raise RuntimeError("run_until re-entered from an event handler")
        self._running = True
        processed = 0
        try:
            while self._heap:
                fire_at, seq, callback, label = self._heap[0]
                if seq in self._cancelled:
                    heapq.heappop(self._heap)
                    self._cancelled.discard(seq)
                    continue
                if fire_at > t_end:
                    break
                heapq.heappop(self._heap)
                self._now = fire_at
                if self.trace:
                    self.event_log.append((fire_at, seq, label or "event"))
                callback()
                processed += 1
        finally:
            self._running = False
        self._now = t_end
        self.events_processed += processed
        return processed

    def run_until_idle(self, t_max):
        """run_until the queue drains or t_max, whichever is first; returns count."""
        processed = 0
        while True:
            nxt = self.peek_next_time()
            if nxt is None or nxt > t_max:
                break
            processed += self.run_until(nxt)
        if self._now < t_max:
            self._now = t_max
        return processed
