"""Working-set restore.

When the memory limit drops, remember which pages were in memory and how
recently each was touched. When the limit comes back up, prefetch that
remembered set most-recently-used first until the headroom is gone, instead
of waiting for the guest to demand-fault its way back.
"""


class WorkingSetRestore:
    name = "wsr"

    def __init__(self):
        self.api = None
        self.snapshot = []    # frames, most recently used first
        self.restored = 0

    def attach(self, api):
        self.api = api
        api.subscribe("limit_change", self.on_limit_change)

    def on_limit_change(self, change):
        old, new = change
        if new < old:
            # ordered oldest->newest; keep MRU first
            self.snapshot = list(self.api.pages_by_recency())[::-1]
        elif new > old and self.snapshot:
            self._restore()

    def _restore(self):
        api = self.api
        page = api.page_size()
        rest = []
        for i, frame in enumerate(self.snapshot):
            if api.memory_usage() + page > api.memory_limit():
                rest = self.snapshot[i:]
                break
            if api.request_prefetch(frame):
                self.restored += 1
        self.snapshot = rest
