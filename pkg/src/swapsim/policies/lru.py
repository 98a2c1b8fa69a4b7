"""Least-recently-used limit reclaimer, the default victim source."""


class LruReclaimer:
    name = "lru"

    def __init__(self):
        self.api = None
        # sorted remainder of the current equal-stamp run, so draining a big
        # cohort of same-age pages (a limit drop over a freshly populated VM,
        # or steady thrash against a never-touched tail) costs one scan per
        # cohort instead of one scan per victim
        self._run = []
        self._run_pos = 0
        self._run_stamp = None
        self._run_epoch = None

    def attach(self, api):
        self.api = api

    def victim(self):
        """Oldest eligible memory-holding frame; equal stamps break toward the
        lowest frame index."""
        api = self.api
        epoch = api.candidates_epoch()
        if self._run_epoch == epoch:
            # stamps only move forward while the epoch holds, so members that
            # still carry the cached stamp are still the global minimum
            while self._run_pos < len(self._run):
                frame = self._run[self._run_pos]
                self._run_pos += 1
                if (api.eligible_victim(frame)
                        and api.lru_stamp(frame) == self._run_stamp):
                    return frame
        self._run_epoch = None

        # recency order is non-decreasing in stamp, so the first eligible
        # frame pins the minimal stamp and the run ends at the first larger one
        run = []
        stamp = None
        for frame in api.pages_by_recency():
            if stamp is not None and api.lru_stamp(frame) != stamp:
                break
            if not api.eligible_victim(frame):
                continue
            if stamp is None:
                stamp = api.lru_stamp(frame)
            run.append(frame)
        if not run:
            return None
        run.sort()
        if stamp < api.now():
            # a page touched at exactly `now` could still join this run, so
            # only cache runs that are strictly in the past
            self._run, self._run_pos = run, 1
            self._run_stamp, self._run_epoch = stamp, epoch
        return run[0]
