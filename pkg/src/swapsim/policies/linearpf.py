"""Next-page prefetcher, in two flavors.

HVA mode extrapolates in host address space: fault on host page p, prefetch
p+1. GVA mode walks the guest page table instead: fault at gva, prefetch
whatever host page backs gva + page_size. When the guest's virtual layout is
scrambled relative to guest-physical, only the GVA walk still lands on the
page the guest will actually touch next.
"""


class LinearPF:
    name = "linearpf"

    def __init__(self, mode="gva"):
        if mode not in ("gva", "hva"):
            raise ValueError(f"mode must be gva or hva, not {mode!r}")
        self.mode = mode
        self.api = None
        self.issued = 0
        self.skipped = 0     # faults carrying no usable context

    def attach(self, api):
        self.api = api
        api.subscribe("fault", self.on_fault)
        api.register_parameter("linearpf_mode", lambda: self.mode)

    def on_fault(self, ev):
        api = self.api
        if self.mode == "hva":
            nxt = ev.page + 1
            if nxt < api.n_frames() and api.request_prefetch(nxt):
                self.issued += 1
            return
        if ev.ctx is None or ev.gva is None:
            self.skipped += 1
            return
        hva = api.gva_to_hva(ev.ctx, ev.gva + api.page_size())
        if hva is None:
            self.skipped += 1
            return
        if api.request_prefetch(api.hva_to_frame(hva)):
            self.issued += 1
