"""Guest and host address spaces.

Three layers: guest-virtual (GVA), guest-physical (GPA), host-virtual (HVA).
The guest controls GVA->GPA via its page table; the host sees only GPAs, which
convert to HVAs by a constant offset. Page state lives at host-frame
granularity (hva // page_size).
"""

import random

import numpy as np

from .units import PAGE_4K


class OutOfRangeError(Exception):
    """GPA outside the VM's configured memory size."""


class NoTranslationError(Exception):
    """Access through a GVA with no guest page-table entry."""


class GuestContext:
    """Stands in for one guest application's page-table base pointer."""

    def __init__(self, ctx_id, table):
        self.ctx_id = ctx_id
        self.table = table

    def __repr__(self):
        return f"GuestContext({self.ctx_id})"


class GuestPageTable:
    """GVA-page -> GPA-page map at a single page-size granularity.

    entries[i] == -1 marks an unmapped guest page.
    """

    def __init__(self, entries, page_size=PAGE_4K):
        self.entries = np.asarray(entries, dtype=np.int64)
        self.page_size = page_size

    @property
    def n_pages(self):
        return len(self.entries)

    def lookup(self, gva_page):
        if gva_page < 0 or gva_page >= len(self.entries):
            return None
        gpa_page = int(self.entries[gva_page])
        return None if gpa_page < 0 else gpa_page


def build_mapping(seed, n_pages, scramble, page_size=PAGE_4K):
    """Build a guest page table covering n_pages.

    scramble=0 is the identity mapping; scramble=1 a seeded uniform random
    permutation; fractions in between permute that share of the pages among
    themselves and leave the rest in place.
    """
    if n_pages < 1:
        raise ValueError("n_pages must be >= 1")
    if not 0.0 <= scramble <= 1.0:
        raise ValueError("scramble must be in [0, 1]")
    entries = np.arange(n_pages, dtype=np.int64)
    if scramble > 0.0:
        rng = np.random.default_rng(seed)
        if scramble >= 1.0:
            entries = rng.permutation(n_pages).astype(np.int64)
        else:
            k = int(round(scramble * n_pages))
            picked = rng.choice(n_pages, size=k, replace=False)
            entries[picked] = entries[rng.permutation(picked)]
    return GuestPageTable(entries, page_size)


class AddressSpace:
    """Per-VM translation state: registered guest contexts plus the linear
    GPA->HVA mapping."""

    def __init__(self, vm_bytes, page_size=PAGE_4K, hva_base=0,
                 fail_fraction=0.0, walk_latency=0, seed=0):
        self.vm_bytes = vm_bytes
        self.page_size = page_size
        self.hva_base = hva_base
        # fraction of GVA->HVA walks that spuriously fail (walker races the
        # guest); 0 by default
        self.fail_fraction = fail_fraction
        self.walk_latency = walk_latency
        self._fail_rng = random.Random(seed)
        self._contexts = {}

    def make_context(self, ctx_id, n_pages=None, scramble=0.0, seed=0,
                     base_page=0):
        """Register a guest context whose table covers n_pages GPA pages
        starting at base_page (so several contexts can own disjoint slices)."""
        if ctx_id in self._contexts:
            raise ValueError(f"context {ctx_id} already registered")
        if n_pages is None:
            n_pages = self.vm_bytes // self.page_size
        if (base_page + n_pages) * self.page_size > self.vm_bytes:
            raise OutOfRangeError("context range exceeds VM size")
        table = build_mapping(seed, n_pages, scramble, self.page_size)
        if base_page:
            table.entries[table.entries >= 0] += base_page
        ctx = GuestContext(ctx_id, table)
        self._contexts[ctx_id] = ctx
        return ctx

    def context(self, ctx_id):
        return self._contexts[ctx_id]

    def gva_to_gpa(self, ctx, gva):
        """Guest page-table lookup; None when no translation exists."""
        table = ctx.table
        gpa_page = table.lookup(gva // table.page_size)
        if gpa_page is None:
            return None
        return gpa_page * table.page_size + (gva % table.page_size)

    def gpa_to_hva(self, gpa):
        if gpa < 0 or gpa >= self.vm_bytes:
            raise OutOfRangeError(f"gpa {gpa:#x} outside VM of {self.vm_bytes} bytes")
        return self.hva_base + gpa

    def gva_to_hva(self, ctx, gva):
        """Full walk. Returns None on missing translation or a (rare,
        configurable) spurious walker failure; callers must tolerate None."""
        gpa = self.gva_to_gpa(ctx, gva)
        if gpa is None:
            return None
        if self.fail_fraction > 0.0 and self._fail_rng.random() < self.fail_fraction:
            return None
        return self.gpa_to_hva(gpa)

    def hva_to_frame(self, hva):
        """Host frame index backing an HVA."""
        off = hva - self.hva_base
        if off < 0 or off >= self.vm_bytes:
            raise OutOfRangeError(f"hva {hva:#x} outside VM region")
        return off // self.page_size

    def frame_to_hva(self, frame):
        return self.hva_base + frame * self.page_size
