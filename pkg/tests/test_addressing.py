import numpy as np
import pytest

from swapsim.addressing import (AddressSpace, GuestContext, OutOfRangeError,
                                build_mapping)
from swapsim.units import PAGE_4K, PAGE_2M


def test_identity_mapping():
    table = build_mapping(seed=0, n_pages=8, scramble=0.0)
    assert [table.lookup(i) for i in range(8)] == list(range(8))


def test_full_scramble_is_permutation():
    table = build_mapping(seed=1, n_pages=1024, scramble=1.0)
    ent = sorted(int(table.lookup(i)) for i in range(1024))
    assert ent == list(range(1024))
    # sequential GVA walk is non-consecutive in GPA space
    consec = sum(1 for i in range(1023)
                 if table.lookup(i + 1) == table.lookup(i) + 1)
    assert consec < 1024 // 8


def test_scramble_deterministic_per_seed():
    a = build_mapping(seed=1, n_pages=1024, scramble=1.0)
    b = build_mapping(seed=1, n_pages=1024, scramble=1.0)
    c = build_mapping(seed=2, n_pages=1024, scramble=1.0)
    assert np.array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)


def test_partial_scramble_moves_roughly_that_share():
    table = build_mapping(seed=5, n_pages=4000, scramble=0.5)
    moved = int(np.count_nonzero(table.entries != np.arange(4000)))
    # a random permutation of the chosen half leaves a few fixed points
    assert 1500 <= moved <= 2000


def test_scramble_kills_consecutive_pairs_property():
    # GVA-consecutive pairs staying GPA-consecutive should be ~1/n
    for seed in range(20):
        n = 2048
        table = build_mapping(seed=seed, n_pages=n, scramble=1.0)
        ent = table.entries
        frac = np.count_nonzero(ent[1:] == ent[:-1] + 1) / (n - 1)
        assert frac <= 2.0 / n + 0.01


def test_guest_walk_identity():
    aspace = AddressSpace(vm_bytes=64 * PAGE_4K)
    ctx = aspace.make_context(0)
    assert aspace.gva_to_gpa(ctx, 0x3000) == 0x3000
    assert aspace.gva_to_hva(ctx, 0x5000) == 0x5000


def test_guest_walk_unmapped_returns_none():
    table = build_mapping(seed=0, n_pages=4, scramble=0.0)
    table.entries[2] = -1
    aspace = AddressSpace(vm_bytes=4 * PAGE_4K)
    ctx = GuestContext(0, table)
    assert aspace.gva_to_gpa(ctx, 2 * PAGE_4K) is None
    assert aspace.gva_to_hva(ctx, 2 * PAGE_4K) is None
    assert aspace.gva_to_gpa(ctx, 9 * PAGE_4K) is None  # out of table range


def test_permuted_walk_matches_stored_permutation():
    aspace = AddressSpace(vm_bytes=1024 * PAGE_4K)
    ctx = aspace.make_context(0, scramble=1.0, seed=7)
    perm = ctx.table.entries
    for gpage in (0, 17, 1023):
        gva = gpage * PAGE_4K + 0x123
        assert aspace.gva_to_gpa(ctx, gva) == int(perm[gpage]) * PAGE_4K + 0x123


def test_hva_base_offset():
    aspace = AddressSpace(vm_bytes=16 * PAGE_4K, hva_base=0x1000_0000)
    assert aspace.gpa_to_hva(0) == 0x1000_0000
    assert aspace.gpa_to_hva(0x2000) == 0x1000_2000
    assert aspace.hva_to_frame(0x1000_2000) == 2
    assert aspace.frame_to_hva(2) == 0x1000_2000


def test_gpa_out_of_range():
    aspace = AddressSpace(vm_bytes=16 * PAGE_4K)
    with pytest.raises(OutOfRangeError):
        aspace.gpa_to_hva(16 * PAGE_4K)
    with pytest.raises(OutOfRangeError):
        aspace.hva_to_frame(16 * PAGE_4K)


def test_walk_round_trip_property():
    aspace = AddressSpace(vm_bytes=512 * PAGE_4K)
    ctx = aspace.make_context(0, scramble=1.0, seed=3)
    rng = np.random.default_rng(0)
    for gva in rng.integers(0, 512 * PAGE_4K, size=200):
        gva = int(gva)
        gpa = aspace.gva_to_gpa(ctx, gva)
        assert aspace.gva_to_hva(ctx, gva) == aspace.gpa_to_hva(gpa)


def test_fail_fraction_rate():
    aspace = AddressSpace(vm_bytes=64 * PAGE_4K, fail_fraction=0.01, seed=11)
    ctx = aspace.make_context(0)
    fails = sum(1 for _ in range(10_000) if aspace.gva_to_hva(ctx, 0x1000) is None)
    assert 60 <= fails <= 150


def test_context_base_page_slices():
    aspace = AddressSpace(vm_bytes=32 * PAGE_4K)
    lo = aspace.make_context(0, n_pages=16)
    hi = aspace.make_context(1, n_pages=16, base_page=16)
    assert aspace.gva_to_hva(lo, 0) == 0
    assert aspace.gva_to_hva(hi, 0) == 16 * PAGE_4K
    with pytest.raises(OutOfRangeError):
        aspace.make_context(2, n_pages=20, base_page=16)


def test_2m_tables_at_2m_granularity():
    aspace = AddressSpace(vm_bytes=8 * PAGE_2M, page_size=PAGE_2M)
    ctx = aspace.make_context(0, scramble=1.0, seed=1)
    gva = 3 * PAGE_2M + 0x4567
    gpa = aspace.gva_to_gpa(ctx, gva)
    assert gpa % PAGE_2M == 0x4567
    assert aspace.hva_to_frame(aspace.gpa_to_hva(gpa)) == int(ctx.table.entries[3])
