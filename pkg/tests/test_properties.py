"""Randomized invariant suites over the full engine stack.

Each suite replays 10,000 seeded random operation sequences (faults, touches,
reclaim/prefetch requests, locks, limit changes) against a small VM and checks
one invariant class. Sequences are plain `random.Random(seed)` driven, so any
failure reproduces from the seed in the assertion message.
"""

import random

from swapsim.addressing import AddressSpace
from swapsim.engine import Simulator
from swapsim.memory import FaultEvent, VmMemory
from swapsim.policy_engine import DeadlockError, PolicyEngine
from swapsim.policies.lru import LruReclaimer
from swapsim.storage import StorageDevice
from swapsim.units import MS, US, PAGE_4K

N_SEQUENCES = 10_000
N_FRAMES = 12
OPS = 16


def run_sequence(seed, trace=False, log_io=False, hooks=None):
    """One seeded random run; returns (sim, vm, dev, eng, ctx)."""
    rng = random.Random(seed)
    sim = Simulator(trace=trace)
    addr = AddressSpace(vm_bytes=N_FRAMES * PAGE_4K, page_size=PAGE_4K)
    vm = VmMemory(sim, addr, N_FRAMES, PAGE_4K)
    limit_pages = rng.randint(3, N_FRAMES)
    frames = list(range(N_FRAMES))
    rng.shuffle(frames)
    n_res = rng.randint(0, limit_pages)
    vm.populate_resident(frames[:n_res], written=bool(rng.getrandbits(1)))
    vm.populate_swapped(frames[n_res:], written=bool(rng.getrandbits(1)))
    dev = StorageDevice(sim, keep_log=log_io)
    eng = PolicyEngine(sim, vm, dev, memory_limit=limit_pages * PAGE_4K)
    eng.register_policy(LruReclaimer(), limit_reclaimer=True)

    held = {}                     # frame -> time on_locked fired
    ctx = {"held": held, "deadlocked": False, "violations": []}
    if hooks:
        hooks(sim, vm, eng, ctx)

    requested = []
    for _ in range(OPS):
        op = rng.random()
        f = rng.randrange(N_FRAMES)
        try:
            if op < 0.35:
                if vm.state[f]:
                    vm.touch(f, rng.random() < 0.3, sim.now())
                else:
                    eng.on_fault(FaultEvent(f, time=sim.now(),
                                            write=rng.random() < 0.3))
            elif op < 0.55:
                eng.request_reclaim(f)
            elif op < 0.70:
                eng.request_prefetch(f)
            elif op < 0.80:
                if f not in requested and len(requested) < 2:
                    requested.append(f)
                    eng.lock_page(f, lambda t, f=f: held.__setitem__(f, t))
            elif op < 0.90:
                # only unlock grants that actually fired; unlocking a frame
                # whose lock fault is still in flight would race the grant
                granted = [g for g in requested if g in held]
                if granted:
                    g = granted[rng.randrange(len(granted))]
                    requested.remove(g)
                    held.pop(g)
                    eng.unlock_page(g)
            else:
                eng.set_memory_limit(rng.randint(4, N_FRAMES) * PAGE_4K)
        except DeadlockError:
            # legitimate terminal outcome: nothing reclaimable was left
            ctx["deadlocked"] = True
            break
        sim.run_until(sim.now() + rng.choice((0, 0, 3 * US, 20 * US, 120 * US)))

    for _ in range(50):           # drain all queued work
        sim.run_until(sim.now() + 1 * MS)
        if eng.drained():
            break
    return sim, vm, dev, eng, ctx


# ------------------------------------------------------------------ suite 1

def suite_limit_safety(n=N_SEQUENCES):
    """After the queue drains, held memory never exceeds the limit."""
    for seed in range(n):
        sim, vm, dev, eng, ctx = run_sequence(seed)
        assert eng.drained(), f"seed={seed}: queue failed to drain"
        if ctx["deadlocked"]:
            continue              # enforcement aborted by design
        mem = vm.memory_bytes()
        assert mem <= eng.limit, \
            f"seed={seed}: {mem} bytes held over limit {eng.limit}"
        assert eng.usage <= eng.limit, \
            f"seed={seed}: usage {eng.usage} over limit {eng.limit}"


def test_property_limit_safety():
    suite_limit_safety()


# ------------------------------------------------------------------ suite 2

def suite_no_redundant_io(n=N_SEQUENCES):
    """Every device op serves a real state change: swap-ins and swap-outs of
    one frame strictly alternate, and ops never exceed completed swaps."""
    def hooks(sim, vm, eng, ctx):
        in_mem = {f for f in range(N_FRAMES) if vm.holds_memory(f)}
        bad = ctx["violations"]

        def on_in(frame):
            if frame in in_mem:
                bad.append(("double-in", frame, sim.now()))
            in_mem.add(frame)

        def on_out(frame):
            if frame not in in_mem:
                bad.append(("out-of-nothing", frame, sim.now()))
            in_mem.discard(frame)

        eng.subscribe("swap_in", on_in)
        eng.subscribe("swap_out", on_out)

    for seed in range(n):
        sim, vm, dev, eng, ctx = run_sequence(seed, log_io=True, hooks=hooks)
        assert not ctx["violations"], f"seed={seed}: {ctx['violations'][:3]}"
        reads = sum(1 for (_, _, _, d) in dev.op_log if d == "read")
        writes = len(dev.op_log) - reads
        assert reads <= eng.swapins_done, \
            f"seed={seed}: {reads} reads for {eng.swapins_done} swap-ins"
        assert writes <= eng.swapouts_done, \
            f"seed={seed}: {writes} writes for {eng.swapouts_done} swap-outs"


def test_property_no_redundant_io():
    suite_no_redundant_io()


# ------------------------------------------------------------------ suite 3

def suite_lock_safety(n=N_SEQUENCES):
    """A page is never swapped out while a granted lock is outstanding."""
    def hooks(sim, vm, eng, ctx):
        held = ctx["held"]
        bad = ctx["violations"]

        def on_out(frame):
            if frame in held:
                bad.append((frame, sim.now()))

        eng.subscribe("swap_out", on_out)

    for seed in range(n):
        sim, vm, dev, eng, ctx = run_sequence(seed, hooks=hooks)
        assert not ctx["violations"], \
            f"seed={seed}: locked pages swapped out: {ctx['violations'][:3]}"
        for frame in ctx["held"]:
            assert vm.state[frame] and vm.locked[frame], \
                f"seed={seed}: held frame {frame} not resident+locked at end"


def test_property_lock_safety():
    suite_lock_safety()


# ------------------------------------------------------------------ suite 4

def suite_accounting_exactness(n=N_SEQUENCES):
    """Incremental byte counters equal a from-scratch recount at drain."""
    for seed in range(n):
        sim, vm, dev, eng, ctx = run_sequence(seed)
        res = sum(vm.state) * PAGE_4K
        staged = sum(vm.staged) * PAGE_4K
        assert vm.resident_bytes == res, \
            f"seed={seed}: resident {vm.resident_bytes} != recount {res}"
        assert vm.staged_bytes == staged, \
            f"seed={seed}: staged {vm.staged_bytes} != recount {staged}"
        assert eng.usage == res + staged, \
            f"seed={seed}: usage {eng.usage} != held {res + staged}"
        holding = {f for f in range(N_FRAMES) if vm.holds_memory(f)}
        assert set(vm.recency) == holding, \
            f"seed={seed}: recency {set(vm.recency)} != holding {holding}"


def test_property_accounting_exactness():
    suite_accounting_exactness()


# ------------------------------------------------------------------ suite 5

def suite_determinism(n=N_SEQUENCES):
    """The same seed produces an identical event history, twice."""
    for seed in range(n):
        runs = []
        for _ in range(2):
            sim, vm, dev, eng, ctx = run_sequence(seed, trace=True)
            runs.append((sim.event_log,
                         eng.pf_count, eng.swapins_done, eng.swapouts_done,
                         eng.usage, bytes(vm.state), bytes(vm.staged)))
        assert runs[0] == runs[1], f"seed={seed}: diverging histories"


def test_property_determinism():
    suite_determinism()
