"""Seeded access-trace generators.

Each generator yields (delay_ns, gva, rw, ip) tuples — delay is the gap since
the previous access — plus ("marker", label) sentinels at interesting
boundaries (phase switches, region flips) that the harness records as sync
points. Offsets are drawn at byte granularity so the same seed produces the
same touched bytes regardless of page size; that keeps paired 4k/2M runs on
common random numbers.

ip values are synthetic tags, one per static access site, giving
instruction-pointer-keyed predictors something meaningful to key on.
"""

import random

from .units import US, SEC

MARKER = "marker"


def cold_ratio_random(seed, region_bytes, hot_bytes=None, ratio=0.0,
                      accesses=None, inter_access_ns=1 * US, write_frac=0.0):
    """Uniform random accesses: the hot prefix with probability 1-ratio, the
    cold remainder with probability ratio."""
    rng = random.Random(seed)
    if hot_bytes is None:
        hot_bytes = region_bytes // 2
    cold_bytes = region_bytes - hot_bytes
    n = 0
    while accesses is None or n < accesses:
        n += 1
        cold = rng.random() < ratio
        u = rng.random()
        if cold:
            gva = hot_bytes + int(u * cold_bytes)
            ip = "cold"
        else:
            gva = int(u * hot_bytes)
            ip = "hot"
        rw = "write" if write_frac and rng.random() < write_frac else "read"
        yield inter_access_ns, gva, rw, ip


def alternating_halves(seed, region_bytes, switch_every=60 * SEC,
                       accesses=None, inter_access_ns=1 * US):
    """Uniform accesses confined to one half of the region, flipping halves
    every switch_every nanoseconds."""
    rng = random.Random(seed)
    half = region_bytes // 2
    t = 0
    lower = True
    next_switch = switch_every
    n = 0
    while accesses is None or n < accesses:
        t += inter_access_ns
        if t >= next_switch:
            lower = not lower
            next_switch += switch_every
            yield MARKER, f"half_{'lo' if lower else 'hi'}"
        n += 1
        gva = int(rng.random() * half) + (0 if lower else half)
        yield inter_access_ns, gva, "read", "half"


def sequential_write(seed, region_bytes, stride=4096, gap_ns=200 * US,
                     passes=1, rw="write", start=0):
    """Page-stride sweep with a fixed gap between accesses, the pattern a
    next-page prefetcher should cover completely."""
    del seed  # deterministic by construction
    n_steps = (region_bytes - start) // stride
    for p in range(passes):
        yield MARKER, f"pass_{p}"
        for i in range(n_steps):
            yield gap_ns, start + i * stride, rw, "seq"


def phased(seed, region_bytes, phases, repeat=1, inter_access_ns=1 * US):
    """Explicit phase list. Each phase is a dict: start/end (fractions of the
    region), duration (ns), optional style ("uniform" or "sweep"), rw, and
    stride for sweeps. Emits a marker at every phase entry."""
    rng = random.Random(seed)
    for r in range(repeat):
        for idx, ph in enumerate(phases):
            lo = int(ph.get("start", 0.0) * region_bytes)
            hi = int(ph.get("end", 1.0) * region_bytes)
            dur = ph["duration"]
            style = ph.get("style", "uniform")
            rw = ph.get("rw", "read")
            delay = ph.get("inter_access_ns", inter_access_ns)
            ip = f"phase{idx}"
            yield MARKER, ph.get("name", f"phase{idx}_r{r}")
            if style == "uniform":
                for _ in range(max(0, dur // delay)):
                    yield delay, lo + int(rng.random() * (hi - lo)), rw, ip
            elif style == "sweep":
                stride = ph.get("stride", 4096)
                t = 0
                pos = lo
                while t < dur:
                    yield delay, pos, rw, ip
                    t += delay
                    pos += stride
                    if pos >= hi:
                        pos = lo
            else:
                raise ValueError(f"unknown phase style {style!r}")


def keyvalue(seed, region_bytes, dist="gauss", sigma_frac=0.125,
             accesses=None, write_frac=0.1, inter_access_ns=1 * US):
    """Key-value lookups over a dataset region; keys drawn gauss, uniform,
    or sequential."""
    rng = random.Random(seed)
    mid = region_bytes / 2
    sigma = region_bytes * sigma_frac
    pos = 0
    n = 0
    while accesses is None or n < accesses:
        n += 1
        if dist == "gauss":
            g = rng.gauss(mid, sigma)
            gva = int(min(max(g, 0), region_bytes - 1))
        elif dist == "uniform":
            gva = int(rng.random() * region_bytes)
        elif dist == "sequential":
            gva = pos
            pos = (pos + 4096) % region_bytes
        else:
            raise ValueError(f"unknown keyvalue distribution {dist!r}")
        if write_frac and rng.random() < write_frac:
            yield inter_access_ns, gva, "write", "kv_set"
        else:
            yield inter_access_ns, gva, "read", "kv_get"


def blocked_reuse(seed, region_bytes, tile_frac=0.4, tile_burst=8,
                  accesses=None, inter_access_ns=1 * US, stream_stride=4096):
    """Tiled-kernel shape: a tile region swept over and over (short reuse
    distance) interleaved with a long cyclic streaming sweep of the rest
    (reuse distance of a whole cycle). Distinct ip tags let a reuse-distance
    predictor tell the two apart; pure recency cannot."""
    rng = random.Random(seed)
    tile_bytes = int(region_bytes * tile_frac)
    stream_bytes = region_bytes - tile_bytes
    stream_pos = 0
    n = 0
    while accesses is None or n < accesses:
        for _ in range(tile_burst):
            n += 1
            yield inter_access_ns, int(rng.random() * tile_bytes), "read", "tile"
        n += 1
        yield (inter_access_ns, tile_bytes + stream_pos, "read", "stream")
        stream_pos = (stream_pos + stream_stride) % stream_bytes


WORKLOAD_KINDS = {
    "cold_ratio_random": cold_ratio_random,
    "alternating_halves": alternating_halves,
    "sequential_write": sequential_write,
    "phased": phased,
    "keyvalue": keyvalue,
    "blocked_reuse": blocked_reuse,
}


def build_workload(kind, seed, region_bytes, **params):
    try:
        fn = WORKLOAD_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown workload kind {kind!r}; "
                         f"choices: {sorted(WORKLOAD_KINDS)}") from None
    return fn(seed=seed, region_bytes=region_bytes, **params)


def dump_trace(stream, path, ctx_id=0, limit=None):
    """Write a trace as `time_ns,ctx,gva_hex,r|w,ip` lines (markers as
    comments)."""
    t = 0
    n = 0
    with open(path, "w") as f:
        for item in stream:
            if item[0] == MARKER:
                f.write(f"#marker,{t},{item[1]}\n")
                continue
            delay, gva, rw, ip = item
            t += delay
            f.write(f"{t},{ctx_id},{gva:x},{rw[0]},{ip}\n")
            n += 1
            if limit is not None and n >= limit:
                break
    return n


def trace_stream(path):
    """Replay a dumped trace file as a generator."""
    last_t = 0
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#marker,"):
                _, _, label = line.split(",", 2)
                yield MARKER, label
                continue
            t_s, _ctx, gva_hex, rw_c, ip = line.split(",")
            t = int(t_s)
            yield t - last_t, int(gva_hex, 16), \
                ("write" if rw_c == "w" else "read"), ip
            last_t = t
