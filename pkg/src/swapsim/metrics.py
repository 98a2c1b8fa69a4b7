"""Run instrumentation: sampled series, CSV/JSON output, and the
bucket-aligned memory-saved comparison between two runs."""

import bisect
import csv
import importlib.resources
import json

from .units import SEC

CSV_COLUMNS = [
    "record", "time_ns", "resident_bytes", "staged_bytes", "usage_bytes",
    "limit_bytes", "pf_total", "pf_major", "pf_minor", "swapins", "swapouts",
    "forced_reclaims", "reclaims_accepted", "prefetch_admitted",
    "prefetch_dropped", "read_bytes", "write_bytes", "device_ops",
    "queue_len", "accesses", "blocked_ns", "label",
]


class MissingSyncPoints(Exception):
    pass


class MetricsCollector:
    """Samples engine/device/driver counters at a fixed cadence and records
    workload markers as their own rows."""

    def __init__(self, sim, engine, device, drivers, sample_interval=1 * SEC):
        self.sim = sim
        self.engine = engine
        self.device = device
        self.drivers = drivers
        self.interval = sample_interval
        self.rows = []
        self.markers = []

    def start(self):
        self._sample()

    def _sample(self):
        e = self.engine
        d = self.device
        reads = sum(r[2] for r in d.op_log if r[3] == "read")
        writes = sum(r[2] for r in d.op_log if r[3] == "write")
        self.rows.append({
            "record": "sample",
            "time_ns": self.sim.now(),
            "resident_bytes": e.vm.resident_bytes,
            "staged_bytes": e.vm.staged_bytes,
            "usage_bytes": e.usage,
            "limit_bytes": e.limit,
            "pf_total": e.pf_count,
            "pf_major": e.pf_major,
            "pf_minor": e.pf_minor,
            "swapins": e.swapins_done,
            "swapouts": e.swapouts_done,
            "forced_reclaims": e.forced_reclaims,
            "reclaims_accepted": e.reclaims_accepted,
            "prefetch_admitted": e.prefetch_admitted,
            "prefetch_dropped": e.prefetch_dropped,
            "read_bytes": reads,
            "write_bytes": writes,
            "device_ops": d.ops_completed,
            "queue_len": len(e.queue),
            "accesses": sum(dr.accesses for dr in self.drivers),
            "blocked_ns": sum(dr.blocked_ns for dr in self.drivers),
            "label": "",
        })
        self.sim.schedule(self.interval, self._sample, "metrics.sample")

    def add_marker(self, t, label):
        self.markers.append((t, label))
        self.rows.append({"record": "marker", "time_ns": t, "label": label})

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=CSV_COLUMNS, restval="")
            w.writeheader()
            for row in sorted(self.rows, key=lambda r: (r["time_ns"],
                                                        r["record"] == "marker")):
                w.writerow(row)

    def summary(self, scenario_name, seed):
        e = self.engine
        d = self.device
        reads = sum(r[2] for r in d.op_log if r[3] == "read")
        writes = sum(r[2] for r in d.op_log if r[3] == "write")
        out = {
            "scenario": scenario_name,
            "seed": seed,
            "sim_time_ns": self.sim.now(),
            "pf_total": e.pf_count,
            "pf_major": e.pf_major,
            "pf_minor": e.pf_minor,
            "read_bytes": reads,
            "write_bytes": writes,
            "device_ops": d.ops_completed,
            "accesses": sum(dr.accesses for dr in self.drivers),
            "final_resident_bytes": e.vm.resident_bytes,
            "final_usage_bytes": e.usage,
            "memory_limit_bytes": e.limit,
            "forced_reclaims": e.forced_reclaims,
            "reclaims_accepted": e.reclaims_accepted,
            "prefetch_admitted": e.prefetch_admitted,
            "prefetch_dropped": e.prefetch_dropped,
            "zero_fills": e.zero_fills,
            "workloads": [
                {"stream": dr.name, "accesses": dr.accesses,
                 "finished_at_ns": dr.finished_at, "blocked_ns": dr.blocked_ns,
                 "hit_ns": dr.hit_ns}
                for dr in self.drivers
            ],
            "markers": [{"time_ns": t, "label": lbl} for t, lbl in self.markers],
        }
        return out


def summary_schema():
    ref = importlib.resources.files("swapsim") / "summary.schema.json"
    return json.loads(ref.read_text())


def write_summary(summary, path):
    import jsonschema
    jsonschema.validate(summary, summary_schema())
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------- comparison

def load_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _series(rows):
    """(times, memory_bytes, markers) from CSV rows or collector rows."""
    times, mem, markers = [], [], []
    for r in rows:
        if r["record"] == "sample":
            times.append(int(r["time_ns"]))
            mem.append(int(r["resident_bytes"]) + int(r["staged_bytes"]))
        elif r["record"] == "marker":
            markers.append((int(r["time_ns"]), r["label"]))
    return times, mem, markers


def _mean_between(times, vals, a, b):
    """Time-weighted mean of a step series over [a, b)."""
    if b <= a:
        return float(vals[-1]) if vals else 0.0
    total = 0.0
    i = max(0, bisect.bisect_right(times, a) - 1)
    t = a
    while t < b:
        t_next = times[i + 1] if i + 1 < len(times) else b
        seg_end = min(b, max(t_next, t))
        total += vals[min(i, len(vals) - 1)] * (seg_end - t)
        t = seg_end
        i += 1
        if i >= len(times):
            break
    if t < b and vals:
        total += vals[-1] * (b - t)
    return total / (b - a)


def _match_markers(fast_markers, slow_markers, sync_labels=None):
    if sync_labels is not None:
        fast_markers = [m for m in fast_markers if m[1] in sync_labels]
        slow_markers = [m for m in slow_markers if m[1] in sync_labels]
    pairs = []
    used = 0
    for t_f, label in fast_markers:
        for j in range(used, len(slow_markers)):
            if slow_markers[j][1] == label:
                pairs.append((t_f, slow_markers[j][0]))
                used = j + 1
                break
    if sync_labels is not None and not pairs:
        raise MissingSyncPoints(f"no common markers among {sorted(sync_labels)}")
    return pairs


def memory_saved(fast_rows, slow_rows, sync_labels=None, bucket=5 * SEC):
    """1 - mean(fast_mem / slow_mem) over 5s buckets of the faster run,
    aligned to the slower run piecewise-linearly between sync points."""
    ft, fm, fmk = _series(fast_rows)
    st, sm, smk = _series(slow_rows)
    if not ft or not st:
        raise ValueError("both runs need at least one sample")
    anchors = [(ft[0], st[0])]
    anchors += [p for p in _match_markers(fmk, smk, sync_labels)
                if p[0] > anchors[0][0]]
    end = (max(ft[-1], anchors[-1][0] + 1), max(st[-1], anchors[-1][1] + 1))
    if end != anchors[-1]:
        anchors.append(end)
    ratios = []
    for (af, asl), (bf, bsl) in zip(anchors, anchors[1:]):
        if bf <= af:
            continue
        scale = (bsl - asl) / (bf - af)
        t = af
        while t < bf:
            t2 = min(t + bucket, bf)
            s1 = asl + (t - af) * scale
            s2 = asl + (t2 - af) * scale
            mf = _mean_between(ft, fm, t, t2)
            ms = _mean_between(st, sm, s1, s2)
            if ms > 0:
                ratios.append(mf / ms)
            t = t2
    if not ratios:
        raise ValueError("no comparable buckets")
    return 1.0 - sum(ratios) / len(ratios)
