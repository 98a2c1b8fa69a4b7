"""Wires a Scenario into a runnable simulation.

The vCPU driver consumes a workload generator and models a thread that blocks
on major faults. Hot accesses are processed in an inline batch for as long as
the next access falls no later than the engine's next pending event, so
million-access runs don't pay one event per access; faults hand control back
to the event loop and the driver resumes from the swap-in completion callback.
"""

import numpy as np

from .addressing import AddressSpace
from .config import Scenario
from .engine import Simulator
from .memory import VmMemory, FaultEvent
from .metrics import MetricsCollector
from .policies import build_policy, LruReclaimer
from .policy_engine import PolicyEngine
from .scanner import ScanService
from .storage import StorageDevice, ZeroPagePool
from .units import PAGE_2M
from .workloads import build_workload, MARKER


class VcpuDriver:
    def __init__(self, sim, vm, engine, ctx, stream, name="w0", on_marker=None,
                 start_at=0):
        self.sim = sim
        self.vm = vm
        self.engine = engine
        self.ctx = ctx
        self.stream = stream
        self.name = name
        self.on_marker = on_marker
        self.t_local = start_at
        self.blocked = False
        self.done = False
        self.accesses = 0
        self.faults = 0
        self.hit_ns = 0
        self.blocked_ns = 0
        self.finished_at = None
        self._pending = None
        self._cont = None
        self._setup_translation()
        sim.schedule_at(start_at, self._step, f"vcpu.{name}.start")

    def _setup_translation(self):
        # inline the common identity case; scrambled tables go through a
        # plain-list lookup to stay off the numpy scalar path
        table = self.ctx.table
        ps = self.vm.page_size
        addr = self.vm.addr
        base = int(table.entries[0]) if table.n_pages else 0
        if addr.hva_base == 0 and (table.entries == np.arange(
                base, base + table.n_pages)).all():
            self._to_frame = lambda gva: gva // ps + base
        else:
            entries = table.entries.tolist()
            def translate(gva, _e=entries, _ps=ps):
                return _e[gva // _ps]
            self._to_frame = translate

    def _step(self):
        sim = self.sim
        vm = self.vm
        touch = vm.touch
        horizon = sim.peek_next_time()
        while True:
            item = self._pending
            self._pending = None
            if item is None:
                item = next(self.stream, None)
                if item is None:
                    self.done = True
                    self.finished_at = self.t_local
                    return
            if item[0] == MARKER:
                if self.on_marker is not None:
                    self.on_marker(self.t_local, item[1])
                continue
            delay, gva, rw, ip = item
            t = self.t_local + delay
            if horizon is not None and t > horizon:
                self._pending = item
                self._cont = sim.schedule_at(t, self._step, f"vcpu.{self.name}")
                return
            frame = self._to_frame(gva)
            write = rw == "write"
            lat = touch(frame, write, t)
            self.accesses += 1
            if lat is not None:
                self.t_local = t + lat
                self.hit_ns += lat
                continue
            # major or minor fault: block until the engine maps the page
            self.faults += 1
            self.blocked = True
            self.t_local = t
            ev = FaultEvent(frame, self.ctx, gva, ip, t, write)
            sim.schedule_at(t, lambda e=ev: self.engine.on_fault(e, self._resume),
                            f"vcpu.{self.name}.fault")
            return

    def _resume(self, t_mapped):
        self.blocked_ns += t_mapped - self.t_local
        self.t_local = t_mapped
        self.blocked = False
        self._step()


class Simulation:
    def __init__(self, scenario, trace_events=False):
        if isinstance(scenario, dict):
            scenario = Scenario(scenario)
        self.scenario = scenario
        sc = scenario
        self.sim = Simulator(trace=trace_events)

        vm_cfg = sc.vm
        self.addr = AddressSpace(vm_cfg["size"], page_size=vm_cfg["page_size"],
                                 hva_base=vm_cfg.get("hva_base", 0),
                                 fail_fraction=vm_cfg.get("fail_fraction", 0.0),
                                 walk_latency=vm_cfg.get("walk_latency", 0),
                                 seed=sc.seed)
        n_frames = vm_cfg["size"] // vm_cfg["page_size"]
        mem_kwargs = {}
        for k in ("hot_latency", "cold_penalty_after_clear", "c_scan_per_pte",
                  "lru_source"):
            if vm_cfg.get(k) is not None:
                mem_kwargs[k] = vm_cfg[k]
        self.vm = VmMemory(self.sim, self.addr, n_frames, vm_cfg["page_size"],
                           **mem_kwargs)

        self.device = StorageDevice(self.sim, **sc.device)
        self.zero_pool = None
        if vm_cfg["page_size"] == PAGE_2M or sc.zero_pool is not None:
            self.zero_pool = ZeroPagePool(self.sim, self.device,
                                          **(sc.zero_pool or {}))
        self.scan_service = ScanService(self.sim, self.vm)

        for start, end, written in sc.init_resident:
            self.vm.populate_resident(range(start, end), written=written)
        for start, end, written in sc.init_swapped:
            self.vm.populate_swapped(range(start, end), written=written)

        self.engine = PolicyEngine(self.sim, self.vm, self.device,
                                   zero_pool=self.zero_pool,
                                   scan_service=self.scan_service,
                                   **sc.engine)

        self.policies = {}
        limit_assigned = False
        for p in sc.policies:
            pol = build_policy(p["kind"], **p["params"])
            self.engine.register_policy(pol, limit_reclaimer=p["limit_reclaimer"])
            self.policies[pol.name] = pol
            limit_assigned = limit_assigned or p["limit_reclaimer"]
        if not limit_assigned:
            # something must answer forced reclaims
            fallback = LruReclaimer()
            if "lru" in self.policies:
                self.engine.limit_reclaimer = self.policies["lru"]
            else:
                self.engine.register_policy(fallback, limit_reclaimer=True)
                self.policies["lru"] = fallback

        self.drivers = []
        for i, w in enumerate(sc.workloads):
            ctx = self.addr.make_context(i, n_pages=w["region"] // vm_cfg["page_size"],
                                         scramble=vm_cfg.get("scramble", 0.0),
                                         seed=sc.seed + i,
                                         base_page=w["base"] // vm_cfg["page_size"])
            stream = build_workload(w["kind"], seed=sc.seed + i,
                                    region_bytes=w["region"], **w["params"])
            drv = VcpuDriver(self.sim, self.vm, self.engine, ctx, stream,
                             name=f"w{i}", on_marker=self._marker,
                             start_at=w["start_at"])
            self.drivers.append(drv)

        for at, limit in sc.limit_schedule:
            self.sim.schedule_at(at, lambda l=limit: self.engine.set_memory_limit(l),
                                 "limit_schedule")

        for name, value in sc.param_overrides.items():
            self.engine.set_param(name, value)

        self.collector = MetricsCollector(self.sim, self.engine, self.device,
                                          self.drivers,
                                          sc.metrics["sample_interval"])
        self.collector.start()

    def _marker(self, t, label):
        self.collector.add_marker(t, label)

    def run(self, duration=None):
        """Run for the configured duration, or to workload completion plus
        queue drain when no duration is set. Returns the collector."""
        duration = duration if duration is not None else self.scenario.duration
        if duration is not None:
            self.sim.run_until(duration)
        else:
            guard = 1 << 62
            while True:
                nxt = self.sim.peek_next_time()
                if nxt is None or nxt > guard:
                    break
                self.sim.run_until(nxt)
                if all(d.done for d in self.drivers) and self.engine.drained():
                    # drain any same-time stragglers (notifications, metrics)
                    while True:
                        nxt = self.sim.peek_next_time()
                        if nxt is None or nxt > self.sim.now():
                            break
                        self.sim.run_until(nxt)
                    break
        return self.collector


def run_scenario(scenario, trace_events=False, duration=None):
    simn = Simulation(scenario, trace_events=trace_events)
    collector = simn.run(duration)
    return simn, collector
