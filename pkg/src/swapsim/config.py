"""Scenario configuration: YAML in, validated Scenario out.

Sizes accept ints or strings like "4gb" / "512mb" / "75%" (percent of VM
size); times accept "60s" / "10ms" / "250ns" or raw nanoseconds.
"""

import importlib.resources

import yaml

from .units import KB, MB, GB, US, MS, SEC, parse_page_size

_SIZE_SUFFIX = {"kb": KB, "mb": MB, "gb": GB, "k": KB, "m": MB, "g": GB, "b": 1}
_TIME_SUFFIX = {"ns": 1, "us": US, "ms": MS, "s": SEC}


class ConfigError(Exception):
    pass


def parse_size(value, base=None, where=""):
    if isinstance(value, (int, float)):
        return int(value)
    s = str(value).strip().lower().replace("_", "")
    if s.endswith("%"):
        if base is None:
            raise ConfigError(f"{where}: percentage needs a base size")
        return int(float(s[:-1]) / 100.0 * base)
    for suf in ("kb", "mb", "gb", "b", "k", "m", "g"):
        if s.endswith(suf):
            try:
                return int(float(s[:-len(suf)]) * _SIZE_SUFFIX[suf])
            except ValueError:
                break
    try:
        return int(float(s))
    except ValueError:
        raise ConfigError(f"{where}: cannot parse size {value!r}") from None


def parse_time(value, where=""):
    if isinstance(value, (int, float)):
        return int(value)
    s = str(value).strip().lower().replace("_", "")
    for suf in ("ns", "us", "ms", "s"):
        if s.endswith(suf):
            try:
                return int(float(s[:-len(suf)]) * _TIME_SUFFIX[suf])
            except ValueError:
                break
    try:
        return int(float(s))
    except ValueError:
        raise ConfigError(f"{where}: cannot parse time {value!r}") from None


def _times_in(d, keys, where):
    for k in keys:
        if k in d and d[k] is not None:
            d[k] = parse_time(d[k], f"{where}.{k}")


class Scenario:
    def __init__(self, data, name="scenario"):
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a mapping")
        self.name = data.get("name", name)
        self.seed = int(data.get("seed", 0))
        self.duration = (parse_time(data["duration"], "duration")
                         if data.get("duration") is not None else None)

        vm = dict(data.get("vm") or {})
        if "size" not in vm:
            raise ConfigError("vm.size is required")
        vm["size"] = parse_size(vm["size"], where="vm.size")
        vm["page_size"] = parse_page_size(vm.get("page_size", "4k"))
        _times_in(vm, ("hot_latency", "cold_penalty_after_clear",
                       "c_scan_per_pte", "walk_latency"), "vm")
        vm.setdefault("scramble", 0.0)
        vm.setdefault("fail_fraction", 0.0)
        if vm["size"] % vm["page_size"]:
            raise ConfigError("vm.size must be a multiple of the page size")
        self.vm = vm

        dev = dict(data.get("device") or {})
        _times_in(dev, ("io_base_4k", "io_base_2m"), "device")
        if "bandwidth_cap" in dev:
            dev["bandwidth_cap"] = parse_size(dev["bandwidth_cap"],
                                              where="device.bandwidth_cap")
        if "iops_cap" in dev:
            dev["iops_cap"] = int(dev["iops_cap"])
        self.device = dev

        zp = data.get("zero_pool")
        if zp is not None:
            zp = dict(zp)
            _times_in(zp, ("zero_cost",), "zero_pool")
        self.zero_pool = zp

        eng = dict(data.get("engine") or {})
        if eng.get("memory_limit") is not None:
            eng["memory_limit"] = parse_size(eng["memory_limit"], base=vm["size"],
                                             where="engine.memory_limit")
        _times_in(eng, ("fault_sw", "worker_post", "minor_fault_latency",
                        "zero_fill_4k"), "engine")
        self.engine = eng

        init = dict(data.get("init") or {})
        self.init_resident = [self._parse_range(r, "init.resident")
                              for r in init.get("resident", [])]
        self.init_swapped = [self._parse_range(r, "init.swapped")
                             for r in init.get("swapped", [])]

        self.policies = []
        for i, p in enumerate(data.get("policies") or []):
            if not isinstance(p, dict) or "kind" not in p:
                raise ConfigError(f"policies[{i}] needs a 'kind'")
            params = dict(p.get("params") or {})
            for k in list(params):
                if k.endswith("_interval") or k == "tick":
                    params[k] = parse_time(params[k], f"policies[{i}].{k}")
                elif k == "budget":
                    params[k] = parse_size(params[k], base=vm["size"],
                                           where=f"policies[{i}].{k}")
            self.policies.append({"kind": p["kind"],
                                  "limit_reclaimer": bool(p.get("limit_reclaimer")),
                                  "params": params})

        self.workloads = []
        wls = data.get("workloads")
        if wls is None and data.get("workload") is not None:
            wls = [data["workload"]]
        next_base = 0
        for i, w in enumerate(wls or []):
            if not isinstance(w, dict) or "kind" not in w:
                raise ConfigError(f"workloads[{i}] needs a 'kind'")
            region = parse_size(w.get("region", vm["size"]), base=vm["size"],
                                where=f"workloads[{i}].region")
            # Workloads stack into disjoint ranges unless 'base' pins one.
            if "base" in w:
                base = parse_size(w["base"], base=vm["size"],
                                  where=f"workloads[{i}].base")
            else:
                base = next_base if next_base + region <= vm["size"] else 0
            if base % vm["page_size"]:
                raise ConfigError(f"workloads[{i}].base not page aligned")
            if base + region > vm["size"]:
                raise ConfigError(f"workloads[{i}] range exceeds vm.size")
            next_base = base + region
            params = dict(w.get("params") or {})
            for k in list(params):
                if k.endswith("_ns") or k in ("switch_every", "duration"):
                    params[k] = parse_time(params[k], f"workloads[{i}].{k}")
                elif k.endswith("_bytes") or k in ("stride", "stream_stride", "start"):
                    params[k] = parse_size(params[k], base=region,
                                           where=f"workloads[{i}].{k}")
            if "phases" in params:
                for ph in params["phases"]:
                    _times_in(ph, ("duration", "inter_access_ns"), "phase")
            self.workloads.append({"kind": w["kind"], "region": region,
                                   "base": base, "params": params,
                                   "start_at": parse_time(w.get("start_at", 0))})

        sched = []
        for i, item in enumerate(data.get("limit_schedule") or []):
            at = parse_time(item["at"], f"limit_schedule[{i}].at")
            lim = parse_size(item["limit"], base=vm["size"],
                             where=f"limit_schedule[{i}].limit")
            sched.append((at, lim))
        if sched != sorted(sched, key=lambda x: x[0]):
            raise ConfigError("limit_schedule times must be sorted")
        self.limit_schedule = sched

        met = dict(data.get("metrics") or {})
        met["sample_interval"] = parse_time(met.get("sample_interval", 1 * SEC),
                                            "metrics.sample_interval")
        met.setdefault("events_log", False)
        self.metrics = met

        # registry writes applied after construction (see `swapsim param set`)
        self.param_overrides = dict(data.get("param_overrides") or {})

    def _parse_range(self, r, where):
        start = parse_size(r.get("start", 0), base=self.vm["size"], where=where)
        end = parse_size(r["end"], base=self.vm["size"], where=where)
        ps = self.vm["page_size"]
        if start % ps or end % ps:
            raise ConfigError(f"{where}: range [{start},{end}) not page-aligned")
        if not 0 <= start < end <= self.vm["size"]:
            raise ConfigError(f"{where}: range [{start},{end}) outside the VM")
        return (start // ps, end // ps, bool(r.get("written", True)))


def load_scenario(path, overrides=None, seed=None):
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if overrides:
        for dotted, value in overrides.items():
            _apply_override(data, dotted, value)
    if seed is not None:
        data["seed"] = seed
    import os
    return Scenario(data, name=os.path.splitext(os.path.basename(path))[0])


def _apply_override(data, dotted, value):
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        key = int(part) if part.isdigit() else part
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"override path {dotted!r}: no key {part!r}") from None
    last = parts[-1]
    key = int(last) if last.isdigit() else last
    try:
        node[key]
    except (KeyError, IndexError, TypeError):
        raise ConfigError(f"override path {dotted!r}: no key {last!r}") from None
    parsed = yaml.safe_load(str(value))
    if isinstance(parsed, str):
        # YAML leaves bare scientific notation ("5e-5") as a string
        try:
            parsed = float(parsed) if any(c in parsed for c in ".eE") else int(parsed)
        except ValueError:
            pass
    node[key] = parsed


def preset_path(name):
    base = importlib.resources.files("swapsim") / "presets"
    p = base / f"{name}.yaml"
    if not p.is_file():
        names = sorted(x.name[:-5] for x in base.iterdir() if x.name.endswith(".yaml"))
        raise ConfigError(f"no preset {name!r}; available: {names}")
    return p


def list_presets():
    base = importlib.resources.files("swapsim") / "presets"
    return sorted(x.name[:-5] for x in base.iterdir() if x.name.endswith(".yaml"))
