"""Deterministic simulator of userspace VM memory overcommit: page state,
swap device, memory-limit enforcement, and pluggable reclaim/prefetch
policies."""

from .engine import Simulator
from .addressing import AddressSpace, build_mapping
from .memory import VmMemory, FaultEvent, AccessBitmap
from .storage import StorageDevice, ZeroPagePool
from .scanner import ScanService
from .policy_engine import PolicyEngine, PolicyApi, SwapQueue, DeadlockError
from .config import Scenario, load_scenario
from .simulation import Simulation, VcpuDriver, run_scenario
from .metrics import MetricsCollector, memory_saved

__version__ = "0.1.0"

__all__ = [
    "Simulator", "AddressSpace", "build_mapping", "VmMemory", "FaultEvent",
    "AccessBitmap", "StorageDevice", "ZeroPagePool", "ScanService",
    "PolicyEngine", "PolicyApi", "SwapQueue", "DeadlockError", "Scenario",
    "load_scenario", "Simulation", "VcpuDriver", "run_scenario",
    "MetricsCollector", "memory_saved", "__version__",
]
