"""Reclaim and prefetch policies, all built on the engine's policy API."""

from .lru import LruReclaimer
from .dt import DtReclaimer
from .reuse import ReuseDistanceReclaimer
from .aggressive import AggressiveReclaimer
from .linearpf import LinearPF
from .wsr import WorkingSetRestore

POLICY_KINDS = {
    "lru": LruReclaimer,
    "dt": DtReclaimer,
    "reuse": ReuseDistanceReclaimer,
    "aggressive": AggressiveReclaimer,
    "linearpf": LinearPF,
    "wsr": WorkingSetRestore,
}


def build_policy(kind, **params):
    try:
        cls = POLICY_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown policy kind {kind!r}; "
                         f"choices: {sorted(POLICY_KINDS)}") from None
    return cls(**params)

__all__ = ["LruReclaimer", "DtReclaimer", "ReuseDistanceReclaimer",
           "AggressiveReclaimer", "LinearPF", "WorkingSetRestore",
           "POLICY_KINDS", "build_policy"]
