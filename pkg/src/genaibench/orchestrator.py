"""Resource policy: map greedy / static-partition onto per-app placements.

Shares are computed once from the set of GPU-placed app instances declared
in the spec and never re-balanced while the run progresses — a partition
stays reserved even after its app finishes, which is exactly what produces
the stairstep underutilization the simulator reproduces. CPU-placed apps
receive no share and do not count toward the divisor.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from typing import Iterable

from .config import BenchmarkSpec, Mode, Policy, iter_gpu_instances


class EmptyActiveSetError(Exception):
    """Static partitioning was requested with zero GPU-placed apps."""


class UnsupportedPlatformError(Exception):
    """Live partitioning was requested but the partitioning daemon is
    absent; this is a hard error, never a silent fallback to greedy."""


MPS_ENV_VAR = "CUDA_MPS_ACTIVE_THREAD_PERCENTAGE"
MPS_CONTROL_BINARY = "nvidia-cuda-mps-control"


@dataclass(frozen=True)
class PolicyContext:
    """Immutable per-run resource assignment, computed before dispatch."""

    policy: Policy
    shares: dict[str, int] = field(default_factory=dict)

    def share_of(self, app: str) -> int:
        if self.policy is Policy.GREEDY:
            return 100
        return self.shares.get(app, 0)


@dataclass(frozen=True)
class EnvSpec:
    """Environment variables applied to a live app's subprocess."""

    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SimPolicyBinding:
    """A partition registration for the simulated device."""

    app: str
    sm_quota: int


def assign_shares(policy: Policy, gpu_apps: Iterable[str]) -> dict[str, int]:
    """Percent shares per GPU app: all 100 under greedy; floor(100/n) each
    under static partitioning, remainder unassigned."""
    apps = list(dict.fromkeys(gpu_apps))
    if policy is Policy.GREEDY:
        return {app: 100 for app in apps}
    if not apps:
        raise EmptyActiveSetError("static partitioning needs at least one GPU app")
    share = 100 // len(apps)
    return {app: share for app in apps}


def mps_daemon_available() -> bool:
    return shutil.which(MPS_CONTROL_BINARY) is not None


def apply_placement(
    app: str,
    share: int,
    mode: Mode,
    policy: Policy = Policy.GREEDY,
    *,
    sm_count: int = 100,
    mps_available: bool | None = None,
) -> EnvSpec | SimPolicyBinding:
    """Turn a share into the mode-appropriate placement artifact.

    Live mode yields the MPS thread-percentage environment for the app's
    subprocess (greedy is always partition-free); simulated mode yields an
    SM-quota binding of floor(share% of sm_count).
    """
    if not 0 < share <= 100:
        raise ValueError(f"share must be in (0, 100], got {share}")
    if mode is Mode.SIMULATED:
        return SimPolicyBinding(app=app, sm_quota=max(1, share * sm_count // 100))
    if policy is Policy.GREEDY:
        return EnvSpec(env={})
    available = mps_daemon_available() if mps_available is None else mps_available
    if not available:
        raise UnsupportedPlatformError(
            f"static partitioning requires the {MPS_CONTROL_BINARY} daemon"
        )
    return EnvSpec(env={MPS_ENV_VAR: str(share)})


def build_policy_context(spec: BenchmarkSpec) -> PolicyContext:
    """Compute the run's fixed shares from the spec's GPU app instances."""
    gpu_apps = list(iter_gpu_instances(spec))
    if spec.policy is Policy.STATIC_PARTITION and not gpu_apps:
        raise EmptyActiveSetError("static partitioning needs at least one GPU app")
    return PolicyContext(policy=spec.policy, shares=assign_shares(spec.policy, gpu_apps))


def sim_partitions(ctx: PolicyContext, sm_count: int) -> dict[str, int] | None:
    """SM quotas for the simulated device (None under greedy)."""
    if ctx.policy is Policy.GREEDY:
        return None
    quotas: dict[str, int] = {}
    for app, share in ctx.shares.items():
        binding = apply_placement(app, share, Mode.SIMULATED, ctx.policy, sm_count=sm_count)
        assert isinstance(binding, SimPolicyBinding)
        quotas[app] = binding.sm_quota
    return quotas
