from __future__ import annotations

import pytest

from genaibench.config import (
    AppKind,
    BenchmarkSpec,
    Device,
    Mode,
    Policy,
    TaskDefinition,
    WorkflowNodeSpec,
)
from genaibench.orchestrator import (
    MPS_ENV_VAR,
    EmptyActiveSetError,
    EnvSpec,
    PolicyContext,
    SimPolicyBinding,
    UnsupportedPlatformError,
    apply_placement,
    assign_shares,
    build_policy_context,
    sim_partitions,
)


class TestAssignShares:
    def test_partition_three_apps(self):
        assert assign_shares(Policy.STATIC_PARTITION, ["a", "b", "c"]) == {
            "a": 33,
            "b": 33,
            "c": 33,
        }

    def test_greedy_everything_100(self):
        assert assign_shares(Policy.GREEDY, ["a", "b"]) == {"a": 100, "b": 100}

    def test_partition_single_app(self):
        assert assign_shares(Policy.STATIC_PARTITION, ["a"]) == {"a": 100}

    def test_partition_empty_set(self):
        with pytest.raises(EmptyActiveSetError):
            assign_shares(Policy.STATIC_PARTITION, [])

    def test_shares_sum_within_budget(self):
        for n in range(1, 12):
            shares = assign_shares(Policy.STATIC_PARTITION, [f"a{i}" for i in range(n)])
            assert sum(shares.values()) <= 100
            assert len(set(shares.values())) == 1


class TestApplyPlacement:
    def test_live_partition_sets_mps_env(self):
        placed = apply_placement(
            "a", 33, Mode.LIVE, Policy.STATIC_PARTITION, mps_available=True
        )
        assert isinstance(placed, EnvSpec)
        assert placed.env == {MPS_ENV_VAR: "33"}

    def test_live_greedy_is_partition_free(self):
        placed = apply_placement("a", 100, Mode.LIVE, Policy.GREEDY)
        assert isinstance(placed, EnvSpec)
        assert placed.env == {}

    def test_sim_share_maps_to_sm_quota(self):
        placed = apply_placement("a", 50, Mode.SIMULATED, Policy.STATIC_PARTITION, sm_count=100)
        assert placed == SimPolicyBinding(app="a", sm_quota=50)
        placed = apply_placement("a", 33, Mode.SIMULATED, Policy.STATIC_PARTITION, sm_count=64)
        assert isinstance(placed, SimPolicyBinding)
        assert placed.sm_quota == 21  # floor(0.33 * 64)

    def test_live_partition_without_daemon_is_hard_error(self):
        with pytest.raises(UnsupportedPlatformError):
            apply_placement("a", 33, Mode.LIVE, Policy.STATIC_PARTITION, mps_available=False)

    def test_share_bounds(self):
        with pytest.raises(ValueError):
            apply_placement("a", 0, Mode.SIMULATED)
        with pytest.raises(ValueError):
            apply_placement("a", 101, Mode.SIMULATED)


def _spec(devices: list[Device], policy: Policy) -> BenchmarkSpec:
    tasks = {
        f"t{i}": TaskDefinition(
            name=f"t{i}", app_kind=AppKind.SYNTHETIC, num_requests=1, device=dev
        )
        for i, dev in enumerate(devices)
    }
    workflow = tuple(WorkflowNodeSpec(node_id=f"n{i}", uses=f"t{i}") for i in range(len(devices)))
    return BenchmarkSpec(tasks=tasks, workflow=workflow, policy=policy)


class TestPolicyContext:
    def test_cpu_apps_excluded_from_divisor(self):
        spec = _spec([Device.GPU, Device.CPU, Device.GPU], Policy.STATIC_PARTITION)
        ctx = build_policy_context(spec)
        assert ctx.shares == {"n0": 50, "n2": 50}
        assert ctx.share_of("n1") == 0

    def test_hybrid_counts_as_gpu(self):
        spec = _spec([Device.GPU, Device.HYBRID], Policy.STATIC_PARTITION)
        ctx = build_policy_context(spec)
        assert ctx.shares == {"n0": 50, "n1": 50}

    def test_greedy_share_of_always_100(self):
        ctx = PolicyContext(policy=Policy.GREEDY, shares={})
        assert ctx.share_of("anything") == 100

    def test_sim_partitions(self):
        spec = _spec([Device.GPU] * 3, Policy.STATIC_PARTITION)
        ctx = build_policy_context(spec)
        assert sim_partitions(ctx, 100) == {"n0": 33, "n1": 33, "n2": 33}
        assert sim_partitions(PolicyContext(policy=Policy.GREEDY), 100) is None

    def test_partition_with_no_gpu_apps_rejected(self):
        spec = _spec([Device.CPU], Policy.STATIC_PARTITION)
        with pytest.raises(EmptyActiveSetError):
            build_policy_context(spec)
