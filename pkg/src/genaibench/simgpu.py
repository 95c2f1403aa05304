"""Deterministic discrete-event simulator of a shared GPU.

Applications emit serial kernel streams (one kernel of an app runs at a
time, in submission order). Two scheduling policies are modeled:

``greedy``
    One device-wide FCFS queue ordered by effective arrival, which is
    max(submit time, previous same-app kernel end). Strict head-of-line: the
    queue head launches only when at least its SM demand is free, and no
    later arrival may overtake a waiting head. This is what lets one app's
    large kernels stall another app's small ones.

``static_partition``
    Each app owns a fixed SM quota. Quotas are never lent out, even while
    idle. A kernel fitting its quota runs at native duration; a kernel
    demanding more runs with duration scaled by demand/quota (time-slicing
    inside the partition). Apps never interact.

All bookkeeping is in integer nanoseconds so tie-breaking is exact:
simultaneous events are ordered by (time, app id, kernel index). Identical
inputs therefore always produce identical results.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable

from .monitor import MetricKind, MetricSample

NS_PER_S = 1_000_000_000

GREEDY = "greedy"
STATIC_PARTITION = "static_partition"


class InfeasibleKernelError(Exception):
    """A kernel demands more SMs than the device has under greedy
    scheduling (a partition would scale its duration instead)."""


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_seconds(ns: int) -> float:
    return ns / NS_PER_S


@dataclass(frozen=True)
class SimDevice:
    """A GPU with ``sm_count`` streaming multiprocessors and, when
    partitioned, a fixed per-app SM quota."""

    sm_count: int = 100
    partitions: dict[str, int] | None = None

    def __post_init__(self) -> None:
        if self.sm_count < 1:
            raise ValueError(f"sm_count must be >= 1, got {self.sm_count}")
        if self.partitions is not None:
            if any(q < 1 for q in self.partitions.values()):
                raise ValueError("partition quotas must be >= 1 SM")
            if sum(self.partitions.values()) > self.sm_count:
                raise ValueError("partition quotas exceed the device's SM count")


@dataclass(frozen=True)
class SimKernel:
    app: str
    duration: float
    sm_demand: int
    submit_time: float = 0.0

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"kernel duration must be > 0, got {self.duration}")
        if self.sm_demand < 1:
            raise ValueError(f"sm_demand must be >= 1, got {self.sm_demand}")
        if self.submit_time < 0:
            raise ValueError(f"submit_time must be >= 0, got {self.submit_time}")


@dataclass(frozen=True)
class KernelTiming:
    """Outcome of one simulated kernel, in integer nanoseconds."""

    app: str
    index: int
    submit_ns: int
    start_ns: int
    end_ns: int
    sm_demand: int
    occupied_sms: int
    reserved_sms: int

    @property
    def submit(self) -> float:
        return to_seconds(self.submit_ns)

    @property
    def start(self) -> float:
        return to_seconds(self.start_ns)

    @property
    def end(self) -> float:
        return to_seconds(self.end_ns)

    @property
    def latency(self) -> float:
        return to_seconds(self.end_ns - self.submit_ns)


@dataclass
class SimResult:
    device: SimDevice
    policy: str
    kernels: list[KernelTiming]
    app_completion: dict[str, float]
    makespan: float

    def kernels_of(self, app: str) -> list[KernelTiming]:
        return [k for k in self.kernels if k.app == app]

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "sm_count": self.device.sm_count,
            "partitions": self.device.partitions,
            "makespan": self.makespan,
            "app_completion": self.app_completion,
            "kernels": [
                {
                    "app": k.app,
                    "index": k.index,
                    "submit": k.submit,
                    "start": k.start,
                    "end": k.end,
                    "sm_demand": k.sm_demand,
                }
                for k in self.kernels
            ],
        }


def _scaled_duration_ns(duration_ns: int, demand: int, quota: int) -> int:
    if demand <= quota:
        return duration_ns
    return duration_ns * demand // quota


@dataclass
class _PendingKernel:
    index: int
    submit_ns: int
    duration_ns: int
    demand: int


@dataclass
class _AppState:
    pending: list[_PendingKernel] = field(default_factory=list)
    head: int = 0  # next pending slot to promote
    busy: bool = False  # a kernel of this app is queued at the device or running


class SimCore:
    """Incremental event core shared by the batch API and the execution
    engine's simulated mode.

    Callers submit kernels (optionally with future submit times), then
    alternate :meth:`next_event_ns` / :meth:`advance_to` to step simulated
    time. Completions are reported exactly once, in deterministic order.
    """

    def __init__(self, device: SimDevice, policy: str):
        if policy not in (GREEDY, STATIC_PARTITION):
            raise ValueError(f"unknown policy {policy!r}")
        if policy == STATIC_PARTITION and device.partitions is None:
            raise ValueError("static_partition requires device partitions")
        self.device = device
        self.policy = policy
        self._now_ns = 0
        self._free = device.sm_count
        self._apps: dict[str, _AppState] = {}
        self._counters: dict[str, int] = {}
        # (arrival_ns, app, index, submit_ns, duration_ns, demand)
        self._queue: list[tuple[int, str, int, int, int, int]] = []
        # (end_ns, app, index, timing fields...)
        self._end_heap: list[tuple[int, str, int]] = []
        self._running: dict[tuple[str, int], KernelTiming] = {}
        # (submit_ns, app) wakeups for kernels submitted in the future
        self._wakeups: list[tuple[int, str]] = []
        self._completed: list[KernelTiming] = []

    @property
    def now_ns(self) -> int:
        return self._now_ns

    def _quota_of(self, app: str) -> int:
        assert self.device.partitions is not None
        try:
            return self.device.partitions[app]
        except KeyError:
            raise ValueError(f"app {app!r} has no partition quota") from None

    def submit(self, app: str, duration: float, sm_demand: int, submit_time: float | None = None) -> int:
        """Queue one kernel for ``app``; returns its per-app index.

        ``submit_time`` defaults to the current simulated time and may not
        lie in the past.
        """
        submit_ns = self._now_ns if submit_time is None else to_ns(submit_time)
        if submit_ns < self._now_ns:
            raise ValueError("cannot submit a kernel in the past")
        duration_ns = to_ns(duration)
        if duration_ns <= 0:
            raise ValueError(f"kernel duration must be > 0, got {duration}")
        if sm_demand < 1:
            raise ValueError(f"sm_demand must be >= 1, got {sm_demand}")
        if self.policy == GREEDY and sm_demand > self.device.sm_count:
            raise InfeasibleKernelError(
                f"kernel of {app!r} demands {sm_demand} SMs on a {self.device.sm_count}-SM device"
            )
        if self.policy == STATIC_PARTITION:
            self._quota_of(app)  # fail fast on unpartitioned apps
        state = self._apps.setdefault(app, _AppState())
        index = self._counters.get(app, 0)
        self._counters[app] = index + 1
        state.pending.append(_PendingKernel(index, submit_ns, duration_ns, sm_demand))
        # Submissions always go through the wakeup queue so that arrivals at
        # one instant launch in (app, kernel index) order, not call order.
        heapq.heappush(self._wakeups, (submit_ns, app))
        return index

    def _promote(self, app: str) -> None:
        # Move the app's next kernel to the device once its submit time has
        # passed and the previous kernel of the app is done (serial order).
        state = self._apps[app]
        if state.busy or state.head >= len(state.pending):
            return
        k = state.pending[state.head]
        if k.submit_ns > self._now_ns:
            heapq.heappush(self._wakeups, (k.submit_ns, app))
            return
        state.head += 1
        state.busy = True
        arrival_ns = max(k.submit_ns, self._now_ns)
        if self.policy == GREEDY:
            heapq.heappush(
                self._queue, (arrival_ns, app, k.index, k.submit_ns, k.duration_ns, k.demand)
            )
        else:
            self._launch_partitioned(app, k)

    def _launch_partitioned(self, app: str, k: _PendingKernel) -> None:
        quota = self._quota_of(app)
        run_ns = _scaled_duration_ns(k.duration_ns, k.demand, quota)
        timing = KernelTiming(
            app=app,
            index=k.index,
            submit_ns=k.submit_ns,
            start_ns=self._now_ns,
            end_ns=self._now_ns + run_ns,
            sm_demand=k.demand,
            occupied_sms=min(k.demand, quota),
            reserved_sms=quota,
        )
        self._running[(app, k.index)] = timing
        heapq.heappush(self._end_heap, (timing.end_ns, app, k.index))

    def _drain_queue(self) -> None:
        # Strict head-of-line FCFS: stop at the first kernel that does not fit.
        while self._queue:
            arrival_ns, app, index, submit_ns, duration_ns, demand = self._queue[0]
            if demand > self._free:
                return
            heapq.heappop(self._queue)
            self._free -= demand
            timing = KernelTiming(
                app=app,
                index=index,
                submit_ns=submit_ns,
                start_ns=self._now_ns,
                end_ns=self._now_ns + duration_ns,
                sm_demand=demand,
                occupied_sms=demand,
                reserved_sms=demand,
            )
            self._running[(app, index)] = timing
            heapq.heappush(self._end_heap, (timing.end_ns, app, index))

    def next_event_ns(self) -> int | None:
        """Time of the next internal event, or None when fully drained."""
        candidates = []
        if self._end_heap:
            candidates.append(self._end_heap[0][0])
        if self._wakeups:
            candidates.append(self._wakeups[0][0])
        return min(candidates) if candidates else None

    def advance_to(self, t_ns: int) -> list[KernelTiming]:
        """Advance simulated time to ``t_ns``, processing every completion
        and submission wakeup at or before it; returns completions in event
        order."""
        if t_ns < self._now_ns:
            raise ValueError("cannot advance backwards")
        finished: list[KernelTiming] = []
        while True:
            nxt = self.next_event_ns()
            if nxt is None or nxt > t_ns:
                break
            self._now_ns = nxt
            # Order all same-instant events by (app, index); wakeups carry
            # the index of the kernel they would promote.
            batch: list[tuple[str, int, str]] = []  # (app, index, kind)
            while self._end_heap and self._end_heap[0][0] == nxt:
                _, app, index = heapq.heappop(self._end_heap)
                batch.append((app, index, "end"))
            while self._wakeups and self._wakeups[0][0] == nxt:
                _, app = heapq.heappop(self._wakeups)
                state = self._apps[app]
                idx = state.pending[state.head].index if state.head < len(state.pending) else -1
                batch.append((app, idx, "wake"))
            for app, index, kind in sorted(batch, key=lambda e: (e[0], e[1], e[2])):
                if kind == "end":
                    timing = self._running.pop((app, index))
                    if self.policy == GREEDY:
                        self._free += timing.sm_demand
                    self._apps[app].busy = False
                    self._completed.append(timing)
                    finished.append(timing)
                self._promote(app)
            self._drain_queue()
        self._now_ns = t_ns
        return finished

    def run_until_idle(self) -> list[KernelTiming]:
        finished: list[KernelTiming] = []
        while True:
            nxt = self.next_event_ns()
            if nxt is None:
                break
            finished.extend(self.advance_to(nxt))
        return finished

    def idle(self) -> bool:
        return not (self._end_heap or self._wakeups or self._queue)

    def result(self) -> SimResult:
        kernels = sorted(self._completed, key=lambda k: (k.start_ns, k.app, k.index))
        completion: dict[str, float] = {}
        for app in sorted(self._apps):
            ends = [k.end_ns for k in self._completed if k.app == app]
            if ends:
                completion[app] = to_seconds(max(ends))
        makespan = to_seconds(max((k.end_ns for k in self._completed), default=0))
        return SimResult(
            device=self.device,
            policy=self.policy,
            kernels=kernels,
            app_completion=completion,
            makespan=makespan,
        )


def equal_partitions(device: SimDevice, apps: Iterable[str]) -> dict[str, int]:
    """Equal SM quotas (floor of sm_count/n) per app, remainder unassigned."""
    names = list(dict.fromkeys(apps))
    if not names:
        raise ValueError("cannot partition for an empty app set")
    quota = device.sm_count // len(names)
    if quota < 1:
        raise ValueError(f"{len(names)} apps cannot share {device.sm_count} SMs")
    return {name: quota for name in names}


def simulate(device: SimDevice, kernels: Iterable[SimKernel], policy: str) -> SimResult:
    """Run a complete kernel trace under one policy.

    Kernels must be time-sorted per app. Under ``static_partition`` the
    device's quotas apply; when the device carries none, equal quotas over
    the apps present are derived.
    """
    kernel_list = list(kernels)
    per_app: dict[str, list[SimKernel]] = {}
    for k in kernel_list:
        per_app.setdefault(k.app, []).append(k)
    for app, ks in per_app.items():
        submits = [k.submit_time for k in ks]
        if submits != sorted(submits):
            raise ValueError(f"kernels of app {app!r} are not time-sorted")

    if policy == STATIC_PARTITION and device.partitions is None:
        device = SimDevice(
            sm_count=device.sm_count,
            partitions=equal_partitions(device, per_app.keys()),
        )

    core = SimCore(device, policy)
    for k in kernel_list:
        core.submit(k.app, k.duration, k.sm_demand, submit_time=k.submit_time)
    core.run_until_idle()
    return core.result()


def exclusive_baseline(device: SimDevice, kernels: Iterable[SimKernel]) -> SimResult:
    """One app alone on the whole device under greedy: the per-app
    lower-latency reference used in starvation ratios."""
    kernel_list = list(kernels)
    apps = {k.app for k in kernel_list}
    if len(apps) > 1:
        raise ValueError(f"exclusive baseline expects a single app, got {sorted(apps)}")
    bare = SimDevice(sm_count=device.sm_count, partitions=None)
    return simulate(bare, kernel_list, GREEDY)


def synth_utilization(result: SimResult, device: SimDevice, interval: float) -> list[MetricSample]:
    """Synthetic SMACT/SMOCC series sampled every ``interval`` seconds.

    SMACT counts reserved SMs: a kernel's demand under greedy, the app's
    full quota under partitioning (held while any of its kernels is in
    flight). SMOCC counts SMs actually computing, so SMOCC <= SMACT by
    construction. Sampling is instantaneous at each tick with kernels
    active on [start, end).
    """
    if interval <= 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    interval_ns = to_ns(interval)
    makespan_ns = max((k.end_ns for k in result.kernels), default=0)
    partitioned = result.policy == STATIC_PARTITION

    samples: list[MetricSample] = []
    t_ns = 0
    while True:
        running = [k for k in result.kernels if k.start_ns <= t_ns < k.end_ns]
        if partitioned:
            reserved = sum(
                {k.app: k.reserved_sms for k in running}.values()
            )
            occupied = sum(k.occupied_sms for k in running)
        else:
            reserved = sum(k.reserved_sms for k in running)
            occupied = sum(k.occupied_sms for k in running)
        t = to_seconds(t_ns)
        samples.append(
            MetricSample(t=t, kind=MetricKind.SMACT, value=100.0 * reserved / device.sm_count, source="simgpu")
        )
        samples.append(
            MetricSample(t=t, kind=MetricKind.SMOCC, value=100.0 * occupied / device.sm_count, source="simgpu")
        )
        if t_ns >= makespan_ns:
            break
        t_ns += interval_ns
    return samples


def load_kernel_trace(lines: Iterable[str]) -> list[SimKernel]:
    """Parse a JSONL kernel trace: one object per line with keys
    ``app``, ``submit``, ``duration``, ``sm_demand``."""
    import json

    kernels: list[SimKernel] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: not valid JSON: {exc}") from exc
        try:
            kernels.append(
                SimKernel(
                    app=str(obj["app"]),
                    duration=float(obj["duration"]),
                    sm_demand=int(obj["sm_demand"]),
                    submit_time=float(obj.get("submit", 0.0)),
                )
            )
        except KeyError as exc:
            raise ValueError(f"line {lineno}: missing field {exc}") from exc
    return kernels
