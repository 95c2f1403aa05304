"""Execution engine: drive the DAG to completion under the active policy.

Two runners share the trace format. The live runner dispatches ready nodes
onto worker threads, runs real adapters against real backends, and samples
host metrics through the monitor. The simulated runner is a single-threaded
discrete-event loop over the GPU simulator: node readiness, request pacing
and kernel scheduling all advance one simulated clock, so a run is exactly
reproducible — identical spec and seed give identical traces, byte for
byte.

Workflow completion means every non-background exec node reached a terminal
phase; background nodes are then cancelled and their cleanups still run. A
failed node cancels its dependents (or, with ``on_failure="abort"``, the
whole run), but cleanup of every app whose setup finished always runs.
"""

from __future__ import annotations

import heapq
import json
import platform
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import adapters  # noqa: F401  (registers the built-in adapters)
from .adapters.base import (
    Adapter,
    CancelToken,
    MonotonicClock,
    Placement,
    Request,
    RequestRecord,
    ServerHandle,
    get_adapter,
    resolve_shared_placement,
    shared_setup,
)
from .adapters.datasets import load_prompts, load_wav_segments, sample_items
from .config import (
    AppKind,
    BenchmarkSpec,
    Device,
    Mode,
    Policy,
    TaskDefinition,
    WorkloadProfile,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)
from .dag import Dag, DagNode, NodeKind, build_dag, validate_dag
from .monitor import GapMarker, MetricKind, MetricSample, default_collectors, start_monitor
from .orchestrator import EnvSpec, PolicyContext, apply_placement, build_policy_context, sim_partitions
from .simgpu import KernelTiming, SimCore, SimDevice, synth_utilization, to_ns

FORMAT_VERSION = 1
DEFAULT_NODE_TIMEOUT_S = 1800.0
DEFAULT_SM_COUNT = 100


class Phase(str, Enum):
    DISPATCHED = "dispatched"
    STARTED = "started"
    FINISHED = "finished"
    FAILED = "failed"
    CANCELLED = "cancelled"


TERMINAL_PHASES = frozenset({Phase.FINISHED, Phase.FAILED, Phase.CANCELLED})


class EngineError(Exception):
    pass


class NodeTimeoutError(EngineError):
    """A node exceeded its wall-clock limit."""


class EngineStallError(EngineError):
    """The event loop ran out of events before the workflow completed."""


@dataclass(frozen=True)
class NodeEvent:
    node_id: str
    phase: Phase
    t_ns: int

    def to_dict(self) -> dict[str, Any]:
        return {"node_id": self.node_id, "phase": self.phase.value, "t_ns": self.t_ns}


@dataclass
class RunMeta:
    mode: str
    policy: str
    seed: int
    sample_interval: float
    sm_count: int
    started_at: str | None = None
    host: str | None = None
    notes: list[str] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "mode": self.mode,
            "policy": self.policy,
            "seed": self.seed,
            "sample_interval": self.sample_interval,
            "sm_count": self.sm_count,
            "started_at": self.started_at,
            "host": self.host,
            "notes": self.notes,
        }


@dataclass
class RunTrace:
    events: list[NodeEvent]
    requests: list[RequestRecord]
    samples: list[MetricSample]
    gaps: list[GapMarker]
    spec_snapshot: BenchmarkSpec
    meta: RunMeta

    def events_of(self, node_id: str) -> list[NodeEvent]:
        return [e for e in self.events if e.node_id == node_id]

    def phase_time(self, node_id: str, phase: Phase) -> int | None:
        for e in self.events:
            if e.node_id == node_id and e.phase is phase:
                return e.t_ns
        return None


class _TraceCollector:
    """Serialized sink for events and records; appends are totally ordered
    by arrival and events are stamped inside the lock so timestamps are
    monotone."""

    def __init__(self, clock_ns: Callable[[], int]):
        self._clock_ns = clock_ns
        self._lock = threading.Lock()
        self.events: list[NodeEvent] = []
        self.records: list[RequestRecord] = []

    def event(self, node_id: str, phase: Phase, t_ns: int | None = None) -> None:
        with self._lock:
            stamp = self._clock_ns() if t_ns is None else t_ns
            self.events.append(NodeEvent(node_id=node_id, phase=phase, t_ns=stamp))

    def add_records(self, records: Sequence[RequestRecord]) -> None:
        with self._lock:
            self.records.extend(records)


# --------------------------------------------------------------------------
# Simulated workloads


@dataclass(frozen=True)
class _SimWorkload:
    kernels_per_unit: tuple[tuple[float, int], ...]  # (duration_s, demand_sms)
    units: int  # requests, or total segments for paced apps
    marks: str  # "tokens" | "steps" | "segment" | "plain"
    paced: bool = False
    period: float = 0.0
    on_gpu: bool = True
    cpu_delay: float | None = None  # pure-delay unit (synthetic sleep)


_DEFAULT_TOKENS = 16
_DEFAULT_STEPS = 4
_DEFAULT_SEGMENTS = 5
_DEFAULT_PERIOD_S = 2.0


def _demand_sms(percent: float, sm_count: int) -> int:
    return max(1, round(percent * sm_count / 100.0))


def resolve_sim_workload(task: TaskDefinition, sm_count: int) -> _SimWorkload:
    """Kind-specific synthetic kernel shapes for simulated mode; an explicit
    task profile overrides the defaults."""
    profile = task.profile or WorkloadProfile()
    on_gpu = task.device is not Device.CPU

    def kernels(default: list[tuple[float, float]]) -> tuple[tuple[float, int], ...]:
        raw = [(k.duration, k.sm_demand) for k in profile.kernels] or default
        return tuple((d, _demand_sms(pct, sm_count)) for d, pct in raw)

    if task.app_kind is AppKind.CHATBOT:
        tokens = profile.tokens or _DEFAULT_TOKENS
        default = [(0.08, 70.0)] + [(0.03, 35.0)] * tokens
        return _SimWorkload(kernels(default), task.num_requests, "tokens", on_gpu=on_gpu)
    if task.app_kind is AppKind.IMAGEGEN:
        steps = profile.steps or _DEFAULT_STEPS
        default = [(0.5, 100.0)] * steps
        return _SimWorkload(kernels(default), task.num_requests, "steps", on_gpu=on_gpu)
    if task.app_kind is AppKind.LIVE_CAPTIONS:
        segments = profile.segments or _DEFAULT_SEGMENTS
        period = profile.period or _DEFAULT_PERIOD_S
        default = [(0.04, 5.0)] * 4
        return _SimWorkload(
            kernels(default),
            task.num_requests * segments,
            "segment",
            paced=True,
            period=period,
            on_gpu=on_gpu,
        )
    if task.app_kind is AppKind.DEEP_RESEARCH:
        default = [(10.0, 70.0)]
        return _SimWorkload(kernels(default), task.num_requests, "plain", on_gpu=on_gpu)
    # synthetic: explicit kernels simulate GPU work, otherwise a pure delay
    if profile.kernels:
        return _SimWorkload(kernels([]), task.num_requests, "segment", on_gpu=on_gpu)
    delay = profile.sleep if profile.sleep is not None else 0.1
    return _SimWorkload((), task.num_requests, "segment", on_gpu=False, cpu_delay=delay)


class _SimApp:
    """One exec node's workload inside the simulated run: submits kernel
    chains (or pure delays) and assembles the request records.

    Units (requests, or paced segments) are processed strictly in order.
    Paced units keep their scheduled submit time on the record even when
    the previous unit's chain is still running, so backlog shows up as
    latency instead of stretching the schedule. All record timestamps are
    absolute run seconds.
    """

    def __init__(self, runner: "_SimRunner", node: DagNode, task: TaskDefinition):
        self.runner = runner
        self.node = node
        self.task = task
        self.app_id = node.app_instance
        self.work = resolve_sim_workload(task, runner.device.sm_count)
        self.cancelled = False
        self.done_units = 0
        self.start_ns = 0
        self._chain_busy = False
        self._queued: list[tuple[int, RequestRecord]] = []

    def begin(self, now_ns: int) -> None:
        self.start_ns = now_ns
        if self.work.units == 0:
            self.runner.node_finished(self.node.id)
            return
        if self.work.paced:
            for unit in range(self.work.units):
                at_ns = now_ns + to_ns(unit * self.work.period)
                self.runner.at(at_ns, lambda u=unit: self._unit_ready(u))
        else:
            self._unit_ready(0)

    def _unit_ready(self, unit: int) -> None:
        if self.cancelled:
            return
        record = self._new_record(unit, self.runner.now_ns)
        self._queued.append((unit, record))
        self._maybe_start_next()

    def _new_record(self, unit: int, submit_ns: int) -> RequestRecord:
        paced_segment = self.work.marks == "segment" and self.work.paced
        record = RequestRecord(
            task_name=self.task.name,
            request_id=f"r0/seg{unit}" if paced_segment else f"r{unit}",
            t_submit=submit_ns / 1e9,
        )
        if self.work.marks == "tokens":
            record.token_times = []
        elif self.work.marks == "steps":
            record.step_times = []
        if paced_segment:
            record.segment_index = unit
        return record

    def _maybe_start_next(self) -> None:
        if self._chain_busy or not self._queued or self.cancelled:
            return
        self._chain_busy = True
        unit, record = self._queued.pop(0)
        if self.work.on_gpu and self.work.kernels_per_unit:
            self._submit_kernel(unit, record, 0)
        else:
            delay = self.work.cpu_delay
            if delay is None:
                delay = sum(d for d, _ in self.work.kernels_per_unit)
            end_ns = self.runner.now_ns + to_ns(delay)
            self.runner.at(end_ns, lambda: self._finish_unit(unit, record, end_ns))

    def _submit_kernel(self, unit: int, record: RequestRecord, k_idx: int) -> None:
        if self.cancelled:
            return
        duration, demand = self.work.kernels_per_unit[k_idx]
        index = self.runner.core.submit(self.app_id, duration, demand)
        self.runner.on_kernel(
            self.app_id, index, lambda timing: self._kernel_done(unit, record, k_idx, timing)
        )

    def _kernel_done(self, unit: int, record: RequestRecord, k_idx: int, timing: KernelTiming) -> None:
        if self.cancelled:
            return
        end = timing.end_ns / 1e9
        if self.work.marks == "tokens":
            assert record.token_times is not None
            record.token_times.append(end)
            if record.t_first_output is None:
                record.t_first_output = end
        elif self.work.marks == "steps":
            assert record.step_times is not None
            prev_boundary = record.t_submit + sum(record.step_times)
            record.step_times.append(end - prev_boundary)
            if record.t_first_output is None:
                record.t_first_output = end
        if k_idx + 1 < len(self.work.kernels_per_unit):
            self._submit_kernel(unit, record, k_idx + 1)
        else:
            self._finish_unit(unit, record, timing.end_ns)

    def _finish_unit(self, unit: int, record: RequestRecord, end_ns: int) -> None:
        if self.cancelled:
            return
        end = end_ns / 1e9
        record.t_complete = end
        if record.t_first_output is None:
            record.t_first_output = end
        if self.work.marks == "segment":
            record.segment_latency = end - record.t_submit
        self.runner.collector.add_records([record])
        self.done_units += 1
        self._chain_busy = False
        if self.done_units >= self.work.units:
            self.runner.node_finished(self.node.id)
        elif self.work.paced:
            self._maybe_start_next()
        else:
            self._unit_ready(unit + 1)

    def cancel(self, now_ns: int) -> None:
        self.cancelled = True
        if self.done_units < self.work.units:
            now = now_ns / 1e9
            partial = RequestRecord(
                task_name=self.task.name,
                request_id=f"r{self.done_units}",
                t_submit=now,
                t_complete=now,
                ok=False,
                detail="cancelled at workflow end",
            )
            self.runner.collector.add_records([partial])


class _SimRunner:
    """Single-threaded discrete-event execution of a spec."""

    def __init__(self, spec: BenchmarkSpec, dag: Dag, ctx: PolicyContext, seed: int, sm_count: int):
        self.spec = spec
        self.dag = dag
        self.ctx = ctx
        self.seed = seed
        self.device = SimDevice(sm_count=sm_count, partitions=sim_partitions(ctx, sm_count))
        self.core = SimCore(self.device, ctx.policy.value)
        self.now_ns = 0
        self._seq = 0
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._kernel_cbs: dict[tuple[str, int], Callable[[KernelTiming], None]] = {}
        self.collector = _TraceCollector(lambda: self.now_ns)
        self._phase: dict[str, Phase] = {}
        self._apps: dict[str, _SimApp] = {}
        self._bg_cancelled = False

    # -- event plumbing

    def at(self, t_ns: int, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (max(t_ns, self.now_ns), self._seq, fn))

    def on_kernel(self, app: str, index: int, fn: Callable[[KernelTiming], None]) -> None:
        self._kernel_cbs[(app, index)] = fn

    # -- node state machine

    def _terminal(self, node_id: str) -> bool:
        return self._phase.get(node_id) in TERMINAL_PHASES

    def _set_phase(self, node_id: str, phase: Phase) -> None:
        self._phase[node_id] = phase
        self.collector.event(node_id, phase, self.now_ns)

    def node_finished(self, node_id: str) -> None:
        # A pending instant-finish callback may fire after the node was
        # cancelled at workflow end; terminal phases are mutually exclusive.
        if self._terminal(node_id):
            return
        self._set_phase(node_id, Phase.FINISHED)
        self._after_terminal()

    def _after_terminal(self) -> None:
        self._check_workflow_complete()
        self._dispatch_ready()

    def _exec_nodes(self, background: bool | None = None) -> list[DagNode]:
        nodes = self.dag.nodes_of_kind(NodeKind.EXEC)
        if background is None:
            return nodes
        return [n for n in nodes if n.background is background]

    def _check_workflow_complete(self) -> None:
        if self._bg_cancelled:
            return
        foreground = self._exec_nodes(background=False)
        if not all(self._terminal(n.id) for n in foreground):
            return
        self._bg_cancelled = True
        for node in self._exec_nodes(background=True):
            if self._terminal(node.id):
                continue
            app = self._apps.get(node.id)
            if app is not None:
                app.cancel(self.now_ns)
            self._set_phase(node.id, Phase.CANCELLED)
        for node in self.dag.nodes_of_kind(NodeKind.SETUP):
            if not self._terminal(node.id) and node.background:
                self._set_phase(node.id, Phase.CANCELLED)
        self._dispatch_ready()

    def _cleanup_should_run(self, node: DagNode) -> bool:
        setup_id = node.id.replace("cleanup", "setup", 1)
        return self._phase.get(setup_id) is Phase.FINISHED

    def _node_ready(self, node: DagNode) -> bool:
        if node.id in self._phase:
            return False
        preds = self.dag.preds[node.id]
        if node.kind is NodeKind.CLEANUP:
            return all(self._terminal(p) for p in preds)
        return all(self._phase.get(p) is Phase.FINISHED for p in preds)

    def _dispatch_ready(self) -> None:
        progress = True
        while progress:
            progress = False
            for node in list(self.dag.nodes.values()):
                if not self._node_ready(node):
                    continue
                progress = True
                self._dispatch(node)

    def _dispatch(self, node: DagNode) -> None:
        self.collector.event(node.id, Phase.DISPATCHED, self.now_ns)
        self._phase[node.id] = Phase.DISPATCHED
        self.collector.event(node.id, Phase.STARTED, self.now_ns)
        if node.kind is NodeKind.SETUP:
            # Setup and cleanup are instantaneous in simulation; finishing
            # through the event heap keeps dispatch chains iterative.
            self.at(self.now_ns, lambda: self.node_finished(node.id))
        elif node.kind is NodeKind.CLEANUP:
            if self._cleanup_should_run(node):
                self.at(self.now_ns, lambda: self.node_finished(node.id))
            else:
                self.at(self.now_ns, lambda: self._cancel_node(node.id))
        else:
            task = self.spec.tasks[node.task]
            app = _SimApp(self, node, task)
            self._apps[node.id] = app
            app.begin(self.now_ns)

    def _cancel_node(self, node_id: str) -> None:
        if self._terminal(node_id):
            return
        self._set_phase(node_id, Phase.CANCELLED)
        self._after_terminal()

    # -- main loop

    def run(self) -> RunTrace:
        self._dispatch_ready()
        self._check_workflow_complete()
        while not all(self._terminal(nid) for nid in self.dag.nodes):
            t_core = self.core.next_event_ns()
            t_heap = self._heap[0][0] if self._heap else None
            candidates = [t for t in (t_core, t_heap) if t is not None]
            if not candidates:
                stuck = [nid for nid in self.dag.nodes if not self._terminal(nid)]
                raise EngineStallError(f"no pending events but nodes not terminal: {stuck}")
            t = min(candidates)
            self.now_ns = t
            while True:
                progressed = False
                # Keep the device clock in lockstep with the engine clock so
                # kernels submitted by callbacks start at the current time.
                for timing in self.core.advance_to(t):
                    progressed = True
                    cb = self._kernel_cbs.pop((timing.app, timing.index), None)
                    if cb is not None:
                        cb(timing)
                while self._heap and self._heap[0][0] <= t:
                    _, _, fn = heapq.heappop(self._heap)
                    fn()
                    progressed = True
                if not progressed:
                    break

        samples = synth_utilization(self.core.result(), self.device, self.spec.sample_interval)
        meta = RunMeta(
            mode=Mode.SIMULATED.value,
            policy=self.spec.policy.value,
            seed=self.seed,
            sample_interval=self.spec.sample_interval,
            sm_count=self.device.sm_count,
        )
        return RunTrace(
            events=self.collector.events,
            requests=self.collector.records,
            samples=samples,
            gaps=[],
            spec_snapshot=self.spec,
            meta=meta,
        )


# --------------------------------------------------------------------------
# Live runner


@dataclass
class NodeHandle:
    """A dispatched node: supports wait and cooperative cancel."""

    node_id: str
    thread: threading.Thread
    cancel_token: CancelToken

    def wait(self, timeout: float | None = None) -> bool:
        self.thread.join(timeout)
        return not self.thread.is_alive()

    def cancel(self) -> None:
        self.cancel_token.cancel()


class _LiveRunner:
    def __init__(
        self,
        spec: BenchmarkSpec,
        dag: Dag,
        ctx: PolicyContext,
        seed: int,
        *,
        max_concurrency: int | None,
        node_timeout: float,
        node_timeouts: Mapping[str, float],
        collectors: Sequence[Any] | None,
        sm_count: int,
    ):
        self.spec = spec
        self.dag = dag
        self.ctx = ctx
        self.seed = seed
        self.max_concurrency = max_concurrency
        self.node_timeout = node_timeout
        self.node_timeouts = dict(node_timeouts)
        self.collectors = collectors
        self.sm_count = sm_count
        self._anchor = time.monotonic()
        self.clock = lambda: time.monotonic() - self._anchor
        self.collector = _TraceCollector(lambda: int(self.clock() * 1e9))
        self._phase: dict[str, Phase] = {}
        self._phase_lock = threading.Lock()
        self._running: dict[str, NodeHandle] = {}
        self._done_q: "queue.Queue[tuple[str, Phase, str]]" = queue.Queue()
        self._handles: dict[str, ServerHandle] = {}  # setup node id -> server handle
        self._adapters: dict[str, Adapter] = {}  # setup node id -> adapter instance
        self._notes: list[str] = []
        self._bg_cancelled = False
        self._on_failure = "cancel-dependents"
        self._timed_out: set[str] = set()

    # -- helpers shared with the sim runner's semantics

    def _terminal(self, node_id: str) -> bool:
        with self._phase_lock:
            return self._phase.get(node_id) in TERMINAL_PHASES

    def _get_phase(self, node_id: str) -> Phase | None:
        with self._phase_lock:
            return self._phase.get(node_id)

    def _set_phase(self, node_id: str, phase: Phase) -> None:
        with self._phase_lock:
            self._phase[node_id] = phase

    def _node_ready(self, node: DagNode) -> bool:
        if self._get_phase(node.id) is not None:
            return False
        preds = self.dag.preds[node.id]
        if node.kind is NodeKind.CLEANUP:
            return all(self._terminal(p) for p in preds)
        return all(self._get_phase(p) is Phase.FINISHED for p in preds)

    def _setup_id_for(self, node: DagNode) -> str:
        return node.id.replace("cleanup", "setup", 1) if node.kind is NodeKind.CLEANUP else ""

    # -- node bodies

    def _placement_for(self, node: DagNode, task: TaskDefinition) -> Placement:
        share = self.ctx.share_of(node.app_instance) if task.device is not Device.CPU else 100
        env: dict[str, str] = {}
        if task.device is not Device.CPU:
            placed = apply_placement(node.app_instance, share, Mode.LIVE, self.ctx.policy)
            assert isinstance(placed, EnvSpec)
            env = dict(placed.env)
        return Placement(
            device=task.device,
            partition_share=share,
            kv_cache_on_cpu=bool(task.kv_cache_on_cpu),
            env=env,
        )

    def _run_setup(self, node: DagNode) -> None:
        task = self.spec.tasks[node.task]
        adapter = get_adapter(task.app_kind)
        placement = self._placement_for(node, task)
        if len(node.sharers) > 1:
            tasks = [self.spec.tasks[self.dag.nodes[f"exec:{i}"].task] for i in node.sharers]
            handle = shared_setup(tasks, placement, adapter.setup)
        else:
            handle = adapter.setup(task, resolve_shared_placement([task], placement))
        handle.extra.setdefault("task_name", task.name)
        if task.model:
            handle.extra.setdefault("model", task.model)
        self._handles[node.id] = handle
        self._adapters[node.id] = adapter

    def _run_cleanup(self, node: DagNode) -> None:
        setup_id = self._setup_id_for(node)
        handle = self._handles.get(setup_id)
        adapter = self._adapters.get(setup_id)
        if handle is None or adapter is None:
            return
        release = getattr(handle, "release", None)
        if release is not None:
            for _ in node.sharers:
                release(adapter.cleanup)
        else:
            adapter.cleanup(handle)

    def _payloads_for(self, task: TaskDefinition, rng: random.Random) -> list[Any]:
        if task.app_kind is AppKind.LIVE_CAPTIONS:
            if task.dataset:
                period = (task.profile.period if task.profile else None) or 2.0
                segments = load_wav_segments(task.dataset, period)
            else:
                count = (task.profile.segments if task.profile else None) or _DEFAULT_SEGMENTS
                segments = [b"\0" * 64] * count
            return [segments] * task.num_requests
        if task.dataset:
            prompts = load_prompts(task.dataset)
            return sample_items(prompts, task.num_requests, rng)
        return [f"prompt-{i}" for i in range(task.num_requests)]

    def _run_exec(self, node: DagNode, cancel: CancelToken) -> None:
        task = self.spec.tasks[node.task]
        setup_id = next(
            n.id
            for n in self.dag.nodes.values()
            if n.kind is NodeKind.SETUP and node.app_instance in n.sharers
        )
        handle = self._handles[setup_id]
        # Sharers of one server may be different app kinds; each exec node
        # drives the shared handle through its own kind's adapter.
        adapter = get_adapter(task.app_kind)
        rng = random.Random(f"{self.seed}:{node.app_instance}")
        payloads = self._payloads_for(task, rng)
        clock = MonotonicClock(anchor=self._anchor, cancel=cancel)
        deadline = self.clock() + self.node_timeouts.get(task.name, self.node_timeout)
        for i, payload in enumerate(payloads):
            if cancel.cancelled:
                raise _CancelledSignal()
            if self.clock() > deadline:
                raise NodeTimeoutError(f"{node.id} exceeded its time limit")
            request = Request(
                request_id=f"{node.app_instance}/r{i}", payload=payload, clock=clock, cancel=cancel
            )
            result = adapter.execute(handle, request)
            records = result if isinstance(result, list) else [result]
            for record in records:
                record.task_name = task.name
            self.collector.add_records(records)
        if cancel.cancelled:
            raise _CancelledSignal()

    def _node_body(self, node: DagNode, cancel: CancelToken) -> None:
        self.collector.event(node.id, Phase.STARTED)
        try:
            if node.kind is NodeKind.SETUP:
                self._run_setup(node)
            elif node.kind is NodeKind.CLEANUP:
                self._run_cleanup(node)
            else:
                self._run_exec(node, cancel)
        except _CancelledSignal:
            self._finish_cancelled(node)
            return
        except Exception as exc:  # noqa: BLE001 - node failure is data
            self.collector.event(node.id, Phase.FAILED)
            self._done_q.put((node.id, Phase.FAILED, f"{type(exc).__name__}: {exc}"))
            return
        if cancel.cancelled and node.kind is NodeKind.EXEC:
            self._finish_cancelled(node)
            return
        self.collector.event(node.id, Phase.FINISHED)
        self._done_q.put((node.id, Phase.FINISHED, ""))

    def _finish_cancelled(self, node: DagNode) -> None:
        # A node cancelled because it blew its wall-clock limit is a failure.
        if node.id in self._timed_out:
            self.collector.event(node.id, Phase.FAILED)
            self._done_q.put((node.id, Phase.FAILED, "node timeout"))
        else:
            self.collector.event(node.id, Phase.CANCELLED)
            self._done_q.put((node.id, Phase.CANCELLED, ""))

    def dispatch(self, node: DagNode) -> NodeHandle:
        """Start a ready node on its own worker thread."""
        self.collector.event(node.id, Phase.DISPATCHED)
        self._set_phase(node.id, Phase.DISPATCHED)
        cancel = CancelToken()
        thread = threading.Thread(
            target=self._node_body, args=(node, cancel), daemon=True, name=f"node-{node.id}"
        )
        handle = NodeHandle(node_id=node.id, thread=thread, cancel_token=cancel)
        self._running[node.id] = handle
        thread.start()
        return handle

    # -- failure / cancellation propagation

    def _descendants(self, node_id: str) -> list[str]:
        seen: list[str] = []
        stack = list(self.dag.succs[node_id])
        while stack:
            nid = stack.pop(0)
            if nid in seen:
                continue
            seen.append(nid)
            stack.extend(self.dag.succs[nid])
        return seen

    def _cancel_pending(self, node_id: str) -> None:
        # Never dispatched: record the terminal event directly.
        self.collector.event(node_id, Phase.CANCELLED)
        self._set_phase(node_id, Phase.CANCELLED)

    def _on_node_failed(self, node_id: str) -> None:
        if self._on_failure == "abort":
            targets = [n.id for n in self.dag.nodes.values() if n.kind is not NodeKind.CLEANUP]
        else:
            targets = self._descendants(node_id)
        for nid in targets:
            node = self.dag.nodes[nid]
            if node.kind is NodeKind.CLEANUP or self._terminal(nid):
                continue
            running = self._running.get(nid)
            if running is not None and self._get_phase(nid) is Phase.DISPATCHED:
                running.cancel()
            elif self._get_phase(nid) is None:
                self._cancel_pending(nid)

    def _check_workflow_complete(self) -> None:
        if self._bg_cancelled:
            return
        foreground = [n for n in self.dag.nodes_of_kind(NodeKind.EXEC) if not n.background]
        if not all(self._terminal(n.id) for n in foreground):
            return
        self._bg_cancelled = True
        for node in self.dag.nodes.values():
            if node.kind is NodeKind.CLEANUP or not node.background or self._terminal(node.id):
                continue
            running = self._running.get(node.id)
            if running is not None:
                running.cancel()
            elif self._get_phase(node.id) is None:
                self._cancel_pending(node.id)

    # -- main loop

    def _dispatch_ready(self) -> None:
        exec_running = sum(
            1
            for nid, h in self._running.items()
            if self.dag.nodes[nid].kind is NodeKind.EXEC and h.thread.is_alive()
        )
        for node in list(self.dag.nodes.values()):
            if not self._node_ready(node):
                continue
            if self._bg_cancelled and node.kind is not NodeKind.CLEANUP and node.background:
                self._cancel_pending(node.id)
                continue
            if node.kind is NodeKind.EXEC and self.max_concurrency is not None:
                if exec_running >= self.max_concurrency:
                    continue
                exec_running += 1
            self.dispatch(node)

    def await_workflow(self) -> None:
        """Feed ready nodes to dispatch until every node is terminal."""
        self._dispatch_ready()
        self._check_workflow_complete()
        self._dispatch_ready()
        while not all(self._terminal(nid) for nid in self.dag.nodes):
            try:
                node_id, phase, detail = self._done_q.get(timeout=0.05)
            except queue.Empty:
                self._enforce_timeouts()
                continue
            self._set_phase(node_id, phase)
            self._running.pop(node_id, None)
            if phase in (Phase.FAILED, Phase.CANCELLED):
                if detail:
                    self._notes.append(f"{node_id} failed: {detail}")
                self._on_node_failed(node_id)
            self._check_workflow_complete()
            self._dispatch_ready()

    def _enforce_timeouts(self) -> None:
        now = self.clock()
        for nid, handle in list(self._running.items()):
            node = self.dag.nodes[nid]
            if node.kind is not NodeKind.EXEC:
                continue
            task = self.spec.tasks[node.task]
            limit = self.node_timeouts.get(task.name, self.node_timeout)
            started = self._started_at(nid)
            if started is not None and now - started > limit and not handle.cancel_token.cancelled:
                self._timed_out.add(nid)
                handle.cancel()

    def _started_at(self, node_id: str) -> float | None:
        for e in self.collector.events:
            if e.node_id == node_id and e.phase is Phase.STARTED:
                return e.t_ns / 1e9
        return None

    def run(self, on_failure: str) -> RunTrace:
        self._on_failure = on_failure
        if self.collectors is None:
            collectors, notes = default_collectors()
            self._notes.extend(notes)
        else:
            collectors = list(self.collectors)
        monitor = start_monitor(collectors, self.spec.sample_interval, clock=self.clock) if collectors else None
        started_at = datetime.now(timezone.utc).isoformat()
        try:
            self.await_workflow()
        except KeyboardInterrupt:
            self._abort()
            raise InterruptedError("run aborted by user") from None
        finally:
            samples, gaps = monitor.stop() if monitor is not None else ([], [])
            for c in collectors:
                close = getattr(c, "close", None)
                if close is not None:
                    close()
        meta = RunMeta(
            mode=Mode.LIVE.value,
            policy=self.spec.policy.value,
            seed=self.seed,
            sample_interval=self.spec.sample_interval,
            sm_count=self.sm_count,
            started_at=started_at,
            host=platform.node(),
            notes=self._notes,
        )
        return RunTrace(
            events=self.collector.events,
            requests=self.collector.records,
            samples=samples,
            gaps=gaps,
            spec_snapshot=self.spec,
            meta=meta,
        )

    def _abort(self) -> None:
        for handle in self._running.values():
            handle.cancel()
        deadline = time.monotonic() + 5.0
        for handle in list(self._running.values()):
            handle.wait(max(0.0, deadline - time.monotonic()))
        for nid in self.dag.nodes:
            if not self._terminal(nid):
                self._cancel_pending(nid)
        for node in self.dag.nodes_of_kind(NodeKind.CLEANUP):
            if self._get_phase(self._setup_id_for(node)) is Phase.FINISHED:
                try:
                    self._run_cleanup(node)
                except Exception:  # noqa: BLE001 - best effort during abort
                    pass


class _CancelledSignal(Exception):
    pass


# --------------------------------------------------------------------------
# Entry point and trace I/O


def run(
    spec: BenchmarkSpec,
    *,
    seed: int = 0,
    max_concurrency: int | None = None,
    node_timeout: float = DEFAULT_NODE_TIMEOUT_S,
    node_timeouts: Mapping[str, float] | None = None,
    on_failure: str = "cancel-dependents",
    collectors: Sequence[Any] | None = None,
    sm_count: int = DEFAULT_SM_COUNT,
) -> RunTrace:
    """Execute a validated spec and return its trace.

    ``on_failure`` is ``"cancel-dependents"`` (default) or ``"abort"``.
    ``collectors`` overrides live-mode metric collectors (None = host
    defaults); ``node_timeouts`` overrides the wall-clock limit per task
    name. Simulated runs are single-threaded and complete in bounded
    simulated time, so concurrency caps and wall-clock timeouts apply to
    live mode only.
    """
    if on_failure not in ("cancel-dependents", "abort"):
        raise ValueError(f"unknown on_failure policy {on_failure!r}")
    violations = validate_spec(spec)
    if violations:
        raise EngineError("invalid spec: " + "; ".join(str(v) for v in violations))
    dag = build_dag(spec)
    validate_dag(dag)
    ctx = build_policy_context(spec)
    if spec.mode is Mode.SIMULATED:
        return _SimRunner(spec, dag, ctx, seed, sm_count).run()
    runner = _LiveRunner(
        spec,
        dag,
        ctx,
        seed,
        max_concurrency=max_concurrency,
        node_timeout=node_timeout,
        node_timeouts=node_timeouts or {},
        collectors=collectors,
        sm_count=sm_count,
    )
    return runner.run(on_failure)


def _json_bytes(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_trace(trace: RunTrace, out_dir: str | Path) -> None:
    """Write trace.json, requests.json and samples.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_doc = {
        "format_version": FORMAT_VERSION,
        "meta": trace.meta.to_dict(),
        "spec": spec_to_dict(trace.spec_snapshot),
        "events": [e.to_dict() for e in trace.events],
        "gaps": [{"t": g.t, "source": g.source} for g in trace.gaps],
    }
    (out / "trace.json").write_text(_json_bytes(trace_doc), encoding="utf-8")
    requests_doc = {
        "format_version": FORMAT_VERSION,
        "records": [r.to_dict() for r in trace.requests],
    }
    (out / "requests.json").write_text(_json_bytes(requests_doc), encoding="utf-8")
    lines = ["t,kind,value,source"]
    for s in trace.samples:
        lines.append(f"{s.t!r},{s.kind.value},{s.value!r},{s.source}")
    (out / "samples.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(trace_dir: str | Path) -> RunTrace:
    """Rebuild a RunTrace from the files :func:`write_trace` produced."""
    d = Path(trace_dir)
    trace_doc = json.loads((d / "trace.json").read_text(encoding="utf-8"))
    requests_doc = json.loads((d / "requests.json").read_text(encoding="utf-8"))
    meta_doc = dict(trace_doc["meta"])
    meta_doc.pop("format_version", None)
    meta = RunMeta(**meta_doc)
    events = [
        NodeEvent(node_id=e["node_id"], phase=Phase(e["phase"]), t_ns=e["t_ns"])
        for e in trace_doc["events"]
    ]
    gaps = [GapMarker(t=g["t"], source=g["source"]) for g in trace_doc["gaps"]]
    records = [RequestRecord.from_dict(r) for r in requests_doc["records"]]
    return RunTrace(
        events=events,
        requests=records,
        samples=_read_samples(d / "samples.csv"),
        gaps=gaps,
        spec_snapshot=spec_from_dict(trace_doc["spec"]),
        meta=meta,
    )


def _read_samples(csv_path: Path) -> list[MetricSample]:
    samples: list[MetricSample] = []
    if not csv_path.exists():
        return samples
    for line in csv_path.read_text(encoding="utf-8").splitlines()[1:]:
        if not line.strip():
            continue
        t_str, kind_str, value_str, source = line.split(",", 3)
        samples.append(
            MetricSample(
                t=float(t_str), kind=MetricKind(kind_str), value=float(value_str), source=source
            )
        )
    return samples
