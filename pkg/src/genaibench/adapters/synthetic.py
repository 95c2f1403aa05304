"""Synthetic workload adapter for desk-scale testing without any backend.

In live mode a request just burns its profile's duration (the ``sleep``
field, or the sum of kernel durations). Simulated mode never calls this
adapter: the engine feeds the profile's kernels straight to the GPU
simulator instead.
"""

from __future__ import annotations

from ..config import AppKind, TaskDefinition, WorkloadProfile
from .base import Adapter, Placement, Request, RequestRecord, ServerHandle

DEFAULT_SLEEP_S = 0.1


def profile_duration(profile: WorkloadProfile | None) -> float:
    if profile is None:
        return DEFAULT_SLEEP_S
    if profile.sleep is not None:
        return profile.sleep
    if profile.kernels:
        return sum(k.duration for k in profile.kernels)
    return DEFAULT_SLEEP_S


class SyntheticAdapter(Adapter):
    kind = AppKind.SYNTHETIC

    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle:
        return ServerHandle(
            server_id=f"synthetic:{task.name}",
            placement=placement,
            extra={"duration": profile_duration(task.profile), "task_name": task.name},
        )

    def execute(self, handle: ServerHandle, request: Request) -> RequestRecord:
        duration = float(handle.extra["duration"])
        submit = request.clock.now()
        request.clock.sleep(duration)
        done = request.clock.now()
        record = RequestRecord(
            task_name=handle.extra.get("task_name", ""),
            request_id=request.request_id,
            t_submit=submit,
            t_first_output=done,
            t_complete=done,
            segment_latency=done - submit,
        )
        if request.cancel.cancelled and done - submit < duration:
            record.ok = False
            record.detail = "cancelled"
        return record

    def cleanup(self, handle: ServerHandle) -> None:
        pass
