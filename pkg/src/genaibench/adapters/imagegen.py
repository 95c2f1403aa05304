"""Image-generation adapter: submit endpoint plus progress polling.

Wire shape: ``POST {base}/generate`` with ``{"prompt", "steps"}`` returns
``{"job_id"}``; ``GET {base}/progress/{job_id}`` returns
``{"steps_completed", "total_steps", "done"}``. Backends without a progress
endpoint still produce a record: the total time is split uniformly across
steps and the record is flagged.
"""

from __future__ import annotations

import httpx

from ..config import AppKind, TaskDefinition
from .base import Adapter, Placement, Request, RequestRecord, ServerHandle
from .live import resolve_backend, shutdown_backend

REQUEST_TIMEOUT_S = 600.0
POLL_INTERVAL_S = 0.05
DEFAULT_STEPS = 4
UNIFORM_SPLIT_FLAG = "no progress signal: uniform step split"


class ImagegenAdapter(Adapter):
    kind = AppKind.IMAGEGEN

    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle:
        handle = resolve_backend(task, placement, "imagegen")
        if task.profile is not None and task.profile.steps:
            handle.extra["steps"] = task.profile.steps
        return handle

    def execute(self, handle: ServerHandle, request: Request) -> RequestRecord:
        steps = int(handle.extra.get("steps", DEFAULT_STEPS))
        record = RequestRecord(
            task_name=handle.extra.get("task_name", ""),
            request_id=request.request_id,
            t_submit=request.clock.now(),
            step_times=[],
        )
        try:
            resp = httpx.post(
                f"{handle.base_url}/generate",
                json={"prompt": str(request.payload), "steps": steps},
                timeout=REQUEST_TIMEOUT_S,
            )
            resp.raise_for_status()
            submitted = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            record.ok = False
            record.detail = f"connection error: {exc}"
            record.t_complete = request.clock.now()
            return record

        job_id = submitted.get("job_id") if isinstance(submitted, dict) else None
        if job_id is None:
            # Synchronous backend with no progress API: the request is
            # already done.
            return self._finish_uniform(record, request, steps)

        last_boundary = record.t_submit
        seen = 0
        while True:
            if request.cancel.cancelled:
                record.ok = False
                record.detail = "cancelled"
                record.t_complete = request.clock.now()
                return record
            try:
                prog = httpx.get(
                    f"{handle.base_url}/progress/{job_id}", timeout=REQUEST_TIMEOUT_S
                )
            except httpx.HTTPError as exc:
                record.ok = False
                record.detail = f"connection error: {exc}"
                record.t_complete = request.clock.now()
                return record
            if prog.status_code == 404:
                return self._finish_uniform(record, request, steps)
            try:
                state = prog.json()
            except ValueError:
                return self._finish_uniform(record, request, steps)
            done_steps = int(state.get("steps_completed", 0))
            while seen < done_steps:
                now = request.clock.now()
                record.step_times.append(now - last_boundary)
                last_boundary = now
                seen += 1
                if record.t_first_output is None:
                    record.t_first_output = now
            if state.get("done"):
                record.t_complete = request.clock.now()
                if record.t_first_output is None:
                    record.t_first_output = record.t_complete
                if not record.step_times:
                    return self._finish_uniform(record, request, steps, completed=True)
                return record
            request.clock.sleep(POLL_INTERVAL_S)

    def _finish_uniform(
        self, record: RequestRecord, request: Request, steps: int, completed: bool = False
    ) -> RequestRecord:
        if not completed:
            record.t_complete = request.clock.now()
        assert record.t_complete is not None
        total = record.t_complete - record.t_submit
        record.step_times = [total / steps] * steps
        record.t_first_output = record.t_complete
        record.detail = UNIFORM_SPLIT_FLAG
        return record

    def cleanup(self, handle: ServerHandle) -> None:
        shutdown_backend(handle)
