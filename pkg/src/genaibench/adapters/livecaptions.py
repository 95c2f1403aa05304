"""Live-caption adapter: paced audio segments against a transcription
endpoint (``POST {base}/transcribe`` with a WAV body).

Segment i is submitted at i * period on the run clock; its latency is
completion minus that scheduled submission, so a backend that falls behind
accumulates visible lag instead of silently stretching the schedule.
"""

from __future__ import annotations

import httpx

from ..config import AppKind, TaskDefinition
from .base import Adapter, Placement, Request, RequestRecord, ServerHandle
from .live import resolve_backend, shutdown_backend

REQUEST_TIMEOUT_S = 120.0
DEFAULT_PERIOD_S = 2.0


class LiveCaptionsAdapter(Adapter):
    kind = AppKind.LIVE_CAPTIONS

    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle:
        handle = resolve_backend(task, placement, "livecaptions")
        if task.profile is not None and task.profile.period:
            handle.extra["period"] = task.profile.period
        return handle

    def execute(self, handle: ServerHandle, request: Request) -> list[RequestRecord]:
        segments: list[bytes] = list(request.payload or [])
        period = float(handle.extra.get("period", DEFAULT_PERIOD_S))
        task_name = handle.extra.get("task_name", "")
        start = request.clock.now()
        records: list[RequestRecord] = []
        for i, segment in enumerate(segments):
            scheduled = start + i * period
            request.clock.sleep(scheduled - request.clock.now())
            if request.cancel.cancelled:
                break
            record = RequestRecord(
                task_name=task_name,
                request_id=f"{request.request_id}/seg{i}",
                t_submit=scheduled,
                segment_index=i,
            )
            try:
                resp = httpx.post(
                    f"{handle.base_url}/transcribe",
                    content=segment,
                    headers={"content-type": "audio/wav"},
                    timeout=REQUEST_TIMEOUT_S,
                )
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                record.ok = False
                record.detail = f"segment dropped: {exc}"
                record.t_complete = request.clock.now()
                records.append(record)
                continue
            done = request.clock.now()
            record.t_first_output = done
            record.t_complete = done
            record.segment_latency = done - scheduled
            records.append(record)
        return records

    def cleanup(self, handle: ServerHandle) -> None:
        shutdown_backend(handle)
