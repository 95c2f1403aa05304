"""Deep-research adapter: the agent is an opaque long-running request.

No SLO applies and no phase marks are recorded; only submit and completion
times matter, since the app's role in a workflow is to gate (or run behind)
other tasks.
"""

from __future__ import annotations

import httpx

from ..config import AppKind, TaskDefinition
from .base import Adapter, Placement, Request, RequestRecord, ServerHandle
from .live import resolve_backend, shutdown_backend

REQUEST_TIMEOUT_S = 3600.0


class DeepResearchAdapter(Adapter):
    kind = AppKind.DEEP_RESEARCH

    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle:
        return resolve_backend(task, placement, "deepresearch")

    def execute(self, handle: ServerHandle, request: Request) -> RequestRecord:
        record = RequestRecord(
            task_name=handle.extra.get("task_name", ""),
            request_id=request.request_id,
            t_submit=request.clock.now(),
        )
        body = {
            "model": handle.extra.get("model", "default"),
            "messages": [{"role": "user", "content": str(request.payload)}],
            "stream": False,
        }
        try:
            resp = httpx.post(
                f"{handle.base_url}/v1/chat/completions", json=body, timeout=REQUEST_TIMEOUT_S
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            record.ok = False
            record.detail = f"connection error: {exc}"
        record.t_complete = request.clock.now()
        if record.ok:
            record.t_first_output = record.t_complete
        return record

    def cleanup(self, handle: ServerHandle) -> None:
        shutdown_backend(handle)
