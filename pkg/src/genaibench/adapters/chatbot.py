"""Chat adapter: streamed completions against an OpenAI-compatible API."""

from __future__ import annotations

import json

import httpx

from ..config import AppKind, TaskDefinition
from .base import Adapter, Placement, Request, RequestRecord, ServerHandle
from .live import resolve_backend, shutdown_backend

REQUEST_TIMEOUT_S = 300.0


class ChatbotAdapter(Adapter):
    kind = AppKind.CHATBOT

    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle:
        return resolve_backend(task, placement, "chatbot")

    def execute(self, handle: ServerHandle, request: Request) -> RequestRecord:
        record = RequestRecord(
            task_name=handle.extra.get("task_name", ""),
            request_id=request.request_id,
            t_submit=request.clock.now(),
            token_times=[],
        )
        body = {
            "model": handle.extra.get("model", "default"),
            "messages": [{"role": "user", "content": str(request.payload)}],
            "stream": True,
        }
        url = f"{handle.base_url}/v1/chat/completions"
        try:
            with httpx.stream("POST", url, json=body, timeout=REQUEST_TIMEOUT_S) as resp:
                resp.raise_for_status()
                for line in resp.iter_lines():
                    if request.cancel.cancelled:
                        record.ok = False
                        record.detail = "cancelled"
                        break
                    if not line.startswith("data:"):
                        continue
                    data = line[len("data:"):].strip()
                    if data == "[DONE]":
                        break
                    try:
                        chunk = json.loads(data)
                    except json.JSONDecodeError:
                        continue
                    delta = chunk.get("choices", [{}])[0].get("delta", {})
                    if delta.get("content"):
                        now = request.clock.now()
                        if record.t_first_output is None:
                            record.t_first_output = now
                        record.token_times.append(now)
        except httpx.HTTPError as exc:
            record.ok = False
            record.detail = f"connection error: {exc}"
            record.t_complete = request.clock.now()
            return record
        record.t_complete = request.clock.now()
        if record.ok and not record.token_times:
            record.ok = False
            record.detail = "stream ended with no tokens"
        return record

    def cleanup(self, handle: ServerHandle) -> None:
        shutdown_backend(handle)
