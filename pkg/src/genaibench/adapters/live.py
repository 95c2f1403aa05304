"""Shared helpers for live-mode adapters: endpoint resolution and backend
subprocess launch.

An adapter finds its backend in this order:

1. the task's ``server`` field, when it is an ``http(s)://`` URL;
2. a ``GENAIBENCH_<KIND>_URL`` environment variable;
3. a ``GENAIBENCH_<KIND>_SERVER_CMD`` launch template with ``{model}``,
   ``{port}`` and ``{kv_flag}`` placeholders, run as a subprocess on a free
   port.

Anything else is a launch error: the harness never fakes a backend in live
mode.
"""

from __future__ import annotations

import os
import shlex
import socket
import subprocess
import time

import httpx

from ..config import TaskDefinition
from .base import LaunchError, Placement, ServerHandle

HEALTH_TIMEOUT_S = 30.0
HEALTH_POLL_S = 0.2
KV_CPU_FLAG = "--no-kv-offload"


def _is_url(value: str | None) -> bool:
    return value is not None and value.startswith(("http://", "https://"))


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_healthy(base_url: str, proc: subprocess.Popen) -> None:
    deadline = time.monotonic() + HEALTH_TIMEOUT_S
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise LaunchError(f"backend exited with code {proc.returncode} during startup")
        try:
            httpx.get(base_url, timeout=1.0)
            return
        except httpx.HTTPError:
            time.sleep(HEALTH_POLL_S)
    proc.terminate()
    raise LaunchError(f"backend at {base_url} did not become healthy in {HEALTH_TIMEOUT_S}s")


def resolve_backend(task: TaskDefinition, placement: Placement, kind_tag: str) -> ServerHandle:
    """Connect to or launch the backend for ``task``; see module docstring."""
    if _is_url(task.server):
        return ServerHandle(server_id=f"{kind_tag}:{task.name}", base_url=task.server, placement=placement)

    env_url = os.environ.get(f"GENAIBENCH_{kind_tag.upper()}_URL")
    if _is_url(env_url):
        return ServerHandle(server_id=f"{kind_tag}:{task.name}", base_url=env_url, placement=placement)

    template = os.environ.get(f"GENAIBENCH_{kind_tag.upper()}_SERVER_CMD")
    if template:
        port = _free_port()
        command = shlex.split(
            template.format(
                model=task.model or "",
                port=port,
                kv_flag=KV_CPU_FLAG if placement.kv_cache_on_cpu else "",
            )
        )
        env = dict(os.environ)
        env.update(placement.env)
        try:
            proc = subprocess.Popen(command, env=env)
        except OSError as exc:
            raise LaunchError(f"cannot launch backend {command[0]!r}: {exc}") from exc
        base_url = f"http://127.0.0.1:{port}"
        _wait_healthy(base_url, proc)
        return ServerHandle(
            server_id=f"{kind_tag}:{task.name}", base_url=base_url, process=proc, placement=placement
        )

    raise LaunchError(
        f"no backend configured for task {task.name!r}: set server to a URL, "
        f"or define GENAIBENCH_{kind_tag.upper()}_URL / GENAIBENCH_{kind_tag.upper()}_SERVER_CMD"
    )


def shutdown_backend(handle: ServerHandle) -> None:
    proc = handle.process
    if proc is None or proc.poll() is not None:
        return
    proc.terminate()
    try:
        proc.wait(timeout=10.0)
    except subprocess.TimeoutExpired:
        proc.kill()
