"""Application adapter contract: setup / execute / cleanup.

An adapter wraps one application kind. ``setup`` brings up (or connects to)
the serving backend and returns a handle, ``execute`` issues one request and
returns its timing record, ``cleanup`` releases the backend. Several app
instances may share one server; :func:`shared_setup` reference-counts the
handle so the backend is torn down exactly once, after the last sharer.

All timestamps are seconds on the run's monotonic clock (injected via the
request's :class:`Clock`), never wall time.
"""

from __future__ import annotations

import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Protocol

from ..config import AppKind, Device, TaskDefinition


class AdapterError(Exception):
    """Base class for adapter failures."""


class LaunchError(AdapterError):
    """A backend subprocess or connection could not be established."""


class AdapterNotFoundError(AdapterError):
    """No adapter is registered for the requested app kind."""


class ConfigConflictError(AdapterError):
    """Sharers of one server demand incompatible placement."""


class StreamAbortedError(AdapterError):
    """A streaming response ended before completion."""


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class CancelToken:
    """Cooperative cancellation; sleeps through it are interruptible."""

    def __init__(self) -> None:
        self._event = threading.Event()

    def cancel(self) -> None:
        self._event.set()

    @property
    def cancelled(self) -> bool:
        return self._event.is_set()

    def wait(self, seconds: float) -> bool:
        """Sleep up to ``seconds``; True when cancelled meanwhile."""
        return self._event.wait(timeout=seconds)


class MonotonicClock:
    """Monotonic seconds anchored at run start."""

    def __init__(self, anchor: float | None = None, cancel: CancelToken | None = None):
        self._anchor = time.monotonic() if anchor is None else anchor
        self._cancel = cancel

    def now(self) -> float:
        return time.monotonic() - self._anchor

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        if self._cancel is not None:
            self._cancel.wait(seconds)
        else:
            time.sleep(seconds)


@dataclass(frozen=True)
class Placement:
    """Where and how an app instance runs."""

    device: Device = Device.GPU
    partition_share: int = 100
    kv_cache_on_cpu: bool = False
    env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 < self.partition_share <= 100:
            raise ValueError(f"partition_share must be in (0, 100], got {self.partition_share}")


@dataclass
class RequestRecord:
    """One request's timestamps and variant-specific phase marks."""

    task_name: str
    request_id: str
    t_submit: float
    t_first_output: float | None = None
    t_complete: float | None = None
    token_times: list[float] | None = None
    step_times: list[float] | None = None
    segment_latency: float | None = None
    segment_index: int | None = None
    ok: bool = True
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_name": self.task_name,
            "request_id": self.request_id,
            "t_submit": self.t_submit,
            "t_first_output": self.t_first_output,
            "t_complete": self.t_complete,
            "token_times": self.token_times,
            "step_times": self.step_times,
            "segment_latency": self.segment_latency,
            "segment_index": self.segment_index,
            "ok": self.ok,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RequestRecord":
        return cls(**data)


@dataclass
class Request:
    """What ``execute`` receives: an id, the payload, and runtime services."""

    request_id: str
    payload: Any
    clock: Clock
    cancel: CancelToken


@dataclass
class ServerHandle:
    """A running (or connected) backend."""

    server_id: str
    base_url: str | None = None
    process: Any = None  # subprocess.Popen when the adapter launched it
    placement: Placement | None = None
    extra: dict[str, Any] = field(default_factory=dict)


class Adapter(ABC):
    """The three-function application contract."""

    kind: AppKind

    @abstractmethod
    def setup(self, task: TaskDefinition, placement: Placement) -> ServerHandle: ...

    @abstractmethod
    def execute(self, handle: ServerHandle, request: Request) -> RequestRecord | list[RequestRecord]: ...

    @abstractmethod
    def cleanup(self, handle: ServerHandle) -> None: ...


class SharedServerHandle(ServerHandle):
    """Reference-counted wrapper: cleanup side effects happen exactly once,
    when the last sharer releases."""

    def __init__(self, inner: ServerHandle, sharers: int):
        super().__init__(
            server_id=inner.server_id,
            base_url=inner.base_url,
            process=inner.process,
            placement=inner.placement,
            extra=inner.extra,
        )
        self.inner = inner
        self._remaining = sharers
        self._lock = threading.Lock()
        self.torn_down = False

    def release(self, cleanup_fn: Callable[[ServerHandle], None]) -> bool:
        """Drop one reference; runs ``cleanup_fn`` on the last release.
        Returns True when the underlying server was torn down."""
        with self._lock:
            if self._remaining <= 0:
                raise AdapterError("release() called more times than there are sharers")
            self._remaining -= 1
            if self._remaining > 0:
                return False
            self.torn_down = True
        cleanup_fn(self.inner)
        return True


def resolve_shared_placement(tasks: list[TaskDefinition], placement: Placement) -> Placement:
    """Merge sharers' placement demands; incompatible demands are surfaced,
    never silently resolved."""
    models = {t.model for t in tasks if t.model is not None}
    if len(models) > 1:
        raise ConfigConflictError(f"sharers name different models: {sorted(models)}")
    demands = {t.kv_cache_on_cpu for t in tasks if t.kv_cache_on_cpu is not None}
    if demands == {True, False}:
        names = sorted(t.name for t in tasks)
        raise ConfigConflictError(f"sharers disagree on KV-cache placement: {names}")
    if not demands:
        return placement
    return replace(placement, kv_cache_on_cpu=(True in demands))


def shared_setup(
    tasks: list[TaskDefinition],
    placement: Placement,
    setup_fn: Callable[[TaskDefinition, Placement], ServerHandle],
) -> SharedServerHandle:
    """Launch exactly one server for all participating tasks.

    The returned handle holds one reference per sharer; each sharer's
    cleanup calls :meth:`SharedServerHandle.release`.
    """
    if not tasks:
        raise ValueError("shared_setup needs at least one task")
    merged = resolve_shared_placement(tasks, placement)
    inner = setup_fn(tasks[0], merged)
    return SharedServerHandle(inner, sharers=len(tasks))


_REGISTRY: dict[AppKind, type[Adapter]] = {}


def register_adapter(kind: AppKind, cls: type[Adapter]) -> None:
    _REGISTRY[kind] = cls


def get_adapter(kind: AppKind) -> Adapter:
    try:
        cls = _REGISTRY[kind]
    except KeyError:
        raise AdapterNotFoundError(f"no adapter registered for {kind.value!r}") from None
    return cls()
