"""Built-in application adapters and the adapter registry."""

from __future__ import annotations

from ..config import AppKind
from .base import (
    Adapter,
    AdapterError,
    AdapterNotFoundError,
    CancelToken,
    Clock,
    ConfigConflictError,
    LaunchError,
    MonotonicClock,
    Placement,
    Request,
    RequestRecord,
    ServerHandle,
    SharedServerHandle,
    StreamAbortedError,
    get_adapter,
    register_adapter,
    resolve_shared_placement,
    shared_setup,
)
from .chatbot import ChatbotAdapter
from .deepresearch import DeepResearchAdapter
from .imagegen import ImagegenAdapter
from .livecaptions import LiveCaptionsAdapter
from .synthetic import SyntheticAdapter

register_adapter(AppKind.CHATBOT, ChatbotAdapter)
register_adapter(AppKind.DEEP_RESEARCH, DeepResearchAdapter)
register_adapter(AppKind.IMAGEGEN, ImagegenAdapter)
register_adapter(AppKind.LIVE_CAPTIONS, LiveCaptionsAdapter)
register_adapter(AppKind.SYNTHETIC, SyntheticAdapter)

__all__ = [
    "Adapter",
    "AdapterError",
    "AdapterNotFoundError",
    "CancelToken",
    "ChatbotAdapter",
    "Clock",
    "ConfigConflictError",
    "DeepResearchAdapter",
    "ImagegenAdapter",
    "LaunchError",
    "LiveCaptionsAdapter",
    "MonotonicClock",
    "Placement",
    "Request",
    "RequestRecord",
    "ServerHandle",
    "SharedServerHandle",
    "StreamAbortedError",
    "SyntheticAdapter",
    "get_adapter",
    "register_adapter",
    "resolve_shared_placement",
    "shared_setup",
]
