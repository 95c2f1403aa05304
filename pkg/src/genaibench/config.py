"""Benchmark configuration: YAML schema, parsing, validation, serialization.

A benchmark is described by a single YAML document (or several documents
separated by ``---``, which are merged). Task definitions live at the top
level, workflow nodes under the reserved ``workflows:`` key, run options
under ``policy`` / ``mode`` / ``sample_interval`` / ``output_dir``. For
compatibility with split task/workflow files, a top-level entry whose body
contains ``uses`` is treated as a workflow node.

The loader is strict: unknown keys are hard errors, because a silent typo in
an SLO field would invalidate a whole benchmark run. Reference errors
(``uses`` or ``depend_on`` naming undeclared entities) are caught at parse
time; everything value-level is reported by :func:`validate_spec` as a list
of violations so a config author sees all problems at once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping

import yaml


class ConfigError(Exception):
    """Base class for configuration errors."""


class ConfigSyntaxError(ConfigError):
    """The input is not well-formed YAML."""


class SchemaError(ConfigError):
    """Missing required field, wrong type, bad literal, or unknown key."""


class UnknownReferenceError(ConfigError):
    """``uses`` or ``depend_on`` names an undeclared task or node."""


class AppKind(str, Enum):
    CHATBOT = "chatbot"
    DEEP_RESEARCH = "deep_research"
    IMAGEGEN = "imagegen"
    LIVE_CAPTIONS = "live_captions"
    SYNTHETIC = "synthetic"


class Device(str, Enum):
    CPU = "cpu"
    GPU = "gpu"
    HYBRID = "hybrid"


class Policy(str, Enum):
    GREEDY = "greedy"
    STATIC_PARTITION = "static_partition"


class Mode(str, Enum):
    LIVE = "live"
    SIMULATED = "simulated"


class SloKind(str, Enum):
    LATENCY_PAIR = "latency_pair"
    STEP_TIME = "step_time"
    SEGMENT_TIME = "segment_time"
    NONE = "none"


@dataclass(frozen=True)
class SloSpec:
    """A per-application latency objective.

    ``latency_pair`` carries a first-output threshold plus a per-output-unit
    threshold (chat-style apps); ``step_time`` bounds each generation step
    (image apps); ``segment_time`` bounds per-segment turnaround (streaming
    audio apps). ``none`` means the app has no objective.
    """

    kind: SloKind = SloKind.NONE
    ttft: float | None = None
    tpot: float | None = None
    threshold: float | None = None

    @classmethod
    def latency_pair(cls, ttft: float, tpot: float) -> "SloSpec":
        return cls(kind=SloKind.LATENCY_PAIR, ttft=ttft, tpot=tpot)

    @classmethod
    def step_time(cls, threshold: float) -> "SloSpec":
        return cls(kind=SloKind.STEP_TIME, threshold=threshold)

    @classmethod
    def segment_time(cls, threshold: float) -> "SloSpec":
        return cls(kind=SloKind.SEGMENT_TIME, threshold=threshold)

    @classmethod
    def none(cls) -> "SloSpec":
        return cls(kind=SloKind.NONE)

    def thresholds(self) -> tuple[float, ...]:
        if self.kind is SloKind.LATENCY_PAIR:
            return (self.ttft or 0.0, self.tpot or 0.0)
        if self.kind is SloKind.NONE:
            return ()
        return (self.threshold or 0.0,)


@dataclass(frozen=True)
class KernelSpec:
    """One synthetic GPU kernel: duration at full demand, demand as a
    percentage of the device's SMs."""

    duration: float
    sm_demand: float


@dataclass(frozen=True)
class WorkloadProfile:
    """Shape of a task's synthetic workload (simulated mode and the
    ``synthetic`` app kind).

    ``kernels`` gives the explicit per-request kernel list; when empty,
    kind-specific defaults derived from ``tokens`` / ``steps`` / ``segments``
    apply. ``sleep`` is the synthetic app's live-mode busy duration.
    """

    kernels: tuple[KernelSpec, ...] = ()
    sleep: float | None = None
    tokens: int | None = None
    steps: int | None = None
    segments: int | None = None
    period: float | None = None


@dataclass(frozen=True)
class TaskDefinition:
    name: str
    app_kind: AppKind
    num_requests: int
    device: Device
    model: str | None = None
    mps_share: int = 100
    slo: SloSpec = field(default_factory=SloSpec.none)
    dataset: str | None = None
    server: str | None = None
    kv_cache_on_cpu: bool | None = None
    profile: WorkloadProfile | None = None


@dataclass(frozen=True)
class WorkflowNodeSpec:
    node_id: str
    uses: str
    depend_on: tuple[str, ...] = ()
    background: bool = False


@dataclass(frozen=True)
class BenchmarkSpec:
    tasks: dict[str, TaskDefinition]
    workflow: tuple[WorkflowNodeSpec, ...]
    policy: Policy = Policy.GREEDY
    mode: Mode = Mode.LIVE
    sample_interval: float = 0.1
    output_dir: str = "genaibench_out"


class ViolationKind(str, Enum):
    SLO_MISMATCH = "slo_mismatch"
    DANGLING_REFERENCE = "dangling_reference"
    BAD_VALUE = "bad_value"
    DUPLICATE_ID = "duplicate_id"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind.value}] {self.subject}: {self.message}"


_DURATION_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*(ms|s)?\s*$")

# Top-level keys that are not task definitions.
_RESERVED_KEYS = {"workflows", "policy", "mode", "sample_interval", "output_dir"}

_TASK_KEYS = {
    "type", "model", "server_model", "num_requests", "device", "mps",
    "slo", "dataset", "server", "kv_cache_on_cpu", "profile",
}
_NODE_KEYS = {"uses", "depend_on", "background"}
_PROFILE_KEYS = {"kernels", "sleep", "tokens", "steps", "segments", "period"}
_KERNEL_KEYS = {"duration", "sm_demand"}

# SLO variants each app kind may legally carry. The synthetic kind accepts a
# per-request latency threshold (segment-time semantics) so simulated
# workloads can be scored.
ALLOWED_SLO_KINDS: dict[AppKind, frozenset[SloKind]] = {
    AppKind.CHATBOT: frozenset({SloKind.LATENCY_PAIR, SloKind.NONE}),
    AppKind.DEEP_RESEARCH: frozenset({SloKind.NONE}),
    AppKind.IMAGEGEN: frozenset({SloKind.STEP_TIME, SloKind.NONE}),
    AppKind.LIVE_CAPTIONS: frozenset({SloKind.SEGMENT_TIME, SloKind.NONE}),
    AppKind.SYNTHETIC: frozenset({SloKind.SEGMENT_TIME, SloKind.NONE}),
}

_KIND_ALIASES = {
    "chatbot": AppKind.CHATBOT,
    "deepresearch": AppKind.DEEP_RESEARCH,
    "imagegen": AppKind.IMAGEGEN,
    "imagegeneration": AppKind.IMAGEGEN,
    "livecaptions": AppKind.LIVE_CAPTIONS,
    "synthetic": AppKind.SYNTHETIC,
}

_NAME_KIND_RE = re.compile(r"\(([^()]*)\)\s*$")


def parse_duration(value: Any, *, where: str = "duration") -> float:
    """Parse a duration literal into seconds.

    Accepts bare numbers (seconds) and strings with an ``s`` or ``ms``
    suffix; all durations must be strictly positive.
    """
    if isinstance(value, bool):
        raise SchemaError(f"{where}: expected a duration, got a boolean")
    if isinstance(value, (int, float)):
        seconds = float(value)
    elif isinstance(value, str):
        m = _DURATION_RE.match(value)
        if not m:
            raise SchemaError(f"{where}: bad duration literal {value!r}")
        seconds = float(m.group(1))
        if m.group(2) == "ms":
            seconds /= 1000.0
    else:
        raise SchemaError(f"{where}: expected a duration, got {type(value).__name__}")
    if seconds <= 0:
        raise SchemaError(f"{where}: duration must be strictly positive, got {seconds}")
    return seconds


def format_duration(seconds: float) -> str:
    """Inverse of :func:`parse_duration` (always emits an ``s`` literal)."""
    return f"{seconds!r}s"


def _normalize_kind_token(token: str) -> str:
    return re.sub(r"[\s_\-]+", "", token.strip().lower())


def _infer_app_kind(name: str, body: Mapping[str, Any]) -> AppKind:
    token = body.get("type")
    if token is None:
        m = _NAME_KIND_RE.search(name)
        if m:
            token = m.group(1)
    if token is None:
        raise SchemaError(
            f"task {name!r}: cannot determine app kind; add a `type` field "
            f"or a parenthesized kind suffix in the task name"
        )
    if not isinstance(token, str):
        raise SchemaError(f"task {name!r}: `type` must be a string")
    kind = _KIND_ALIASES.get(_normalize_kind_token(token))
    if kind is None:
        raise SchemaError(f"task {name!r}: unknown app kind {token!r}")
    return kind


def _require_str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{where}: expected a non-empty string")
    return value


def _require_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected an integer")
    return value


def _require_bool(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(f"{where}: expected a boolean")
    return value


def _require_mapping(value: Any, where: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise SchemaError(f"{where}: expected a mapping")
    for key in value:
        if not isinstance(key, str):
            raise SchemaError(f"{where}: mapping keys must be strings")
    return value


def _reject_unknown_keys(body: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = [k for k in body if k not in allowed]
    if unknown:
        raise SchemaError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")


def _parse_slo(value: Any, kind: AppKind, where: str) -> SloSpec:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise SchemaError(f"{where}: paired SLO must have exactly two entries")
        ttft = parse_duration(value[0], where=f"{where}[0]")
        tpot = parse_duration(value[1], where=f"{where}[1]")
        return SloSpec.latency_pair(ttft, tpot)
    threshold = parse_duration(value, where=where)
    # A scalar SLO's variant follows the app kind; a mismatched kind is
    # reported by validate_spec, not here.
    if kind is AppKind.IMAGEGEN:
        return SloSpec.step_time(threshold)
    return SloSpec.segment_time(threshold)


def _parse_profile(value: Any, where: str) -> WorkloadProfile:
    body = _require_mapping(value, where)
    _reject_unknown_keys(body, _PROFILE_KEYS, where)
    kernels: list[KernelSpec] = []
    if "kernels" in body:
        raw = body["kernels"]
        if not isinstance(raw, (list, tuple)):
            raise SchemaError(f"{where}.kernels: expected a list")
        for i, entry in enumerate(raw):
            kbody = _require_mapping(entry, f"{where}.kernels[{i}]")
            _reject_unknown_keys(kbody, _KERNEL_KEYS, f"{where}.kernels[{i}]")
            if "duration" not in kbody or "sm_demand" not in kbody:
                raise SchemaError(f"{where}.kernels[{i}]: needs duration and sm_demand")
            duration = parse_duration(kbody["duration"], where=f"{where}.kernels[{i}].duration")
            demand = kbody["sm_demand"]
            if isinstance(demand, bool) or not isinstance(demand, (int, float)):
                raise SchemaError(f"{where}.kernels[{i}].sm_demand: expected a number")
            if not 0 < float(demand) <= 100:
                raise SchemaError(
                    f"{where}.kernels[{i}].sm_demand: must be a percentage in (0, 100]"
                )
            kernels.append(KernelSpec(duration=duration, sm_demand=float(demand)))

    def _opt_positive_int(key: str) -> int | None:
        if key not in body:
            return None
        n = _require_int(body[key], f"{where}.{key}")
        if n < 1:
            raise SchemaError(f"{where}.{key}: must be >= 1")
        return n

    return WorkloadProfile(
        kernels=tuple(kernels),
        sleep=parse_duration(body["sleep"], where=f"{where}.sleep") if "sleep" in body else None,
        tokens=_opt_positive_int("tokens"),
        steps=_opt_positive_int("steps"),
        segments=_opt_positive_int("segments"),
        period=parse_duration(body["period"], where=f"{where}.period") if "period" in body else None,
    )


def _parse_task(name: str, body: Mapping[str, Any], base_dir: Path) -> TaskDefinition:
    where = f"task {name!r}"
    _reject_unknown_keys(body, _TASK_KEYS, where)
    kind = _infer_app_kind(name, body)

    if "model" in body and "server_model" in body:
        raise SchemaError(f"{where}: give either `model` or `server_model`, not both")
    model: str | None = None
    server: str | None = None
    if "model" in body:
        model = _require_str(body["model"], f"{where}.model")
    if "server_model" in body:
        # A server_model is served by a shared inference server named after
        # the model; tasks that repeat it share one server instance.
        model = _require_str(body["server_model"], f"{where}.server_model")
        server = model
    if "server" in body:
        server = _require_str(body["server"], f"{where}.server")

    if "num_requests" not in body:
        raise SchemaError(f"{where}: missing required field num_requests")
    num_requests = _require_int(body["num_requests"], f"{where}.num_requests")
    if num_requests < 1:
        raise SchemaError(f"{where}.num_requests: must be >= 1")

    if "device" not in body:
        raise SchemaError(f"{where}: missing required field device")
    device_token = _require_str(body["device"], f"{where}.device")
    try:
        device = Device(device_token)
    except ValueError:
        raise SchemaError(f"{where}.device: unknown device {device_token!r}") from None

    mps_share = 100
    if "mps" in body:
        mps_share = _require_int(body["mps"], f"{where}.mps")
        if not 0 < mps_share <= 100:
            raise SchemaError(f"{where}.mps: must be in (0, 100]")

    slo = SloSpec.none()
    if "slo" in body and body["slo"] is not None:
        slo = _parse_slo(body["slo"], kind, f"{where}.slo")

    dataset: str | None = None
    if "dataset" in body:
        raw = _require_str(body["dataset"], f"{where}.dataset")
        dataset = raw if Path(raw).is_absolute() else str(base_dir / raw)

    kv: bool | None = None
    if "kv_cache_on_cpu" in body:
        kv = _require_bool(body["kv_cache_on_cpu"], f"{where}.kv_cache_on_cpu")

    profile: WorkloadProfile | None = None
    if "profile" in body:
        profile = _parse_profile(body["profile"], f"{where}.profile")

    return TaskDefinition(
        name=name,
        app_kind=kind,
        num_requests=num_requests,
        device=device,
        model=model,
        mps_share=mps_share,
        slo=slo,
        dataset=dataset,
        server=server,
        kv_cache_on_cpu=kv,
        profile=profile,
    )


def _parse_node(node_id: str, body: Mapping[str, Any]) -> WorkflowNodeSpec:
    where = f"workflow node {node_id!r}"
    _reject_unknown_keys(body, _NODE_KEYS, where)
    if "uses" not in body:
        raise SchemaError(f"{where}: missing required field uses")
    uses = _require_str(body["uses"], f"{where}.uses")
    deps: tuple[str, ...] = ()
    if "depend_on" in body:
        raw = body["depend_on"]
        if not isinstance(raw, (list, tuple)):
            raise SchemaError(f"{where}.depend_on: expected a list of node ids")
        deps = tuple(_require_str(d, f"{where}.depend_on[{i}]") for i, d in enumerate(raw))
    background = False
    if "background" in body:
        background = _require_bool(body["background"], f"{where}.background")
    return WorkflowNodeSpec(node_id=node_id, uses=uses, depend_on=deps, background=background)


def _merge_documents(text: str) -> dict[str, Any]:
    try:
        docs = list(yaml.safe_load_all(text))
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"malformed YAML: {exc}") from exc
    merged: dict[str, Any] = {}
    for doc in docs:
        if doc is None:
            continue
        doc_map = _require_mapping(doc, "top level")
        for key, value in doc_map.items():
            if key in merged:
                raise SchemaError(f"top level: duplicate entry {key!r} across documents")
            merged[key] = value
    return merged


def parse_config(text: str, base_dir: str | Path = ".") -> BenchmarkSpec:
    """Parse a YAML benchmark description into a :class:`BenchmarkSpec`.

    ``base_dir`` anchors relative ``dataset`` paths (normally the config
    file's directory). Raises :class:`ConfigSyntaxError`, :class:`SchemaError`
    or :class:`UnknownReferenceError`; value-level problems that do not
    prevent construction are left to :func:`validate_spec`.
    """
    base = Path(base_dir)
    merged = _merge_documents(text)

    task_bodies: dict[str, Mapping[str, Any]] = {}
    node_bodies: dict[str, Mapping[str, Any]] = {}
    policy = Policy.GREEDY
    mode = Mode.LIVE
    sample_interval = 0.1
    output_dir = "genaibench_out"

    for key, value in merged.items():
        if key == "workflows":
            section = _require_mapping(value, "workflows") if value is not None else {}
            for node_id, body in section.items():
                if node_id in node_bodies:
                    raise SchemaError(f"workflows: duplicate node id {node_id!r}")
                node_bodies[node_id] = _require_mapping(body, f"workflow node {node_id!r}")
        elif key == "policy":
            token = _require_str(value, "policy")
            try:
                policy = Policy(token)
            except ValueError:
                raise SchemaError(f"policy: unknown policy {token!r}") from None
        elif key == "mode":
            token = _require_str(value, "mode")
            try:
                mode = Mode(token)
            except ValueError:
                raise SchemaError(f"mode: unknown mode {token!r}") from None
        elif key == "sample_interval":
            sample_interval = parse_duration(value, where="sample_interval")
        elif key == "output_dir":
            output_dir = _require_str(value, "output_dir")
        else:
            body = _require_mapping(value, f"entry {key!r}")
            if "uses" in body:
                # Split-file compatibility: a top-level entry with `uses`
                # is a workflow node.
                if key in node_bodies:
                    raise SchemaError(f"duplicate node id {key!r}")
                node_bodies[key] = body
            else:
                task_bodies[key] = body

    tasks: dict[str, TaskDefinition] = {}
    for name, body in task_bodies.items():
        tasks[name] = _parse_task(name, body, base)

    workflow: list[WorkflowNodeSpec] = []
    for node_id, body in node_bodies.items():
        node = _parse_node(node_id, body)
        if node.uses not in tasks:
            raise UnknownReferenceError(
                f"workflow node {node_id!r}: uses undeclared task {node.uses!r}"
            )
        workflow.append(node)
    declared = {n.node_id for n in workflow}
    for node in workflow:
        for dep in node.depend_on:
            if dep not in declared:
                raise UnknownReferenceError(
                    f"workflow node {node.node_id!r}: depend_on names unknown node {dep!r}"
                )

    return BenchmarkSpec(
        tasks=tasks,
        workflow=tuple(workflow),
        policy=policy,
        mode=mode,
        sample_interval=sample_interval,
        output_dir=output_dir,
    )


def load_config(path: str | Path) -> BenchmarkSpec:
    """Read and parse a config file; dataset paths resolve against its directory."""
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), base_dir=p.parent)


def validate_spec(spec: BenchmarkSpec) -> list[Violation]:
    """Check every spec invariant and return all violations (empty iff valid).

    Violations are data, not exceptions: a spec constructed programmatically
    may break rules the YAML parser would have caught.
    """
    violations: list[Violation] = []

    def bad(kind: ViolationKind, subject: str, message: str) -> None:
        violations.append(Violation(kind=kind, subject=subject, message=message))

    for name, task in spec.tasks.items():
        if name != task.name:
            bad(ViolationKind.BAD_VALUE, name, f"task registered under {name!r} but named {task.name!r}")
        if name in _RESERVED_KEYS:
            bad(ViolationKind.BAD_VALUE, name, "task name collides with a reserved config key")
        if task.num_requests < 1:
            bad(ViolationKind.BAD_VALUE, name, f"num_requests must be >= 1, got {task.num_requests}")
        if not 0 < task.mps_share <= 100:
            bad(ViolationKind.BAD_VALUE, name, f"mps_share must be in (0, 100], got {task.mps_share}")
        for t in task.slo.thresholds():
            if t <= 0:
                bad(ViolationKind.BAD_VALUE, name, f"SLO durations must be strictly positive, got {t}")
        allowed = ALLOWED_SLO_KINDS[task.app_kind]
        if task.slo.kind not in allowed:
            bad(
                ViolationKind.SLO_MISMATCH,
                name,
                f"{task.app_kind.value} task cannot carry a {task.slo.kind.value} SLO",
            )

    seen_ids: set[str] = set()
    for node in spec.workflow:
        if node.node_id in seen_ids:
            bad(ViolationKind.DUPLICATE_ID, node.node_id, "duplicate workflow node id")
        seen_ids.add(node.node_id)
    declared = {n.node_id for n in spec.workflow}
    for node in spec.workflow:
        if node.uses not in spec.tasks:
            bad(ViolationKind.DANGLING_REFERENCE, node.node_id, f"uses undeclared task {node.uses!r}")
        for dep in node.depend_on:
            if dep not in declared:
                bad(ViolationKind.DANGLING_REFERENCE, node.node_id, f"depend_on names unknown node {dep!r}")

    if spec.sample_interval <= 0:
        bad(ViolationKind.BAD_VALUE, "sample_interval", f"must be > 0, got {spec.sample_interval}")

    return violations


def _slo_to_yaml(slo: SloSpec) -> Any:
    if slo.kind is SloKind.LATENCY_PAIR:
        return [slo.ttft, slo.tpot]
    if slo.kind is SloKind.NONE:
        return None
    return slo.threshold


def _profile_to_dict(profile: WorkloadProfile) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if profile.kernels:
        out["kernels"] = [
            {"duration": k.duration, "sm_demand": k.sm_demand} for k in profile.kernels
        ]
    for key in ("sleep", "tokens", "steps", "segments", "period"):
        value = getattr(profile, key)
        if value is not None:
            out[key] = value
    return out


def spec_to_dict(spec: BenchmarkSpec) -> dict[str, Any]:
    """Plain-dict form of a spec (canonical YAML layout, JSON-safe)."""
    out: dict[str, Any] = {}
    for name, task in spec.tasks.items():
        body: dict[str, Any] = {"type": task.app_kind.value}
        if task.server is not None and task.server == task.model:
            body["server_model"] = task.model
        else:
            if task.model is not None:
                body["model"] = task.model
            if task.server is not None:
                body["server"] = task.server
        body["num_requests"] = task.num_requests
        body["device"] = task.device.value
        body["mps"] = task.mps_share
        slo = _slo_to_yaml(task.slo)
        if slo is not None:
            body["slo"] = slo
        if task.dataset is not None:
            body["dataset"] = task.dataset
        if task.kv_cache_on_cpu is not None:
            body["kv_cache_on_cpu"] = task.kv_cache_on_cpu
        if task.profile is not None:
            body["profile"] = _profile_to_dict(task.profile)
        out[name] = body

    workflows: dict[str, Any] = {}
    for node in spec.workflow:
        entry: dict[str, Any] = {"uses": node.uses}
        if node.depend_on:
            entry["depend_on"] = list(node.depend_on)
        if node.background:
            entry["background"] = True
        workflows[node.node_id] = entry
    out["workflows"] = workflows

    out["policy"] = spec.policy.value
    out["mode"] = spec.mode.value
    out["sample_interval"] = spec.sample_interval
    out["output_dir"] = spec.output_dir
    return out


def serialize_spec(spec: BenchmarkSpec) -> str:
    """Canonical YAML for a spec; ``parse_config`` round-trips valid specs."""
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=False)


def spec_from_dict(data: Mapping[str, Any], base_dir: str | Path = ".") -> BenchmarkSpec:
    """Rebuild a spec from its :func:`spec_to_dict` form (trace snapshots)."""
    return parse_config(yaml.safe_dump(dict(data), sort_keys=False), base_dir=base_dir)


def iter_gpu_instances(spec: BenchmarkSpec) -> Iterator[str]:
    """Workflow node ids whose task touches the GPU, in declaration order."""
    for node in spec.workflow:
        task = spec.tasks.get(node.uses)
        if task is not None and task.device is not Device.CPU:
            yield node.node_id
