"""SLO evaluation and report generation over a run's trace.

Attainment counts evaluation units: whole requests for chat-style apps
(both thresholds must hold), individual steps for step-time SLOs, and
segments for segment-time SLOs. A threshold is met inclusively (observed
== threshold counts as met). Failed requests are violations, not omissions.
Percentiles are nearest-rank; normalized latency for paired SLOs is the
worse of the two ratios. Both choices are recorded in report metadata.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .adapters.base import RequestRecord
from .config import SloKind, SloSpec
from .dag import NodeKind
from .engine import FORMAT_VERSION, Phase, RunTrace
from .monitor import MetricKind, MetricSample, summarize


class MetricsError(Exception):
    pass


class NoTokensError(MetricsError):
    """A chat record carries no token times."""


class VariantMismatchError(MetricsError):
    """The SLO variant does not match the record's phase marks."""


class NoSloError(MetricsError):
    """Normalized latency was requested for a record without an SLO."""


PERCENTILE_METHOD = "nearest-rank"
PAIR_NORMALIZATION = "max(ttft_ratio, tpot_ratio)"


def _nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    return sorted_values[max(1, math.ceil(pct / 100.0 * len(sorted_values))) - 1]


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean: float
    p50: float
    p95: float
    p99: float
    max: float

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "LatencyStats | None":
        vals = sorted(values)
        if not vals:
            return None
        return cls(
            count=len(vals),
            mean=sum(vals) / len(vals),
            p50=_nearest_rank(vals, 50),
            p95=_nearest_rank(vals, 95),
            p99=_nearest_rank(vals, 99),
            max=vals[-1],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "mean": self.mean,
            "p50": self.p50,
            "p95": self.p95,
            "p99": self.p99,
            "max": self.max,
        }


@dataclass(frozen=True)
class PerRequestSlo:
    request_id: str
    met: bool
    normalized_latency: float | None
    vacuous_tpot: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "request_id": self.request_id,
            "met": self.met,
            "normalized_latency": self.normalized_latency,
        }
        if self.vacuous_tpot:
            out["vacuous_tpot"] = True
        return out


@dataclass
class SloResult:
    task_name: str
    slo_kind: SloKind
    attainment: float | None
    evaluated: int
    met: int
    per_request: list[PerRequestSlo] = field(default_factory=list)
    breakdown: dict[str, int] = field(default_factory=dict)

    @property
    def applicable(self) -> bool:
        return self.slo_kind is not SloKind.NONE

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_name": self.task_name,
            "slo_kind": self.slo_kind.value,
            "applicable": self.applicable,
            "attainment": self.attainment,
            "evaluated": self.evaluated,
            "met": self.met,
            "per_request": [p.to_dict() for p in self.per_request],
            "breakdown": self.breakdown,
        }


def derive_ttft_tpot(record: RequestRecord) -> tuple[float, float | None]:
    """Time to first output and mean inter-token interval after it.

    A single-token record has no defined inter-token interval: tpot is None
    and the request is judged on the first threshold alone.
    """
    tokens = record.token_times or []
    if not tokens:
        raise NoTokensError(f"record {record.request_id} has no token times")
    first = record.t_first_output if record.t_first_output is not None else tokens[0]
    ttft = first - record.t_submit
    if len(tokens) < 2:
        return ttft, None
    complete = record.t_complete if record.t_complete is not None else tokens[-1]
    return ttft, (complete - first) / (len(tokens) - 1)


def normalized_latency(record: RequestRecord, slo: SloSpec) -> float:
    """Observed latency over its threshold; > 1 means violation."""
    if slo.kind is SloKind.NONE:
        raise NoSloError(f"record {record.request_id} has no SLO to normalize against")
    if slo.kind is SloKind.LATENCY_PAIR:
        ttft, tpot = derive_ttft_tpot(record)
        assert slo.ttft is not None and slo.tpot is not None
        ratio = ttft / slo.ttft
        if tpot is not None:
            ratio = max(ratio, tpot / slo.tpot)
        return ratio
    assert slo.threshold is not None
    if slo.kind is SloKind.STEP_TIME:
        steps = record.step_times or []
        if not steps:
            raise VariantMismatchError(f"record {record.request_id} has no step times")
        return (sum(steps) / len(steps)) / slo.threshold
    if record.segment_latency is None:
        raise VariantMismatchError(f"record {record.request_id} has no segment latency")
    return record.segment_latency / slo.threshold


def _eval_latency_pair(records: Sequence[RequestRecord], slo: SloSpec, result: SloResult) -> None:
    assert slo.ttft is not None and slo.tpot is not None
    ttft_met = tpot_met = 0
    for record in records:
        if not record.ok and not record.token_times:
            result.evaluated += 1
            result.per_request.append(PerRequestSlo(record.request_id, False, None))
            continue
        if not record.token_times:
            raise VariantMismatchError(
                f"latency-pair SLO but record {record.request_id} has no token times"
            )
        ttft, tpot = derive_ttft_tpot(record)
        vacuous = tpot is None
        this_ttft_met = ttft <= slo.ttft
        this_tpot_met = True if tpot is None else tpot <= slo.tpot
        met = record.ok and this_ttft_met and this_tpot_met
        ratio = ttft / slo.ttft
        if tpot is not None:
            ratio = max(ratio, tpot / slo.tpot)
        result.evaluated += 1
        result.met += 1 if met else 0
        ttft_met += 1 if this_ttft_met else 0
        tpot_met += 1 if this_tpot_met else 0
        result.per_request.append(PerRequestSlo(record.request_id, met, ratio, vacuous_tpot=vacuous))
    result.breakdown = {"ttft_met": ttft_met, "tpot_met": tpot_met}


def _eval_step_time(records: Sequence[RequestRecord], slo: SloSpec, result: SloResult) -> None:
    assert slo.threshold is not None
    requests_all_met = 0
    for record in records:
        steps = record.step_times or []
        if not steps:
            if record.ok:
                raise VariantMismatchError(
                    f"step-time SLO but record {record.request_id} has no step times"
                )
            result.per_request.append(PerRequestSlo(record.request_id, False, None))
            continue
        met_here = sum(1 for s in steps if s <= slo.threshold)
        result.evaluated += len(steps)
        result.met += met_here
        all_met = record.ok and met_here == len(steps)
        requests_all_met += 1 if all_met else 0
        result.per_request.append(
            PerRequestSlo(record.request_id, all_met, (sum(steps) / len(steps)) / slo.threshold)
        )
    result.breakdown = {"requests_all_steps_met": requests_all_met}


def _eval_segment_time(records: Sequence[RequestRecord], slo: SloSpec, result: SloResult) -> None:
    assert slo.threshold is not None
    for record in records:
        if record.segment_latency is None:
            if record.ok:
                raise VariantMismatchError(
                    f"segment-time SLO but record {record.request_id} has no segment latency"
                )
            result.evaluated += 1
            result.per_request.append(PerRequestSlo(record.request_id, False, None))
            continue
        met = record.ok and record.segment_latency <= slo.threshold
        result.evaluated += 1
        result.met += 1 if met else 0
        result.per_request.append(
            PerRequestSlo(record.request_id, met, record.segment_latency / slo.threshold)
        )


def evaluate_slo(records: Sequence[RequestRecord], slo: SloSpec, task_name: str = "") -> SloResult:
    """Score records against an SLO; failed records count as violations."""
    result = SloResult(
        task_name=task_name or (records[0].task_name if records else ""),
        slo_kind=slo.kind,
        attainment=None,
        evaluated=0,
        met=0,
    )
    if slo.kind is SloKind.NONE:
        return result
    if slo.kind is SloKind.LATENCY_PAIR:
        _eval_latency_pair(records, slo, result)
    elif slo.kind is SloKind.STEP_TIME:
        _eval_step_time(records, slo, result)
    else:
        _eval_segment_time(records, slo, result)
    if result.evaluated:
        result.attainment = result.met / result.evaluated
    return result


@dataclass
class TaskReport:
    requests_total: int
    requests_ok: int
    requests_failed: int
    latency: LatencyStats | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "requests_total": self.requests_total,
            "requests_ok": self.requests_ok,
            "requests_failed": self.requests_failed,
            "latency": self.latency.to_dict() if self.latency else None,
        }


@dataclass
class Report:
    metadata: dict[str, Any]
    e2e_seconds: float | None
    tasks: dict[str, TaskReport]
    slo_results: dict[str, SloResult]
    resources: dict[str, dict[str, Any]]
    partial: bool
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "metadata": self.metadata,
            "e2e_seconds": self.e2e_seconds,
            "tasks": {name: t.to_dict() for name, t in self.tasks.items()},
            "slo": {name: r.to_dict() for name, r in self.slo_results.items()},
            "resources": self.resources,
            "partial": self.partial,
        }


def _count_occupancy_skew(samples: list[MetricSample]) -> int:
    smact: dict[tuple[str, float], float] = {}
    for s in samples:
        if s.kind is MetricKind.SMACT:
            smact[(s.source, s.t)] = s.value
    skew = 0
    for s in samples:
        if s.kind is MetricKind.SMOCC:
            activation = smact.get((s.source, s.t))
            if activation is not None and s.value > activation:
                skew += 1
    return skew


def _e2e_seconds(trace: RunTrace) -> float | None:
    background = {n.node_id for n in trace.spec_snapshot.workflow if n.background}
    setup_starts = [
        e.t_ns
        for e in trace.events
        if e.phase is Phase.STARTED and e.node_id.startswith(NodeKind.SETUP.value + ":")
    ]
    exec_finishes = [
        e.t_ns
        for e in trace.events
        if e.phase is Phase.FINISHED
        and e.node_id.startswith(NodeKind.EXEC.value + ":")
        and e.node_id.split(":", 1)[1] not in background
    ]
    if not setup_starts:
        return 0.0 if not trace.spec_snapshot.workflow else None
    if not exec_finishes:
        return None
    return (max(exec_finishes) - min(setup_starts)) / 1e9


def build_report(trace: RunTrace) -> Report:
    """Aggregate a trace into the benchmark report."""
    spec = trace.spec_snapshot
    by_task: dict[str, list[RequestRecord]] = {name: [] for name in spec.tasks}
    for record in trace.requests:
        by_task.setdefault(record.task_name, []).append(record)

    tasks: dict[str, TaskReport] = {}
    slo_results: dict[str, SloResult] = {}
    for name, records in by_task.items():
        ok_records = [r for r in records if r.ok]
        latencies = [
            r.t_complete - r.t_submit
            for r in ok_records
            if r.t_complete is not None
        ]
        tasks[name] = TaskReport(
            requests_total=len(records),
            requests_ok=len(ok_records),
            requests_failed=len(records) - len(ok_records),
            latency=LatencyStats.from_values(latencies),
        )
        task = spec.tasks.get(name)
        if task is not None:
            slo_results[name] = evaluate_slo(records, task.slo, task_name=name)

    resources: dict[str, dict[str, Any]] = {}
    for kind in MetricKind:
        summary = summarize(trace.samples, kind)
        if summary is not None:
            resources[kind.value] = {
                "count": summary.count,
                "mean": summary.mean,
                "p50": summary.p50,
                "p95": summary.p95,
                "max": summary.max,
            }

    e2e = _e2e_seconds(trace)
    exec_events = [e for e in trace.events if e.node_id.startswith("exec:")]
    failed = [e for e in exec_events if e.phase is Phase.FAILED]
    partial = bool(failed) or (e2e is None and bool(spec.workflow))

    notes = list(trace.meta.notes)
    skew = _count_occupancy_skew(trace.samples)
    if skew:
        # Live counters can momentarily report occupancy above activation
        # (clock skew between the two); recorded as a data-quality warning,
        # never silently fixed.
        notes.append(f"data quality: {skew} sample pair(s) report SMOCC > SMACT")
    if trace.gaps:
        notes.append(f"data quality: {len(trace.gaps)} missed monitor sample(s)")

    metadata = {
        "policy": trace.meta.policy,
        "mode": trace.meta.mode,
        "seed": trace.meta.seed,
        "host": trace.meta.host,
        "sample_interval": trace.meta.sample_interval,
        "sm_count": trace.meta.sm_count,
        "started_at": trace.meta.started_at,
        "percentile_method": PERCENTILE_METHOD,
        "pair_normalization": PAIR_NORMALIZATION,
        "notes": notes,
    }
    return Report(
        metadata=metadata,
        e2e_seconds=e2e,
        tasks=tasks,
        slo_results=slo_results,
        resources=resources,
        partial=partial,
    )


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower() or "task"


def write_report(report: Report, trace: RunTrace, out_dir: str | Path) -> None:
    """Write report.json plus plot-ready per-task latency and per-kind
    utilization CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    by_task: dict[str, list[RequestRecord]] = {}
    for record in trace.requests:
        by_task.setdefault(record.task_name, []).append(record)
    for name, records in sorted(by_task.items()):
        lines = ["request_id,t_submit,t_complete,latency,ok"]
        for r in records:
            latency = "" if r.t_complete is None else repr(r.t_complete - r.t_submit)
            complete = "" if r.t_complete is None else repr(r.t_complete)
            lines.append(f"{r.request_id},{r.t_submit!r},{complete},{latency},{int(r.ok)}")
        (out / f"latency_{_slug(name)}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    by_kind: dict[MetricKind, list[MetricSample]] = {}
    for sample in trace.samples:
        by_kind.setdefault(sample.kind, []).append(sample)
    for kind, samples in sorted(by_kind.items(), key=lambda kv: kv[0].value):
        lines = ["t,value,source"]
        for s in samples:
            lines.append(f"{s.t!r},{s.value!r},{s.source}")
        (out / f"util_{kind.value}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_summary(report: Report) -> str:
    """Human-readable run summary for stdout."""
    lines: list[str] = []
    meta = report.metadata
    lines.append(
        f"run: mode={meta['mode']} policy={meta['policy']} seed={meta['seed']}"
        + (f" host={meta['host']}" if meta.get("host") else "")
    )
    if report.e2e_seconds is not None:
        lines.append(f"workflow end-to-end: {report.e2e_seconds:.3f} s")
    else:
        lines.append("workflow end-to-end: n/a (no foreground exec finished)")
    if report.partial:
        lines.append("NOTE: partial run (some nodes failed)")
    for name, task in report.tasks.items():
        base = f"  {name}: {task.requests_ok}/{task.requests_total} ok"
        if task.latency is not None:
            base += (
                f"; latency mean {task.latency.mean:.3f}s"
                f" p95 {task.latency.p95:.3f}s max {task.latency.max:.3f}s"
            )
        slo = report.slo_results.get(name)
        if slo is not None and slo.applicable and slo.attainment is not None:
            base += f"; SLO attainment {slo.attainment:.1%} ({slo.met}/{slo.evaluated})"
        elif slo is not None and not slo.applicable:
            base += "; SLO n/a"
        lines.append(base)
    for kind, stats in report.resources.items():
        lines.append(
            f"  [{kind}] mean {stats['mean']:.1f} p95 {stats['p95']:.1f} max {stats['max']:.1f}"
        )
    if meta.get("notes"):
        for note in meta["notes"]:
            lines.append(f"  note: {note}")
    return "\n".join(lines)
