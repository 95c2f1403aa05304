"""System-metric sampling: pluggable collectors polled on a fixed interval.

Collectors are independent: each runs on its own thread, appends into a
serialized sink, and a slow or failing poll is recorded as a gap marker —
never interpolated. A collector that cannot initialize on this host raises
:class:`CollectorInitError` and is simply left out of the run (the report
notes it); the others continue.
"""

from __future__ import annotations

import math
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence


class MetricKind(str, Enum):
    SMACT = "smact"
    SMOCC = "smocc"
    GPU_MEM_BW = "gpu_mem_bw"
    GPU_MEM_USED = "gpu_mem_used"
    CPU_UTIL = "cpu_util"
    CPU_MEM_BW = "cpu_mem_bw"
    CPU_MEM_USED = "cpu_mem_used"
    POWER_GPU = "power_gpu"
    POWER_CPU = "power_cpu"


# Units per kind: percent for smact/smocc/cpu_util, GB/s for bandwidth,
# GB for memory, watts for power.
PERCENT_KINDS = frozenset({MetricKind.SMACT, MetricKind.SMOCC, MetricKind.CPU_UTIL})


@dataclass(frozen=True)
class MetricSample:
    t: float
    kind: MetricKind
    value: float
    source: str


@dataclass(frozen=True)
class GapMarker:
    """A scheduled poll that did not happen in time."""

    t: float
    source: str


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    p50: float
    p95: float
    max: float


class MonitorParseError(Exception):
    """A monitoring tool's output line could not be parsed."""


class CollectorInitError(Exception):
    """The collector cannot run on this host; it is skipped for the run."""


class Collector(Protocol):
    id: str
    kinds: tuple[MetricKind, ...]

    def poll(self, now: float) -> list[MetricSample]: ...


def parse_proc_stat(before: str, after: str) -> float:
    """Aggregate CPU utilization percent between two /proc/stat snapshots.

    utilization = 1 - delta(idle) / delta(all jiffy fields), over the
    aggregate ``cpu`` line.
    """

    def fields(text: str) -> list[int]:
        for line in text.splitlines():
            parts = line.split()
            if parts and parts[0] == "cpu":
                try:
                    return [int(p) for p in parts[1:]]
                except ValueError as exc:
                    raise MonitorParseError(f"bad jiffy field in {line!r}") from exc
        raise MonitorParseError("no aggregate 'cpu' line in snapshot")

    b, a = fields(before), fields(after)
    if len(b) < 4 or len(a) < 4:
        raise MonitorParseError("aggregate cpu line has fewer than 4 jiffy fields")
    d_total = sum(a) - sum(b)
    if d_total <= 0:
        raise MonitorParseError("snapshots show no elapsed jiffies")
    d_idle = a[3] - b[3]
    util = 100.0 * (1.0 - d_idle / d_total)
    return min(100.0, max(0.0, util))


_DCGM_SCALE = {MetricKind.SMACT: 100.0, MetricKind.SMOCC: 100.0}


def parse_dcgm_line(
    text: str,
    columns: Sequence[MetricKind | str] = (MetricKind.SMACT, MetricKind.SMOCC),
    *,
    t: float = 0.0,
    source: str = "dcgm",
) -> list[MetricSample]:
    """Parse one line of ``dcgmi dmon``-style field output.

    Data lines look like ``GPU 0  0.950  0.400`` with one value per
    requested column; SMACT/SMOCC fractions are scaled to percent. Header
    and blank lines yield no samples; a data line with a malformed numeric
    raises :class:`MonitorParseError`.
    """
    kinds = [MetricKind(c) for c in columns]
    stripped = text.strip()
    if not stripped or stripped.startswith("#"):
        return []
    tokens = stripped.split()
    if tokens[0].upper() != "GPU":
        return []
    values = tokens[2:]
    if len(values) < len(kinds):
        raise MonitorParseError(f"expected {len(kinds)} values, got {len(values)}: {text!r}")
    samples: list[MetricSample] = []
    for kind, token in zip(kinds, values):
        try:
            value = float(token)
        except ValueError as exc:
            raise MonitorParseError(f"malformed numeric {token!r} in {text!r}") from exc
        scale = _DCGM_SCALE.get(kind)
        if scale is not None:
            value = round(value * scale, 6)
        samples.append(MetricSample(t=t, kind=kind, value=value, source=source))
    return samples


def summarize(
    samples: Iterable[MetricSample],
    kind: MetricKind,
    window: tuple[float, float] | None = None,
) -> Summary | None:
    """Mean/p50/p95/max over one kind within ``window`` (inclusive bounds);
    None — never NaN — when no sample matches."""
    values = [
        s.value
        for s in samples
        if s.kind is kind and (window is None or window[0] <= s.t <= window[1])
    ]
    if not values:
        return None
    values.sort()
    n = len(values)

    def rank(pct: float) -> float:
        return values[max(1, math.ceil(pct / 100.0 * n)) - 1]

    return Summary(
        count=n,
        mean=sum(values) / n,
        p50=rank(50),
        p95=rank(95),
        max=values[-1],
    )


class MonitorHandle:
    """Running monitor: one thread per collector, serialized sample sink."""

    def __init__(
        self,
        collectors: Sequence[Collector],
        interval: float,
        clock: Callable[[], float],
    ):
        self._interval = interval
        self._clock = clock
        self._lock = threading.Lock()
        self._samples: list[MetricSample] = []
        self._gaps: list[GapMarker] = []
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._loop, args=(c,), daemon=True, name=f"monitor-{c.id}")
            for c in collectors
        ]
        for t in self._threads:
            t.start()

    def _loop(self, collector: Collector) -> None:
        interval = self._interval
        next_t = self._clock() + interval
        while True:
            delay = next_t - self._clock()
            if self._stop.wait(timeout=max(0.0, delay)):
                return
            scheduled = next_t
            try:
                produced = collector.poll(self._clock())
            except Exception:
                produced = None  # poll failure counts as a missed sample
            done = self._clock()
            with self._lock:
                if produced:
                    self._samples.extend(produced)
                missed = int((done - scheduled) // interval) + (1 if produced is None else 0)
                for i in range(missed):
                    self._gaps.append(GapMarker(t=scheduled + (i + 1) * interval, source=collector.id))
            next_t = scheduled + (int((done - scheduled) // interval) + 1) * interval

    def stop(self) -> tuple[list[MetricSample], list[GapMarker]]:
        """Stop all collectors and return (samples, gaps) in arrival order."""
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5.0)
        with self._lock:
            return list(self._samples), list(self._gaps)

    @property
    def samples(self) -> list[MetricSample]:
        with self._lock:
            return list(self._samples)

    @property
    def gaps(self) -> list[GapMarker]:
        with self._lock:
            return list(self._gaps)


def start_monitor(
    collectors: Sequence[Collector],
    interval: float,
    clock: Callable[[], float] | None = None,
) -> MonitorHandle:
    """Poll each collector every ``interval`` seconds until stopped."""
    if interval <= 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    if clock is None:
        anchor = time.monotonic()
        clock = lambda: time.monotonic() - anchor  # noqa: E731
    return MonitorHandle(collectors, interval, clock)


class ProcStatCollector:
    """CPU utilization from consecutive /proc/stat snapshots."""

    kinds = (MetricKind.CPU_UTIL,)

    def __init__(self, path: str | Path = "/proc/stat"):
        self.id = "proc_stat"
        self._path = Path(path)
        try:
            self._prev = self._path.read_text()
        except OSError as exc:
            raise CollectorInitError(f"cannot read {self._path}: {exc}") from exc

    def poll(self, now: float) -> list[MetricSample]:
        current = self._path.read_text()
        prev, self._prev = self._prev, current
        try:
            util = parse_proc_stat(prev, current)
        except MonitorParseError:
            return []
        return [MetricSample(t=now, kind=MetricKind.CPU_UTIL, value=util, source=self.id)]


class RaplCollector:
    """CPU package power from powercap energy counters (microjoule deltas)."""

    kinds = (MetricKind.POWER_CPU,)

    def __init__(self, root: str | Path = "/sys/class/powercap"):
        self.id = "rapl"
        self._files = sorted(Path(root).glob("intel-rapl:*/energy_uj"))
        if not self._files:
            raise CollectorInitError(f"no RAPL energy counters under {root}")
        self._prev: tuple[float, int] | None = None

    def _read_total_uj(self) -> int:
        return sum(int(f.read_text().strip()) for f in self._files)

    def poll(self, now: float) -> list[MetricSample]:
        total = self._read_total_uj()
        prev, self._prev = self._prev, (now, total)
        if prev is None:
            return []
        prev_t, prev_total = prev
        dt = now - prev_t
        if dt <= 0 or total < prev_total:  # counter wrap: skip, never fake
            return []
        watts = (total - prev_total) / 1e6 / dt
        return [MetricSample(t=now, kind=MetricKind.POWER_CPU, value=watts, source=self.id)]


class NvmlPowerCollector:
    """GPU power draw via nvidia-smi."""

    kinds = (MetricKind.POWER_GPU,)

    def __init__(self, runner: Callable[[], str] | None = None):
        self.id = "nvml"
        if runner is None:
            if shutil.which("nvidia-smi") is None:
                raise CollectorInitError("nvidia-smi not found")
            runner = lambda: subprocess.check_output(  # noqa: E731
                ["nvidia-smi", "--query-gpu=power.draw", "--format=csv,noheader,nounits"],
                text=True,
                timeout=2.0,
            )
        self._runner = runner

    def poll(self, now: float) -> list[MetricSample]:
        out = self._runner()
        watts = 0.0
        seen = False
        for line in out.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                watts += float(line)
                seen = True
            except ValueError:
                continue
        if not seen:
            return []
        return [MetricSample(t=now, kind=MetricKind.POWER_GPU, value=watts, source=self.id)]


class DcgmCollector:
    """SMACT/SMOCC from a long-running ``dcgmi dmon`` subprocess."""

    kinds = (MetricKind.SMACT, MetricKind.SMOCC)

    def __init__(self, command: Sequence[str] | None = None):
        self.id = "dcgm"
        if command is None:
            if shutil.which("dcgmi") is None:
                raise CollectorInitError("dcgmi not found")
            command = ["dcgmi", "dmon", "-e", "1002,1003", "-d", "100"]
        try:
            self._proc = subprocess.Popen(
                list(command), stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True
            )
        except OSError as exc:
            raise CollectorInitError(f"cannot launch {command[0]}: {exc}") from exc
        self._lines: list[str] = []
        self._lines_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            with self._lines_lock:
                self._lines.append(line)

    def poll(self, now: float) -> list[MetricSample]:
        with self._lines_lock:
            lines, self._lines = self._lines, []
        samples: list[MetricSample] = []
        for line in lines:
            try:
                samples.extend(parse_dcgm_line(line, t=now, source=self.id))
            except MonitorParseError:
                continue  # malformed line: skipped, not fatal
        return samples

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()


class PcmMemoryCollector:
    """DRAM bandwidth from a ``pcm-memory``-style line protocol."""

    kinds = (MetricKind.CPU_MEM_BW,)

    def __init__(self, command: Sequence[str] | None = None):
        self.id = "pcm_memory"
        if command is None:
            if shutil.which("pcm-memory") is None:
                raise CollectorInitError("pcm-memory not found")
            command = ["pcm-memory", "0.1"]
        try:
            self._proc = subprocess.Popen(
                list(command), stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True
            )
        except OSError as exc:
            raise CollectorInitError(f"cannot launch {command[0]}: {exc}") from exc
        self._lines: list[str] = []
        self._lines_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            with self._lines_lock:
                self._lines.append(line)

    def poll(self, now: float) -> list[MetricSample]:
        with self._lines_lock:
            lines, self._lines = self._lines, []
        samples: list[MetricSample] = []
        for line in lines:
            # e.g. "System Memory Throughput(MB/s): 12345.67"
            if "Throughput(MB/s):" not in line:
                continue
            try:
                mb_s = float(line.rsplit(":", 1)[1].strip())
            except (ValueError, IndexError):
                continue
            samples.append(
                MetricSample(t=now, kind=MetricKind.CPU_MEM_BW, value=mb_s / 1000.0, source=self.id)
            )
        return samples

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()


def default_collectors() -> tuple[list[Collector], list[str]]:
    """Instantiate every built-in collector this host supports; returns
    (collectors, notes about the ones that were skipped)."""
    collectors: list[Collector] = []
    notes: list[str] = []
    for factory in (ProcStatCollector, DcgmCollector, PcmMemoryCollector, RaplCollector, NvmlPowerCollector):
        try:
            collectors.append(factory())  # type: ignore[arg-type]
        except CollectorInitError as exc:
            notes.append(f"{factory.__name__} disabled: {exc}")
    return collectors, notes
