"""Request sources: prompt files and segmented audio."""

from __future__ import annotations

import json
import random
import wave
from pathlib import Path
from typing import Sequence, TypeVar

T = TypeVar("T")


class DatasetError(Exception):
    pass


def load_prompts(path: str | Path) -> list[str]:
    """Prompts from a line-delimited text file or a JSON-lines file.

    JSONL lines may be bare strings or objects carrying one of the keys
    ``prompt``, ``text`` or ``content``.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {p}: {exc}") from exc
    prompts: list[str] = []
    if p.suffix in (".jsonl", ".json"):
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{p}:{lineno}: not valid JSON: {exc}") from exc
            if isinstance(obj, str):
                prompts.append(obj)
            elif isinstance(obj, dict):
                for key in ("prompt", "text", "content"):
                    if key in obj and isinstance(obj[key], str):
                        prompts.append(obj[key])
                        break
                else:
                    raise DatasetError(f"{p}:{lineno}: object has no prompt/text/content field")
            else:
                raise DatasetError(f"{p}:{lineno}: expected a string or object")
    else:
        prompts = [line for line in text.splitlines() if line.strip()]
    if not prompts:
        raise DatasetError(f"dataset {p} contains no prompts")
    return prompts


def load_wav_segments(path: str | Path, segment_seconds: float = 2.0) -> list[bytes]:
    """Split a 16-bit PCM WAV file into fixed-length frame chunks (the last
    chunk may be shorter)."""
    if segment_seconds <= 0:
        raise DatasetError(f"segment length must be > 0, got {segment_seconds}")
    try:
        with wave.open(str(path), "rb") as w:
            if w.getsampwidth() != 2:
                raise DatasetError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            frames_per_segment = int(w.getframerate() * segment_seconds)
            segments: list[bytes] = []
            while True:
                chunk = w.readframes(frames_per_segment)
                if not chunk:
                    break
                segments.append(chunk)
    except wave.Error as exc:
        raise DatasetError(f"{path}: not a WAV file: {exc}") from exc
    return segments


def sample_items(items: Sequence[T], n: int, rng: random.Random) -> list[T]:
    """Sample ``n`` items with replacement, deterministically under ``rng``."""
    if not items:
        raise DatasetError("cannot sample from an empty dataset")
    return [items[rng.randrange(len(items))] for _ in range(n)]
