"""Shared domain types and pipeline configuration.

Conventions:
  - Times are absolute meeting seconds unless a name says otherwise.
  - Speaker indices are 1-based integers assigned in order of first
    appearance and stable across a whole meeting.
  - All types here are immutable values; matrices are copied on
    construction and marked read-only so they are safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "AttributedSegment",
    "Chunk",
    "FeatureMatrix",
    "PipelineConfig",
    "SpeakerCueMatrix",
    "Transcript",
    "canonicalize",
    "segment_sort_key",
    "segment_violations",
    "validate_transcript",
]


def _frozen_matrix(data, name: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Frame-major real matrix: rows are frames, columns are feature dims."""

    data: np.ndarray
    frame_period_s: float

    def __post_init__(self) -> None:
        if self.frame_period_s <= 0:
            raise ValueError(f"frame_period_s must be > 0, got {self.frame_period_s}")
        object.__setattr__(self, "data", _frozen_matrix(self.data, "feature matrix"))

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def duration_s(self) -> float:
        return self.rows * self.frame_period_s

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.frame_period_s == other.frame_period_s
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class SpeakerCueMatrix:
    """Per-frame speaker cue vectors; may be empty (zero rows).

    The frame period is independent of the acoustic one, so the two streams
    of a meeting can run at different rates.
    """

    data: np.ndarray
    frame_period_s: float

    def __post_init__(self) -> None:
        if self.frame_period_s <= 0:
            raise ValueError(f"frame_period_s must be > 0, got {self.frame_period_s}")
        object.__setattr__(self, "data", _frozen_matrix(self.data, "speaker cue matrix"))

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def duration_s(self) -> float:
        return self.rows * self.frame_period_s

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpeakerCueMatrix):
            return NotImplemented
        return (
            self.frame_period_s == other.frame_period_s
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class Chunk:
    """A contiguous slice of the acoustic feature stream."""

    meeting_id: str
    index: int
    frames: FeatureMatrix
    offset_s: float
    duration_s: float

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"chunk index must be >= 0, got {self.index}")
        if self.frames.rows < 1:
            raise ValueError("chunk must contain at least one frame")
        if self.offset_s < 0:
            raise ValueError(f"chunk offset_s must be >= 0, got {self.offset_s}")
        if self.duration_s <= 0:
            raise ValueError(f"chunk duration_s must be > 0, got {self.duration_s}")


@dataclass(frozen=True)
class AttributedSegment:
    """One speaker-attributed span: who spoke, when, and the words.

    Value invariants (speaker >= 1, t_st < t_ed, non-empty words without
    whitespace) are checked by :func:`segment_violations` rather than at
    construction so that validators can describe broken inputs instead of
    refusing to represent them.
    """

    speaker: int
    t_st: float
    t_ed: float
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))


def segment_sort_key(seg: AttributedSegment) -> tuple[float, float, int]:
    return (seg.t_st, seg.t_ed, seg.speaker)


def segment_violations(seg: AttributedSegment) -> list[str]:
    """Return human-readable invariant violations for one segment."""
    problems = []
    if not isinstance(seg.speaker, (int, np.integer)) or isinstance(seg.speaker, bool):
        problems.append(f"speaker must be an integer, got {seg.speaker!r}")
    elif seg.speaker < 1:
        problems.append(f"speaker must be >= 1, got {seg.speaker}")
    if not (seg.t_st < seg.t_ed):
        problems.append(f"t_st must be < t_ed, got [{seg.t_st}, {seg.t_ed}]")
    if not seg.words:
        problems.append("words must be non-empty")
    for w in seg.words:
        if not isinstance(w, str) or not w:
            problems.append(f"word must be a non-empty string, got {w!r}")
        elif any(c.isspace() for c in w):
            problems.append(f"word {w!r} contains whitespace")
    return problems


@dataclass(frozen=True)
class Transcript:
    """All attributed segments of one meeting.

    ``speaker_count`` is derived from the segments, so it can never disagree
    with them.
    """

    meeting_id: str
    segments: tuple[AttributedSegment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def speaker_count(self) -> int:
        return max((s.speaker for s in self.segments), default=0)


def validate_transcript(t: Transcript) -> list[str]:
    """Check every segment invariant plus canonical ordering.

    Returns an empty list when the transcript is valid, otherwise one message
    per violation with the offending segment index.
    """
    problems = []
    for i, seg in enumerate(t.segments):
        for p in segment_violations(seg):
            problems.append(f"segment {i}: {p}")
    keys = [segment_sort_key(s) for s in t.segments]
    for i in range(1, len(keys)):
        if keys[i] < keys[i - 1]:
            problems.append(
                f"segment {i}: out of canonical (t_st, t_ed, speaker) order"
            )
    return problems


def canonicalize(t: Transcript) -> Transcript:
    """Return the transcript with segments stably sorted by (t_st, t_ed, speaker).

    Raises ValueError naming the first invalid segment.
    """
    for i, seg in enumerate(t.segments):
        bad = segment_violations(seg)
        if bad:
            raise ValueError(f"segment {i}: {bad[0]}")
    ordered = tuple(sorted(t.segments, key=segment_sort_key))
    return Transcript(t.meeting_id, ordered)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for chunking, tracking, fusion, and output serialization.

    Attributes:
        chunk_target_s: target acoustic chunk length in seconds.
        tracker_chunk_s: native segment length of the speaker tracker;
            carried for provenance, the inference loop tracks per acoustic
            chunk.
        stride_k: insert one speaker row after every ``stride_k`` acoustic
            rows when fusing streams.
        resample_mode: "nearest" or "linear" speaker-row resampling.
        max_slots: capacity of the arrival-order speaker cache.
        similarity_threshold: cosine needed to match an existing cache slot.
        activity_threshold: minimum reported activity for an assigned frame.
        evidence_alpha: EMA weight of a new frame in a slot's evidence.
        timestamp_resolution_s: grid for serialized timestamps; must sit on
            the 0.01 s grid so the two-decimal text form is exact.
        prompt: optional decoder prompt text.
    """

    chunk_target_s: float = 20.0
    tracker_chunk_s: float = 90.0
    stride_k: int = 4
    resample_mode: str = "nearest"
    max_slots: int = 4
    similarity_threshold: float = 0.5
    activity_threshold: float = 0.5
    evidence_alpha: float = 0.1
    timestamp_resolution_s: float = 0.02
    prompt: Optional[str] = None

    def __post_init__(self) -> None:
        if self.chunk_target_s <= 0:
            raise ValueError(f"chunk_target_s must be > 0, got {self.chunk_target_s}")
        if self.tracker_chunk_s <= 0:
            raise ValueError(f"tracker_chunk_s must be > 0, got {self.tracker_chunk_s}")
        if not isinstance(self.stride_k, int) or self.stride_k < 1:
            raise ValueError(f"stride_k must be an integer >= 1, got {self.stride_k!r}")
        if self.resample_mode not in ("nearest", "linear"):
            raise ValueError(
                f"resample_mode must be 'nearest' or 'linear', got {self.resample_mode!r}"
            )
        if not isinstance(self.max_slots, int) or self.max_slots < 1:
            raise ValueError(f"max_slots must be an integer >= 1, got {self.max_slots!r}")
        if not (-1.0 <= self.similarity_threshold <= 1.0):
            raise ValueError(
                f"similarity_threshold must be in [-1, 1], got {self.similarity_threshold}"
            )
        if not (0.0 < self.activity_threshold < 1.0):
            raise ValueError(
                f"activity_threshold must be in (0, 1), got {self.activity_threshold}"
            )
        if not (0.0 < self.evidence_alpha <= 1.0):
            raise ValueError(
                f"evidence_alpha must be in (0, 1], got {self.evidence_alpha}"
            )
        cents = round(self.timestamp_resolution_s * 100)
        if cents < 1 or abs(self.timestamp_resolution_s * 100 - cents) > 1e-6:
            raise ValueError(
                "timestamp_resolution_s must be a positive multiple of 0.01, "
                f"got {self.timestamp_resolution_s}"
            )
