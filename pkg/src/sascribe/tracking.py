"""Arrival-order speaker cache and the deterministic frame tracker.

The cache assigns each distinct voice a slot numbered by order of first
appearance (1, 2, 3, ...).  Slots are never evicted and never re-indexed, so
a speaker keeps one global index across all chunks of a meeting.  Matching
is cosine similarity of unit vectors against per-slot evidence, which is a
renormalized exponential moving average of the frames assigned to the slot.

Everything here is pure and deterministic: identical inputs produce
bitwise-identical outputs, and the cache is threaded through chunk calls as
a value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import PipelineConfig, SpeakerCueMatrix

__all__ = [
    "CacheSlot",
    "MatchResult",
    "SILENCE_NORM_FLOOR",
    "SpeakerCache",
    "TrackOutput",
    "activities_to_intervals",
    "match_or_allocate",
    "read_cache_snapshot",
    "track_chunk",
    "update_evidence",
    "write_cache_snapshot",
]

log = logging.getLogger(__name__)

# Raw L2 norm below which a tracker frame counts as silence.
SILENCE_NORM_FLOOR = 1e-6

_UNIT_TOL = 1e-9


def _check_unit(vec: np.ndarray, name: str) -> np.ndarray:
    arr = np.array(vec, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    n = float(np.linalg.norm(arr))
    if abs(n - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must be unit-norm, got norm {n}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CacheSlot:
    """Evidence for one tracked speaker.

    ``arrival_index`` is the 1-based first-appearance rank and never changes
    once assigned.
    """

    arrival_index: int
    evidence: np.ndarray
    frames_observed: int
    last_active_chunk: int

    def __post_init__(self) -> None:
        if self.arrival_index < 1:
            raise ValueError(f"arrival_index must be >= 1, got {self.arrival_index}")
        if self.frames_observed < 0:
            raise ValueError(f"frames_observed must be >= 0, got {self.frames_observed}")
        if self.frames_observed > 0:
            object.__setattr__(self, "evidence", _check_unit(self.evidence, "evidence"))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CacheSlot):
            return NotImplemented
        return (
            self.arrival_index == other.arrival_index
            and self.frames_observed == other.frames_observed
            and self.last_active_chunk == other.last_active_chunk
            and np.array_equal(self.evidence, other.evidence)
        )


@dataclass(frozen=True, eq=False)
class SpeakerCache:
    """Immutable arrival-order slot table with a fixed capacity."""

    slots: tuple[CacheSlot, ...] = ()
    max_slots: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))
        if self.max_slots < 1:
            raise ValueError(f"max_slots must be >= 1, got {self.max_slots}")
        if len(self.slots) > self.max_slots:
            raise ValueError(
                f"cache holds {len(self.slots)} slots but max_slots is {self.max_slots}"
            )
        for pos, slot in enumerate(self.slots, start=1):
            if slot.arrival_index != pos:
                raise ValueError(
                    f"slot at position {pos} has arrival_index {slot.arrival_index}; "
                    "indices must be exactly 1..n in order"
                )
        dims = {s.evidence.shape[0] for s in self.slots}
        if len(dims) > 1:
            raise ValueError(f"slots disagree on evidence dimension: {sorted(dims)}")

    @property
    def dim(self) -> Optional[int]:
        return int(self.slots[0].evidence.shape[0]) if self.slots else None

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpeakerCache):
            return NotImplemented
        return self.max_slots == other.max_slots and self.slots == other.slots


@dataclass(frozen=True)
class MatchResult:
    """Outcome of routing one frame: the slot it maps to plus how."""

    slot: int
    allocated: bool
    overflow: bool


def update_evidence(slot: CacheSlot, frame: np.ndarray, alpha: float) -> CacheSlot:
    """Fold a frame into a slot's evidence: normalize((1-a)*e + a*f).

    If the mix cancels to (near) zero there is no direction to keep, so the
    previous evidence is retained, the frame counter still advances, and a
    warning is logged.  Renormalization is skipped when the mix is already
    unit within 1e-12, which makes ``alpha == 1`` an exact replacement.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    f = _check_unit(frame, "frame")
    if np.array_equal(f, slot.evidence):
        # Exact fixed point; skip the mix so no rounding drift accumulates.
        return replace(slot, frames_observed=slot.frames_observed + 1)
    mixed = (1.0 - alpha) * slot.evidence + alpha * f
    norm = float(np.linalg.norm(mixed))
    if norm < 1e-12:
        log.warning(
            "evidence update for slot %d cancelled out; keeping previous direction",
            slot.arrival_index,
        )
        evidence = slot.evidence
    elif abs(norm - 1.0) <= 1e-12:
        evidence = mixed
    else:
        evidence = mixed / norm
    return replace(
        slot, evidence=evidence, frames_observed=slot.frames_observed + 1
    )


def match_or_allocate(
    cache: SpeakerCache,
    frame: np.ndarray,
    tau: float,
    *,
    alpha: float = 0.1,
    chunk_index: int = 0,
) -> tuple[MatchResult, SpeakerCache]:
    """Route one unit-norm frame to a cache slot.

    Best-match cosine >= tau updates that slot; otherwise a new slot is
    allocated while capacity remains.  At capacity the frame is force-mapped
    to the best match (flagged ``overflow=True``) without touching its
    evidence.  Cosine ties break toward the lowest arrival index.
    """
    f = _check_unit(frame, "frame")
    best = -1
    best_sim = -math.inf
    if cache.slots:
        if cache.dim != f.shape[0]:
            raise ValueError(
                f"frame dimension {f.shape[0]} does not match cache dimension {cache.dim}"
            )
        evidence = np.stack([s.evidence for s in cache.slots])
        sims = evidence @ f
        best = int(np.argmax(sims))  # first maximum == lowest arrival index
        best_sim = float(sims[best])
        if best_sim >= tau:
            slot = update_evidence(cache.slots[best], f, alpha)
            slot = replace(slot, last_active_chunk=chunk_index)
            slots = cache.slots[:best] + (slot,) + cache.slots[best + 1 :]
            return (
                MatchResult(slot=best + 1, allocated=False, overflow=False),
                SpeakerCache(slots, cache.max_slots),
            )
    if len(cache.slots) < cache.max_slots:
        new = CacheSlot(
            arrival_index=len(cache.slots) + 1,
            evidence=f,
            frames_observed=1,
            last_active_chunk=chunk_index,
        )
        return (
            MatchResult(slot=new.arrival_index, allocated=True, overflow=False),
            SpeakerCache(cache.slots + (new,), cache.max_slots),
        )
    log.warning(
        "cache full (%d slots); frame force-mapped to slot %d at similarity %.3f",
        cache.max_slots,
        best + 1,
        best_sim,
    )
    return MatchResult(slot=best + 1, allocated=False, overflow=True), cache


@dataclass(frozen=True, eq=False)
class TrackOutput:
    """Per-chunk tracker result.

    ``cues`` holds the unit-normalized input frames (zero rows for silence).
    ``activities`` is frames x slots in [0, 1]; an assigned frame reports
    activity 1.0 for its slot so forced overflow assignments still clear any
    activity threshold.  ``assignments`` maps each frame to a slot index or
    None for silence.  ``forced`` lists frame indices that were force-mapped
    because the cache was full.
    """

    cues: SpeakerCueMatrix
    activities: np.ndarray
    assignments: tuple[Optional[int], ...]
    forced: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        act = np.array(self.activities, dtype=np.float64, copy=True)
        if act.ndim != 2:
            raise ValueError(f"activities must be 2-D, got shape {act.shape}")
        if act.size and (act.min() < 0.0 or act.max() > 1.0):
            raise ValueError("activities must lie in [0, 1]")
        act.setflags(write=False)
        object.__setattr__(self, "activities", act)
        object.__setattr__(self, "assignments", tuple(self.assignments))
        object.__setattr__(self, "forced", tuple(self.forced))


def track_chunk(
    frames: SpeakerCueMatrix,
    cache: SpeakerCache,
    cfg: PipelineConfig,
    *,
    chunk_index: int = 0,
) -> tuple[TrackOutput, SpeakerCache]:
    """Assign every frame of a chunk to a cache slot (or silence).

    Frames are processed in order; the cache may grow along the way and the
    updated cache is returned for the next chunk.  Activity columns follow
    the final slot count, with zeros for slots that did not exist yet when a
    frame was processed.
    """
    if cache.slots and frames.rows and frames.cols != cache.dim:
        raise ValueError(
            f"frame dimension {frames.cols} does not match cache dimension {cache.dim}"
        )
    assignments: list[Optional[int]] = []
    forced: list[int] = []
    cue_rows = np.zeros((frames.rows, frames.cols), dtype=np.float64)
    act_rows: list[np.ndarray] = []
    for i in range(frames.rows):
        row = frames.data[i]
        norm = float(np.linalg.norm(row))
        if norm < SILENCE_NORM_FLOOR:
            assignments.append(None)
            act_rows.append(np.zeros(len(cache.slots)))
            continue
        unit = row / norm
        cue_rows[i] = unit
        if cache.slots:
            sims = np.stack([s.evidence for s in cache.slots]) @ unit
            act = np.clip(sims, 0.0, 1.0)
        else:
            act = np.zeros(0)
        result, cache = match_or_allocate(
            cache,
            unit,
            cfg.similarity_threshold,
            alpha=cfg.evidence_alpha,
            chunk_index=chunk_index,
        )
        if result.allocated:
            act = np.append(act, 0.0)
        act[result.slot - 1] = 1.0
        assignments.append(result.slot)
        if result.overflow:
            forced.append(i)
        act_rows.append(act)
    final_slots = len(cache.slots)
    activities = np.zeros((frames.rows, final_slots), dtype=np.float64)
    for i, act in enumerate(act_rows):
        activities[i, : act.shape[0]] = act
    out = TrackOutput(
        cues=SpeakerCueMatrix(cue_rows, frames.frame_period_s),
        activities=activities,
        assignments=tuple(assignments),
        forced=tuple(forced),
    )
    return out, cache


def activities_to_intervals(
    out: TrackOutput, frame_period_s: float, offset_s: float = 0.0
) -> list[tuple[int, float, float]]:
    """Collapse per-frame assignments into (slot, start_s, end_s) runs.

    Maximal runs of consecutive frames assigned to the same slot become one
    interval; silence breaks runs and produces nothing.
    """
    if frame_period_s <= 0:
        raise ValueError(f"frame_period_s must be > 0, got {frame_period_s}")
    intervals: list[tuple[int, float, float]] = []
    run_slot: Optional[int] = None
    run_start = 0
    for i, slot in enumerate(list(out.assignments) + [None]):
        if slot == run_slot:
            continue
        if run_slot is not None:
            intervals.append(
                (run_slot, offset_s + run_start * frame_period_s, offset_s + i * frame_period_s)
            )
        run_slot = slot
        run_start = i
    return intervals


# --- snapshot text format --------------------------------------------------
#
# Line 1:  "cache v1 max_slots <m> slots <n> dim <d>"
# Then one line per slot, in arrival order:
#   "slot <arrival_index> frames <frames_observed> last_chunk <c> evidence <x1> ... <xd>"
# Floats use %.17g so the round trip is bit-exact.


def write_cache_snapshot(cache: SpeakerCache) -> str:
    dim = cache.dim or 0
    lines = [f"cache v1 max_slots {cache.max_slots} slots {len(cache.slots)} dim {dim}"]
    for s in cache.slots:
        vec = " ".join(f"{x:.17g}" for x in s.evidence)
        lines.append(
            f"slot {s.arrival_index} frames {s.frames_observed} "
            f"last_chunk {s.last_active_chunk} evidence {vec}".rstrip()
        )
    return "\n".join(lines) + "\n"


def read_cache_snapshot(text: str) -> SpeakerCache:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty cache snapshot")
    head = lines[0].split()
    if (
        len(head) != 8
        or head[:3] != ["cache", "v1", "max_slots"]
        or head[4] != "slots"
        or head[6] != "dim"
    ):
        raise ValueError(f"bad snapshot header: {lines[0]!r}")
    try:
        max_slots = int(head[3])
        n_slots = int(head[5])
    except ValueError as exc:
        raise ValueError(f"bad snapshot header: {lines[0]!r}") from exc
    if len(lines) - 1 != n_slots:
        raise ValueError(
            f"snapshot declares {n_slots} slots but contains {len(lines) - 1} slot lines"
        )
    slots = []
    for ln_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) < 8 or parts[0] != "slot" or parts[2] != "frames" or parts[4] != "last_chunk" or parts[6] != "evidence":
            raise ValueError(f"line {ln_no}: bad slot line {line!r}")
        try:
            arrival = int(parts[1])
            frames_observed = int(parts[3])
            last_chunk = int(parts[5])
            evidence = np.array([float(x) for x in parts[7:]], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"line {ln_no}: bad slot line {line!r}") from exc
        slots.append(
            CacheSlot(
                arrival_index=arrival,
                evidence=evidence,
                frames_observed=frames_observed,
                last_active_chunk=last_chunk,
            )
        )
    return SpeakerCache(tuple(slots), max_slots)
