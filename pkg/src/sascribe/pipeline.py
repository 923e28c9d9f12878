"""Chunk-wise meeting inference.

Per chunk, in order: encode acoustic frames, project both streams into the
shared width, track speakers against the carried-over cache, resample and
interleave the speaker rows, decode to serialized text, parse leniently,
and shift the recovered segments by the chunk offset.  The cache is the
only state threaded between chunks, so speaker indices are global across
the whole meeting.

The oracle backend short-circuits acoustic modeling for testing: simulator
acoustic frames carry a word payload in their trailing two feature columns
(vocabulary id and a meeting-global occurrence id, both nonzero only on the
onset frame of each word), and the oracle decoder reads words off those
columns and speakers off the tracker assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    AttributedSegment,
    Chunk,
    FeatureMatrix,
    PipelineConfig,
    SpeakerCueMatrix,
    Transcript,
    canonicalize,
)
from .fusion import FusedStream, Projector, ProjectorKind, RowKind, interleave, project, resample
from .sot import ParseDiagnostic, SotSequence, parse, quantize_time, serialize
from .tracking import SpeakerCache, activities_to_intervals, track_chunk

__all__ = [
    "BackendSet",
    "MeetingInput",
    "PAYLOAD_COLS",
    "PipelineError",
    "Reference",
    "RunResult",
    "chunker",
    "oracle_backend",
    "oracle_decoder",
    "run_meeting",
]

# Trailing acoustic feature columns reserved for the simulator word payload:
# column -2 is the vocabulary id, column -1 the word occurrence id.
PAYLOAD_COLS = 2


@dataclass(frozen=True)
class Reference:
    """Ground-truth annotations carried alongside a meeting's features."""

    transcript: Transcript
    intervals: tuple[tuple[int, float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in self.intervals))


@dataclass(frozen=True, eq=False)
class MeetingInput:
    """One meeting's paired feature streams plus optional reference."""

    meeting_id: str
    acoustic: FeatureMatrix
    tracker: SpeakerCueMatrix
    reference: Optional[Reference] = None

    def __post_init__(self) -> None:
        if not self.meeting_id:
            raise ValueError("meeting_id must be non-empty")
        gap = abs(self.acoustic.duration_s - self.tracker.duration_s)
        slack = max(self.acoustic.frame_period_s, self.tracker.frame_period_s)
        if gap > slack + 1e-9:
            raise ValueError(
                "acoustic and tracker streams must cover the same span within one "
                f"frame period; got {self.acoustic.duration_s:.3f}s vs "
                f"{self.tracker.duration_s:.3f}s"
            )


@dataclass(frozen=True)
class BackendSet:
    """The swappable model pieces of the pipeline.

    ``encoder(chunk) -> FeatureMatrix`` produces acoustic embeddings;
    ``decoder(prompt, fused, offset_s, assignments) -> SotSequence`` emits
    serialized text with chunk-local timestamps.
    """

    encoder: Callable[[Chunk], FeatureMatrix]
    decoder: Callable[..., SotSequence]
    asr_projector: Projector
    sd_projector: Projector

    def __post_init__(self) -> None:
        if self.asr_projector.out_dim != self.sd_projector.out_dim:
            raise ValueError(
                "projectors must share an output width; got "
                f"{self.asr_projector.out_dim} vs {self.sd_projector.out_dim}"
            )


class PipelineError(RuntimeError):
    """A backend stage failed on a specific chunk."""

    def __init__(self, chunk_index: int, stage: str, message: str):
        super().__init__(f"chunk {chunk_index}, stage {stage}: {message}")
        self.chunk_index = chunk_index
        self.stage = stage


def chunker(
    m: MeetingInput, target_s: float
) -> list[tuple[Chunk, SpeakerCueMatrix]]:
    """Slice a meeting into consecutive chunks of about ``target_s`` seconds.

    Boundaries snap to the acoustic frame grid; every chunk is exactly the
    target except a possibly shorter final one.  The tracker stream is split
    at the same absolute times, snapped to its own grid, so both slices of a
    pair cover the same span.
    """
    if target_s <= 0:
        raise ValueError(f"target_s must be > 0, got {target_s}")
    total = m.acoustic.rows
    if total == 0:
        return []
    per_chunk = max(1, round(target_s / m.acoustic.frame_period_s))
    bounds = list(range(0, total, per_chunk)) + [total]
    out: list[tuple[Chunk, SpeakerCueMatrix]] = []
    t_rows = m.tracker.rows
    for idx, (a0, a1) in enumerate(zip(bounds, bounds[1:])):
        t0 = min(t_rows, round(a0 * m.acoustic.frame_period_s / m.tracker.frame_period_s))
        t1 = min(t_rows, round(a1 * m.acoustic.frame_period_s / m.tracker.frame_period_s))
        if idx == len(bounds) - 2:
            t1 = t_rows
        chunk = Chunk(
            meeting_id=m.meeting_id,
            index=idx,
            frames=FeatureMatrix(m.acoustic.data[a0:a1], m.acoustic.frame_period_s),
            offset_s=a0 * m.acoustic.frame_period_s,
            duration_s=(a1 - a0) * m.acoustic.frame_period_s,
        )
        out.append(
            (chunk, SpeakerCueMatrix(m.tracker.data[t0:t1], m.tracker.frame_period_s))
        )
    return out


@dataclass(frozen=True)
class RunResult:
    """Everything produced by one meeting run."""

    transcript: Transcript
    intervals: tuple[tuple[int, float, float], ...]
    cache: SpeakerCache
    chunk_sots: tuple[str, ...]
    diagnostics: tuple[tuple[int, ParseDiagnostic], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in self.intervals))
        object.__setattr__(self, "chunk_sots", tuple(self.chunk_sots))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))


def _stage(chunk_index: int, stage: str, fn: Callable, *args):
    try:
        return fn(*args)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(chunk_index, stage, str(exc)) from exc


def run_meeting(m: MeetingInput, backend: BackendSet, cfg: PipelineConfig) -> RunResult:
    """Run the full chunk loop over one meeting.

    Segment times and tracker interval endpoints are re-quantized to the
    timestamp grid after shifting by the chunk offset, so equal-valued times
    from different chunks compare exactly.
    """
    cache = SpeakerCache((), cfg.max_slots)
    segments: list[AttributedSegment] = []
    intervals: list[tuple[int, float, float]] = []
    chunk_sots: list[str] = []
    diagnostics: list[tuple[int, ParseDiagnostic]] = []
    res = cfg.timestamp_resolution_s
    for chunk, trk in chunker(m, cfg.chunk_target_s):
        t = chunk.index
        embedded = _stage(t, "encode", backend.encoder, chunk)
        u = _stage(t, "project-acoustic", project, backend.asr_projector, embedded)
        out, cache = _stage(
            t,
            "track",
            lambda: track_chunk(trk, cache, cfg, chunk_index=t),
        )
        cues = FeatureMatrix(out.cues.data, out.cues.frame_period_s)
        need = (u.rows + cfg.stride_k - 1) // cfg.stride_k
        v_proj = _stage(t, "project-speaker", project, backend.sd_projector, cues)
        v = _stage(t, "resample", resample, v_proj, need, cfg.resample_mode)
        fused = _stage(t, "interleave", interleave, u, v, cfg.stride_k)
        sot = _stage(
            t,
            "decode",
            backend.decoder,
            cfg.prompt,
            fused,
            chunk.offset_s,
            out.assignments,
        )
        chunk_sots.append(sot.text)
        chunk_segments, chunk_diags = _stage(t, "parse", parse, sot.text, "lenient")
        diagnostics.extend((t, d) for d in chunk_diags)
        for seg in chunk_segments:
            segments.append(
                AttributedSegment(
                    seg.speaker,
                    quantize_time(chunk.offset_s + seg.t_st, res),
                    quantize_time(chunk.offset_s + seg.t_ed, res),
                    seg.words,
                )
            )
        for slot, start, end in activities_to_intervals(
            out, trk.frame_period_s, chunk.offset_s
        ):
            intervals.append((slot, quantize_time(start, res), quantize_time(end, res)))
    transcript = canonicalize(Transcript(m.meeting_id, tuple(segments)))
    return RunResult(
        transcript=transcript,
        intervals=tuple(intervals),
        cache=cache,
        chunk_sots=tuple(chunk_sots),
        diagnostics=tuple(diagnostics),
    )


# --- oracle backend --------------------------------------------------------


def oracle_decoder(
    prompt: Optional[str],
    fused: FusedStream,
    offset_s: float,
    assignments: Sequence[Optional[int]],
    vocab: Sequence[str],
    resolution_s: float = 0.02,
) -> SotSequence:
    """Decode serialized text from simulator payload features.

    Words come from the payload columns of the acoustic rows; the speaker of
    each row comes from the tracker assignment covering the same time.
    Maximal runs of rows with one assigned slot become one group with
    run-boundary timestamps (chunk local; the caller shifts by the offset).
    Runs whose rows carry no word onsets emit nothing.
    """
    del prompt, offset_s  # the oracle needs neither
    acoustic = fused.acoustic_rows()
    indices = [s for s, k in zip(fused.source_index, fused.kinds) if k is RowKind.ACOUSTIC]
    n_rows = acoustic.shape[0]
    if acoustic.shape[1] < PAYLOAD_COLS:
        raise ValueError("oracle requires simulator features (payload columns missing)")
    payload = acoustic[:, -PAYLOAD_COLS:]
    if payload.size and (
        not np.all(np.abs(payload - np.round(payload)) <= 1e-6) or payload.min() < -1e-6
    ):
        raise ValueError("oracle requires simulator features (payload is not integer coded)")
    period = fused.embeddings.frame_period_s
    n_assign = len(assignments)

    def slot_at(row: int) -> Optional[int]:
        if n_assign == 0:
            return None
        j = min(n_assign - 1, int((row + 0.5) * n_assign / n_rows))
        return assignments[j]

    segments: list[AttributedSegment] = []
    run_slot: Optional[int] = None
    run_first = 0
    run_words: list[str] = []

    def close_run(end_row: int) -> None:
        nonlocal run_slot, run_words
        if run_slot is not None and run_words:
            segments.append(
                AttributedSegment(
                    run_slot,
                    run_first * period,
                    end_row * period,
                    tuple(run_words),
                )
            )
        run_slot = None
        run_words = []

    for pos in range(n_rows):
        row_idx = indices[pos]
        slot = slot_at(row_idx)
        if slot != run_slot:
            close_run(prev_idx + 1 if run_slot is not None else 0)
            run_slot = slot
            run_first = row_idx
        vocab_id = int(round(payload[pos, 0]))
        if vocab_id > 0 and slot is not None:
            if vocab_id > len(vocab):
                raise ValueError(
                    f"payload vocabulary id {vocab_id} exceeds vocabulary size {len(vocab)}"
                )
            run_words.append(vocab[vocab_id - 1])
        prev_idx = row_idx
    close_run(indices[-1] + 1 if n_rows else 0)
    return serialize(segments, resolution_s)


def oracle_backend(
    vocab: Sequence[str],
    acoustic_dim: int,
    tracker_dim: int,
    cfg: PipelineConfig,
) -> BackendSet:
    """Backend whose encoder is the identity and whose decoder reads the
    simulator payload.  Identity projectors keep the payload columns intact.
    """
    vocab = tuple(vocab)
    if not vocab:
        raise ValueError("oracle backend needs a non-empty vocabulary")
    resolution = cfg.timestamp_resolution_s

    def encoder(chunk: Chunk) -> FeatureMatrix:
        return chunk.frames

    def decoder(prompt, fused, offset_s, assignments) -> SotSequence:
        return oracle_decoder(prompt, fused, offset_s, assignments, vocab, resolution)

    return BackendSet(
        encoder=encoder,
        decoder=decoder,
        asr_projector=Projector.identity(acoustic_dim, acoustic_dim, ProjectorKind.ASR_G1),
        sd_projector=Projector.identity(tracker_dim, acoustic_dim, ProjectorKind.SD_G2),
    )
