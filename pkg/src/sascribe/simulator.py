"""Synthetic meeting generator and the on-disk meeting formats.

Meetings are realized on the tracker/acoustic frame grid.  Every speaker
gets a fixed near-orthogonal unit prototype; a tracker frame is the active
speaker's prototype plus optional gaussian noise, and silence frames are
exact zero vectors.  Acoustic frames carry three columns: a speech-energy
flag and the two payload columns read by the oracle decoder (vocabulary id
and meeting-global word occurrence id, nonzero only on each word's onset
frame).  Overlapped speech interleaves the contested frames between the two
utterances involved.

On-disk formats owned by this module:

  RTTM line (10 fields, two-decimal seconds):
      SPEAKER <file_id> 1 <start> <duration> <NA> <NA> <speaker> <NA> <NA>

  Transcript JSONL: one segment object per line with keys, in order:
      speaker, t_st, t_ed, words

  Meeting bundle directory:
      meta.json     meeting id plus the generating config echo
      acoustic.f32  feature stream (see below)
      tracker.f32   speaker cue stream
      ref.jsonl     reference transcript (optional)
      ref.rttm      reference diarization (optional)

  .f32 layout: one ASCII header line "<rows> <cols> <frame_period_s>",
  then row-major little-endian 32-bit floats.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .core import AttributedSegment, FeatureMatrix, SpeakerCueMatrix, Transcript, canonicalize
from .pipeline import MeetingInput, Reference

__all__ = [
    "DEFAULT_VOCAB",
    "GroundTruth",
    "SimConfig",
    "UtteranceEvent",
    "gen_meeting",
    "meeting_from_events",
    "read_bundle",
    "read_rttm",
    "read_transcript_jsonl",
    "write_bundle",
    "write_rttm",
    "write_transcript_jsonl",
]

DEFAULT_VOCAB = (
    "the", "a", "we", "you", "they", "it", "is", "was", "are", "be",
    "have", "had", "will", "would", "can", "could", "should", "about",
    "meeting", "agenda", "point", "next", "first", "last", "time",
    "team", "plan", "update", "review", "budget", "issue", "fix",
    "done", "open", "close", "start", "stop", "yes", "no", "maybe",
)

_WORDS_PER_SECOND = 1.8


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; every field is echoed into bundle metadata.

    ``absence_windows`` lists (speaker, start_s, end_s) spans during which
    that speaker is never scheduled, so tests can force a speaker to fall
    silent for whole chunks and then return.
    """

    seed: int = 0
    num_speakers: int = 2
    duration_s: float = 60.0
    embed_dim: int = 16
    mean_utterance_s: float = 2.0
    gap_s: float = 0.5
    overlap_ratio: float = 0.0
    noise_sigma: float = 0.0
    frame_period_s: float = 0.08
    vocab: tuple[str, ...] = DEFAULT_VOCAB
    absence_windows: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(
            self,
            "absence_windows",
            tuple((int(s), float(a), float(b)) for s, a, b in self.absence_windows),
        )
        if self.num_speakers < 1:
            raise ValueError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.embed_dim < self.num_speakers:
            raise ValueError(
                f"embed_dim ({self.embed_dim}) must be >= num_speakers "
                f"({self.num_speakers}) for orthogonal prototypes"
            )
        if self.duration_s <= self.mean_utterance_s:
            raise ValueError(
                f"duration_s ({self.duration_s}) must exceed mean_utterance_s "
                f"({self.mean_utterance_s})"
            )
        if self.mean_utterance_s <= 0:
            raise ValueError(f"mean_utterance_s must be > 0, got {self.mean_utterance_s}")
        if self.gap_s < 0:
            raise ValueError(f"gap_s must be >= 0, got {self.gap_s}")
        if not (0.0 <= self.overlap_ratio < 1.0):
            raise ValueError(f"overlap_ratio must be in [0, 1), got {self.overlap_ratio}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        cents = round(self.frame_period_s * 100)
        if cents < 1 or abs(self.frame_period_s * 100 - cents) > 1e-6:
            raise ValueError(
                "frame_period_s must be a positive multiple of 0.01, "
                f"got {self.frame_period_s}"
            )
        if not self.vocab or any(
            (not w) or any(c.isspace() for c in w) or "<|" in w or "|>" in w
            for w in self.vocab
        ):
            raise ValueError("vocab must be non-empty words without whitespace or delimiters")
        for spk, a, b in self.absence_windows:
            if spk < 1 or not (a < b):
                raise ValueError(f"bad absence window ({spk}, {a}, {b})")


@dataclass(frozen=True)
class UtteranceEvent:
    """One scheduled utterance before frame realization."""

    speaker: int
    start_s: float
    duration_s: float
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        if self.speaker < 1:
            raise ValueError(f"speaker must be >= 1, got {self.speaker}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        if not self.words:
            raise ValueError("utterance needs at least one word")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Reference annotations plus the prototypes that generated the frames."""

    transcript: Transcript
    speaker_intervals: tuple[tuple[int, float, float], ...]
    prototypes: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "speaker_intervals", tuple(tuple(iv) for iv in self.speaker_intervals)
        )
        arr = np.array(self.prototypes, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "prototypes", arr)


def _orthonormal_prototypes(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Gram-Schmidt over seeded gaussian vectors, run twice for stability."""
    m = rng.standard_normal((n, dim))
    for _ in range(2):
        for i in range(n):
            for j in range(i):
                m[i] -= (m[i] @ m[j]) * m[j]
            norm = np.linalg.norm(m[i])
            if norm < 1e-9:
                raise ValueError("degenerate prototype draw; try another seed")
            m[i] /= norm
    return m


def _snap_frame(t_s: float, period_s: float) -> int:
    return int(np.floor(t_s / period_s + 0.5 + 1e-9))


def _cents_time(frame: int, period_cents: int) -> float:
    return (frame * period_cents) / 100.0


def meeting_from_events(
    meeting_id: str,
    events: Sequence[UtteranceEvent],
    cfg: SimConfig,
    prototypes: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[MeetingInput, GroundTruth]:
    """Realize an explicit utterance schedule on the frame grid.

    Events must be ordered by nondecreasing start time and may overlap; the
    contested frames of an overlap alternate between the two utterances.
    Word lists longer than an utterance's owned frame count are truncated so
    the reference always matches what the features can carry.
    """
    period = cfg.frame_period_s
    period_cents = round(period * 100)
    total_frames = _snap_frame(cfg.duration_s, period)
    if total_frames < 1:
        raise ValueError("meeting must span at least one frame")
    word_ids = {w: i + 1 for i, w in enumerate(cfg.vocab)}
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if prototypes is None:
        prototypes = _orthonormal_prototypes(rng, cfg.num_speakers, cfg.embed_dim)

    last_start = -np.inf
    for ev in events:
        if ev.speaker > cfg.num_speakers:
            raise ValueError(
                f"event speaker {ev.speaker} exceeds num_speakers {cfg.num_speakers}"
            )
        if ev.start_s < last_start:
            raise ValueError("events must be ordered by nondecreasing start time")
        last_start = ev.start_s
        for w in ev.words:
            if w not in word_ids:
                raise ValueError(f"event word {w!r} is not in the configured vocabulary")

    # Two passes: ownership is settled for every event first (later events
    # take every second contested frame), then word onsets land only on
    # frames an event still owns, so the reference never names a word the
    # features cannot carry.
    owner_event = np.full(total_frames, -1, dtype=np.int64)
    spans: list[Optional[tuple[int, int]]] = []
    for idx, ev in enumerate(events):
        f0 = max(0, _snap_frame(ev.start_s, period))
        f1 = min(total_frames, max(f0 + 1, _snap_frame(ev.start_s + ev.duration_s, period)))
        if f0 >= total_frames or f1 <= f0:
            spans.append(None)
            continue
        spans.append((f0, f1))
        contested = [f for f in range(f0, f1) if owner_event[f] >= 0]
        free = [f for f in range(f0, f1) if owner_event[f] < 0]
        for f in free + contested[1::2]:
            owner_event[f] = idx

    owner_speaker = np.zeros(total_frames, dtype=np.int64)
    for idx, ev in enumerate(events):
        owner_speaker[owner_event == idx] = ev.speaker

    onset_vocab = np.zeros(total_frames, dtype=np.int64)
    onset_occ = np.zeros(total_frames, dtype=np.int64)
    segments: list[AttributedSegment] = []
    intervals: list[tuple[int, float, float]] = []
    occurrence = 0
    for idx, ev in enumerate(events):
        if spans[idx] is None:
            continue
        owned = np.flatnonzero(owner_event == idx)
        if owned.size == 0:
            continue
        n_words = min(len(ev.words), owned.size)
        words = ev.words[:n_words]
        for i, w in enumerate(words):
            occurrence += 1
            f = owned[(i * owned.size) // n_words]
            onset_vocab[f] = word_ids[w]
            onset_occ[f] = occurrence
        f0, f1 = spans[idx]
        t0 = _cents_time(f0, period_cents)
        t1 = _cents_time(f1, period_cents)
        segments.append(AttributedSegment(ev.speaker, t0, t1, words))
        intervals.append((ev.speaker, t0, t1))

    tracker = np.zeros((total_frames, cfg.embed_dim))
    speech = owner_speaker > 0
    tracker[speech] = prototypes[owner_speaker[speech] - 1]
    if cfg.noise_sigma > 0:
        noise = rng.standard_normal((total_frames, cfg.embed_dim)) * cfg.noise_sigma
        tracker[speech] += noise[speech]

    acoustic = np.zeros((total_frames, 3))
    acoustic[:, 0] = speech.astype(np.float64)
    acoustic[:, 1] = onset_vocab
    acoustic[:, 2] = onset_occ

    transcript = canonicalize(Transcript(meeting_id, tuple(segments)))
    gt = GroundTruth(transcript, tuple(intervals), prototypes)
    meeting = MeetingInput(
        meeting_id=meeting_id,
        acoustic=FeatureMatrix(acoustic, period),
        tracker=SpeakerCueMatrix(tracker, period),
        reference=Reference(transcript, gt.speaker_intervals),
    )
    return meeting, gt


def _blocked(cfg: SimConfig, speaker: int, start_s: float, end_s: float) -> bool:
    return any(
        spk == speaker and start_s < b and a < end_s
        for spk, a, b in cfg.absence_windows
    )


def gen_meeting(cfg: SimConfig) -> tuple[MeetingInput, GroundTruth]:
    """Generate one meeting, deterministically in the seed.

    Speakers rotate round robin, so arrival order matches speaker index
    unless an absence window forces a skip.  Utterance lengths and gaps get
    exponential jitter; a configurable fraction of utterance starts is
    pulled back before the previous utterance's end to create overlap.
    """
    rng = np.random.default_rng(cfg.seed)
    prototypes = _orthonormal_prototypes(rng, cfg.num_speakers, cfg.embed_dim)
    period = cfg.frame_period_s
    total_frames = _snap_frame(cfg.duration_s, period)
    mean_frames = max(1, round(cfg.mean_utterance_s / period))

    events: list[UtteranceEvent] = []
    cursor = 0
    rotation = 0
    prev: Optional[tuple[int, int]] = None
    for _ in range(100000):
        length = int(np.clip(round(rng.exponential(cfg.mean_utterance_s) / period), 5, 4 * mean_frames))
        gap = max(1, round(rng.exponential(cfg.gap_s) / period)) if cfg.gap_s > 0 else 1
        pull = rng.random()
        if prev is not None and pull < cfg.overlap_ratio:
            prev_len = prev[1] - prev[0]
            depth = max(1, round(0.4 * min(prev_len, length)))
            depth = min(depth, prev_len - 1, length - 1)
            start = prev[1] - max(1, depth)
        else:
            start = cursor + gap
        if start >= total_frames:
            break
        end = min(total_frames, start + length)
        if end <= start:
            break
        n_words = max(1, min(end - start, round((end - start) * period * _WORDS_PER_SECOND)))
        word_picks = rng.integers(0, len(cfg.vocab), size=n_words)
        speaker = None
        for k in range(cfg.num_speakers):
            cand = (rotation + k) % cfg.num_speakers + 1
            if not _blocked(cfg, cand, start * period, end * period):
                speaker = cand
                rotation = (rotation + k + 1) % cfg.num_speakers
                break
        if speaker is None:
            cursor = start + max(1, gap)
            continue
        events.append(
            UtteranceEvent(
                speaker=speaker,
                start_s=start * period,
                duration_s=(end - start) * period,
                words=tuple(cfg.vocab[i] for i in word_picks),
            )
        )
        prev = (start, end)
        cursor = end
    return meeting_from_events(
        f"sim-{cfg.seed:06d}", events, cfg, prototypes=prototypes, rng=rng
    )


# --- RTTM ------------------------------------------------------------------


def write_rttm(intervals: Sequence[tuple[object, float, float]], file_id: str) -> str:
    """Render (speaker, start_s, end_s) intervals as RTTM SPEAKER lines."""
    lines = []
    for speaker, start, end in intervals:
        if not (start < end):
            raise ValueError(f"interval for speaker {speaker} has start {start} >= end {end}")
        lines.append(
            f"SPEAKER {file_id} 1 {start:.2f} {end - start:.2f} <NA> <NA> {speaker} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def read_rttm(text: str) -> list[tuple[str, float, float]]:
    """Parse RTTM SPEAKER lines to (speaker, start_s, duration_s) tuples.

    Unknown line types and malformed fields raise ValueError with the line
    number.
    """
    out = []
    for ln_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 10:
            raise ValueError(f"line {ln_no}: expected 10 RTTM fields, got {len(fields)}")
        if fields[0] != "SPEAKER":
            raise ValueError(f"line {ln_no}: unsupported RTTM type {fields[0]!r}")
        try:
            start = float(fields[3])
            dur = float(fields[4])
        except ValueError as exc:
            raise ValueError(f"line {ln_no}: bad start/duration field") from exc
        if dur <= 0:
            raise ValueError(f"line {ln_no}: duration must be > 0, got {dur}")
        out.append((fields[7], start, dur))
    return out


# --- transcript JSONL ------------------------------------------------------


def write_transcript_jsonl(t: Transcript) -> str:
    lines = []
    for seg in t.segments:
        lines.append(
            json.dumps(
                {
                    "speaker": seg.speaker,
                    "t_st": seg.t_st,
                    "t_ed": seg.t_ed,
                    "words": list(seg.words),
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def read_transcript_jsonl(text: str, meeting_id: str = "meeting") -> Transcript:
    segments = []
    for ln_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {ln_no}: not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ValueError(f"line {ln_no}: expected an object per line")
        for key in ("speaker", "t_st", "t_ed", "words"):
            if key not in obj:
                raise ValueError(f"line {ln_no}: missing key {key!r}")
        words = obj["words"]
        if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
            raise ValueError(f"line {ln_no}: words must be a list of strings")
        segments.append(
            AttributedSegment(
                int(obj["speaker"]), float(obj["t_st"]), float(obj["t_ed"]), tuple(words)
            )
        )
    return Transcript(meeting_id, tuple(segments))


# --- bundle directory ------------------------------------------------------


def _write_f32(path: str, data: np.ndarray, frame_period_s: float) -> None:
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(f"{rows} {cols} {frame_period_s!r}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read_f32(path: str) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad .f32 header")
        try:
            rows, cols = int(header[0]), int(header[1])
            period = float(header[2])
        except ValueError as exc:
            raise ValueError(f"{path}: bad .f32 header") from exc
        raw = fh.read()
    expect = rows * cols * 4
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} payload bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return data, period


def write_bundle(
    path: str,
    meeting: MeetingInput,
    cfg: Optional[SimConfig] = None,
) -> None:
    """Write a meeting bundle directory (created if needed)."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "format": "meeting-bundle-v1",
        "meeting_id": meeting.meeting_id,
        "sim_config": asdict(cfg) if cfg is not None else None,
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_f32(
        os.path.join(path, "acoustic.f32"), meeting.acoustic.data, meeting.acoustic.frame_period_s
    )
    _write_f32(
        os.path.join(path, "tracker.f32"), meeting.tracker.data, meeting.tracker.frame_period_s
    )
    if meeting.reference is not None:
        with open(os.path.join(path, "ref.jsonl"), "w") as fh:
            fh.write(write_transcript_jsonl(meeting.reference.transcript))
        with open(os.path.join(path, "ref.rttm"), "w") as fh:
            fh.write(write_rttm(meeting.reference.intervals, meeting.meeting_id))


def read_bundle(path: str) -> tuple[MeetingInput, Optional[SimConfig]]:
    meta_path = os.path.join(path, "meta.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("format") != "meeting-bundle-v1":
        raise ValueError(f"{meta_path}: unsupported bundle format {meta.get('format')!r}")
    meeting_id = meta["meeting_id"]
    acoustic, a_period = _read_f32(os.path.join(path, "acoustic.f32"))
    tracker, t_period = _read_f32(os.path.join(path, "tracker.f32"))
    reference = None
    ref_jsonl = os.path.join(path, "ref.jsonl")
    ref_rttm = os.path.join(path, "ref.rttm")
    if os.path.exists(ref_jsonl):
        with open(ref_jsonl) as fh:
            transcript = read_transcript_jsonl(fh.read(), meeting_id)
        intervals: tuple[tuple[int, float, float], ...] = ()
        if os.path.exists(ref_rttm):
            with open(ref_rttm) as fh:
                rows = read_rttm(fh.read())
            intervals = tuple((int(spk), start, start + dur) for spk, start, dur in rows)
        reference = Reference(transcript, intervals)
    cfg = None
    if meta.get("sim_config"):
        raw = dict(meta["sim_config"])
        raw["vocab"] = tuple(raw.get("vocab", ()))
        raw["absence_windows"] = tuple(tuple(w) for w in raw.get("absence_windows", ()))
        cfg = SimConfig(**raw)
    meeting = MeetingInput(
        meeting_id=meeting_id,
        acoustic=FeatureMatrix(acoustic, a_period),
        tracker=SpeakerCueMatrix(tracker, t_period),
        reference=reference,
    )
    return meeting, cfg
