"""Speaker-attributed scoring: concatenated-permutation WER and
diarization error rate.

cpWER concatenates each speaker's words in canonical segment order, pads the
smaller side with empty pseudo-speakers, and scores under the speaker
mapping that minimizes total edits (exhaustive over permutations up to 6
speakers, otherwise an optimal assignment over the pairwise edit-distance
matrix, which is exact because pair costs are independent).

DER is computed by an exact boundary-event sweep, never by frame sampling.
A collar excludes ``collar_s`` seconds on both sides of every *reference*
segment boundary from scoring.  Speakers are mapped by maximizing co-active
time over the scored region, which is the same as minimizing confusion.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import AttributedSegment, Transcript, canonicalize, segment_sort_key

__all__ = [
    "CpwerResult",
    "DerComponents",
    "DerResult",
    "EditCounts",
    "ScoreReport",
    "aggregate_reports",
    "cpwer",
    "der",
    "levenshtein",
    "merge_adjacent_segments",
    "normalize_token",
    "report_to_dict",
    "score_meeting",
]

Interval = tuple[Hashable, float, float]


# --- edit distance ---------------------------------------------------------


@dataclass(frozen=True)
class EditCounts:
    distance: int
    substitutions: int
    insertions: int
    deletions: int


def _edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Two-row DP, distance only."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (r != h),
            )
        prev = cur
    return prev[-1]


def levenshtein(ref: Sequence[str], hyp: Sequence[str]) -> EditCounts:
    """Token-level edit distance with a substitution/insertion/deletion
    breakdown (insertions are hyp tokens with no ref counterpart).

    Ties between minimal paths resolve deterministically: diagonal first,
    then deletion, then insertion, which prefers substitutions over
    insert+delete pairs.
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dist[i, j] = min(
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
                dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]),
            )
    sub = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            sub += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(int(dist[n, m]), int(sub), int(ins), int(dele))


# --- transcript normalization ----------------------------------------------


def merge_adjacent_segments(t: Transcript, max_gap_s: float = 0.1) -> Transcript:
    """Merge temporally adjacent same-speaker segments with a gap below
    ``max_gap_s`` (for example the two halves of a span split at a chunk
    boundary).  Word order within each speaker is preserved.
    """
    by_speaker: dict[int, list[AttributedSegment]] = {}
    for seg in sorted(t.segments, key=segment_sort_key):
        by_speaker.setdefault(seg.speaker, []).append(seg)
    merged: list[AttributedSegment] = []
    for speaker, segs in by_speaker.items():
        cur = segs[0]
        for nxt in segs[1:]:
            if nxt.t_st - cur.t_ed < max_gap_s:
                cur = AttributedSegment(
                    speaker, cur.t_st, max(cur.t_ed, nxt.t_ed), cur.words + nxt.words
                )
            else:
                merged.append(cur)
                cur = nxt
        merged.append(cur)
    return canonicalize(Transcript(t.meeting_id, tuple(merged)))


def normalize_token(token: str) -> str:
    """Lowercase and strip leading/trailing punctuation from one token."""
    return token.lower().strip(string.punctuation)


# --- cpWER -----------------------------------------------------------------


@dataclass(frozen=True)
class CpwerResult:
    """cpWER under the best speaker mapping.

    ``mapping`` sends hyp speakers to ref speakers; hyp speakers matched to
    a padding pseudo-speaker (pure hallucinations) are absent from it.
    """

    rate: float
    substitutions: int
    insertions: int
    deletions: int
    ref_words: int
    mapping: dict[int, int]

    @property
    def edits(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def _speaker_words(t: Transcript, normalize: bool) -> dict[int, list[str]]:
    groups: dict[int, list[str]] = {}
    for seg in sorted(t.segments, key=segment_sort_key):
        words = list(seg.words)
        if normalize:
            words = [w for w in (normalize_token(x) for x in words) if w]
        groups.setdefault(seg.speaker, []).extend(words)
    return groups


def cpwer(
    ref: Transcript,
    hyp: Transcript,
    *,
    merge_gap_s: float = 0.1,
    normalize_text: bool = False,
) -> CpwerResult:
    """Concatenated-permutation WER between two transcripts.

    Raises ValueError on an empty reference (the rate is undefined).
    """
    if not ref.segments:
        raise ValueError("cpWER is undefined for an empty reference transcript")
    ref_groups = _speaker_words(merge_adjacent_segments(ref, merge_gap_s), normalize_text)
    hyp_groups = _speaker_words(merge_adjacent_segments(hyp, merge_gap_s), normalize_text)
    ref_words = sum(len(v) for v in ref_groups.values())
    if ref_words == 0:
        raise ValueError("cpWER is undefined: reference contains no words")

    ref_ids: list[Optional[int]] = sorted(ref_groups)
    hyp_ids: list[Optional[int]] = sorted(hyp_groups)
    n = max(len(ref_ids), len(hyp_ids))
    ref_ids += [None] * (n - len(ref_ids))
    hyp_ids += [None] * (n - len(hyp_ids))
    ref_texts = [ref_groups.get(r, []) if r is not None else [] for r in ref_ids]
    hyp_texts = [hyp_groups.get(h, []) if h is not None else [] for h in hyp_ids]

    cost = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            cost[i, j] = _edit_distance(ref_texts[i], hyp_texts[j])

    if n <= 6:
        best_perm = None
        best_total = None
        for perm in itertools.permutations(range(n)):
            total = int(sum(cost[i, perm[i]] for i in range(n)))
            if best_total is None or total < best_total:
                best_total = total
                best_perm = perm
        pairs = [(i, best_perm[i]) for i in range(n)]
    else:
        rows, cols = linear_sum_assignment(cost)
        pairs = sorted(zip(rows.tolist(), cols.tolist()))

    sub = ins = dele = 0
    mapping: dict[int, int] = {}
    for i, j in pairs:
        counts = levenshtein(ref_texts[i], hyp_texts[j])
        sub += counts.substitutions
        ins += counts.insertions
        dele += counts.deletions
        if ref_ids[i] is not None and hyp_ids[j] is not None:
            mapping[hyp_ids[j]] = ref_ids[i]
    total = sub + ins + dele
    return CpwerResult(total / ref_words, sub, ins, dele, ref_words, mapping)


# --- DER -------------------------------------------------------------------


@dataclass(frozen=True)
class DerComponents:
    miss_s: float
    false_alarm_s: float
    confusion_s: float
    scored_speech_s: float

    @property
    def error_s(self) -> float:
        return self.miss_s + self.false_alarm_s + self.confusion_s


@dataclass(frozen=True)
class DerResult:
    rate: float
    components: DerComponents
    collar_s: float
    mapping: dict[Hashable, Hashable]


def _check_intervals(name: str, intervals: Sequence[Interval]) -> None:
    for idx, (_, start, end) in enumerate(intervals):
        if not (start < end):
            raise ValueError(
                f"{name} interval {idx} is invalid: start {start} must be < end {end}"
            )


def der(
    ref_intervals: Sequence[Interval],
    hyp_intervals: Sequence[Interval],
    collar_s: float = 0.0,
) -> DerResult:
    """Diarization error rate over (speaker, start_s, end_s) intervals.

    Overlapping speech is scored per speaker.  The rate denominator is the
    scored reference speech time; with no scored speech the rate is 0.0 when
    there are no errors and +inf otherwise.
    """
    if collar_s < 0:
        raise ValueError(f"collar_s must be >= 0, got {collar_s}")
    _check_intervals("reference", ref_intervals)
    _check_intervals("hypothesis", hyp_intervals)

    boundaries: set[float] = set()
    for _, s, e in ref_intervals:
        boundaries.update((s, e, s - collar_s, s + collar_s, e - collar_s, e + collar_s))
    for _, s, e in hyp_intervals:
        boundaries.update((s, e))
    events = sorted(boundaries)

    collar_edges = []
    if collar_s > 0:
        for _, s, e in ref_intervals:
            collar_edges.extend(((s - collar_s, s + collar_s), (e - collar_s, e + collar_s)))

    # Elementary intervals between consecutive events; speaker membership is
    # constant on each, so a midpoint test is unambiguous.
    cells: list[tuple[float, frozenset, frozenset]] = []
    for u, v in zip(events, events[1:]):
        dt = v - u
        if dt <= 0:
            continue
        mid = u + dt / 2
        if any(a < mid < b for a, b in collar_edges):
            continue
        r_active = frozenset(lab for lab, s, e in ref_intervals if s <= mid < e)
        h_active = frozenset(lab for lab, s, e in hyp_intervals if s <= mid < e)
        if r_active or h_active:
            cells.append((dt, r_active, h_active))

    ref_labels = sorted({lab for lab, _, _ in ref_intervals}, key=str)
    hyp_labels = sorted({lab for lab, _, _ in hyp_intervals}, key=str)
    overlap = np.zeros((len(ref_labels), len(hyp_labels)))
    r_pos = {lab: i for i, lab in enumerate(ref_labels)}
    h_pos = {lab: i for i, lab in enumerate(hyp_labels)}
    for dt, r_active, h_active in cells:
        for r in r_active:
            for h in h_active:
                overlap[r_pos[r], h_pos[h]] += dt
    mapping: dict[Hashable, Hashable] = {}
    if len(ref_labels) and len(hyp_labels):
        rows, cols = linear_sum_assignment(-overlap)
        for i, j in zip(rows, cols):
            if overlap[i, j] > 0:
                mapping[hyp_labels[j]] = ref_labels[i]

    miss = fa = conf = scored = 0.0
    for dt, r_active, h_active in cells:
        n_ref = len(r_active)
        n_hyp = len(h_active)
        correct = sum(1 for h in h_active if mapping.get(h) in r_active)
        scored += dt * n_ref
        miss += dt * max(0, n_ref - n_hyp)
        fa += dt * max(0, n_hyp - n_ref)
        conf += dt * (min(n_ref, n_hyp) - correct)

    components = DerComponents(miss, fa, conf, scored)
    if scored > 0:
        rate = components.error_s / scored
    else:
        rate = 0.0 if components.error_s == 0 else float("inf")
    return DerResult(rate, components, collar_s, mapping)


# --- meeting-level report --------------------------------------------------


@dataclass(frozen=True)
class ScoreReport:
    meeting_id: str
    cpwer: CpwerResult
    der: tuple[DerResult, ...]


def score_meeting(
    meeting_id: str,
    ref_transcript: Transcript,
    ref_intervals: Sequence[Interval],
    hyp_transcript: Transcript,
    hyp_intervals: Sequence[Interval],
    collars: Sequence[float] = (0.0,),
) -> ScoreReport:
    cp = cpwer(ref_transcript, hyp_transcript)
    ders = tuple(der(ref_intervals, hyp_intervals, c) for c in collars)
    return ScoreReport(meeting_id, cp, ders)


def report_to_dict(report: ScoreReport) -> dict:
    return {
        "meeting_id": report.meeting_id,
        "cpwer": {
            "rate": report.cpwer.rate,
            "substitutions": report.cpwer.substitutions,
            "insertions": report.cpwer.insertions,
            "deletions": report.cpwer.deletions,
            "edits": report.cpwer.edits,
            "ref_words": report.cpwer.ref_words,
            "mapping": {str(h): r for h, r in sorted(report.cpwer.mapping.items())},
        },
        "der": [
            {
                "collar_s": d.collar_s,
                "rate": d.rate,
                "miss_s": d.components.miss_s,
                "false_alarm_s": d.components.false_alarm_s,
                "confusion_s": d.components.confusion_s,
                "scored_speech_s": d.components.scored_speech_s,
            }
            for d in report.der
        ],
    }


def aggregate_reports(reports: Sequence[ScoreReport]) -> dict:
    """Corpus aggregate: micro pools numerators/denominators, macro averages
    per-meeting rates.  Micro is the headline number.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    n_collars = {len(r.der) for r in reports}
    if len(n_collars) != 1:
        raise ValueError("reports disagree on the number of collars")
    edits = sum(r.cpwer.edits for r in reports)
    words = sum(r.cpwer.ref_words for r in reports)
    out = {
        "meetings": len(reports),
        "micro": {"cpwer": edits / words, "der": []},
        "macro": {
            "cpwer": float(np.mean([r.cpwer.rate for r in reports])),
            "der": [],
        },
    }
    for k in range(len(reports[0].der)):
        collar = reports[0].der[k].collar_s
        err = sum(r.der[k].components.error_s for r in reports)
        sco = sum(r.der[k].components.scored_speech_s for r in reports)
        micro = err / sco if sco > 0 else (0.0 if err == 0 else float("inf"))
        out["micro"]["der"].append({"collar_s": collar, "rate": micro})
        out["macro"]["der"].append(
            {
                "collar_s": collar,
                "rate": float(np.mean([r.der[k].rate for r in reports])),
            }
        )
    return out
