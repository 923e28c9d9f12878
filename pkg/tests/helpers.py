"""Independent oracles and random-input generators shared by the tests.

Everything here re-derives results with deliberately naive algorithms
(recursive edit distance, exhaustive permutation search, dense time
sampling, central finite differences) so the production implementations are
checked against code that shares none of their structure.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from sascribe import AttributedSegment, Transcript, canonicalize
from sascribe.objective import LogitsBatch, TokenClassWeights, hier_ce

WORDS = (
    "ok", "right", "plan", "demo", "alpha", "beta", "gamma", "delta",
    "talk", "agenda", "one", "two", "three", "go",
)


@lru_cache(maxsize=None)
def _ed(a: tuple, b: tuple) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _ed(a[1:], b) + 1,
        _ed(a, b[1:]) + 1,
        _ed(a[1:], b[1:]) + (1 if a[0] != b[0] else 0),
    )


def edit_distance_oracle(a: Sequence[str], b: Sequence[str]) -> int:
    """Plain recursive edit distance (memoized)."""
    return _ed(tuple(a), tuple(b))


def speaker_groups(t: Transcript) -> dict[int, tuple[str, ...]]:
    """Per-speaker word concatenation in canonical segment order."""
    groups: dict[int, list[str]] = {}
    for seg in sorted(t.segments, key=lambda s: (s.t_st, s.t_ed, s.speaker)):
        groups.setdefault(seg.speaker, []).extend(seg.words)
    return {k: tuple(v) for k, v in groups.items()}


def cpwer_oracle(ref: Transcript, hyp: Transcript) -> tuple[int, int]:
    """(minimum total edits over speaker bijections, reference word count).

    Pads the smaller side with empty pseudo-speakers and tries every
    permutation.
    """
    ref_groups = speaker_groups(ref)
    hyp_groups = speaker_groups(hyp)
    refs = [ref_groups[k] for k in sorted(ref_groups)]
    hyps = [hyp_groups[k] for k in sorted(hyp_groups)]
    n = max(len(refs), len(hyps))
    refs += [()] * (n - len(refs))
    hyps += [()] * (n - len(hyps))
    best = min(
        sum(edit_distance_oracle(refs[i], hyps[p[i]]) for i in range(n))
        for p in itertools.permutations(range(n))
    )
    return best, sum(len(g) for g in refs)


Interval = tuple[object, float, float]


def der_sampled(
    ref_iv: Sequence[Interval],
    hyp_iv: Sequence[Interval],
    collar_s: float = 0.0,
    dt: float = 5e-4,
) -> tuple[float, float]:
    """(error seconds, scored seconds) by dense midpoint sampling.

    The speaker mapping is found by brute force over every injective partial
    map from hypothesis to reference labels, taking the one with the least
    total error.  Exact (up to float rounding) whenever all interval
    boundaries and the collar sit on a grid that ``dt`` divides.
    """
    all_iv = list(ref_iv) + list(hyp_iv)
    if not all_iv:
        return 0.0, 0.0
    lo = min(s for _, s, _ in all_iv) - collar_s - dt
    hi = max(e for _, _, e in all_iv) + collar_s + dt
    n = int(np.ceil((hi - lo) / dt))
    times = lo + (np.arange(n) + 0.5) * dt

    in_collar = np.zeros(n, dtype=bool)
    if collar_s > 0:
        for _, s, e in ref_iv:
            for b in (s, e):
                in_collar |= (times > b - collar_s) & (times < b + collar_s)
    scored_mask = ~in_collar

    ref_labels = sorted({l for l, _, _ in ref_iv}, key=str)
    hyp_labels = sorted({l for l, _, _ in hyp_iv}, key=str)
    ref_act = {lab: np.zeros(n, dtype=bool) for lab in ref_labels}
    hyp_act = {lab: np.zeros(n, dtype=bool) for lab in hyp_labels}
    for lab, s, e in ref_iv:
        ref_act[lab] |= (times >= s) & (times < e)
    for lab, s, e in hyp_iv:
        hyp_act[lab] |= (times >= s) & (times < e)

    n_ref = sum(ref_act.values(), np.zeros(n, dtype=np.int64))
    n_hyp = sum(hyp_act.values(), np.zeros(n, dtype=np.int64))
    scored = float((n_ref * scored_mask).sum() * dt)

    def error_for(mapping: dict) -> float:
        correct = np.zeros(n, dtype=np.int64)
        for h, r in mapping.items():
            correct += (hyp_act[h] & ref_act[r]).astype(np.int64)
        miss = np.maximum(0, n_ref - n_hyp)
        fa = np.maximum(0, n_hyp - n_ref)
        conf = np.minimum(n_ref, n_hyp) - correct
        cell = (miss + fa + np.maximum(conf, 0)) * scored_mask
        return float(cell.sum() * dt)

    best = None
    max_k = min(len(ref_labels), len(hyp_labels))
    for k in range(max_k + 1):
        for hs in itertools.combinations(hyp_labels, k):
            for rs in itertools.permutations(ref_labels, k):
                err = error_for(dict(zip(hs, rs)))
                if best is None or err < best:
                    best = err
    return float(best), scored


def finite_difference_grad(
    batch: LogitsBatch, weights: TokenClassWeights, eps: float = 1e-5
) -> np.ndarray:
    """Central finite differences of the scalar loss in every logit."""
    base = np.array(batch.logits, dtype=np.float64)
    grad = np.zeros_like(base)
    for p in range(base.shape[0]):
        for v in range(base.shape[1]):
            up = base.copy()
            up[p, v] += eps
            down = base.copy()
            down[p, v] -= eps
            lu, _ = hier_ce(LogitsBatch(up, batch.targets, batch.classes), weights)
            ld, _ = hier_ce(LogitsBatch(down, batch.targets, batch.classes), weights)
            grad[p, v] = (lu - ld) / (2 * eps)
    return grad


def random_transcript(
    rng: np.random.Generator,
    meeting_id: str = "m",
    max_speakers: int = 4,
    max_segments: int = 8,
    resolution_s: float = 0.02,
    words: Sequence[str] = WORDS,
) -> Transcript:
    """Random valid transcript with on-grid times; segments may overlap but
    always have distinct start ticks, so canonical order is unambiguous.
    """
    cents = round(resolution_s * 100)
    n = int(rng.integers(1, max_segments + 1))
    segments = []
    tick = 0
    for _ in range(n):
        tick += int(rng.integers(1, 40))
        start = tick
        end = start + int(rng.integers(1, 150))
        picked = tuple(
            str(words[i]) for i in rng.integers(0, len(words), size=int(rng.integers(1, 6)))
        )
        segments.append(
            AttributedSegment(
                int(rng.integers(1, max_speakers + 1)),
                (start * cents) / 100.0,
                (end * cents) / 100.0,
                picked,
            )
        )
    return canonicalize(Transcript(meeting_id, tuple(segments)))


def random_intervals(
    rng: np.random.Generator,
    max_speakers: int = 3,
    max_intervals: int = 6,
    grid_s: float = 0.25,
    allow_empty: bool = False,
) -> list[tuple[int, float, float]]:
    """Random intervals on a coarse grid (so sampled DER oracles are exact)."""
    lowest = 0 if allow_empty else 1
    n = int(rng.integers(lowest, max_intervals + 1))
    out = []
    for _ in range(n):
        spk = int(rng.integers(1, max_speakers + 1))
        a = int(rng.integers(0, 40))
        b = a + int(rng.integers(1, 20))
        out.append((spk, a * grid_s, b * grid_s))
    return out


def segment_tuples(t: Transcript) -> list[tuple[int, float, float, tuple[str, ...]]]:
    return [(s.speaker, s.t_st, s.t_ed, s.words) for s in t.segments]


def assert_transcripts_equal(a: Transcript, b: Transcript) -> None:
    assert segment_tuples(canonicalize(a)) == segment_tuples(canonicalize(b))
