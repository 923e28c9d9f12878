"""Projection of both feature streams into a shared width and their
interleaving into one temporally ordered sequence.

For an acoustic stream of L rows and stride K, one speaker row is inserted
after every K-th acoustic row (1-based positions K, 2K, ...), plus one
trailing speaker row when L is not a multiple of K.  The fused length is
therefore exactly L + ceil(L / K), and dropping the speaker rows recovers
the acoustic rows bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import FeatureMatrix

__all__ = [
    "FusedStream",
    "Projector",
    "ProjectorKind",
    "RowKind",
    "fused_length",
    "interleave",
    "project",
    "resample",
]


class ProjectorKind(Enum):
    ASR_G1 = "asr_g1"
    SD_G2 = "sd_g2"


class RowKind(Enum):
    ACOUSTIC = "acoustic"
    SPEAKER = "speaker"


@dataclass(frozen=True, eq=False)
class Projector:
    """A fixed linear map applied row-wise to a feature matrix."""

    weight: np.ndarray
    kind: ProjectorKind

    def __post_init__(self) -> None:
        w = np.array(self.weight, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise ValueError(f"projector weight must be 2-D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("projector weight contains non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[1])

    @classmethod
    def identity(cls, in_dim: int, out_dim: int, kind: ProjectorKind) -> "Projector":
        """Pad-or-truncate identity; passes leading dims through unchanged."""
        return cls(np.eye(in_dim, out_dim), kind)

    @classmethod
    def seeded(cls, in_dim: int, out_dim: int, kind: ProjectorKind, seed: int) -> "Projector":
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)
        return cls(w, kind)


def project(p: Projector, m: FeatureMatrix) -> FeatureMatrix:
    if m.cols != p.in_dim:
        raise ValueError(
            f"matrix has {m.cols} columns but projector expects {p.in_dim}"
        )
    return FeatureMatrix(m.data @ p.weight, m.frame_period_s)


def resample(v: FeatureMatrix, target_count: int, mode: str) -> FeatureMatrix:
    """Resample rows to ``target_count`` with deterministic index arithmetic.

    Row j of the output maps to source position j*(rows-1)/(target_count-1);
    "nearest" rounds the position half up, "linear" blends the two straddling
    rows.  Endpoints map exactly in both modes.  A single source row is
    copied everywhere; a single target row takes source row 0.  When the row
    count already matches, the input is returned unchanged.
    """
    if mode not in ("nearest", "linear"):
        raise ValueError(f"mode must be 'nearest' or 'linear', got {mode!r}")
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    rows = v.rows
    if rows == 0:
        raise ValueError(
            "cannot resample an empty matrix: the tracker emitted no frames "
            "while insertion demanded some"
        )
    if rows == target_count:
        return v
    period = v.frame_period_s * rows / target_count
    if rows == 1:
        out = np.repeat(v.data, target_count, axis=0)
        return FeatureMatrix(out, period)
    out = np.empty((target_count, v.cols), dtype=np.float64)
    for j in range(target_count):
        # Integer numerator keeps the endpoint positions exact.
        pos = (j * (rows - 1)) / (target_count - 1) if target_count > 1 else 0.0
        if mode == "nearest":
            idx = min(rows - 1, int(np.floor(pos + 0.5)))
            out[j] = v.data[idx]
        else:
            lo = min(rows - 1, int(np.floor(pos)))
            hi = min(rows - 1, lo + 1)
            frac = pos - lo
            out[j] = (1.0 - frac) * v.data[lo] + frac * v.data[hi]
    return FeatureMatrix(out, period)


def fused_length(acoustic_rows: int, stride_k: int) -> int:
    return acoustic_rows + (acoustic_rows + stride_k - 1) // stride_k


@dataclass(frozen=True, eq=False)
class FusedStream:
    """Interleaved acoustic and speaker rows with per-row provenance.

    ``source_index[i]`` is the row of the originating matrix (acoustic or
    speaker) that produced fused row i; it is nondecreasing within each
    kind.
    """

    embeddings: FeatureMatrix
    kinds: tuple[RowKind, ...]
    source_index: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "source_index", tuple(self.source_index))
        if len(self.kinds) != self.embeddings.rows or len(self.source_index) != self.embeddings.rows:
            raise ValueError("kinds and source_index must have one entry per row")

    def _rows_of(self, kind: RowKind) -> np.ndarray:
        picked = [i for i, k in enumerate(self.kinds) if k is kind]
        return self.embeddings.data[picked]

    def acoustic_rows(self) -> np.ndarray:
        return self._rows_of(RowKind.ACOUSTIC)

    def speaker_rows(self) -> np.ndarray:
        return self._rows_of(RowKind.SPEAKER)


def interleave(u: FeatureMatrix, v: FeatureMatrix, stride_k: int) -> FusedStream:
    """Insert speaker rows of ``v`` into acoustic rows of ``u`` every K rows.

    ``v`` must hold exactly ceil(L/K) rows, one per insertion point; the
    trailing insertion covers a final partial group.
    """
    if stride_k < 1:
        raise ValueError(f"stride_k must be >= 1, got {stride_k}")
    if u.rows < 1:
        raise ValueError("acoustic stream must contain at least one row")
    if u.cols != v.cols:
        raise ValueError(
            f"column mismatch: acoustic has {u.cols}, speaker has {v.cols}"
        )
    need = (u.rows + stride_k - 1) // stride_k
    if v.rows != need:
        raise ValueError(
            f"speaker stream must have ceil({u.rows}/{stride_k}) = {need} rows, "
            f"got {v.rows}"
        )
    total = u.rows + need
    out = np.empty((total, u.cols), dtype=np.float64)
    kinds: list[RowKind] = []
    source: list[int] = []
    vi = 0
    pos = 0
    for i in range(1, u.rows + 1):
        out[pos] = u.data[i - 1]
        kinds.append(RowKind.ACOUSTIC)
        source.append(i - 1)
        pos += 1
        if i % stride_k == 0:
            out[pos] = v.data[vi]
            kinds.append(RowKind.SPEAKER)
            source.append(vi)
            vi += 1
            pos += 1
    if u.rows % stride_k != 0:
        out[pos] = v.data[vi]
        kinds.append(RowKind.SPEAKER)
        source.append(vi)
        vi += 1
        pos += 1
    assert pos == total and vi == need
    return FusedStream(
        FeatureMatrix(out, u.frame_period_s), tuple(kinds), tuple(source)
    )
