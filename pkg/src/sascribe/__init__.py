"""Chunked speaker-attributed transcription with an arrival-order speaker cache.

The package splits a meeting into fixed-duration chunks, fuses acoustic
embeddings with resampled speaker cues by interleaving a speaker row after
every K-th acoustic row, decodes each chunk into a serialized transcript
with inline timestamp and speaker tokens, and threads a single speaker
cache through the chunk loop so speaker numbering stays consistent for the
whole meeting.  Scoring (concatenated word error over the best speaker
permutation, diarization error with optional collars), a synthetic meeting
generator, and the weighted token-class objective live alongside the
pipeline.
"""

from .core import (
    AttributedSegment,
    Chunk,
    FeatureMatrix,
    PipelineConfig,
    SpeakerCueMatrix,
    Transcript,
    canonicalize,
    validate_transcript,
)
from .fusion import FusedStream, Projector, fused_length, interleave, project, resample
from .metrics import (
    CpwerResult,
    DerResult,
    ScoreReport,
    aggregate_reports,
    cpwer,
    der,
    levenshtein,
    merge_adjacent_segments,
    score_meeting,
)
from .objective import LogitsBatch, TokenClass, TokenClassWeights, hier_ce, hier_ce_grad
from .pipeline import (
    BackendSet,
    MeetingInput,
    PipelineError,
    Reference,
    RunResult,
    chunker,
    oracle_backend,
    run_meeting,
)
from .simulator import (
    DEFAULT_VOCAB,
    GroundTruth,
    SimConfig,
    UtteranceEvent,
    gen_meeting,
    meeting_from_events,
    read_bundle,
    write_bundle,
)
from .sot import ParseDiagnostic, SotParseError, parse, quantize_time, serialize
from .tracking import (
    CacheSlot,
    SpeakerCache,
    activities_to_intervals,
    match_or_allocate,
    read_cache_snapshot,
    track_chunk,
    update_evidence,
    write_cache_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "AttributedSegment",
    "BackendSet",
    "CacheSlot",
    "Chunk",
    "CpwerResult",
    "DEFAULT_VOCAB",
    "DerResult",
    "FeatureMatrix",
    "FusedStream",
    "GroundTruth",
    "LogitsBatch",
    "MeetingInput",
    "ParseDiagnostic",
    "PipelineConfig",
    "PipelineError",
    "Projector",
    "Reference",
    "RunResult",
    "ScoreReport",
    "SimConfig",
    "SotParseError",
    "SpeakerCache",
    "SpeakerCueMatrix",
    "TokenClass",
    "TokenClassWeights",
    "Transcript",
    "UtteranceEvent",
    "activities_to_intervals",
    "aggregate_reports",
    "canonicalize",
    "chunker",
    "cpwer",
    "der",
    "fused_length",
    "gen_meeting",
    "hier_ce",
    "hier_ce_grad",
    "interleave",
    "levenshtein",
    "match_or_allocate",
    "meeting_from_events",
    "merge_adjacent_segments",
    "oracle_backend",
    "parse",
    "project",
    "quantize_time",
    "read_bundle",
    "read_cache_snapshot",
    "resample",
    "run_meeting",
    "score_meeting",
    "serialize",
    "track_chunk",
    "update_evidence",
    "validate_transcript",
    "write_bundle",
    "write_cache_snapshot",
]
