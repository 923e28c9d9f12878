"""Serialized timestamped transcript text.

One meeting chunk serializes to a single line of space-separated tokens,
one group per attributed segment, groups in canonical segment order:

    <|ts:0.48|> hello there <|ts:1.26|> <|spk:1|> <|ts:1.30|> hi <|ts:1.70|> <|spk:2|>

Grammar, per group: timestamp-start, one or more words, timestamp-end,
speaker-id.  Timestamps are fixed-point seconds with exactly two decimals on
the configured resolution grid (default 0.02 s, round half up).  Speaker ids
are positive base-10 integers without leading zeros.  Words never contain
whitespace or the reserved delimiters ``<|`` and ``|>``.

``parse`` runs in two modes.  Strict parsing accepts exactly the grammar and
raises :class:`SotParseError` (carrying the byte offset and the expected
token kind) on the first violation.  Lenient parsing recovers maximal
well-formed groups, drops malformed spans, and reports each drop as a
:class:`ParseDiagnostic` with byte offsets.  Both modes only ever yield
segments that satisfy the segment invariants.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .core import AttributedSegment, segment_sort_key, segment_violations

__all__ = [
    "ParseDiagnostic",
    "SotParseError",
    "SotSequence",
    "SotToken",
    "TokenKind",
    "parse",
    "quantize_time",
    "serialize",
]

_TS_RE = re.compile(r"^<\|ts:(\d+\.\d{2})\|>$")
_SPK_RE = re.compile(r"^<\|spk:(\d+)\|>$")


class TokenKind(Enum):
    TIMESTAMP_START = "timestamp-start"
    WORD = "word"
    TIMESTAMP_END = "timestamp-end"
    SPEAKER_ID = "speaker-id"


@dataclass(frozen=True)
class SotToken:
    """One token of the serialized stream.

    ``value`` is a float (seconds) for timestamps, a str for words, and an
    int for speaker ids.
    """

    kind: TokenKind
    value: object

    def render(self) -> str:
        if self.kind in (TokenKind.TIMESTAMP_START, TokenKind.TIMESTAMP_END):
            return f"<|ts:{self.value:.2f}|>"
        if self.kind is TokenKind.SPEAKER_ID:
            return f"<|spk:{self.value}|>"
        return str(self.value)


@dataclass(frozen=True)
class SotSequence:
    tokens: tuple[SotToken, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def text(self) -> str:
        return " ".join(tok.render() for tok in self.tokens)


class SotParseError(ValueError):
    """Strict-mode grammar violation at a known byte offset."""

    def __init__(self, offset: int, message: str, expected: Optional[str] = None):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset
        self.expected = expected


@dataclass(frozen=True)
class ParseDiagnostic:
    """A dropped span of lenient-mode input: [start, end) byte offsets."""

    start: int
    end: int
    message: str


def _resolution_cents(resolution_s: float) -> int:
    cents = round(resolution_s * 100)
    if cents < 1 or abs(resolution_s * 100 - cents) > 1e-6:
        raise ValueError(
            f"resolution must be a positive multiple of 0.01 s, got {resolution_s}"
        )
    return int(cents)


def quantize_time(t_s: float, resolution_s: float) -> float:
    """Snap a nonnegative time to the resolution grid, rounding half up.

    The result is the exact double closest to the decimal two-digit value,
    so formatting with ``%.2f`` and parsing back are lossless.  The 1e-9
    guard keeps decimal half points (which are not exact in binary) rounding
    upward; it is far below any meaningful time precision.
    """
    if t_s < 0:
        raise ValueError(f"time must be >= 0, got {t_s}")
    cents = _resolution_cents(resolution_s)
    steps = math.floor(t_s / resolution_s + 0.5 + 1e-9)
    return (steps * cents) / 100.0


def serialize(
    segments: Sequence[AttributedSegment], resolution_s: float = 0.02
) -> SotSequence:
    """Serialize segments to the token stream, one group per segment.

    Timestamps are quantized to the resolution grid (round half up).  When
    quantization collapses a segment's span to a point, the end is pushed up
    one grid step so the emitted group still has a positive span.
    """
    cents = _resolution_cents(resolution_s)
    for seg in segments:
        bad = segment_violations(seg)
        if bad:
            raise ValueError(f"cannot serialize invalid segment: {bad[0]}")
        for w in seg.words:
            if "<|" in w or "|>" in w:
                raise ValueError(f"word {w!r} contains a reserved delimiter")
        if seg.t_st < 0:
            raise ValueError(f"cannot serialize negative time {seg.t_st}")
    tokens: list[SotToken] = []
    for seg in sorted(segments, key=segment_sort_key):
        c_st = round(quantize_time(seg.t_st, resolution_s) * 100)
        c_ed = round(quantize_time(seg.t_ed, resolution_s) * 100)
        if c_ed <= c_st:
            c_ed = c_st + cents
        tokens.append(SotToken(TokenKind.TIMESTAMP_START, c_st / 100.0))
        tokens.extend(SotToken(TokenKind.WORD, w) for w in seg.words)
        tokens.append(SotToken(TokenKind.TIMESTAMP_END, c_ed / 100.0))
        tokens.append(SotToken(TokenKind.SPEAKER_ID, seg.speaker))
    return SotSequence(tuple(tokens))


# --- parsing ---------------------------------------------------------------

_KIND_TS = "ts"
_KIND_SPK = "spk"
_KIND_WORD = "word"
_KIND_BAD = "bad"


def _scan_strict(text: str) -> list[tuple[str, int]]:
    if text == "":
        return []
    out = []
    offset = 0
    for part in text.split(" "):
        if part == "":
            raise SotParseError(offset, "empty token (stray space)")
        out.append((part, offset))
        offset += len(part) + 1
    return out


def _scan_lenient(text: str) -> list[tuple[str, int]]:
    return [(m.group(), m.start()) for m in re.finditer(r"\S+", text)]


def _classify(tok: str) -> tuple[str, object]:
    m = _TS_RE.match(tok)
    if m:
        return (_KIND_TS, float(m.group(1)))
    m = _SPK_RE.match(tok)
    if m:
        digits = m.group(1)
        if digits.startswith("0"):
            return (_KIND_BAD, "speaker id must be a positive integer without leading zeros")
        return (_KIND_SPK, int(digits))
    if "<|" in tok or "|>" in tok:
        return (_KIND_BAD, f"malformed special token {tok!r}")
    return (_KIND_WORD, tok)


_EXPECTED = {
    "group_start": "timestamp-start",
    "first_word": "word",
    "words": "word or timestamp-end",
    "speaker": "speaker-id",
}


def parse(
    text: str, mode: str = "strict"
) -> tuple[list[AttributedSegment], list[ParseDiagnostic]]:
    """Parse serialized text back into attributed segments.

    Returns ``(segments, diagnostics)``.  Strict mode raises
    :class:`SotParseError` on any deviation and always returns an empty
    diagnostics list; lenient mode recovers what it can and describes every
    dropped span.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    strict = mode == "strict"
    toks = _scan_strict(text) if strict else _scan_lenient(text)

    segments: list[AttributedSegment] = []
    diagnostics: list[ParseDiagnostic] = []

    state = "group_start"
    group_start_off = 0
    t_st = 0.0
    words: list[str] = []
    stray_start: Optional[int] = None
    stray_end = 0

    def flush_stray() -> None:
        nonlocal stray_start
        if stray_start is not None:
            diagnostics.append(
                ParseDiagnostic(stray_start, stray_end, "dropped: stray tokens outside any group")
            )
            stray_start = None

    def fail(offset: int, message: str, expected: Optional[str]) -> None:
        raise SotParseError(offset, message, expected)

    i = 0
    pending_t_ed = 0.0
    while i < len(toks):
        tok, off = toks[i]
        kind, value = _classify(tok)
        end_off = off + len(tok)

        if state == "group_start":
            if kind == _KIND_TS:
                flush_stray()
                state = "first_word"
                group_start_off = off
                t_st = value  # type: ignore[assignment]
                words = []
            else:
                if strict:
                    fail(off, f"expected {_EXPECTED[state]}, found {tok!r}", _EXPECTED[state])
                if stray_start is None:
                    stray_start = off
                stray_end = end_off
            i += 1
            continue

        if kind == _KIND_BAD and strict:
            fail(off, str(value), _EXPECTED[state])

        if state == "first_word":
            if kind == _KIND_WORD:
                words.append(value)  # type: ignore[arg-type]
                state = "words"
                i += 1
                continue
        elif state == "words":
            if kind == _KIND_WORD:
                words.append(value)  # type: ignore[arg-type]
                i += 1
                continue
            if kind == _KIND_TS:
                pending_t_ed = value  # type: ignore[assignment]
                state = "speaker"
                i += 1
                continue
        elif state == "speaker":
            if kind == _KIND_SPK:
                if pending_t_ed <= t_st:
                    if strict:
                        fail(
                            off,
                            f"timestamp-end {pending_t_ed:.2f} must be greater than "
                            f"timestamp-start {t_st:.2f}",
                            None,
                        )
                    diagnostics.append(
                        ParseDiagnostic(
                            group_start_off, end_off, "dropped group: empty time span"
                        )
                    )
                else:
                    segments.append(
                        AttributedSegment(value, t_st, pending_t_ed, tuple(words))
                    )
                state = "group_start"
                i += 1
                continue

        # Mismatch inside a group.
        if strict:
            fail(off, f"expected {_EXPECTED[state]}, found {tok!r}", _EXPECTED[state])
        missing = {
            "first_word": "word",
            "words": "timestamp-end",
            "speaker": "speaker-id",
        }[state]
        if kind == _KIND_TS:
            # The offender can open a new group; drop only what came before.
            diagnostics.append(
                ParseDiagnostic(group_start_off, off, f"dropped group: missing {missing}")
            )
            state = "group_start"
            # Do not advance: reconsider this token as a group start.
        else:
            diagnostics.append(
                ParseDiagnostic(group_start_off, end_off, f"dropped group: missing {missing}")
            )
            state = "group_start"
            i += 1

    if state != "group_start":
        missing = {
            "first_word": "word",
            "words": "timestamp-end",
            "speaker": "speaker-id",
        }[state]
        end = toks[-1][1] + len(toks[-1][0]) if toks else 0
        if strict:
            fail(end, f"unexpected end of input: missing {missing}", missing)
        diagnostics.append(
            ParseDiagnostic(group_start_off, end, f"dropped group: missing {missing}")
        )
    if not strict:
        flush_stray()
    return segments, diagnostics
