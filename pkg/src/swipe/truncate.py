"""Split long documents into ordered segments.

Three strategies:

* ``auto``      - fixed-length sliding window over tokens, optional overlap
* ``punct``     - sentence split at terminator punctuation, greedy merge up
                  to a token cap
* ``structure`` - one segment per pre-segmented unit (e.g. dialogue turn)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from swipe.corpus import Document
from swipe.errors import ConfigError, ValidationError

# Alphanumeric runs stay together; every other non-space character (and the
# underscore) becomes a standalone token.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_", re.UNICODE)

EMPTY_UNIT_TOKEN = "<empty>"

STRATEGIES = ("auto", "punct", "structure")


@dataclass(frozen=True)
class Segment:
    """One truncated piece of a document.

    `char_span` holds character offsets into the source text; for
    structure-based truncation it holds the unit index in both slots.
    """

    doc_id: str
    index: int
    tokens: tuple[str, ...]
    char_span: tuple[int, int]


@dataclass(frozen=True)
class TruncationConfig:
    strategy: str = "auto"
    window_len: int = 64
    overlap: int = 0
    max_seg_len: int = 64
    sentence_terminators: frozenset[str] = field(
        default_factory=lambda: frozenset({".", "!", "?"})
    )

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown truncation strategy: {self.strategy!r}")
        if self.window_len < 1:
            raise ConfigError(f"window_len must be >= 1, got {self.window_len}")
        if self.max_seg_len < 1:
            raise ConfigError(f"max_seg_len must be >= 1, got {self.max_seg_len}")
        if not 0 <= self.overlap < self.window_len:
            raise ConfigError(
                f"overlap must satisfy 0 <= overlap < window_len, "
                f"got overlap={self.overlap} window_len={self.window_len}"
            )


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace/punctuation tokenization. Deterministic."""
    return _TOKEN_RE.findall(text.lower())


def tokenize_with_spans(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Like `tokenize` but also returns (start, end) character offsets."""
    tokens, spans = [], []
    for m in _TOKEN_RE.finditer(text.lower()):
        tokens.append(m.group(0))
        spans.append((m.start(), m.end()))
    return tokens, spans


def truncate(doc: Document, cfg: TruncationConfig) -> list[Segment]:
    """Dispatch to the configured strategy."""
    if cfg.strategy == "auto":
        return truncate_auto(doc, cfg)
    if cfg.strategy == "punct":
        return truncate_punct(doc, cfg)
    return truncate_struct(doc, cfg)


def _make_segments(doc_id, runs, tokens, spans) -> list[Segment]:
    segments = []
    for k, (start, end) in enumerate(runs):
        segments.append(
            Segment(
                doc_id=doc_id,
                index=k,
                tokens=tuple(tokens[start:end]),
                char_span=(spans[start][0], spans[end - 1][1]),
            )
        )
    return segments


def truncate_auto(doc: Document, cfg: TruncationConfig) -> list[Segment]:
    """Sliding window of `window_len` tokens advancing by window - overlap.

    One segment per stride position below the token count, so trailing
    windows shrink as they run out of tokens.
    """
    tokens, spans = tokenize_with_spans(doc.full_text())
    if not tokens:
        raise ValidationError(f"document {doc.id!r} produced no tokens")
    stride = cfg.window_len - cfg.overlap
    runs = [
        (start, min(start + cfg.window_len, len(tokens)))
        for start in range(0, len(tokens), stride)
    ]
    return _make_segments(doc.id, runs, tokens, spans)


def _sentence_runs(tokens: list[str], terminators: frozenset[str]) -> list[tuple[int, int]]:
    """Half-open [start, end) token runs, one per sentence."""
    runs = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok in terminators:
            runs.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        runs.append((start, len(tokens)))
    return runs


def truncate_punct(doc: Document, cfg: TruncationConfig) -> list[Segment]:
    """Sentence split, then greedy merge while staying <= max_seg_len tokens.

    A single sentence longer than the cap is hard-split at max_seg_len; its
    chunks are never merged with neighbouring sentences.
    """
    tokens, spans = tokenize_with_spans(doc.full_text())
    if not tokens:
        raise ValidationError(f"document {doc.id!r} produced no tokens")
    pieces: list[tuple[int, int]] = []
    buf: tuple[int, int] | None = None
    for start, end in _sentence_runs(tokens, cfg.sentence_terminators):
        if end - start > cfg.max_seg_len:
            if buf is not None:
                pieces.append(buf)
                buf = None
            while end - start > cfg.max_seg_len:
                pieces.append((start, start + cfg.max_seg_len))
                start += cfg.max_seg_len
            pieces.append((start, end))
        elif buf is None:
            buf = (start, end)
        elif end - buf[0] <= cfg.max_seg_len:
            buf = (buf[0], end)
        else:
            pieces.append(buf)
            buf = (start, end)
    if buf is not None:
        pieces.append(buf)
    return _make_segments(doc.id, pieces, tokens, spans)


def truncate_struct(doc: Document, cfg: TruncationConfig) -> list[Segment]:
    """One segment per structural unit, order preserved.

    A unit that tokenizes to nothing is kept as a single reserved token so
    segment indices stay aligned with unit-level annotations.
    """
    if not doc.units:
        raise ValidationError(
            f"document {doc.id!r} has no structural units; "
            "use the auto or punct strategy instead"
        )
    segments = []
    for k, unit in enumerate(doc.units):
        tokens = tokenize(unit) or [EMPTY_UNIT_TOKEN]
        segments.append(
            Segment(doc_id=doc.id, index=k, tokens=tuple(tokens), char_span=(k, k))
        )
    return segments
