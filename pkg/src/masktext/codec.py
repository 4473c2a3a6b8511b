"""Serialize semantic grids to descriptor text and parse text back to grids.

Canonical grammar (bit-exact):

    response   := "The result is :\\n" "<seg>" body "</seg>"
    body(rrle) := row ("\\n" row)*
    row        := run (" | " run)*
    run        := label | label " *" count

``full`` renders every cell label with no compression, ``irle`` run-length
encodes the row-major flattening (runs may cross row boundaries), ``rrle``
run-length encodes each row independently with rows joined by newlines.
Labels are UTF-8 and may contain interior spaces; the characters
``| < > *`` and newline are reserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby

import numpy as np

from .grid import LabelVocab, SemanticGrid

SCHEMES = ("full", "irle", "rrle")
RUN_SEP = " | "
COUNT_MARK = " *"
RESPONSE_PREFIX = "The result is :\n"
SEG_OPEN = "<seg>"
SEG_CLOSE = "</seg>"

# Diagnostic kinds
ROW_OVERFLOW = "row-overflow"
ROW_UNDERFLOW = "row-underflow"
MISSING_ROWS = "missing-rows"
EXTRA_ROWS = "extra-rows"
UNKNOWN_LABEL = "unknown-label"
BAD_COUNT = "bad-count"
MISSING_TERMINATOR = "missing-terminator"


@dataclass(frozen=True)
class Diagnostic:
    row: int | None
    kind: str
    detail: str


class ParseError(ValueError):
    """Raised on empty input, missing tags, or strict-mode grammar violations."""

    def __init__(self, message: str, diagnostic: Diagnostic | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class EncodedText:
    scheme: str
    body: str
    rows: int
    cols: int


@dataclass
class DecodeReport:
    grid: SemanticGrid
    repaired: bool
    diagnostics: list[Diagnostic] = field(default_factory=list)


@dataclass(frozen=True)
class TokenStats:
    word_tokens: int
    chars: int
    rows: int
    runs: int


@dataclass(frozen=True)
class ExtractedSeg:
    body: str
    diagnostics: tuple[Diagnostic, ...] = ()


def _render_runs(ids_counts, entries) -> str:
    parts = []
    for label_id, count in ids_counts:
        label = entries[label_id]
        parts.append(label if count == 1 else f"{label}{COUNT_MARK}{count}")
    return RUN_SEP.join(parts)


def _rle(values) -> list[tuple[int, int]]:
    return [(int(v), len(list(g))) for v, g in groupby(values)]


def encode_full(grid: SemanticGrid) -> EncodedText:
    """All rows*cols labels in row-major order joined by ' | '."""
    body = RUN_SEP.join(grid.labels_flat())
    return EncodedText("full", body, grid.rows, grid.cols)


def encode_irle(grid: SemanticGrid) -> EncodedText:
    """Run-length encoding over the whole flattened grid; runs may cross rows."""
    body = _render_runs(_rle(grid.cells.ravel()), grid.vocab.entries)
    return EncodedText("irle", body, grid.rows, grid.cols)


def encode_rrle(grid: SemanticGrid) -> EncodedText:
    """Row-wise run-length encoding; runs never cross rows, rows joined by newline."""
    entries = grid.vocab.entries
    rows = [_render_runs(_rle(row), entries) for row in grid.cells]
    return EncodedText("rrle", "\n".join(rows), grid.rows, grid.cols)


def encode(grid: SemanticGrid, scheme: str) -> EncodedText:
    if scheme == "full":
        return encode_full(grid)
    if scheme == "irle":
        return encode_irle(grid)
    if scheme == "rrle":
        return encode_rrle(grid)
    raise ValueError(f"unknown scheme: {scheme!r}")


class _Parser:
    """Shared machinery for strict / pad-truncate decoding."""

    def __init__(self, vocab: LabelVocab, strict: bool):
        self.vocab = vocab
        self.strict = strict
        self.diagnostics: list[Diagnostic] = []

    def report(self, row: int | None, kind: str, detail: str) -> None:
        diag = Diagnostic(row, kind, detail)
        if self.strict:
            raise ParseError(f"{kind} (row {row}): {detail}", diag)
        self.diagnostics.append(diag)

    def parse_runs(self, segment_text: str, row: int | None) -> list[tuple[int, int]]:
        """Parse a ' | '-separated stretch of runs into (label_id, count) pairs."""
        runs: list[tuple[int, int]] = []
        for seg in segment_text.split(RUN_SEP):
            if not self.strict:
                seg = seg.strip()
            if not seg:
                self.report(row, UNKNOWN_LABEL, "empty descriptor")
                continue
            label, count = seg, 1
            if COUNT_MARK in seg:
                left, _, suffix = seg.rpartition(COUNT_MARK)
                if left and suffix.isascii() and suffix.isdigit():
                    label, count = left, int(suffix)
                    if count < 1:
                        self.report(row, BAD_COUNT, f"count {count} < 1 in {seg!r}")
                        count = 1
                else:
                    self.report(row, BAD_COUNT, f"malformed count in {seg!r}")
                    label, count = left or seg, 1
            if label in self.vocab:
                runs.append((self.vocab.id_of(label), count))
            else:
                self.report(row, UNKNOWN_LABEL, f"unknown label {label!r}")
                runs.append((self.vocab.background_id, count))
        return runs


def decode(text: str, scheme: str, rows: int, cols: int, vocab: LabelVocab,
           repair: str = "pad-truncate") -> DecodeReport:
    """Parse descriptor text into a rows x cols SemanticGrid.

    ``strict`` raises ParseError on the first grammar violation;
    ``pad-truncate`` truncates overflows, pads underflows with the
    background label, maps unknown labels to background, and logs every
    repair as a diagnostic. ``full`` bodies parse as a degenerate RLE
    stream, so counts are tolerated in every scheme.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme: {scheme!r}")
    if repair not in ("strict", "pad-truncate"):
        raise ValueError(f"unknown repair policy: {repair!r}")
    if rows < 1 or cols < 1:
        raise ValueError("grid shape must be at least 1x1")
    if not text or not text.strip():
        raise ParseError("empty descriptor text")

    parser = _Parser(vocab, strict=(repair == "strict"))
    bg = vocab.background_id

    if scheme == "rrle":
        cells = _decode_rows(text, rows, cols, parser, bg)
    else:
        cells = _decode_stream(text, rows, cols, parser, bg)

    grid = SemanticGrid(cells, vocab)
    return DecodeReport(grid, repaired=bool(parser.diagnostics),
                        diagnostics=parser.diagnostics)


def _decode_rows(text: str, rows: int, cols: int, parser: _Parser,
                 bg: int) -> np.ndarray:
    raw_rows = text.split("\n")
    if len(raw_rows) > rows:
        parser.report(rows - 1, EXTRA_ROWS,
                      f"{len(raw_rows)} rows for a {rows}-row grid")
        raw_rows = raw_rows[:rows]
    cells = np.full((rows, cols), bg, dtype=np.int32)
    for r, raw in enumerate(raw_rows):
        if not raw.strip():
            parser.report(r, ROW_UNDERFLOW, "empty row")
            continue
        runs = parser.parse_runs(raw, r)
        total = sum(c for _, c in runs)
        if total > cols:
            parser.report(r, ROW_OVERFLOW,
                          f"row has {total} of {cols} descriptors")
        filled = 0
        for label_id, count in runs:
            if filled >= cols:
                break
            take = min(count, cols - filled)
            cells[r, filled:filled + take] = label_id
            filled += take
        if filled < cols:
            parser.report(r, ROW_UNDERFLOW,
                          f"row has {filled} of {cols} descriptors")
    if len(raw_rows) < rows:
        parser.report(len(raw_rows), MISSING_ROWS,
                      f"{len(raw_rows)} of {rows} rows present")
    return cells


def _decode_stream(text: str, rows: int, cols: int, parser: _Parser,
                   bg: int) -> np.ndarray:
    if "\n" in text:
        parser.report(None, EXTRA_ROWS, "newline in single-line scheme")
        text = text.replace("\n", RUN_SEP)
    runs = parser.parse_runs(text, None)
    target = rows * cols
    total = sum(c for _, c in runs)
    if total > target:
        parser.report(rows - 1, ROW_OVERFLOW,
                      f"sequence has {total} of {target} descriptors")
    flat = np.full(target, bg, dtype=np.int32)
    filled = 0
    for label_id, count in runs:
        if filled >= target:
            break
        take = min(count, target - filled)
        flat[filled:filled + take] = label_id
        filled += take
    if filled < target:
        parser.report(min(filled // cols, rows - 1), ROW_UNDERFLOW,
                      f"sequence has {filled} of {target} descriptors")
    return flat.reshape(rows, cols)


def wrap_response(encoded: EncodedText | str) -> str:
    """Embed an encoded body in the full response template."""
    body = encoded.body if isinstance(encoded, EncodedText) else encoded
    if not body:
        raise ValueError("response body must contain at least one descriptor")
    return f"{RESPONSE_PREFIX}{SEG_OPEN}{body}{SEG_CLOSE}"


def extract_seg(response: str) -> ExtractedSeg:
    """Pull the descriptor body out of a model response.

    Returns the substring between the first <seg> and the next </seg>; a
    missing terminator yields everything after <seg> plus a diagnostic.
    """
    start = response.find(SEG_OPEN)
    if start < 0:
        raise ParseError(f"no {SEG_OPEN} tag in response")
    start += len(SEG_OPEN)
    end = response.find(SEG_CLOSE, start)
    if end < 0:
        diag = Diagnostic(None, MISSING_TERMINATOR, f"no {SEG_CLOSE} tag")
        return ExtractedSeg(response[start:], (diag,))
    return ExtractedSeg(response[start:end])


def token_stats(text: str) -> TokenStats:
    """Counts over raw descriptor text.

    word_tokens is the number of maximal non-whitespace substrings (a cheap
    proxy for LLM subword tokens); rows counts newline-separated lines and
    runs counts ' | '-separated segments across all rows.
    """
    if not text or not text.strip():
        return TokenStats(0, len(text), 0, 0)
    lines = text.split("\n")
    runs = sum(len(line.split(RUN_SEP)) for line in lines)
    return TokenStats(len(text.split()), len(text), len(lines), runs)
