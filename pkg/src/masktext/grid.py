"""Label vocabularies, semantic grids, and mask <-> grid conversion.

A pixel mask is a plain 2D integer ndarray (H, W) whose values are label
ids into a :class:`LabelVocab`. A :class:`SemanticGrid` is the coarse
(rows x cols) version of such a mask, i.e. the discrete object that the
text codecs serialize.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import majority_downsample

BACKGROUND_LABEL = "others"

# Characters that would collide with the text grammar (separators, count
# marker, seg tags).
RESERVED_CHARS = frozenset("|<>*\n")


def _check_label(label: str) -> None:
    if not isinstance(label, str) or not label:
        raise ValueError("labels must be non-empty strings")
    if label != label.strip():
        raise ValueError(f"label has leading/trailing whitespace: {label!r}")
    bad = RESERVED_CHARS.intersection(label)
    if bad:
        raise ValueError(f"label {label!r} contains reserved characters {sorted(bad)}")


class LabelVocab:
    """Bidirectional label-string <-> label-id table.

    The background label ``"others"`` is always present; it is appended at
    the end if the given labels do not include it.
    """

    __slots__ = ("entries", "_index", "_background")

    def __init__(self, labels: Sequence[str], background: str = BACKGROUND_LABEL):
        entries = list(labels)
        for label in entries:
            _check_label(label)
        if background not in entries:
            entries.append(background)
        if len(set(entries)) != len(entries):
            raise ValueError("duplicate labels in vocabulary")
        self.entries: tuple[str, ...] = tuple(entries)
        self._index = {s: i for i, s in enumerate(entries)}
        self._background = background

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocab) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return f"LabelVocab({list(self.entries)!r})"

    @property
    def background_id(self) -> int:
        return self._index[self._background]

    @property
    def background_label(self) -> str:
        return self._background

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def id_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label: {label!r}") from None

    def label_of(self, label_id: int) -> str:
        if not 0 <= label_id < len(self.entries):
            raise IndexError(f"label id {label_id} out of range")
        return self.entries[label_id]

    def to_json(self) -> dict:
        return {str(i): s for i, s in enumerate(self.entries)}

    @classmethod
    def from_json(cls, obj) -> "LabelVocab":
        """Accepts either a list of labels or an {id: label} mapping."""
        if isinstance(obj, dict):
            labels = [obj[k] for k in sorted(obj, key=int)]
        else:
            labels = list(obj)
        return cls(labels)


class SemanticGrid:
    """A rows x cols grid of label ids plus the vocabulary they index."""

    __slots__ = ("cells", "vocab")

    def __init__(self, cells: np.ndarray, vocab: LabelVocab):
        cells = np.asarray(cells, dtype=np.int32)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("grid cells must be a non-empty 2D array")
        if cells.min() < 0 or cells.max() >= len(vocab):
            raise ValueError("grid contains label ids outside the vocabulary")
        self.cells = cells
        self.vocab = vocab

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def labels_flat(self) -> list[str]:
        """Row-major cell labels as strings."""
        entries = self.vocab.entries
        return [entries[i] for i in self.cells.ravel()]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SemanticGrid)
            and self.vocab.entries == other.vocab.entries
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )

    def __repr__(self) -> str:
        return f"SemanticGrid({self.rows}x{self.cols}, vocab={len(self.vocab)})"


def _as_index_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("mask must be a non-empty 2D array")
    return arr.astype(np.int32, copy=False)


def cell_edges(n_pixels: int, n_cells: int) -> np.ndarray:
    """Floor-partitioned cell boundaries: cell r covers [edges[r], edges[r+1])."""
    return (np.arange(n_cells + 1, dtype=np.int64) * n_pixels) // n_cells


def downsample_mask(mask, rows: int, cols: int, vocab: LabelVocab,
                    policy: str = "majority") -> SemanticGrid:
    """Reduce a pixel mask to a rows x cols grid of label ids.

    Each cell covers a floor-partitioned pixel rectangle. ``majority``
    assigns the most frequent label id in the cell (ties go to the smallest
    id); ``center-sample`` takes the label of the cell's center pixel.
    """
    arr = _as_index_mask(mask)
    if rows < 1 or cols < 1:
        raise ValueError("grid shape must be at least 1x1")
    if arr.min() < 0 or arr.max() >= len(vocab):
        raise ValueError("mask contains label ids outside the vocabulary")
    h, w = arr.shape
    row_edges = cell_edges(h, rows)
    col_edges = cell_edges(w, cols)
    if np.any(np.diff(row_edges) == 0) or np.any(np.diff(col_edges) == 0):
        raise ValueError(f"grid {rows}x{cols} larger than mask {h}x{w}")

    if policy == "majority":
        cells = majority_downsample(arr, row_edges, col_edges, len(vocab))
    elif policy in ("center-sample", "center"):
        cy = row_edges[:-1] + (row_edges[1:] - row_edges[:-1]) // 2
        cx = col_edges[:-1] + (col_edges[1:] - col_edges[:-1]) // 2
        cells = arr[np.ix_(cy, cx)]
    else:
        raise ValueError(f"unknown downsample policy: {policy!r}")
    return SemanticGrid(cells, vocab)


def upsample_grid(grid: SemanticGrid, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor expansion of a grid to a (height, width) pixel mask.

    Pixel (x, y) takes cell (floor(y*rows/height), floor(x*cols/width)).
    """
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    ys = (np.arange(height, dtype=np.int64) * grid.rows) // height
    xs = (np.arange(width, dtype=np.int64) * grid.cols) // width
    return grid.cells[np.ix_(ys, xs)].astype(np.int32)


def resize_mask_nearest(mask, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resize of a pixel mask (same mapping as upsample_grid)."""
    arr = _as_index_mask(mask)
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    h, w = arr.shape
    ys = (np.arange(height, dtype=np.int64) * h) // height
    xs = (np.arange(width, dtype=np.int64) * w) // width
    return arr[np.ix_(ys, xs)]


def binary_mask(source, target_id: int) -> np.ndarray:
    """Indicator mask: 1 where the label id equals target_id, else 0.

    ``source`` is a SemanticGrid (cells are compared, the id is validated
    against its vocab) or a plain 2D index mask.
    """
    if isinstance(source, SemanticGrid):
        if not 0 <= target_id < len(source.vocab):
            raise ValueError(f"label id {target_id} not in vocabulary")
        values = source.cells
    else:
        values = _as_index_mask(source)
        if target_id < 0:
            raise ValueError(f"label id {target_id} is negative")
    return (values == target_id).astype(np.uint8)


# --- PNG + sidecar JSON persistence -----------------------------------------
#
# Index masks are stored as 8-bit single-channel PNG (pixel value = label id)
# with an optional sidecar JSON mapping ids to label strings.


def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_mask(path, mask, vocab: LabelVocab | None = None) -> None:
    from PIL import Image

    arr = _as_index_mask(mask)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("PNG masks support label ids 0..255 only")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(Path(path), format="PNG")
    if vocab is not None:
        _sidecar_path(path).write_text(json.dumps(vocab.to_json(), indent=0))


def read_mask(path) -> tuple[np.ndarray, LabelVocab | None]:
    from PIL import Image

    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.int32)
    sidecar = _sidecar_path(path)
    vocab = None
    if sidecar.exists():
        vocab = LabelVocab.from_json(json.loads(sidecar.read_text()))
    return arr, vocab


def load_vocab(path) -> LabelVocab:
    return LabelVocab.from_json(json.loads(Path(path).read_text()))


def labels_present(mask, vocab: LabelVocab) -> list[int]:
    """Label ids occurring in the mask, in ascending order."""
    arr = _as_index_mask(mask)
    ids = np.unique(arr)
    if ids[0] < 0 or ids[-1] >= len(vocab):
        raise ValueError("mask contains label ids outside the vocabulary")
    return [int(i) for i in ids]
