"""Mask refiners: dense-CRF mean field and the iterative point-prompt loop.

Both take a coarse two-valued mask (typically an upsampled semantic grid)
and return a pixel-accurate two-valued mask. The point-prompt loop drives a
pluggable external model through an ExternalRefiner adapter; no neural
model ships here.
"""

from __future__ import annotations

import json
import math
import subprocess
import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._kernels import crf_mean_field
from .grid import resize_mask_nearest


@dataclass(frozen=True)
class CrfParams:
    """Two-kernel dense-CRF settings.

    Defaults follow the published defaults of the cited dense-CRF
    implementation family: appearance kernel weight 10 with 80px spatial /
    13 color stddev, smoothness kernel weight 3 with 3px stddev, 5 mean
    field iterations. unary_confidence is the probability assigned to the
    coarse mask's label when building the unary term.
    """

    bilateral_weight: float = 10.0
    bilateral_stddev: float = 80.0
    color_stddev: float = 13.0
    gaussian_weight: float = 3.0
    gaussian_stddev: float = 3.0
    iterations: int = 5
    unary_confidence: float = 0.7

    def __post_init__(self):
        if self.bilateral_stddev <= 0 or self.gaussian_stddev <= 0 or self.color_stddev <= 0:
            raise ValueError("kernel stddevs must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.5 < self.unary_confidence < 1.0:
            raise ValueError("unary_confidence must lie in (0.5, 1)")


def _as_binary(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("mask must be a non-empty 2D array")
    return (arr != 0).astype(np.uint8)


def _as_rgb(rgb) -> np.ndarray:
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("rgb image must have shape (H, W, 3)")
    return arr.astype(np.float32)


def crf_unary(coarse: np.ndarray, confidence: float) -> np.ndarray:
    """(2, H, W) negative log-probabilities from a hard two-valued mask."""
    fg = coarse.astype(bool)
    u_hit = -math.log(confidence)
    u_miss = -math.log(1.0 - confidence)
    unary = np.empty((2,) + coarse.shape, dtype=np.float32)
    unary[0] = np.where(fg, u_miss, u_hit)  # label 0 = background
    unary[1] = np.where(fg, u_hit, u_miss)  # label 1 = foreground
    return unary


def crf_mean_field_q(rgb, coarse, params: CrfParams,
                     iterations: int | None = None) -> np.ndarray:
    """Label distribution (2, H, W) after mean-field inference."""
    image = _as_rgb(rgb)
    mask = _as_binary(coarse)
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} dimensions differ")
    unary = crf_unary(mask, params.unary_confidence)
    iters = params.iterations if iterations is None else iterations
    return np.asarray(crf_mean_field(
        unary, np.ascontiguousarray(image),
        params.bilateral_weight, params.bilateral_stddev, params.color_stddev,
        params.gaussian_weight, params.gaussian_stddev, iters))


def crf_refine(rgb, coarse, params: CrfParams | None = None) -> np.ndarray:
    """Mean-field refinement of a coarse two-valued mask against the image.

    Unary potentials come from the coarse mask at params.unary_confidence;
    pairwise potentials are a Potts model with appearance (bilateral) and
    smoothness (Gaussian) kernels. Returns the per-pixel argmax.
    """
    params = params or CrfParams()
    q = crf_mean_field_q(rgb, coarse, params)
    return (q[1] > q[0]).astype(np.uint8)


def mask_to_logits(mask, epsilon: float = 1e-3) -> np.ndarray:
    """Inverse-sigmoid logits of a two-valued mask.

    Foreground maps to logit(1 - epsilon) and background to logit(epsilon),
    with logit(p) = ln(p / (1 - p)); epsilon keeps the transform finite.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    arr = _as_binary(mask)
    hi = math.log((1.0 - epsilon) / epsilon)
    return np.where(arr != 0, hi, -hi).astype(np.float32)


@dataclass(frozen=True)
class PointPrompts:
    """Point prompts in (x, y) pixel coordinates.

    ``shortage`` is set when a side had fewer pixels than requested and was
    returned in full.
    """

    positives: tuple[tuple[int, int], ...]
    negatives: tuple[tuple[int, int], ...]
    shortage: bool = False


def sample_point_prompts(mask, n_pos: int = 10, n_neg: int = 10,
                         seed=None) -> PointPrompts:
    """Uniform sampling without replacement from foreground and background.

    Deterministic given the seed. A side with fewer pixels than requested
    is returned whole and flagged; an entirely one-valued mask still
    yields prompts for the populated side.
    """
    arr = _as_binary(mask)
    fg_ys, fg_xs = np.nonzero(arr)
    bg_ys, bg_xs = np.nonzero(arr == 0)
    if len(fg_ys) == 0 and len(bg_ys) == 0:
        raise ValueError("mask has no pixels to sample")
    rng = np.random.default_rng(seed)

    def pick(xs, ys, n):
        if len(xs) <= n:
            idx = np.arange(len(xs))
            short = len(xs) < n
        else:
            idx = rng.choice(len(xs), size=n, replace=False)
            short = False
        return tuple((int(xs[i]), int(ys[i])) for i in idx), short

    pos, pos_short = pick(fg_xs, fg_ys, n_pos)
    neg, neg_short = pick(bg_xs, bg_ys, n_neg)
    return PointPrompts(pos, neg, shortage=pos_short or neg_short)


class RefinerError(RuntimeError):
    """External refiner failure, tagged with the round that failed."""

    def __init__(self, round_index: int, cause: Exception):
        super().__init__(f"external refiner failed in round {round_index}: {cause}")
        self.round_index = round_index


class ExternalRefiner(ABC):
    """One round of point-prompted refinement by an external model."""

    @abstractmethod
    def refine(self, rgb: np.ndarray, prompts: PointPrompts,
               logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (two-valued mask, updated logit map)."""


class IdentityRefiner(ExternalRefiner):
    """Fixed point: thresholds the incoming logits, leaves them unchanged."""

    def refine(self, rgb, prompts, logits):
        return (logits > 0).astype(np.uint8), logits


class CallableRefiner(ExternalRefiner):
    """Wraps a plain function (rgb, prompts, logits) -> (mask, logits);
    counts calls, which makes protocol tests trivial."""

    def __init__(self, fn: Callable):
        self.fn = fn
        self.calls = 0
        self.prompt_log: list[PointPrompts] = []

    def refine(self, rgb, prompts, logits):
        self.calls += 1
        self.prompt_log.append(prompts)
        return self.fn(rgb, prompts, logits)


class SubprocessRefiner(ExternalRefiner):
    """Adapter speaking the JSON file protocol to an external command.

    Request (stdin):  {"image_path", "points": {"pos": [[x,y]...],
                       "neg": [[x,y]...]}, "logits_path"}
    Response (stdout): {"mask_path", "logits_path"}
    Logit rasters are float32 .npy files; masks are single-channel PNGs.
    """

    def __init__(self, command: list[str]):
        self.command = list(command)

    def refine(self, rgb, prompts, logits):
        from PIL import Image

        with tempfile.TemporaryDirectory(prefix="masktext-refine-") as tmp:
            tmp = Path(tmp)
            image_path = tmp / "image.png"
            logits_path = tmp / "logits.npy"
            Image.fromarray(np.asarray(rgb).astype(np.uint8)).save(image_path)
            np.save(logits_path, logits.astype(np.float32))
            request = {
                "image_path": str(image_path),
                "points": {
                    "pos": [list(p) for p in prompts.positives],
                    "neg": [list(p) for p in prompts.negatives],
                },
                "logits_path": str(logits_path),
            }
            proc = subprocess.run(
                self.command, input=json.dumps(request).encode(),
                stdout=subprocess.PIPE, check=True)
            response = json.loads(proc.stdout.decode())
            with Image.open(response["mask_path"]) as im:
                mask = (np.asarray(im.convert("L")) != 0).astype(np.uint8)
            new_logits = np.load(response["logits_path"]).astype(np.float32)
        return mask, new_logits


def external_refine_loop(adapter: ExternalRefiner, rgb, coarse,
                         rounds: int = 3, seed=None, n_pos: int = 10,
                         n_neg: int = 10, epsilon: float = 1e-3) -> np.ndarray:
    """Iterative point-prompted refinement.

    Each round samples fresh prompts from the current mask, passes them
    with the current logit map and the image to the adapter, and adopts the
    returned mask and logits. The final mask is resized back to the input
    dimensions. With the identity adapter the coarse mask is a fixed point.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    image = _as_rgb(rgb)
    mask = _as_binary(coarse)
    h, w = mask.shape
    logits = mask_to_logits(mask, epsilon)
    seeds = np.random.SeedSequence(seed).spawn(rounds)
    for k in range(rounds):
        prompts = sample_point_prompts(mask, n_pos, n_neg, seed=seeds[k])
        try:
            mask, logits = adapter.refine(image, prompts, logits)
        except Exception as exc:  # noqa: BLE001 - adapter boundary
            raise RefinerError(k, exc) from exc
        mask = _as_binary(mask)
    if mask.shape != (h, w):
        mask = resize_mask_nearest(mask, w, h).astype(np.uint8)
    return mask
