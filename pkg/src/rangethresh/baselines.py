"""Classical adaptive-thresholding baselines over score-vs-range windows.

Each method produces one score threshold per distance window, where a
window is one range bin, so every method shares the locality structure of
the fitted curve and comparisons stay apples-to-apples.  Formulas are the
standard document-binarization forms transplanted to confidence scores:

* Otsu       maximize between-class variance over histogram split edges
* Niblack    T = mean + k*std
* NICK       T = mean + k*sqrt(sum(s^2)/n)
* Bernsen    T = (max+min)/2 above a contrast limit, else a fallback
* Phansalkar T = mean * (1 + p*exp(-q*mean) + k*(std/R - 1))
* Bradley    T = mean * (1 - t/100)

Phansalkar's p defaults to 2.0 rather than the literature's 3.0: the
published constant assumes intensities normalized so the exponential term
decays over a [0, 255]/255 image histogram with typical means near 0.5;
for score data already in [0, 1] with the same q = 10, p = 2.0 keeps the
correction the same relative size at mean 0.5 as the original tuning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .binning import BinConfig, ScoreHistogram, assign_bin, score_histogram
from .detections import DetectionSet, range_of


class DegenerateWindowError(ValueError):
    """Window statistics insufficient for the requested method."""


@dataclass(frozen=True)
class WindowStats:
    """Score statistics of one distance window."""

    mean: float
    std: float
    min_score: float
    max_score: float
    n: int

    @classmethod
    def of(cls, scores: Sequence[float]) -> "WindowStats":
        if not scores:
            raise DegenerateWindowError("empty window")
        n = len(scores)
        mean = sum(scores) / n
        var = sum((s - mean) ** 2 for s in scores) / n
        return cls(mean, math.sqrt(var), min(scores), max(scores), n)


def otsu(hist: ScoreHistogram) -> float:
    """Histogram split edge maximizing between-class variance.

    Candidates are the interior bin edges; ties break toward the lower
    edge.  Needs at least two nonzero histogram bins.
    """
    nonzero = sum(1 for p in hist.mass if p > 0)
    if nonzero < 2:
        raise DegenerateWindowError("otsu needs >= 2 nonzero histogram bins")
    total_mean = sum(r * p for r, p in zip(hist.centers, hist.mass))
    best_var = -1.0
    best_edge = 0.0
    w0 = 0.0
    m0 = 0.0  # running mass-weighted mean numerator of the lower class
    k = len(hist.centers)
    for split in range(1, k):
        w0 += hist.mass[split - 1]
        m0 += hist.centers[split - 1] * hist.mass[split - 1]
        w1 = 1.0 - w0
        if w0 <= 0.0 or w1 <= 0.0:
            continue
        mu0 = m0 / w0
        mu1 = (total_mean - m0) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var + 1e-15:
            best_var = var
            best_edge = split / k  # uniform bins over [0, 1]
    return best_edge


def niblack(w: WindowStats, k: float = -0.2) -> float:
    return w.mean + k * w.std


def nick(scores: Sequence[float], k: float = -0.1) -> float:
    """NICK threshold over the window's raw scores.

    The NICK variance term (sum(s^2) - n*mean^2)/n + mean^2 collapses to
    the plain second raw moment sum(s^2)/n.
    """
    if not scores:
        raise DegenerateWindowError("empty window")
    n = len(scores)
    mean = sum(scores) / n
    raw2 = sum(s * s for s in scores) / n
    return mean + k * math.sqrt(raw2)


def bernsen(w: WindowStats, contrast_limit: float = 0.1,
            fallback: float = 0.5) -> float:
    if (w.max_score - w.min_score) >= contrast_limit:
        return (w.max_score + w.min_score) / 2.0
    return fallback


def phansalkar(w: WindowStats, k: float = 0.25, p: float = 2.0,
               q: float = 10.0, r: float = 0.5) -> float:
    if r <= 0:
        raise ValueError("phansalkar R must be positive")
    return w.mean * (1.0 + p * math.exp(-q * w.mean) + k * (w.std / r - 1.0))


def bradley(w: WindowStats, t_pct: float = 15.0) -> float:
    if not (0.0 <= t_pct < 100.0):
        raise ValueError("bradley t must lie in [0, 100)")
    return w.mean * (1.0 - t_pct / 100.0)


def static_dual(score: float, rng_m: float, near: float = 0.5,
                far: float = 0.3, split: float = 40.0) -> bool:
    """The fixed near/far threshold pair: keep above 0.5 inside the split
    range, above 0.3 at or beyond it."""
    if rng_m < 0:
        raise ValueError("range must be >= 0")
    return score > (near if rng_m < split else far)


def apply_static_dual(dets: DetectionSet, near: float = 0.5, far: float = 0.3,
                      split: float = 40.0, range_mode: str = "bev") -> DetectionSet:
    kept = tuple(d for d in dets
                 if static_dual(d.score, range_of(d, range_mode), near, far, split))
    return DetectionSet(kept, dets.label_set, dets.source)


BASELINE_METHODS = ("otsu", "niblack", "nick", "bernsen", "phansalkar", "bradley")


@dataclass(frozen=True)
class BinnedThreshold:
    """Per-bin threshold table fitted once, then applied as a fixed filter.

    Freezing the table at fit time is what makes the wrapped baseline
    idempotent; recomputing window statistics from already-filtered output
    would not be.  Detections beyond the last bin (or in bins that were
    empty at fit time) use the nearest populated lower bin's threshold.
    """

    cfg: BinConfig
    thresholds: tuple[float | None, ...]  # None where the bin was empty
    method: str
    param: str = ""

    def threshold_at(self, rng_m: float) -> float:
        idx = assign_bin(rng_m, self.cfg)
        if idx is None:
            idx = self.cfg.count - 1
        for i in range(idx, -1, -1):
            if self.thresholds[i] is not None:
                return self.thresholds[i]
        for i in range(idx + 1, self.cfg.count):
            if self.thresholds[i] is not None:
                return self.thresholds[i]
        return 1.0  # no populated window anywhere: keep nothing

    def apply(self, dets: DetectionSet, range_mode: str = "bev") -> DetectionSet:
        kept = tuple(d for d in dets
                     if d.score > self.threshold_at(range_of(d, range_mode)))
        return DetectionSet(kept, dets.label_set, dets.source)


def fit_binned_threshold(dets: DetectionSet, method: str,
                         cfg: BinConfig | None = None,
                         range_mode: str = "bev",
                         hist_bins: int = 256,
                         **params) -> BinnedThreshold:
    """Build the per-bin threshold table for one baseline method.

    Windows that a method cannot handle (empty, or single-valued for Otsu)
    fall back to the global Otsu threshold of the whole score set; if even
    that is degenerate the window is marked unpopulated.
    """
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline method {method!r}")
    cfg = cfg or BinConfig()
    window_scores: list[list[float]] = [[] for _ in range(cfg.count)]
    all_scores = []
    for det in dets:
        idx = assign_bin(range_of(det, range_mode), cfg)
        if idx is not None:
            window_scores[idx].append(det.score)
        all_scores.append(det.score)
    try:
        global_otsu = otsu(score_histogram(all_scores, hist_bins))
    except DegenerateWindowError:
        global_otsu = None
    if method == "bernsen" and "fallback" not in params:
        params = dict(params, fallback=global_otsu if global_otsu is not None else 0.5)

    def window_threshold(scores: list[float]) -> float | None:
        if not scores:
            return None
        if method == "otsu":
            try:
                return otsu(score_histogram(scores, hist_bins))
            except DegenerateWindowError:
                return global_otsu
        if method == "nick":
            return nick(scores, **params)
        w = WindowStats.of(scores)
        if method == "niblack":
            return niblack(w, **params)
        if method == "bernsen":
            return bernsen(w, **params)
        if method == "phansalkar":
            return phansalkar(w, **params)
        return bradley(w, **params)

    thresholds = tuple(window_threshold(s) for s in window_scores)
    param_str = ",".join(f"{k}={v:g}" for k, v in sorted(params.items()))
    return BinnedThreshold(cfg, thresholds, method, param_str)
