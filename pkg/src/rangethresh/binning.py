"""Distance binning and per-interval confidence statistics.

Detections are pooled into half-open 10 m range intervals [lower, upper).
Per bin we keep the count, the mean score, and the population standard
deviation about that mean.  A normalized score histogram with the
mean/deviation read off it is also provided; window-style thresholding
methods consume both forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .detections import DetectionSet, range_of


@dataclass(frozen=True)
class BinConfig:
    """Uniform range binning: ``count`` intervals of ``width`` from ``origin``."""

    origin: float = 0.0
    width: float = 10.0
    count: int = 6

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bin width must be positive")
        if self.count < 1:
            raise ValueError("bin count must be >= 1")
        if self.origin < 0:
            raise ValueError("bin origin must be >= 0")

    def center(self, index: int) -> float:
        return self.origin + (index + 0.5) * self.width

    def span(self) -> float:
        return self.origin + self.count * self.width


@dataclass(frozen=True)
class BinStats:
    """Statistics of one range interval; mean/std are None when empty."""

    bin_index: int
    lower: float
    upper: float
    n: int
    mean_score: float | None
    std_score: float | None


class BinnedStats(NamedTuple):
    bins: tuple[BinStats, ...]
    overflow: int


def assign_bin(rng_m: float, cfg: BinConfig) -> int | None:
    """Bin index for a range, or None for ranges outside the binned span.

    Intervals are half-open, so ``origin + i*width`` belongs to bin i and
    the upper edge of the last bin is already overflow.
    """
    if rng_m < 0:
        raise ValueError("range must be >= 0")
    if rng_m < cfg.origin:
        return None
    index = int(math.floor((rng_m - cfg.origin) / cfg.width))
    if index >= cfg.count:
        return None
    return index


def bin_statistics(dets: DetectionSet, cfg: BinConfig | None = None,
                   range_mode: str = "bev") -> BinnedStats:
    """Per-bin count, mean and population std of detection scores.

    Summation runs in input order so results are deterministic.  Detections
    outside the binned span are excluded from every bin and reported in the
    ``overflow`` count.
    """
    cfg = cfg or BinConfig()
    scores: list[list[float]] = [[] for _ in range(cfg.count)]
    overflow = 0
    for det in dets:
        idx = assign_bin(range_of(det, range_mode), cfg)
        if idx is None:
            overflow += 1
        else:
            scores[idx].append(det.score)
    bins = []
    for i, vals in enumerate(scores):
        lower = cfg.origin + i * cfg.width
        upper = lower + cfg.width
        if not vals:
            bins.append(BinStats(i, lower, upper, 0, None, None))
            continue
        n = len(vals)
        mean = sum(vals) / n
        var = sum((v - mean) ** 2 for v in vals) / n
        bins.append(BinStats(i, lower, upper, n, mean, math.sqrt(var)))
    return BinnedStats(tuple(bins), overflow)


@dataclass(frozen=True)
class ScoreHistogram:
    """Normalized histogram of scores over [0, 1].

    ``centers[i]`` is the midpoint of bin i; ``mass`` sums to 1 for nonempty
    input and is all-zero (``empty`` flag set) otherwise.  Score 1.0 lands in
    the top bin.
    """

    centers: tuple[float, ...]
    mass: tuple[float, ...]

    @property
    def empty(self) -> bool:
        return not any(self.mass)


def score_histogram(scores: Sequence[float], bins: int = 256) -> ScoreHistogram:
    """Histogram scores in [0, 1] into ``bins`` uniform cells, mass-normalized."""
    if bins < 1:
        raise ValueError("histogram needs at least one bin")
    counts = [0] * bins
    for s in scores:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"score {s} outside [0, 1]")
        counts[min(int(s * bins), bins - 1)] += 1
    total = len(scores)
    centers = tuple((i + 0.5) / bins for i in range(bins))
    if total == 0:
        return ScoreHistogram(centers, tuple(0.0 for _ in range(bins)))
    return ScoreHistogram(centers, tuple(c / total for c in counts))


def histogram_mean(hist: ScoreHistogram) -> float:
    """First moment sum(r_i * p_i) of a nonempty histogram."""
    if hist.empty:
        raise ValueError("histogram is empty")
    return sum(r * p for r, p in zip(hist.centers, hist.mass))


def histogram_std(hist: ScoreHistogram, literal_first_moment: bool = False) -> float:
    """Spread of a nonempty histogram about its mean.

    The default is the square root of the second central moment,
    sqrt(sum((r_i - m)^2 * p_i)).  ``literal_first_moment=True`` instead
    returns the signed first central moment sum((r_i - m) * p_i), which is
    identically zero up to rounding; it exists only so the uncorrected
    variant can be audited against the corrected one.
    """
    if hist.empty:
        raise ValueError("histogram is empty")
    m = histogram_mean(hist)
    if literal_first_moment:
        return sum((r - m) * p for r, p in zip(hist.centers, hist.mass))
    return math.sqrt(sum((r - m) ** 2 * p for r, p in zip(hist.centers, hist.mass)))


def bin_stats_csv(stats: BinnedStats | Sequence[BinStats]) -> str:
    """Render bin statistics as CSV: ``bin_index,lower,upper,n,mean,std``."""
    bins = stats.bins if isinstance(stats, BinnedStats) else stats
    lines = ["bin_index,lower,upper,n,mean,std"]
    for b in bins:
        mean = "" if b.mean_score is None else repr(b.mean_score)
        std = "" if b.std_score is None else repr(b.std_score)
        lines.append(f"{b.bin_index},{b.lower!r},{b.upper!r},{b.n},{mean},{std}")
    return "\n".join(lines) + "\n"
