"""Distance-adaptive threshold curve: fitting, calibration, decision rule.

The threshold is a quadratic in range, T(d) = a*d^2 + b*d + c, fitted by
weighted least squares to per-bin targets and clamped from below by a
floor so the curve can never admit arbitrarily low-confidence detections
at long range.  Beyond the fit's validity range the curve is frozen at its
last value rather than allowed to swing back up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .binning import BinConfig, BinStats, BinnedStats
from .detections import DetectionSet, range_of


class DegenerateFitError(ValueError):
    """Fewer than three distinct abscissae, or a singular normal system."""


class CalibrationError(ValueError):
    """Not enough populated bins to calibrate a curve."""


@dataclass(frozen=True)
class RuleParams:
    """Multipliers of the dual-condition keep rule and of target building."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")


@dataclass(frozen=True)
class ThresholdCurve:
    """Quadratic score threshold over range with floor clamp and validity range.

    ``evaluate(d)`` freezes the polynomial at ``d_max`` for larger ranges and
    clamps the result into [floor_k, 1].
    """

    a: float
    b: float
    c: float
    floor_k: float = 0.2
    d_max: float = 60.0

    def __post_init__(self):
        if not (0.0 <= self.floor_k <= 1.0):
            raise ValueError("floor_k must lie in [0, 1]")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")

    def evaluate(self, d: float) -> float:
        if d < 0:
            raise ValueError("range must be >= 0")
        dd = min(d, self.d_max)
        t = (self.a * dd + self.b) * dd + self.c
        return min(max(t, self.floor_k), 1.0)


def _solve3(mat: list[list[float]], vec: list[float]) -> list[float]:
    """Solve a 3x3 system by Gaussian elimination with partial pivoting."""
    aug = [row[:] + [v] for row, v in zip(mat, vec)]
    scale = max(abs(e) for row in mat for e in row)
    for col in range(3):
        pivot = max(range(col, 3), key=lambda r: abs(aug[r][col]))
        if abs(aug[pivot][col]) <= 1e-13 * scale:
            raise DegenerateFitError("singular normal equations")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        for row in range(col + 1, 3):
            f = aug[row][col] / aug[col][col]
            for c in range(col, 4):
                aug[row][c] -= f * aug[col][c]
    x = [0.0, 0.0, 0.0]
    for row in range(2, -1, -1):
        x[row] = (aug[row][3] - sum(aug[row][c] * x[c] for c in range(row + 1, 3))) / aug[row][row]
    return x


def _weighted_poly_fit(ds: Sequence[float], ts: Sequence[float],
                       ws: Sequence[float], degree: int) -> list[float]:
    """Weighted LSQ polynomial coefficients (constant term first).

    The abscissae are centered and scaled before forming the normal
    equations, and the solution is polished with two iterative-refinement
    steps; both are needed to recover exact-quadratic data to well below
    1e-9 despite the Vandermonde conditioning.
    """
    wsum = sum(ws)
    mu = sum(w * d for d, w in zip(ds, ws)) / wsum
    s = max(abs(d - mu) for d in ds)
    if s == 0:
        raise DegenerateFitError("all abscissae coincide")
    us = [(d - mu) / s for d in ds]
    m = degree + 1
    mat = [[0.0] * m for _ in range(m)]
    vec = [0.0] * m
    for u, t, w in zip(us, ts, ws):
        basis = [1.0]
        for _ in range(degree):
            basis.append(basis[-1] * u)
        for i in range(m):
            vec[i] += w * basis[i] * t
            for j in range(m):
                mat[i][j] += w * basis[i] * basis[j]
    if degree == 2:
        x = _solve3(mat, vec)
        for _ in range(2):
            resid = [vec[i] - sum(mat[i][j] * x[j] for j in range(3)) for i in range(3)]
            x = [xi + di for xi, di in zip(x, _solve3(mat, resid))]
        c2, b2, a2 = x
        a = a2 / (s * s)
        return [c2 - b2 * mu / s + a2 * (mu / s) ** 2, b2 / s - 2.0 * a2 * mu / (s * s), a]
    if degree == 1:
        det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
        if abs(det) <= 1e-13 * max(abs(mat[0][0]), abs(mat[1][1])) ** 2:
            raise DegenerateFitError("singular normal equations")
        b1 = (mat[0][0] * vec[1] - mat[1][0] * vec[0]) / det
        c1 = (vec[0] - mat[0][1] * b1) / mat[0][0]
        return [c1 - b1 * mu / s, b1 / s]
    return [vec[0] / mat[0][0]]


def _check_points(points, weights, min_distinct):
    if weights is None:
        weights = [1.0] * len(points)
    if len(weights) != len(points):
        raise ValueError("weights must match points in length")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    distinct = len({d for d, _ in points})
    if distinct < min_distinct:
        raise DegenerateFitError(
            f"need >= {min_distinct} distinct abscissae, got {distinct}"
        )
    return weights


def fit_quadratic(points: Sequence[tuple[float, float]],
                  weights: Sequence[float] | None = None,
                  floor_k: float = 0.2) -> ThresholdCurve:
    """Weighted least-squares quadratic threshold curve through (d, t) points.

    Needs at least three distinct abscissae; d_max is the largest abscissa.
    """
    weights = _check_points(points, weights, 3)
    ds = [p[0] for p in points]
    ts = [p[1] for p in points]
    c, b, a = _weighted_poly_fit(ds, ts, weights, 2)
    return ThresholdCurve(a, b, c, floor_k, max(ds))


def fit_linear(points: Sequence[tuple[float, float]],
               weights: Sequence[float] | None = None,
               floor_k: float = 0.2) -> ThresholdCurve:
    """Linear fallback with the same contract shape (a is fixed at 0)."""
    weights = _check_points(points, weights, 2)
    ds = [p[0] for p in points]
    c, b = _weighted_poly_fit(ds, [p[1] for p in points], weights, 1)
    return ThresholdCurve(0.0, b, c, floor_k, max(ds))


def fit_constant(points: Sequence[tuple[float, float]],
                 weights: Sequence[float] | None = None,
                 floor_k: float = 0.2) -> ThresholdCurve:
    """Constant fallback: the weighted mean target."""
    weights = _check_points(points, weights, 1)
    ds = [p[0] for p in points]
    c, = _weighted_poly_fit(ds, [p[1] for p in points], weights, 0)
    return ThresholdCurve(0.0, 0.0, c, floor_k, max(ds))


TargetPolicy = Callable[[BinStats, RuleParams], float]


def band_lower_target(stats: BinStats, params: RuleParams) -> float:
    """Default per-bin target: clamp(beta*mean - alpha*std, 0, 1)."""
    t = params.beta * stats.mean_score - params.alpha * stats.std_score
    return min(max(t, 0.0), 1.0)


def calibrate(stats: BinnedStats | Sequence[BinStats],
              params: RuleParams = RuleParams(),
              floor_k: float = 0.2,
              cfg: BinConfig | None = None,
              target_policy: TargetPolicy = band_lower_target) -> ThresholdCurve:
    """Fit the threshold curve from per-bin statistics.

    Targets are built at the bin centers by ``target_policy`` (by default the
    mean-minus-deviation lower confidence band scaled by beta and alpha) and
    weighted by the bin counts.  Requires at least three populated bins.
    """
    bins = stats.bins if isinstance(stats, BinnedStats) else tuple(stats)
    cfg = cfg or BinConfig()
    points, weights = [], []
    for b in bins:
        if b.n == 0:
            continue
        center = (b.lower + b.upper) / 2.0
        points.append((center, target_policy(b, params)))
        weights.append(float(b.n))
    if len(points) < 3:
        raise CalibrationError(
            f"calibration needs >= 3 populated bins, got {len(points)}"
        )
    return fit_quadratic(points, weights, floor_k)


def decide(score: float, mean: float, deviation: float,
           params: RuleParams = RuleParams()) -> bool:
    """Dual-condition keep rule with strict inequalities.

    Keeps a detection exactly when its score exceeds both alpha*deviation
    and beta*mean.
    """
    return score > params.alpha * deviation and score > params.beta * mean


def eval_threshold(curve: ThresholdCurve, d: float) -> float:
    """Threshold at range d; see ThresholdCurve.evaluate."""
    return curve.evaluate(d)


def apply_curve(dets: DetectionSet, curve: ThresholdCurve,
                range_mode: str = "bev") -> DetectionSet:
    """Keep exactly the detections whose score exceeds the curve at their range.

    Order preserving and idempotent.  The threshold evaluation is batched
    with the same operation order as ``ThresholdCurve.evaluate``, so both
    paths make identical keep decisions bit for bit.
    """
    n = len(dets.records)
    ranges = np.fromiter((range_of(d, range_mode) for d in dets.records),
                         dtype=float, count=n)
    scores = np.fromiter((d.score for d in dets.records), dtype=float, count=n)
    dd = np.minimum(ranges, curve.d_max)
    thr = np.clip((curve.a * dd + curve.b) * dd + curve.c, curve.floor_k, 1.0)
    keep = scores > thr
    kept = tuple(d for d, k in zip(dets.records, keep) if k)
    return DetectionSet(kept, dets.label_set, dets.source)


def prefilter_static_dual(dets: DetectionSet, near: float = 0.5,
                          far: float = 0.3, split: float = 40.0,
                          range_mode: str = "bev") -> DetectionSet:
    """Static dual-threshold pass used ahead of calibration.

    Interval statistics are computed on the survivors of a near/far static
    filter; feeding raw clutter-heavy detections into calibration instead
    drags every per-bin target toward the clutter mode.
    """
    kept = tuple(
        d for d in dets
        if d.score > (near if range_of(d, range_mode) < split else far)
    )
    return DetectionSet(kept, dets.label_set, dets.source)


def serialize_curve(curve: ThresholdCurve) -> str:
    """One-line text record ``a,b,c,floor_k,d_max``, 17 significant digits."""
    vals = (curve.a, curve.b, curve.c, curve.floor_k, curve.d_max)
    return ",".join(format(v, ".17g") for v in vals) + "\n"


def parse_curve(text: str) -> ThresholdCurve:
    line = text.strip()
    parts = line.split(",")
    if len(parts) != 5:
        raise ValueError(f"curve record needs 5 fields, got {len(parts)}")
    a, b, c, floor_k, d_max = (float(p) for p in parts)
    return ThresholdCurve(a, b, c, floor_k, d_max)


def load_curve(path) -> ThresholdCurve:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_curve(fh.read())


def save_curve(path, curve: ThresholdCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_curve(curve))
