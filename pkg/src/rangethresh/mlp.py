"""Small feed-forward threshold predictor.

A 3-16-16-1 network (tanh hidden units, logistic output) maps a feature
triple -- range normalized by the curve's validity limit, plus the mean and
deviation of the detection's range bin -- to a score threshold in (0, 1).
Training is full-batch gradient descent on the mean squared error with a
halving-on-increase step control: a proposed step that raises the loss is
retried at half the rate, so the recorded loss trace is non-increasing by
construction and the result is bit-reproducible from (seed, samples,
config) with no optimizer state to tune.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binning import BinConfig, BinnedStats
from .curve import ThresholdCurve
from .detections import DetectionSet, range_of
from .rng import Rng


class TrainingError(RuntimeError):
    """Loss became non-finite despite the step control."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class TrainSample:
    features: tuple[float, float, float]
    target: float

    def __post_init__(self):
        if not all(math.isfinite(f) for f in self.features):
            raise ValueError("features must be finite")
        if not (0.0 <= self.target <= 1.0):
            raise ValueError("target must lie in [0, 1]")


@dataclass(frozen=True)
class MlpModel:
    """Layer sizes plus per-layer weight matrices (fan_in rows) and biases."""

    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError("parameter shapes do not chain with layer sizes")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")


DEFAULT_SIZES = (3, 16, 16, 1)


def init_model(seed: int, sizes: Sequence[int] = DEFAULT_SIZES) -> MlpModel:
    """Deterministic init: layer by layer, weights row-major then biases,
    uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    rng = Rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / math.sqrt(fan_in)
        w = np.array([[rng.uniform(-lim, lim) for _ in range(fan_out)]
                      for _ in range(fan_in)])
        b = np.array([rng.uniform(-lim, lim) for _ in range(fan_out)])
        weights.append(w)
        biases.append(b)
    return MlpModel(tuple(sizes), tuple(weights), tuple(biases))


def zero_model(sizes: Sequence[int] = DEFAULT_SIZES) -> MlpModel:
    weights = tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(b) for b in sizes[1:])
    return MlpModel(tuple(sizes), weights, biases)


def _forward_batch(model: MlpModel, x: np.ndarray):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = np.tanh(z) if i < last else 1.0 / (1.0 + np.exp(-z))
        acts.append(h)
    return h, acts


def forward(model: MlpModel, features: Sequence[float]) -> float:
    """Predicted threshold for one feature vector; always in (0, 1)."""
    x = np.asarray(features, dtype=float)
    if x.shape != (model.sizes[0],):
        raise ValueError(
            f"expected {model.sizes[0]} features, got {x.shape}"
        )
    out, _ = _forward_batch(model, x[None, :])
    return float(out[0, 0])


def _loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    out, acts = _forward_batch(model, x)
    n = len(x)
    resid = out - y
    loss = float((resid ** 2).mean())
    delta = (2.0 / n) * resid * out * (1.0 - out)
    g_w = [None] * len(model.weights)
    g_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, g_w, g_b


def _samples_to_arrays(samples: Sequence[TrainSample]):
    x = np.array([s.features for s in samples], dtype=float)
    y = np.array([[s.target] for s in samples], dtype=float)
    return x, y


def train(model: MlpModel, samples: Sequence[TrainSample],
          config: TrainConfig = TrainConfig()) -> tuple[MlpModel, tuple[float, ...]]:
    """Fit the model to the samples; returns the model and the loss trace.

    One epoch is one accepted full-batch step.  The step size only ever
    shrinks; if it underflows the model has converged and training stops
    early with the trace recorded so far.
    """
    if not samples:
        raise ValueError("training needs at least one sample")
    x, y = _samples_to_arrays(samples)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    current = MlpModel(model.sizes, tuple(weights), tuple(biases))
    loss, g_w, g_b = _loss_and_grads(current, x, y)
    if not math.isfinite(loss):
        raise TrainingError("initial loss is non-finite")
    trace = [loss]
    lr = config.learning_rate
    for _ in range(config.epochs):
        stepped = False
        while lr > 1e-15:
            cand = MlpModel(
                current.sizes,
                tuple(w - lr * g for w, g in zip(current.weights, g_w)),
                tuple(b - lr * g for b, g in zip(current.biases, g_b)),
            )
            new_loss, new_g_w, new_g_b = _loss_and_grads(cand, x, y)
            if math.isfinite(new_loss) and new_loss <= loss:
                current, loss, g_w, g_b = cand, new_loss, new_g_w, new_g_b
                trace.append(loss)
                stepped = True
                break
            lr *= 0.5
        if not stepped:
            if not math.isfinite(loss):
                raise TrainingError("loss diverged despite step control")
            break  # flat to machine precision: converged
    return current, tuple(trace)


def _flatten(model: MlpModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def _unflatten(model: MlpModel, theta: np.ndarray) -> MlpModel:
    weights, biases = [], []
    pos = 0
    for w, b in zip(model.weights, model.biases):
        weights.append(theta[pos:pos + w.size].reshape(w.shape))
        pos += w.size
        biases.append(theta[pos:pos + b.size])
        pos += b.size
    return MlpModel(model.sizes, tuple(weights), tuple(biases))


def gradient_check(model: MlpModel, samples: Sequence[TrainSample],
                   step: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    Relative error per parameter is |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-6);
    the floor keeps the ratio meaningful where both gradients vanish.
    """
    if not samples:
        raise ValueError("gradient check needs at least one sample")
    x, y = _samples_to_arrays(samples)
    _, g_w, g_b = _loss_and_grads(model, x, y)
    analytic = np.concatenate(
        [np.concatenate([gw.ravel(), gb]) for gw, gb in zip(g_w, g_b)]
    )
    theta = _flatten(model)
    worst = 0.0
    for i in range(len(theta)):
        bumped = theta.copy()
        bumped[i] = theta[i] + step
        hi = _loss_and_grads(_unflatten(model, bumped), x, y)[0]
        bumped[i] = theta[i] - step
        lo = _loss_and_grads(_unflatten(model, bumped), x, y)[0]
        fd = (hi - lo) / (2.0 * step)
        rel = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


@dataclass(frozen=True)
class FeatureMap:
    """Turns a detection range into the model's feature triple.

    The normalized range freezes at 1 beyond d_max, mirroring the curve's
    frozen tail; bin statistics for overflow or empty bins reuse the nearest
    populated lower bin.
    """

    d_max: float
    cfg: BinConfig
    bin_mean: tuple[float | None, ...]
    bin_std: tuple[float | None, ...]

    @classmethod
    def from_stats(cls, stats: BinnedStats, d_max: float,
                   cfg: BinConfig | None = None) -> "FeatureMap":
        cfg = cfg or BinConfig()
        return cls(d_max, cfg,
                   tuple(b.mean_score for b in stats.bins),
                   tuple(b.std_score for b in stats.bins))

    def _bin_stats_at(self, rng_m: float) -> tuple[float, float]:
        idx = min(int((max(rng_m, self.cfg.origin) - self.cfg.origin)
                      // self.cfg.width), self.cfg.count - 1)
        for i in range(idx, -1, -1):
            if self.bin_mean[i] is not None:
                return self.bin_mean[i], self.bin_std[i]
        for i in range(idx + 1, self.cfg.count):
            if self.bin_mean[i] is not None:
                return self.bin_mean[i], self.bin_std[i]
        return 0.5, 0.0

    def features(self, rng_m: float) -> tuple[float, float, float]:
        mean, std = self._bin_stats_at(rng_m)
        return (min(rng_m, self.d_max) / self.d_max, mean, std)


def distill_samples(curve: ThresholdCurve, featmap: FeatureMap,
                    grid_points: int = 64) -> list[TrainSample]:
    """Training set that teaches the network the fitted curve.

    The grid extends past d_max so the frozen tail is part of the lesson.
    """
    ds = np.linspace(0.0, 1.2 * curve.d_max, grid_points)
    return [TrainSample(featmap.features(float(d)), curve.evaluate(float(d)))
            for d in ds]


def f1_target_samples(dets: DetectionSet, gts, featmap: FeatureMap,
                      match_cfg=None, grid_step: float = 0.01,
                      range_mode: str = "bev") -> list[TrainSample]:
    """Supervised alternative: per-bin thresholds that maximize bin F1.

    Detections are flagged TP/FP by one greedy match of the full set; the
    per-bin F1 of "keep score > tau" is then swept over a fixed tau grid
    (ranking approximation: the match is not redone per tau).  Ties go to
    the lower threshold.
    """
    from .evaluate import MatchConfig, match  # local import: avoids a cycle

    match_cfg = match_cfg or MatchConfig()
    result = match(dets, gts, match_cfg)
    is_tp = [False] * len(dets)
    for di, _, _ in result.matches:
        is_tp[di] = True
    cfg = featmap.cfg
    det_scores: list[list[tuple[float, bool]]] = [[] for _ in range(cfg.count)]
    gt_counts = [0] * cfg.count
    for i, det in enumerate(dets):
        idx = int((range_of(det, range_mode) - cfg.origin) // cfg.width)
        if 0 <= idx < cfg.count:
            det_scores[idx].append((det.score, is_tp[i]))
    for gt in gts:
        idx = int((range_of(gt, range_mode) - cfg.origin) // cfg.width)
        if 0 <= idx < cfg.count:
            gt_counts[idx] += 1
    taus = [round(i * grid_step, 10) for i in range(int(1.0 / grid_step) + 1)]
    samples = []
    for b in range(cfg.count):
        if not det_scores[b] or gt_counts[b] == 0:
            continue
        best_tau, best_f1 = 0.0, -1.0
        for tau in taus:
            tp = sum(1 for s, ok in det_scores[b] if ok and s > tau)
            fp = sum(1 for s, ok in det_scores[b] if not ok and s > tau)
            fn = gt_counts[b] - tp
            denom = 2 * tp + fp + fn
            f1 = 2 * tp / denom if denom else 0.0
            if f1 > best_f1 + 1e-12:
                best_tau, best_f1 = tau, f1
        center = cfg.center(b)
        samples.append(TrainSample(featmap.features(center), best_tau))
    return samples


@dataclass(frozen=True)
class NeuralFilter:
    """Fixed trained model plus feature map, applied as a score filter."""

    model: MlpModel
    featmap: FeatureMap

    def threshold_at(self, rng_m: float) -> float:
        return forward(self.model, self.featmap.features(rng_m))

    def apply(self, dets: DetectionSet, range_mode: str = "bev") -> DetectionSet:
        kept = tuple(d for d in dets
                     if d.score > self.threshold_at(range_of(d, range_mode)))
        return DetectionSet(kept, dets.label_set, dets.source)


def as_filter(model: MlpModel, featmap: FeatureMap) -> NeuralFilter:
    return NeuralFilter(model, featmap)


def serialize_model(model: MlpModel, featmap: FeatureMap | None = None) -> str:
    """Text form: layer sizes, then per layer the weight rows and the bias
    row, 17 significant digits.  A trailing ``features`` section carries the
    feature map so a model file alone can reconstruct the filter."""
    lines = [" ".join(str(s) for s in model.sizes)]
    for w, b in zip(model.weights, model.biases):
        for row in w:
            lines.append(" ".join(format(v, ".17g") for v in row))
        lines.append(" ".join(format(v, ".17g") for v in b))
    if featmap is not None:
        cfg = featmap.cfg
        lines.append(f"features {featmap.d_max!r} {cfg.origin!r} {cfg.width!r} {cfg.count}")
        for i in range(cfg.count):
            if featmap.bin_mean[i] is None:
                lines.append(f"bin {i} - -")
            else:
                lines.append(f"bin {i} {featmap.bin_mean[i]!r} {featmap.bin_std[i]!r}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> tuple[MlpModel, FeatureMap | None]:
    lines = [ln for ln in text.strip().split("\n") if ln]
    sizes = tuple(int(tok) for tok in lines[0].split())
    pos = 1
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        rows = []
        for _ in range(fan_in):
            rows.append([float(tok) for tok in lines[pos].split()])
            pos += 1
        weights.append(np.array(rows).reshape(fan_in, fan_out))
        biases.append(np.array([float(tok) for tok in lines[pos].split()]))
        pos += 1
    model = MlpModel(sizes, tuple(weights), tuple(biases))
    featmap = None
    if pos < len(lines) and lines[pos].startswith("features "):
        _, d_max, origin, width, count = lines[pos].split()
        cfg = BinConfig(float(origin), float(width), int(count))
        pos += 1
        means: list[float | None] = []
        stds: list[float | None] = []
        for _ in range(cfg.count):
            _, _, mean, std = lines[pos].split()
            means.append(None if mean == "-" else float(mean))
            stds.append(None if std == "-" else float(std))
            pos += 1
        featmap = FeatureMap(float(d_max), cfg, tuple(means), tuple(stds))
    return model, featmap


def load_model(path) -> tuple[MlpModel, FeatureMap | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(path, model: MlpModel, featmap: FeatureMap | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_model(model, featmap))


def loss_trace_csv(trace: Sequence[float]) -> str:
    lines = ["epoch,loss"]
    lines.extend(f"{i},{loss!r}" for i, loss in enumerate(trace))
    return "\n".join(lines) + "\n"
