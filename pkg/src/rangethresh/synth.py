"""Seeded synthetic LiDAR detection scenarios.

Each frame draws ground-truth objects at controlled ranges, detects each
one with a range-decaying probability, jitters the detected boxes, scores
them with a range-decaying confidence model plus Gaussian noise, and then
appends clutter false positives whose scores concentrate low but spread
across the far static threshold.  Everything is a pure function of the
config: the draw order below is fixed, so equal seeds give bit-identical
output on any platform.

Per frame the stream is consumed in this order:

1. object count (1 draw)
2. per object: class, range, azimuth, yaw, 3 extent scales, z  (8 draws)
3. per object: detection coin (1); if detected: x/y/z jitter (3 normals =
   6 draws) and score noise (1 normal = 2 draws)
4. clutter count (Poisson, variable draws)
5. per clutter box: range, azimuth, yaw, 3 extents, z, class (8 draws),
   score (Beta via gamma sums: shape_a + shape_b draws)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .detections import (Box3D, Detection, DetectionSet, GroundTruthObject,
                         GroundTruthSet)
from .rng import Rng

# nominal (dx, dy, dz) per class; extents get a +-10% scale draw
_CLASS_DIMS = {
    "car": (4.6, 1.9, 1.7),
    "truck": (7.2, 2.5, 2.9),
}


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_frames: int = 500
    objects_min: int = 2
    objects_max: int = 5
    range_min: float = 2.0
    range_max: float = 90.0
    # mean confidence of a real detection at range d:
    # clamp(conf_c0 + conf_c1*d + conf_c2*d^2, 0, 1)
    conf_c0: float = 0.92
    conf_c1: float = -0.007
    conf_c2: float = 0.0
    score_noise_std: float = 0.06
    # detection probability: clamp(1 - d/det_decay_range, det_floor, 1)
    det_decay_range: float = 120.0
    det_floor: float = 0.2
    jitter_std: float = 0.15
    clutter_rate: float = 3.0
    clutter_score_mean: float = 0.25
    clutter_score_std: float = 0.12
    labels: tuple[str, ...] = ("car", "truck")
    label_weights: tuple[float, ...] = (0.8, 0.2)

    def __post_init__(self):
        if self.n_frames < 0:
            raise ValueError("n_frames must be >= 0")
        if not (0 <= self.objects_min <= self.objects_max):
            raise ValueError("need 0 <= objects_min <= objects_max")
        if not (0 <= self.range_min < self.range_max):
            raise ValueError("need 0 <= range_min < range_max")
        if self.score_noise_std < 0 or self.jitter_std < 0:
            raise ValueError("noise parameters must be >= 0")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be >= 0")
        mu, sd = self.clutter_score_mean, self.clutter_score_std
        if not (0 < mu < 1) or sd <= 0 or sd * sd >= mu * (1 - mu):
            raise ValueError("clutter score mean/std do not define a Beta shape")
        if len(self.labels) != len(self.label_weights) or not self.labels:
            raise ValueError("labels and label_weights must align and be non-empty")
        for lbl in self.labels:
            if lbl not in _CLASS_DIMS:
                raise ValueError(f"no extent template for class {lbl!r}")

    def mean_score(self, d: float) -> float:
        raw = self.conf_c0 + self.conf_c1 * d + self.conf_c2 * d * d
        return min(max(raw, 0.0), 1.0)

    def detect_probability(self, d: float) -> float:
        return min(max(1.0 - d / self.det_decay_range, self.det_floor), 1.0)

    def clutter_beta_shapes(self) -> tuple[int, int]:
        """Integer Beta shapes matching the configured clutter mean/std.

        nu = mu(1-mu)/sigma^2 - 1 splits as (mu*nu, (1-mu)*nu); rounding to
        integers >= 1 keeps the sampler a fixed-consumption gamma-sum ratio.
        The defaults give exactly Beta(3, 9): mean 0.25, std 0.120.
        """
        mu, sd = self.clutter_score_mean, self.clutter_score_std
        nu = mu * (1 - mu) / (sd * sd) - 1.0
        a = max(1, round(mu * nu))
        b = max(1, round((1 - mu) * nu))
        return a, b


PRESETS = {
    "clear": {},
    "fog": {"clutter_rate": 8.0, "score_noise_std": 0.10},
    "rain": {"clutter_rate": 6.0},
}


def weather_preset(name: str) -> dict:
    """Config overrides for a named weather preset."""
    if name not in PRESETS:
        raise ValueError(f"unknown weather preset {name!r}")
    return dict(PRESETS[name])


def make_scene_config(seed: int = 0, preset: str = "clear", **overrides) -> SceneConfig:
    params = {"seed": seed}
    params.update(weather_preset(preset))
    params.update(overrides)
    return SceneConfig(**params)


def _draw_yaw(rng: Rng) -> float:
    yaw = math.pi * (2.0 * rng.random() - 1.0)
    return math.pi if yaw <= -math.pi else yaw  # keep yaw in (-pi, pi]


def _draw_class(rng: Rng, cfg: SceneConfig) -> str:
    u = rng.random() * sum(cfg.label_weights)
    acc = 0.0
    for lbl, w in zip(cfg.labels, cfg.label_weights):
        acc += w
        if u < acc:
            return lbl
    return cfg.labels[-1]


def _draw_box(rng: Rng, cfg: SceneConfig, label: str) -> Box3D:
    r = rng.uniform(cfg.range_min, cfg.range_max)
    azimuth = math.pi * (2.0 * rng.random() - 1.0)
    yaw = _draw_yaw(rng)
    dims = _CLASS_DIMS[label]
    dx, dy, dz = (v * rng.uniform(0.9, 1.1) for v in dims)
    z = rng.uniform(-1.0, -0.6)
    return Box3D(r * math.cos(azimuth), r * math.sin(azimuth), z, dx, dy, dz, yaw)


def generate_scene(cfg: SceneConfig) -> tuple[GroundTruthSet, DetectionSet]:
    """Generate the ground truth and detection sets for one config."""
    rng = Rng(cfg.seed)
    gts: list[GroundTruthObject] = []
    dets: list[Detection] = []
    shape_a, shape_b = cfg.clutter_beta_shapes()
    for frame in range(cfg.n_frames):
        n_obj = rng.randint(cfg.objects_min, cfg.objects_max)
        frame_gts = []
        for _ in range(n_obj):
            label = _draw_class(rng, cfg)
            box = _draw_box(rng, cfg, label)
            frame_gts.append(GroundTruthObject(frame, label, box))
        gts.extend(frame_gts)
        for gt in frame_gts:
            d = math.hypot(gt.box.x, gt.box.y)
            if rng.random() >= cfg.detect_probability(d):
                continue
            jx = rng.normal(0.0, cfg.jitter_std)
            jy = rng.normal(0.0, cfg.jitter_std)
            jz = rng.normal(0.0, cfg.jitter_std)
            score = cfg.mean_score(d) + rng.normal(0.0, cfg.score_noise_std)
            score = min(max(score, 0.0), 1.0)
            box = gt.box
            jittered = Box3D(box.x + jx, box.y + jy, box.z + jz,
                             box.dx, box.dy, box.dz, box.yaw)
            dets.append(Detection(frame, gt.class_label, jittered, score))
        n_clutter = rng.poisson(cfg.clutter_rate)
        for _ in range(n_clutter):
            r = rng.uniform(cfg.range_min, cfg.range_max)
            azimuth = math.pi * (2.0 * rng.random() - 1.0)
            yaw = _draw_yaw(rng)
            cdx = rng.uniform(0.6, 2.8)
            cdy = rng.uniform(0.6, 2.8)
            cdz = rng.uniform(0.5, 2.0)
            z = rng.uniform(-1.0, -0.6)
            label = _draw_class(rng, cfg)
            score = rng.beta_int(shape_a, shape_b)
            box = Box3D(r * math.cos(azimuth), r * math.sin(azimuth), z,
                        cdx, cdy, cdz, yaw)
            dets.append(Detection(frame, label, box, score))
    source = f"synth seed={cfg.seed}"
    labels = tuple(sorted(cfg.labels))
    return (GroundTruthSet(tuple(gts), labels, source),
            DetectionSet(tuple(dets), labels, source))


def config_echo_json(cfg: SceneConfig) -> str:
    """Every parameter of the run, seed included, as stable JSON."""
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"
