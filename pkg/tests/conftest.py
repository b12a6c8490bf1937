import math

import numpy as np
import pytest

from rangethresh import Box3D, Detection, DetectionSet


def random_box(rng: np.random.Generator, span: float = 60.0) -> Box3D:
    return Box3D(
        x=float(rng.uniform(-span, span)),
        y=float(rng.uniform(-span, span)),
        z=float(rng.uniform(-2.0, 0.5)),
        dx=float(rng.uniform(0.5, 8.0)),
        dy=float(rng.uniform(0.5, 4.0)),
        dz=float(rng.uniform(0.5, 3.0)),
        yaw=float(rng.uniform(-math.pi, math.pi)) or math.pi,
    )


def random_detections(rng: np.random.Generator, n: int, n_frames: int = 10,
                      label: str = "car") -> DetectionSet:
    records = []
    for _ in range(n):
        records.append(Detection(
            frame_id=int(rng.integers(0, n_frames)),
            class_label=label,
            box=random_box(rng),
            score=float(rng.uniform(0.0, 1.0)),
        ))
    records.sort(key=lambda d: d.frame_id)
    return DetectionSet(tuple(records), (label,), "test")


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)
