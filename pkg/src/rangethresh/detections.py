"""Detection and ground-truth domain types plus the text wire format.

One record per line, comma separated, '.' decimal, LF line endings:

    frame_id,class,x,y,z,dx,dy,dz,yaw,score     (detections)
    frame_id,class,x,y,z,dx,dy,dz,yaw           (ground truth)

Lines starting with '#' and blank lines are skipped.  Floats are written
with repr(), so serialize-then-parse reproduces values bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class ParseError(ValueError):
    """Malformed record in a detection or ground-truth stream."""


@dataclass(frozen=True)
class Box3D:
    """Axis box in the ego frame: x forward, y left, z up, yaw about z."""

    x: float
    y: float
    z: float
    dx: float
    dy: float
    dz: float
    yaw: float

    def __post_init__(self):
        for name in ("x", "y", "z", "dx", "dy", "dz", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite box field {name!r}")
        if self.dx <= 0 or self.dy <= 0 or self.dz <= 0:
            raise ValueError("box extents must be positive")
        if not (-math.pi < self.yaw <= math.pi):
            raise ValueError("yaw must lie in (-pi, pi]")


@dataclass(frozen=True)
class Detection:
    frame_id: int
    class_label: str
    box: Box3D
    score: float

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        if not self.class_label:
            raise ValueError("class_label must be non-empty")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruthObject:
    frame_id: int
    class_label: str
    box: Box3D

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        if not self.class_label:
            raise ValueError("class_label must be non-empty")


@dataclass(frozen=True)
class DetectionSet:
    """Detections in non-decreasing frame order.

    Order is part of the contract: greedy matching and score-tie breaking
    depend on it, so it must survive serialization round trips.
    """

    records: tuple[Detection, ...]
    label_set: tuple[str, ...] = field(default=())
    source: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class GroundTruthSet:
    records: tuple[GroundTruthObject, ...]
    label_set: tuple[str, ...] = field(default=())
    source: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def range_of(obj: Detection | GroundTruthObject | Box3D, mode: str = "bev") -> float:
    """Distance from the ego origin to the box center, in meters.

    The default is ground-plane (bird's-eye-view) range sqrt(x^2 + y^2);
    ``mode="3d"`` includes the z offset.
    """
    box = obj if isinstance(obj, Box3D) else obj.box
    if mode == "bev":
        return math.hypot(box.x, box.y)
    if mode == "3d":
        return math.sqrt(box.x * box.x + box.y * box.y + box.z * box.z)
    raise ValueError(f"unknown range mode {mode!r}")


def _parse_float(token: str, what: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric {what} {token!r}, line {lineno}") from None
    if math.isnan(value):
        raise ParseError(f"non-numeric {what} {token!r}, line {lineno}")
    return value


def _parse_lines(text: str, with_score: bool, source: str):
    n_fields = 10 if with_score else 9
    records = []
    labels: set[str] = set()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != n_fields:
            raise ParseError(
                f"expected {n_fields} fields, got {len(parts)}, line {lineno}"
            )
        try:
            frame_id = int(parts[0])
        except ValueError:
            raise ParseError(f"non-numeric frame_id {parts[0]!r}, line {lineno}") from None
        label = parts[1].strip()
        nums = [_parse_float(tok, name, lineno)
                for tok, name in zip(parts[2:9], ("x", "y", "z", "dx", "dy", "dz", "yaw"))]
        try:
            box = Box3D(*nums)
        except ValueError as exc:
            raise ParseError(f"{exc}, line {lineno}") from None
        if with_score:
            score = _parse_float(parts[9], "score", lineno)
            if not (0.0 <= score <= 1.0):
                raise ParseError(f"score out of range, line {lineno}")
            try:
                records.append(Detection(frame_id, label, box, score))
            except ValueError as exc:
                raise ParseError(f"{exc}, line {lineno}") from None
        else:
            try:
                records.append(GroundTruthObject(frame_id, label, box))
            except ValueError as exc:
                raise ParseError(f"{exc}, line {lineno}") from None
        labels.add(label)
    records.sort(key=lambda r: r.frame_id)  # stable: preserves in-frame order
    return tuple(records), tuple(sorted(labels)), source


def parse_detections(stream, source: str = "") -> DetectionSet:
    """Parse a detection stream (bytes or text) into a DetectionSet.

    Records come back sorted by frame_id (stable).  An empty stream yields
    an empty set; malformed records raise ParseError naming the line.
    """
    text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    records, labels, source = _parse_lines(text, with_score=True, source=source)
    return DetectionSet(records, labels, source)


def parse_ground_truth(stream, source: str = "") -> GroundTruthSet:
    """Parse a ground-truth stream: same format as detections, no score."""
    text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    records, labels, source = _parse_lines(text, with_score=False, source=source)
    return GroundTruthSet(records, labels, source)


def _format_record(rec: Detection | GroundTruthObject) -> str:
    b = rec.box
    fields = [str(rec.frame_id), rec.class_label,
              repr(b.x), repr(b.y), repr(b.z),
              repr(b.dx), repr(b.dy), repr(b.dz), repr(b.yaw)]
    if isinstance(rec, Detection):
        fields.append(repr(rec.score))
    return ",".join(fields)


def serialize_detections(dets: DetectionSet | Iterable[Detection]) -> str:
    """Render detections in the wire format, LF terminated."""
    return "".join(_format_record(d) + "\n" for d in dets)


def serialize_ground_truth(gts: GroundTruthSet | Iterable[GroundTruthObject]) -> str:
    return "".join(_format_record(g) + "\n" for g in gts)


def load_detections(path) -> DetectionSet:
    with open(path, "rb") as fh:
        return parse_detections(fh.read(), source=str(path))


def load_ground_truth(path) -> GroundTruthSet:
    with open(path, "rb") as fh:
        return parse_ground_truth(fh.read(), source=str(path))


def save_detections(path, dets: DetectionSet | Sequence[Detection]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_detections(dets))


def save_ground_truth(path, gts: GroundTruthSet | Sequence[GroundTruthObject]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_ground_truth(gts))
