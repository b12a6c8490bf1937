"""Ground-truth matching and detection metrics.

Overlap between yaw-rotated boxes is measured as bird's-eye-view IoU: the
two ground-plane rectangles are intersected by Sutherland-Hodgman polygon
clipping and the area taken with the shoelace formula.  The clipping
kernel is vectorized over candidate pairs, which is what keeps evaluation
of 1e5 detections around a hundred milliseconds; ``bev_iou`` is the
single-pair view of the same kernel.

Matching is KITTI-style greedy: detections in descending score order (ties
by input order) each claim the best unclaimed ground-truth object of the
same class that meets the criterion, one-to-one, frame by frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binning import BinConfig
from .detections import Box3D, DetectionSet, GroundTruthSet, range_of

_EDGE_EPS = 1e-9  # meters; on-edge vertices count as inside


@dataclass(frozen=True)
class MatchConfig:
    criterion: str = "iou"  # "iou" or "center-distance"
    iou_threshold: float = 0.5
    center_distance_threshold: float = 2.0
    class_aware: bool = True

    def __post_init__(self):
        if self.criterion not in ("iou", "center-distance"):
            raise ValueError(f"unknown match criterion {self.criterion!r}")
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.center_distance_threshold <= 0:
            raise ValueError("center_distance_threshold must be positive")


def _corners(x, y, dx, dy, yaw):
    """Counter-clockwise ground-plane corners, shape (M, 4, 2)."""
    c, s = np.cos(yaw), np.sin(yaw)
    hx, hy = dx * 0.5, dy * 0.5
    lx = np.stack([hx, -hx, -hx, hx], axis=1)
    ly = np.stack([hy, hy, -hy, -hy], axis=1)
    gx = x[:, None] + lx * c[:, None] - ly * s[:, None]
    gy = y[:, None] + lx * s[:, None] + ly * c[:, None]
    return np.stack([gx, gy], axis=2)


def _intersection_area(subj, clip):
    """Batched convex clip of ``subj`` rectangles by ``clip`` rectangles.

    Both inputs are (M, 4, 2) CCW corner arrays.  Polygons are carried in
    fixed-width buffers padded by repeating the last vertex; duplicate
    vertices form zero-length edges that neither cross a clip line nor
    contribute shoelace area, so the padding is exact, not approximate.
    Returns intersection areas, shape (M,).
    """
    m = subj.shape[0]
    poly = subj
    alive = np.ones(m, dtype=bool)
    slots = 4
    for e in range(4):
        a = clip[:, e]
        edge = clip[:, (e + 1) % 4] - a
        eps = _EDGE_EPS * np.hypot(edge[:, 0], edge[:, 1])[:, None]
        rel = poly - a[:, None, :]
        side = edge[:, None, 0] * rel[..., 1] - edge[:, None, 1] * rel[..., 0]
        inside = side >= -eps
        side_prev = np.roll(side, 1, axis=1)
        poly_prev = np.roll(poly, 1, axis=1)
        crossing = inside != np.roll(inside, 1, axis=1)
        denom = side_prev - side
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0.0, side_prev / denom, 0.5)
        cut = poly_prev + t[..., None] * (poly - poly_prev)
        buf = np.empty((m, 2 * slots, 2))
        buf[:, 0::2] = cut
        buf[:, 1::2] = poly
        valid = np.zeros((m, 2 * slots), dtype=bool)
        valid[:, 0::2] = crossing
        valid[:, 1::2] = inside
        counts = valid.sum(axis=1)
        alive &= counts >= 3
        order = np.argsort(~valid, axis=1, kind="stable")
        packed = np.take_along_axis(buf, order[:, :, None], axis=1)
        slots += 2  # a convex clip adds at most one true vertex, plus padding echo
        poly = packed[:, :slots]
        tail = np.minimum(np.arange(slots), np.maximum(counts - 1, 0)[:, None])
        poly = np.take_along_axis(poly, tail[:, :, None], axis=1)
    nxt = np.roll(poly, -1, axis=1)
    area = 0.5 * np.abs(
        (poly[..., 0] * nxt[..., 1] - nxt[..., 0] * poly[..., 1]).sum(axis=1)
    )
    return np.where(alive, area, 0.0)


def _iou_batch(boxes_a, boxes_b):
    """IoU for paired box parameter arrays (M, 5) of (x, y, dx, dy, yaw)."""
    ca = _corners(*(boxes_a[:, i] for i in range(5)))
    cb = _corners(*(boxes_b[:, i] for i in range(5)))
    inter = _intersection_area(ca, cb)
    area_a = boxes_a[:, 2] * boxes_a[:, 3]
    area_b = boxes_b[:, 2] * boxes_b[:, 3]
    return np.clip(inter / (area_a + area_b - inter), 0.0, 1.0)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Bird's-eye-view IoU of two yaw-rotated boxes, in [0, 1]."""
    pa = np.array([[a.x, a.y, a.dx, a.dy, a.yaw]])
    pb = np.array([[b.x, b.y, b.dx, b.dy, b.yaw]])
    return float(_iou_batch(pa, pb)[0])


@dataclass(frozen=True)
class MatchResult:
    """Greedy one-to-one matching outcome; indices refer to input order."""

    matches: tuple[tuple[int, int, float], ...]  # (det index, gt index, quality)
    unmatched_dets: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_dets)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def _box_params(records) -> np.ndarray:
    out = np.empty((len(records), 5))
    for i, r in enumerate(records):
        b = r.box
        out[i] = (b.x, b.y, b.dx, b.dy, b.yaw)
    return out


def match(dets: DetectionSet, gts: GroundTruthSet,
          cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Greedy per-frame matching of detections to ground truth."""
    n_det, n_gt = len(dets), len(gts)
    if n_det == 0 or n_gt == 0:
        return MatchResult((), tuple(range(n_det)), tuple(range(n_gt)))

    det_params = _box_params(dets.records)
    gt_params = _box_params(gts.records)
    det_frames = np.array([d.frame_id for d in dets], dtype=np.int64)
    gt_frames = np.array([g.frame_id for g in gts], dtype=np.int64)
    labels = {lbl: i for i, lbl in enumerate(
        sorted({r.class_label for r in dets} | {r.class_label for r in gts}))}
    det_cls = np.array([labels[d.class_label] for d in dets])
    gt_cls = np.array([labels[g.class_label] for g in gts])

    # frame slices come from one sort instead of a scan per frame
    det_order = np.argsort(det_frames, kind="stable")
    gt_order = np.argsort(gt_frames, kind="stable")
    det_sorted = det_frames[det_order]
    gt_sorted = gt_frames[gt_order]
    common = np.intersect1d(det_sorted, gt_sorted)
    d_lo = np.searchsorted(det_sorted, common, side="left")
    d_hi = np.searchsorted(det_sorted, common, side="right")
    g_lo = np.searchsorted(gt_sorted, common, side="left")
    g_hi = np.searchsorted(gt_sorted, common, side="right")

    pair_det: list[np.ndarray] = []
    pair_gt: list[np.ndarray] = []
    for k in range(len(common)):
        di = det_order[d_lo[k]:d_hi[k]]
        gi = gt_order[g_lo[k]:g_hi[k]]
        dxy = det_params[di, :2]
        gxy = gt_params[gi, :2]
        dist = np.hypot(dxy[:, None, 0] - gxy[None, :, 0],
                        dxy[:, None, 1] - gxy[None, :, 1])
        if cfg.criterion == "center-distance":
            ok = dist <= cfg.center_distance_threshold
        else:
            # circumradius gate: beyond it the rectangles cannot overlap
            rd = 0.5 * np.hypot(det_params[di, 2], det_params[di, 3])
            rg = 0.5 * np.hypot(gt_params[gi, 2], gt_params[gi, 3])
            ok = dist <= rd[:, None] + rg[None, :]
        if cfg.class_aware:
            ok &= det_cls[di][:, None] == gt_cls[gi][None, :]
        rows, cols = np.nonzero(ok)
        if rows.size:
            pair_det.append(di[rows])
            pair_gt.append(gi[cols])

    if pair_det:
        pd = np.concatenate(pair_det)
        pg = np.concatenate(pair_gt)
        if cfg.criterion == "iou":
            quality = _iou_batch(det_params[pd], gt_params[pg])
            keep = quality >= cfg.iou_threshold
        else:
            quality = np.hypot(det_params[pd, 0] - gt_params[pg, 0],
                               det_params[pd, 1] - gt_params[pg, 1])
            keep = quality <= cfg.center_distance_threshold
        pd, pg, quality = pd[keep], pg[keep], quality[keep]
    else:
        pd = np.empty(0, dtype=np.int64)
        pg = np.empty(0, dtype=np.int64)
        quality = np.empty(0)

    candidates: dict[int, list[tuple[int, float]]] = {}
    for d, g, q in zip(pd.tolist(), pg.tolist(), quality.tolist()):
        candidates.setdefault(d, []).append((g, q))

    scores = np.array([d.score for d in dets])
    order = sorted(range(n_det), key=lambda i: (-scores[i], i))
    best_is_max = cfg.criterion == "iou"
    claimed = set()
    matches = []
    for di in order:
        cand = candidates.get(di)
        if not cand:
            continue
        best = None
        for g, q in cand:
            if g in claimed:
                continue
            if best is None:
                best = (g, q)
            elif best_is_max:
                if q > best[1] or (q == best[1] and g < best[0]):
                    best = (g, q)
            elif q < best[1] or (q == best[1] and g < best[0]):
                best = (g, q)
        if best is not None:
            claimed.add(best[0])
            matches.append((di, best[0], best[1]))
    matches.sort()
    matched_dets = {m[0] for m in matches}
    return MatchResult(
        tuple(matches),
        tuple(i for i in range(n_det) if i not in matched_dets),
        tuple(i for i in range(n_gt) if i not in claimed),
    )


@dataclass(frozen=True)
class BinMetrics:
    bin_index: int  # cfg.count means overflow
    lower: float
    upper: float | None  # None for the overflow row
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None


@dataclass(frozen=True)
class EvalReport:
    method: str
    param: str
    bins: tuple[BinMetrics, ...]
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    ap: float | None


def _safe_ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def _f1(precision, recall):
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def per_bin_metrics(result: MatchResult, dets: DetectionSet, gts: GroundTruthSet,
                    cfg: BinConfig | None = None, range_mode: str = "bev",
                    method: str = "", param: str = "",
                    ap: float | None = None) -> EvalReport:
    """Bin error counts by range: FP by the detection's range, TP and FN by
    the ground-truth object's range, with one overflow row past the last bin.

    The counts reconcile exactly: summed TP plus summed FN equals the number
    of ground-truth objects.
    """
    cfg = cfg or BinConfig()
    n_rows = cfg.count + 1

    def row_of(rng_m: float) -> int:
        if rng_m < cfg.origin:
            return cfg.count
        idx = int(math.floor((rng_m - cfg.origin) / cfg.width))
        return min(idx, cfg.count)

    tp = [0] * n_rows
    fp = [0] * n_rows
    fn = [0] * n_rows
    for _, gi, _ in result.matches:
        tp[row_of(range_of(gts.records[gi], range_mode))] += 1
    for di in result.unmatched_dets:
        fp[row_of(range_of(dets.records[di], range_mode))] += 1
    for gi in result.unmatched_gts:
        fn[row_of(range_of(gts.records[gi], range_mode))] += 1

    bins = []
    for i in range(n_rows):
        lower = cfg.origin + i * cfg.width
        upper = None if i == cfg.count else lower + cfg.width
        bins.append(BinMetrics(
            i, lower, upper, tp[i], fp[i], fn[i],
            _safe_ratio(tp[i], tp[i] + fp[i]),
            _safe_ratio(tp[i], tp[i] + fn[i]),
        ))
    total_tp, total_fp, total_fn = sum(tp), sum(fp), sum(fn)
    precision = _safe_ratio(total_tp, total_tp + total_fp)
    recall = _safe_ratio(total_tp, total_tp + total_fn)
    return EvalReport(method, param, tuple(bins), total_tp, total_fp, total_fn,
                      precision, recall, _f1(precision, recall), ap)


def _ap_from_result(result: MatchResult, dets: DetectionSet,
                    n_gt: int) -> float:
    is_tp = np.zeros(len(dets), dtype=bool)
    for di, _, _ in result.matches:
        is_tp[di] = True
    scores = np.array([d.score for d in dets])
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp_cum = np.cumsum(is_tp[order])
    ranks = np.arange(1, len(dets) + 1)
    # one PR point per distinct score: the last index of each tied group
    group_end = np.nonzero(np.diff(sorted_scores, append=-1.0) != 0.0)[0]
    recalls = tp_cum[group_end] / n_gt
    precisions = tp_cum[group_end] / ranks[group_end]
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


def average_precision(dets: DetectionSet, gts: GroundTruthSet,
                      cfg: MatchConfig = MatchConfig()) -> float | None:
    """All-point interpolated average precision.

    Sweeps the keep threshold over the distinct detection scores; because
    matching is greedy in descending score order, the match outcome at each
    threshold is the prefix of one global greedy match.  Integrates the
    monotone precision envelope over recall.  None when there is no ground
    truth.
    """
    if len(gts) == 0:
        return None
    if len(dets) == 0:
        return 0.0
    return _ap_from_result(match(dets, gts, cfg), dets, len(gts))


def pr_curve_points(dets: DetectionSet, gts: GroundTruthSet,
                    cfg: MatchConfig = MatchConfig()
                    ) -> list[tuple[float, float, float]]:
    """(score, precision, recall) per distinct score threshold, best first.

    Plot data for external tools; the same sweep average_precision
    integrates.
    """
    if len(dets) == 0 or len(gts) == 0:
        return []
    result = match(dets, gts, cfg)
    is_tp = np.zeros(len(dets), dtype=bool)
    for di, _, _ in result.matches:
        is_tp[di] = True
    scores = np.array([d.score for d in dets])
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp_cum = np.cumsum(is_tp[order])
    ranks = np.arange(1, len(dets) + 1)
    group_end = np.nonzero(np.diff(sorted_scores, append=-1.0) != 0.0)[0]
    return [(float(sorted_scores[i]), float(tp_cum[i] / ranks[i]),
             float(tp_cum[i] / len(gts))) for i in group_end]


def pr_curve_csv(points: list[tuple[float, float, float]]) -> str:
    lines = ["score,precision,recall"]
    lines.extend(f"{s!r},{p!r},{r!r}" for s, p, r in points)
    return "\n".join(lines) + "\n"


def evaluate(dets: DetectionSet, gts: GroundTruthSet,
             match_cfg: MatchConfig = MatchConfig(),
             bin_cfg: BinConfig | None = None,
             range_mode: str = "bev",
             method: str = "", param: str = "",
             with_ap: bool = True) -> EvalReport:
    """Match, bin, and summarize one filtered detection set.

    The average precision reuses the one greedy match (its score-descending
    prefixes are exactly the per-threshold outcomes), so with_ap adds no
    second matching pass.
    """
    result = match(dets, gts, match_cfg)
    ap = None
    if with_ap and len(gts) > 0:
        ap = _ap_from_result(result, dets, len(gts)) if len(dets) else 0.0
    return per_bin_metrics(result, dets, gts, bin_cfg, range_mode,
                           method=method, param=param, ap=ap)


def _fmt(value, digits=4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def report_csv(reports: EvalReport | list[EvalReport]) -> str:
    """CSV rendering: ``method,param,bin,precision,recall,fp,fn``.

    Per-bin rows use the bin index (the overflow row uses the index one
    past the last bin); the totals row uses ``all``.
    """
    if isinstance(reports, EvalReport):
        reports = [reports]
    lines = ["method,param,bin,precision,recall,fp,fn"]
    for rep in reports:
        for b in rep.bins:
            lines.append(f"{rep.method},{rep.param},{b.bin_index},"
                         f"{_fmt(b.precision)},{_fmt(b.recall)},{b.fp},{b.fn}")
        lines.append(f"{rep.method},{rep.param},all,"
                     f"{_fmt(rep.precision)},{_fmt(rep.recall)},{rep.fp},{rep.fn}")
    return "\n".join(lines) + "\n"


def report_text(rep: EvalReport) -> str:
    """Aligned-column human-readable rendering of one report."""
    header = f"{'bin':>8} {'range':>14} {'tp':>6} {'fp':>6} {'fn':>6} {'prec':>8} {'recall':>8}"
    lines = []
    title = rep.method or "eval"
    if rep.param:
        title += f" ({rep.param})"
    lines.append(title)
    lines.append(header)
    for b in rep.bins:
        span = (f"[{b.lower:.0f},{b.upper:.0f})" if b.upper is not None
                else f">={b.lower:.0f}")
        lines.append(f"{b.bin_index:>8} {span:>14} {b.tp:>6} {b.fp:>6} {b.fn:>6} "
                     f"{_fmt(b.precision):>8} {_fmt(b.recall):>8}")
    lines.append(f"{'all':>8} {'':>14} {rep.tp:>6} {rep.fp:>6} {rep.fn:>6} "
                 f"{_fmt(rep.precision):>8} {_fmt(rep.recall):>8}")
    tail = [f"f1={_fmt(rep.f1)}"]
    if rep.ap is not None:
        tail.append(f"ap={_fmt(rep.ap)}")
    lines.append("  ".join(tail))
    return "\n".join(lines) + "\n"
