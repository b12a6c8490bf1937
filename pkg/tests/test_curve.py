import numpy as np
import pytest

from rangethresh import (BinStats, CalibrationError,
                         DegenerateFitError, RuleParams, ThresholdCurve,
                         apply_curve, calibrate, decide, eval_threshold,
                         fit_constant, fit_linear, fit_quadratic, parse_curve,
                         prefilter_static_dual, range_of, serialize_curve)
from conftest import random_detections


def stats_row(i, n, mean, std, width=10.0):
    return BinStats(i, i * width, (i + 1) * width, n, mean, std)


class TestFitQuadratic:
    def test_exact_three_points_hand_solved(self):
        # interpolating (0,1), (1,0), (2,1): c=1; a+b+c=0; 4a+2b+c=1
        # gives a=1, b=-2, c=1 with zero residual
        curve = fit_quadratic([(0, 1), (1, 0), (2, 1)])
        assert curve.a == pytest.approx(1.0, abs=1e-9)
        assert curve.b == pytest.approx(-2.0, abs=1e-9)
        assert curve.c == pytest.approx(1.0, abs=1e-9)
        for d, t in [(0, 1), (1, 0), (2, 1)]:
            assert curve.a * d * d + curve.b * d + curve.c == pytest.approx(t, abs=1e-9)

    def test_exact_six_points_recovered(self):
        a0, b0, c0 = 0.00001, -0.004, 0.5
        points = [(d, a0 * d * d + b0 * d + c0) for d in (5, 15, 25, 35, 45, 55)]
        curve = fit_quadratic(points)
        assert curve.a == pytest.approx(a0, rel=1e-9)
        assert curve.b == pytest.approx(b0, rel=1e-9)
        assert curve.c == pytest.approx(c0, rel=1e-9)
        assert curve.d_max == 55

    def test_two_distinct_abscissae_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_quadratic([(0, 1), (0, 0), (1, 0.5)])

    def test_weight_length_and_positivity(self):
        pts = [(0, 1), (1, 0), (2, 1)]
        with pytest.raises(ValueError):
            fit_quadratic(pts, weights=[1, 2])
        with pytest.raises(ValueError):
            fit_quadratic(pts, weights=[1, 0, 1])

    def test_weight_scaling_invariance(self):
        pts = [(5, 0.9), (15, 0.7), (25, 0.65), (35, 0.5), (45, 0.42), (55, 0.3)]
        ws = [3.0, 1.0, 7.0, 2.0, 9.0, 4.0]
        c1 = fit_quadratic(pts, ws)
        c2 = fit_quadratic(pts, [w * 137.0 for w in ws])
        assert c1.a == pytest.approx(c2.a, abs=1e-12)
        assert c1.b == pytest.approx(c2.b, abs=1e-12)
        assert c1.c == pytest.approx(c2.c, abs=1e-12)

    def test_random_exact_quadratics_property(self, np_rng):
        # recovery and residual, norm-wise relative to the coefficient scale
        for _ in range(300):
            true = np_rng.uniform(-1, 1, 3) * np.array([1e-4, 1e-2, 1.0])
            n = int(np_rng.integers(3, 9))
            while True:
                ds = np.sort(np_rng.uniform(0, 90, n))
                if n < 2 or np.diff(ds).min() >= 2.0:
                    break
            pts = [(float(d), float(true[0] * d * d + true[1] * d + true[2]))
                   for d in ds]
            curve = fit_quadratic(pts)
            got = np.array([curve.a, curve.b, curve.c])
            scale = max(np.abs(true).max(), 1e-30)
            assert np.abs(got - true[::1][[0, 1, 2]]).max() / scale < 1e-9
            resid = max(abs(curve.a * d * d + curve.b * d + curve.c - t)
                        for d, t in pts)
            assert resid <= 1e-9

    def test_linear_and_constant_fallbacks(self):
        lin = fit_linear([(0, 1.0), (10, 0.8)])
        assert lin.a == 0.0
        assert lin.b == pytest.approx(-0.02, abs=1e-12)
        assert lin.c == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(DegenerateFitError):
            fit_linear([(5, 1.0), (5, 0.8)])
        const = fit_constant([(5, 0.4), (15, 0.6)])
        assert const.c == pytest.approx(0.5, abs=1e-12)
        assert const.a == const.b == 0.0


class TestCalibrate:
    def test_linear_means_interpolated(self):
        # means fall on a line with slope -0.01/m through the bin centers;
        # the least-squares quadratic must pass through every target
        means = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4)
        stats = [stats_row(i, 10, m, 0.0) for i, m in enumerate(means)]
        curve = calibrate(stats, RuleParams(1.0, 1.0))
        assert curve.a == pytest.approx(0.0, abs=1e-9)
        assert curve.b == pytest.approx(-0.01, abs=1e-9)
        for i, m in enumerate(means):
            center = 10 * i + 5.0
            poly = curve.a * center * center + curve.b * center + curve.c
            assert poly == pytest.approx(m, abs=1e-9)

    def test_alpha_zero_targets_equal_means(self):
        stats = [stats_row(i, 5, m, 0.3) for i, m in
                 enumerate((0.9, 0.7, 0.52, 0.4))]
        curve = calibrate(stats, RuleParams(alpha=0.0, beta=1.0))
        for i, m in enumerate((0.9, 0.7, 0.52, 0.4)):
            center = 10 * i + 5.0
            poly = curve.a * center * center + curve.b * center + curve.c
            # 4 points, 3 dof: not interpolating, but alpha=0 means the
            # fitted values track the means themselves
            assert poly == pytest.approx(m, abs=0.02)

    def test_target_clamped_at_zero(self):
        stats = [stats_row(0, 5, 0.3, 0.5), stats_row(1, 5, 0.35, 0.5),
                 stats_row(2, 5, 0.32, 0.5)]
        curve = calibrate(stats, RuleParams(1.0, 1.0), floor_k=0.0)
        # every target is clamp(mean - std, 0, 1) = 0
        for center in (5.0, 15.0, 25.0):
            assert curve.a * center * center + curve.b * center + curve.c == \
                pytest.approx(0.0, abs=1e-9)

    def test_needs_three_populated_bins(self):
        stats = [stats_row(0, 5, 0.9, 0.1), stats_row(1, 3, 0.8, 0.1),
                 stats_row(2, 0, None, None)]
        with pytest.raises(CalibrationError):
            calibrate(stats)

    def test_weights_are_bin_counts(self):
        # a heavily populated outlier bin pulls the curve toward itself
        base = [stats_row(0, 10, 0.9, 0.0), stats_row(1, 10, 0.8, 0.0),
                stats_row(2, 10, 0.7, 0.0), stats_row(3, 10, 0.2, 0.0)]
        light = calibrate(base, RuleParams())
        heavy = calibrate(base[:3] + [stats_row(3, 10000, 0.2, 0.0)], RuleParams())
        center = 35.0
        t_light = light.a * center ** 2 + light.b * center + light.c
        t_heavy = heavy.a * center ** 2 + heavy.b * center + heavy.c
        assert abs(t_heavy - 0.2) < abs(t_light - 0.2)


class TestEvalThreshold:
    def test_constant_curve(self):
        curve = ThresholdCurve(0, 0, 0.5, floor_k=0.2, d_max=60)
        for d in (0.0, 10.0, 59.0, 500.0):
            assert eval_threshold(curve, d) == 0.5

    def test_floor_clamp(self):
        curve = ThresholdCurve(0, -0.01, 0.5, floor_k=0.2, d_max=80)
        assert eval_threshold(curve, 80.0) == 0.2  # raw value -0.3
        assert eval_threshold(curve, 500.0) == 0.2

    def test_freeze_beyond_dmax(self):
        curve = ThresholdCurve(0.0, -0.005, 0.5, floor_k=0.1, d_max=60)
        assert eval_threshold(curve, 40.0) == pytest.approx(0.30, abs=1e-12)
        assert eval_threshold(curve, 70.0) == pytest.approx(0.20, abs=1e-12)

    def test_bounded_output_everywhere(self, np_rng):
        for _ in range(100):
            curve = ThresholdCurve(float(np_rng.uniform(-1e-3, 1e-3)),
                                   float(np_rng.uniform(-0.05, 0.05)),
                                   float(np_rng.uniform(-1, 2)),
                                   floor_k=0.2, d_max=60)
            for d in np_rng.uniform(0, 600, 50):
                t = eval_threshold(curve, float(d))
                assert 0.2 <= t <= 1.0

    def test_negative_range_rejected(self):
        with pytest.raises(ValueError):
            ThresholdCurve(0, 0, 0.5).evaluate(-1.0)


class TestDecide:
    def test_keep_case(self):
        assert decide(0.6, mean=0.5, deviation=0.2, params=RuleParams(1, 1))

    def test_second_condition_fails(self):
        assert not decide(0.4, mean=0.5, deviation=0.2, params=RuleParams(1, 1))

    def test_strict_inequality_at_zero(self):
        zero = RuleParams(0.0, 0.0)
        assert not decide(0.0, 0.9, 0.9, zero)
        assert decide(0.01, 0.9, 0.9, zero)

    def test_alpha_beta_zero_degenerates_to_positivity(self, np_rng):
        zero = RuleParams(0.0, 0.0)
        for _ in range(200):
            s = float(np_rng.uniform(0, 1))
            m = float(np_rng.uniform(0, 1))
            sd = float(np_rng.uniform(0, 1))
            assert decide(s, m, sd, zero) == (s > 0)


class TestApplyCurve:
    def test_empty_set(self):
        from rangethresh import DetectionSet
        empty = DetectionSet((), ("car",), "")
        out = apply_curve(empty, ThresholdCurve(0, 0, 0.5))
        assert len(out) == 0

    def test_constant_curve_equals_static_filter(self, np_rng):
        dets = random_detections(np_rng, 400)
        curve = ThresholdCurve(0, 0, 0.5, floor_k=0.0, d_max=60)
        got = apply_curve(dets, curve)
        expected = tuple(d for d in dets if d.score > 0.5)
        assert got.records == expected

    def test_per_record_oracle(self, np_rng):
        dets = random_detections(np_rng, 500)
        curve = ThresholdCurve(1e-5, -0.008, 0.8, floor_k=0.25, d_max=55)
        got = apply_curve(dets, curve)
        kept = set()
        for i, d in enumerate(dets):
            dd = min(range_of(d), 55.0)
            thr = min(max(1e-5 * dd * dd - 0.008 * dd + 0.8, 0.25), 1.0)
            if d.score > thr:
                kept.add(i)
        assert got.records == tuple(d for i, d in enumerate(dets) if i in kept)

    def test_idempotent(self, np_rng):
        dets = random_detections(np_rng, 300)
        curve = ThresholdCurve(0, -0.005, 0.6, floor_k=0.2, d_max=60)
        once = apply_curve(dets, curve)
        twice = apply_curve(once, curve)
        assert twice.records == once.records

    def test_monotone_in_score(self, np_rng):
        from rangethresh import Detection
        dets = random_detections(np_rng, 200)
        curve = ThresholdCurve(0, -0.005, 0.6, floor_k=0.2, d_max=60)
        kept = set(apply_curve(dets, curve).records)
        for d in dets:
            if d in kept and d.score < 1.0:
                higher = Detection(d.frame_id, d.class_label, d.box,
                                   min(1.0, d.score + 0.1))
                single = apply_curve(
                    type(dets)((higher,), dets.label_set, ""), curve)
                assert len(single) == 1

    def test_order_preserved(self, np_rng):
        dets = random_detections(np_rng, 300)
        curve = ThresholdCurve(0, 0, 0.4, floor_k=0.0, d_max=60)
        got = apply_curve(dets, curve)
        indices = [dets.records.index(d) for d in got.records]
        assert indices == sorted(indices)


class TestPrefilter:
    def test_static_dual_semantics(self, np_rng):
        dets = random_detections(np_rng, 400)
        got = prefilter_static_dual(dets)
        expected = tuple(
            d for d in dets
            if d.score > (0.5 if range_of(d) < 40.0 else 0.3))
        assert got.records == expected


class TestCurvePersistence:
    def test_round_trip_exact(self):
        curve = ThresholdCurve(1.2345678901234567e-05, -0.0043210987654321,
                               0.87654321012345678, 0.2, 55.0)
        text = serialize_curve(curve)
        assert text.count("\n") == 1 and text.count(",") == 4
        back = parse_curve(text)
        assert back == curve

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            parse_curve("1,2,3\n")
