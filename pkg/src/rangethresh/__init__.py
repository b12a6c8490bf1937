"""Distance-adaptive confidence thresholding for 3D detection post-processing."""

__version__ = "0.1.0"

from .detections import (Box3D, Detection, DetectionSet, GroundTruthObject,
                         GroundTruthSet, ParseError, load_detections,
                         load_ground_truth, parse_detections,
                         parse_ground_truth, range_of, save_detections,
                         save_ground_truth, serialize_detections,
                         serialize_ground_truth)
from .binning import (BinConfig, BinStats, BinnedStats, ScoreHistogram,
                      assign_bin, bin_statistics, bin_stats_csv,
                      histogram_mean, histogram_std, score_histogram)
from .curve import (CalibrationError, DegenerateFitError, RuleParams,
                    ThresholdCurve, apply_curve, calibrate, decide,
                    eval_threshold, fit_constant, fit_linear, fit_quadratic,
                    load_curve, parse_curve, prefilter_static_dual, save_curve,
                    serialize_curve)
from .baselines import (BinnedThreshold, WindowStats, apply_static_dual,
                        bernsen, bradley, fit_binned_threshold, niblack, nick,
                        otsu, phansalkar, static_dual)
from .evaluate import (BinMetrics, EvalReport, MatchConfig, MatchResult,
                       average_precision, bev_iou, evaluate, match,
                       per_bin_metrics, pr_curve_csv, pr_curve_points,
                       report_csv, report_text)
from .mlp import (FeatureMap, MlpModel, NeuralFilter, TrainConfig, TrainSample,
                  TrainingError, as_filter, distill_samples, f1_target_samples,
                  forward, gradient_check, init_model, load_model, parse_model,
                  save_model, serialize_model, train, zero_model)
from .synth import (PRESETS, SceneConfig, config_echo_json, generate_scene,
                    make_scene_config, weather_preset)
from .rng import Rng
from .config import (BaselineParams, ConfigError, PrefilterConfig, RunConfig,
                     TrainSettings, load_run_config, run_config_from_dict,
                     run_config_json)
