//! Metrics, the repeated-split trial protocol, risk curves and ablations.

mod ablation;
mod curve;
mod metrics;
mod trials;

pub use ablation::{
    ablation_csv, ablation_sweep, detection_metrics, fit, score_frames, train_eval_videos, AblationAxis,
    AblationConfig, AblationRow, DetectionMetrics, ABLATION_HEADER,
};
pub use curve::{curve_csv, risk_coverage_curve, CurveConfig, CurveRow, CURVE_HEADER, METHOD_BASELINE, METHOD_CFM};
pub use metrics::{auroc, auroc_histogram, auroc_pairs, fpr95, mask_size, PairCount, HISTOGRAM_BINS};
pub use trials::{
    eval_videos, prepare_frames, run_cells, run_trials, split_frames, Cell, CellSummary, EvalFrame, ScoreSource,
    SplitUnit, TrialConfig, TrialReport, TrialRow,
};
