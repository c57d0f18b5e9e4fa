//! Synthetic end-to-end run: dataset, error network, trials and curve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::load_frames;
use crate::errnet::{save_params, BlockOrder, FeatureMode, TrainConfig, TrainReport};
use crate::error::Result;
use crate::errormaps::{failure_mask, FailureLevel};
use crate::eval::{
    curve_csv, detection_metrics, fit, prepare_frames, risk_coverage_curve, run_trials, score_frames,
    train_eval_videos, CurveConfig, ScoreSource, TrialConfig,
};
use crate::io::write_atomic;
use crate::rng::derive_seed;
use crate::synth::{make_dataset, DatasetSpec, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub dataset: DatasetSpec,
    pub n_train_videos: usize,
    pub feature_mode: FeatureMode,
    pub n_blocks: usize,
    pub width: usize,
    pub order: BlockOrder,
    pub train: TrainConfig,
    pub trials: TrialConfig,
    pub curve: CurveConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            n_train_videos: 3,
            feature_mode: FeatureMode::default(),
            n_blocks: 2,
            width: 64,
            order: BlockOrder::default(),
            train: TrainConfig::default(),
            trials: TrialConfig {
                alphas: vec![0.05, 0.10],
                ..TrialConfig::default()
            },
            curve: CurveConfig::default(),
        }
    }
}

impl DemoConfig {
    /// Seeds every randomized stage from one master seed.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.dataset.scene.seed = derive_seed(seed, 0);
        self.train.seed = derive_seed(seed, 1);
        self.trials.seed = derive_seed(seed, 2);
        self.curve.trials.seed = derive_seed(seed, 3);
        self
    }
}

/// Per tau_fail detection quality of the trained network on the evaluation videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub tau_fail_db: f64,
    pub positive_fraction: f64,
    pub auroc: Option<f64>,
    pub fpr95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub config: DemoConfig,
    pub train: TrainReport,
    pub detection: Vec<DetectionRow>,
}

pub const DATA_DIR: &str = "data";
pub const PARAMS_FILE: &str = "errnet.enet";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRIALS_ERRNET_FILE: &str = "trials_errnet.json";
pub const TRIALS_ORACLE_FILE: &str = "trials_oracle.json";
pub const CURVE_FILE: &str = "curve.csv";

#[derive(Debug, Clone)]
pub struct DemoOutputs {
    pub dir: PathBuf,
    pub summary: DemoSummary,
}

impl DemoOutputs {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

/// Runs synth, degrade, SR, training, trials (trained and oracle scores) and the
/// tau_fail curve, writing everything under `out_dir`.
pub fn end_to_end_demo(seed: u64, cfg: DemoConfig, out_dir: impl AsRef<Path>) -> Result<DemoOutputs> {
    let out_dir = out_dir.as_ref();
    let cfg = cfg.seeded(seed);
    std::fs::create_dir_all(out_dir.join(DATA_DIR)).map_err(|e| crate::Error::io(out_dir, e))?;

    log::info!("synthesizing {} videos", cfg.dataset.n_videos);
    let mut manifest = make_dataset(&cfg.dataset, out_dir.join(DATA_DIR))?;
    manifest.assign_train_prefix(cfg.n_train_videos);
    manifest.write(out_dir.join(DATA_DIR).join(MANIFEST_FILE))?;
    let (train_videos, eval_videos) = train_eval_videos(&manifest);

    log::info!("training on {} videos", train_videos.len());
    let train_frames = load_frames(&manifest, &train_videos, cfg.feature_mode)?;
    let (params, report) = fit(&train_frames, cfg.n_blocks, cfg.width, cfg.order, &cfg.train)?;
    save_params(&params, out_dir.join(PARAMS_FILE))?;

    log::info!("scoring {} evaluation videos", eval_videos.len());
    let eval_frames = load_frames(&manifest, &eval_videos, cfg.feature_mode)?;
    let scored = score_frames(&params, &eval_frames)?;
    let detection = cfg
        .trials
        .tau_fails
        .iter()
        .map(|&t| {
            let level = FailureLevel::new(t)?;
            let positives: usize = scored.iter().map(|f| failure_mask(&f.psnr, level).count_ones()).sum();
            let total: usize = scored.iter().map(|f| f.pixels()).sum();
            let m = detection_metrics(&scored, t, false).ok();
            Ok(DetectionRow {
                tau_fail_db: t,
                positive_fraction: positives as f64 / total as f64,
                auroc: m.map(|m| m.auroc),
                fpr95: m.map(|m| m.fpr95),
            })
        })
        .collect::<Result<_>>()?;

    let errnet_report = run_trials(&scored, &cfg.trials, "errnet")?;
    write_atomic(&out_dir.join(TRIALS_ERRNET_FILE), errnet_report.to_json().as_bytes())?;
    let oracle = prepare_frames(&manifest, &eval_videos, cfg.feature_mode, &ScoreSource::Oracle)?;
    let oracle_report = run_trials(&oracle, &cfg.trials, "oracle")?;
    write_atomic(&out_dir.join(TRIALS_ORACLE_FILE), oracle_report.to_json().as_bytes())?;

    let rows = risk_coverage_curve(&scored, &cfg.curve)?;
    write_atomic(&out_dir.join(CURVE_FILE), curve_csv(&rows).as_bytes())?;

    let summary = DemoSummary {
        seed,
        config: cfg,
        train: report,
        detection,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&out_dir.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(DemoOutputs {
        dir: out_dir.to_path_buf(),
        summary,
    })
}
