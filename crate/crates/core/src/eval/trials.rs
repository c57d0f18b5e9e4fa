//! Repeated random calibration/test splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{threshold_from_scores, FnrCounts, Threshold};
use crate::dataset::{load_frames, LoadedFrame};
use crate::errnet::{predict, ErrNetParams, FeatureMode};
use crate::error::{Error, Result};
use crate::errormaps::{failure_mask, psnr_from_mse, psnr_map, squared_error_map, BinaryMask, FailureLevel, PsnrOptions};
use crate::raster::{MapUnit, ScalarMap};
use crate::rng::{derive_seed, seeded};
use crate::synth::{DatasetManifest, Split};

/// Where pixel error scores come from.
#[derive(Debug, Clone)]
pub enum ScoreSource<'a> {
    /// True squared error.
    Oracle,
    /// True squared error times `exp(sigma * z)`, `z` standard normal per pixel.
    NoisyOracle { sigma: f64, seed: u64 },
    ErrNet(&'a ErrNetParams),
    /// One map per evaluation frame, in manifest order.
    Precomputed(Vec<ScalarMap>),
}

impl ScoreSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreSource::Oracle => "oracle",
            ScoreSource::NoisyOracle { .. } => "noisy_oracle",
            ScoreSource::ErrNet(_) => "errnet",
            ScoreSource::Precomputed(_) => "precomputed",
        }
    }
}

/// One evaluation image with everything the trials need.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    /// Split unit for video-level splitting.
    pub video: usize,
    pub se: ScalarMap,
    pub psnr: ScalarMap,
    pub scores: ScalarMap,
}

impl EvalFrame {
    pub fn new(video: usize, se: ScalarMap, psnr: ScalarMap, scores: ScalarMap) -> Result<Self> {
        for (what, m) in [("PSNR map", &psnr), ("scores", &scores)] {
            if (se.height(), se.width()) != (m.height(), m.width()) {
                return Err(Error::Shape(format!(
                    "{what} {}x{} vs error map {}x{}",
                    m.height(),
                    m.width(),
                    se.height(),
                    se.width()
                )));
            }
        }
        Ok(Self { video, se, psnr, scores })
    }

    /// Derives the pointwise PSNR from an existing error map.
    pub fn from_error(video: usize, se: ScalarMap, scores: ScalarMap) -> Result<Self> {
        let cap = PsnrOptions::default().cap_db;
        let psnr = ScalarMap::new(
            se.height(),
            se.width(),
            MapUnit::Decibels,
            se.data().iter().map(|&v| psnr_from_mse(f64::from(v), cap) as f32).collect(),
        )?;
        Self::new(video, se, psnr, scores)
    }

    pub fn pixels(&self) -> usize {
        self.se.data().len()
    }
}

/// Videos not tagged for training.
pub fn eval_videos(manifest: &DatasetManifest) -> Vec<usize> {
    (0..manifest.videos.len())
        .filter(|&v| manifest.videos[v].split != Split::Train)
        .collect()
}

fn scores_for(frame: &LoadedFrame, se: &ScalarMap, index: usize, source: &ScoreSource) -> Result<ScalarMap> {
    match source {
        ScoreSource::Oracle => Ok(ScalarMap::new(se.height(), se.width(), MapUnit::Score, se.data().to_vec())?),
        ScoreSource::NoisyOracle { sigma, seed } => {
            let mut rng = seeded(derive_seed(*seed, index as u64));
            let data = se
                .data()
                .iter()
                .map(|&v| {
                    let z: f64 = rng.sample(StandardNormal);
                    (f64::from(v) * (sigma * z).exp()) as f32
                })
                .collect();
            ScalarMap::new(se.height(), se.width(), MapUnit::Score, data)
        }
        ScoreSource::ErrNet(params) => predict(params, &frame.features),
        ScoreSource::Precomputed(maps) => maps
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no precomputed scores for evaluation frame {index}"))),
    }
}

/// Loads the given videos and attaches error maps and scores.
pub fn prepare_frames(
    manifest: &DatasetManifest,
    videos: &[usize],
    mode: FeatureMode,
    source: &ScoreSource,
) -> Result<Vec<EvalFrame>> {
    let loaded = load_frames(manifest, videos, mode)?;
    if let ScoreSource::Precomputed(maps) = source {
        if maps.len() != loaded.len() {
            return Err(Error::InvalidArgument(format!(
                "{} precomputed score maps for {} evaluation frames",
                maps.len(),
                loaded.len()
            )));
        }
    }
    loaded
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let se = squared_error_map(&f.sr, &f.hr)?;
            let scores = scores_for(f, &se, i, source)?;
            EvalFrame::new(f.video, se, psnr_map(&f.sr, &f.hr)?, scores)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Video,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    pub n_trials: usize,
    pub cal_fraction: f64,
    pub split_unit: SplitUnit,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub tau_fails: Vec<f64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            cal_fraction: 0.7,
            split_unit: SplitUnit::Video,
            seed: 0,
            alphas: vec![0.10, 0.05],
            tau_fails: vec![22.0, 24.0, 26.0],
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        if !(self.cal_fraction > 0.0 && self.cal_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cal_fraction {} outside (0, 1)",
                self.cal_fraction
            )));
        }
        if self.alphas.is_empty() || self.tau_fails.is_empty() {
            return Err(Error::InvalidArgument("alpha and tau_fail lists must be nonempty".into()));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!("alpha {a} outside [0, 1]")));
            }
        }
        for &t in &self.tau_fails {
            FailureLevel::new(t)?;
        }
        Ok(())
    }
}

/// One calibrate-then-test configuration. The threshold is calibrated against
/// failures at `calibration_db` and judged against failures at `tau_fail_db`;
/// the two coincide except for the surrogate-level baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub alpha: f64,
    pub tau_fail_db: f64,
    pub calibration_db: f64,
}

impl Cell {
    pub fn standard(alpha: f64, tau_fail_db: f64) -> Self {
        Self {
            alpha,
            tau_fail_db,
            calibration_db: tau_fail_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub alpha: f64,
    pub tau_fail_db: f64,
    pub calibration_db: f64,
    pub n_cal_positives: u64,
    pub n_test_positives: u64,
    pub tau_tilde: Threshold,
    pub fnr: Option<f64>,
    /// Mean over test images of the flagged percentage.
    pub mask_size_pct: f64,
    /// Pooled over all accepted test pixels; `None` when everything was rejected.
    pub accepted_psnr_db: Option<f64>,
    pub overall_psnr_db: f64,
    /// No positives on the calibration or the test side.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub tau_fail_db: f64,
    pub calibration_db: f64,
    pub n_trials: usize,
    pub n_degenerate: usize,
    pub mean_fnr: Option<f64>,
    pub std_fnr: Option<f64>,
    pub mean_mask_size_pct: Option<f64>,
    pub mean_accepted_psnr_db: Option<f64>,
    pub mean_overall_psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub source: String,
    pub config: TrialConfig,
    pub n_frames: usize,
    pub n_units: usize,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRow>,
}

impl TrialReport {
    pub fn cell(&self, alpha: f64, tau_fail_db: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.tau_fail_db == tau_fail_db && c.calibration_db == tau_fail_db)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// `(calibration frame indices, test frame indices)` for trial `t`.
pub fn split_frames(frames: &[EvalFrame], cfg: &TrialConfig, trial: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let unit_of = |i: usize| match cfg.split_unit {
        SplitUnit::Video => frames[i].video,
        SplitUnit::Image => i,
    };
    let mut units: Vec<usize> = (0..frames.len()).map(unit_of).collect();
    units.sort_unstable();
    units.dedup();
    if units.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 split units, have {}",
            units.len()
        )));
    }
    units.shuffle(&mut seeded(cfg.seed ^ trial as u64));
    let n_cal = ((cfg.cal_fraction * units.len() as f64).round() as usize).clamp(1, units.len() - 1);
    let cal_units = &units[..n_cal];
    let (mut cal, mut test) = (Vec::new(), Vec::new());
    for i in 0..frames.len() {
        if cal_units.contains(&unit_of(i)) {
            cal.push(i);
        } else {
            test.push(i);
        }
    }
    Ok((cal, test))
}

type MaskTable = BTreeMap<u64, Vec<BinaryMask>>;

fn mask_table(frames: &[EvalFrame], levels: impl Iterator<Item = f64>) -> Result<MaskTable> {
    let mut table = MaskTable::new();
    for db in levels {
        if table.contains_key(&db.to_bits()) {
            continue;
        }
        let level = FailureLevel::new(db)?;
        let masks = frames.par_iter().map(|f| failure_mask(&f.psnr, level)).collect();
        table.insert(db.to_bits(), masks);
    }
    Ok(table)
}

struct SplitOutcome {
    counts: FnrCounts,
    mask_size_pct: f64,
    accepted_psnr_db: Option<f64>,
    overall_psnr_db: f64,
}

fn evaluate_split(frames: &[EvalFrame], test: &[usize], oracle: &[BinaryMask], tau: Threshold) -> SplitOutcome {
    let cap = PsnrOptions::default().cap_db;
    let mut counts = FnrCounts::default();
    let mut size_sum = 0.0;
    let (mut acc_se, mut acc_n) = (0.0f64, 0usize);
    let (mut all_se, mut all_n) = (0.0f64, 0usize);
    for &i in test {
        let f = &frames[i];
        let m = oracle[i].data();
        let mut flagged = 0usize;
        for ((&s, &e), &pos) in f.scores.data().iter().zip(f.se.data()).zip(m) {
            let hit = tau.flags(f64::from(s));
            let e = f64::from(e);
            if hit {
                flagged += 1;
            } else {
                acc_se += e;
                acc_n += 1;
            }
            all_se += e;
            if pos == 1 {
                counts.positives += 1;
                counts.false_negatives += u64::from(!hit);
            }
        }
        all_n += f.pixels();
        size_sum += 100.0 * flagged as f64 / f.pixels() as f64;
    }
    SplitOutcome {
        counts,
        mask_size_pct: size_sum / test.len() as f64,
        accepted_psnr_db: (acc_n > 0).then(|| psnr_from_mse(acc_se / acc_n as f64, cap)),
        overall_psnr_db: psnr_from_mse(all_se / all_n as f64, cap),
    }
}

fn positive_scores(frames: &[EvalFrame], idx: &[usize], masks: &[BinaryMask]) -> Vec<f64> {
    let mut out = Vec::new();
    for &i in idx {
        for (&s, &m) in frames[i].scores.data().iter().zip(masks[i].data()) {
            if m == 1 {
                out.push(f64::from(s));
            }
        }
    }
    out
}

fn run_one_trial(frames: &[EvalFrame], cfg: &TrialConfig, cells: &[Cell], table: &MaskTable, trial: usize) -> Result<Vec<TrialRow>> {
    let (cal, test) = split_frames(frames, cfg, trial)?;
    let mut rows = Vec::with_capacity(cells.len());
    let mut cal_cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for cell in cells {
        let cal_masks = &table[&cell.calibration_db.to_bits()];
        let cal_scores = cal_cache
            .entry(cell.calibration_db.to_bits())
            .or_insert_with(|| positive_scores(frames, &cal, cal_masks));
        let n_cal = cal_scores.len() as u64;
        let tau = threshold_from_scores(&mut cal_scores.clone(), cell.alpha)?;
        let out = evaluate_split(frames, &test, &table[&cell.tau_fail_db.to_bits()], tau);
        let degenerate = n_cal == 0 || out.counts.positives == 0;
        rows.push(TrialRow {
            trial,
            alpha: cell.alpha,
            tau_fail_db: cell.tau_fail_db,
            calibration_db: cell.calibration_db,
            n_cal_positives: n_cal,
            n_test_positives: out.counts.positives,
            tau_tilde: tau,
            fnr: out.counts.rate().ok(),
            mask_size_pct: out.mask_size_pct,
            accepted_psnr_db: out.accepted_psnr_db,
            overall_psnr_db: out.overall_psnr_db,
            degenerate,
        });
    }
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

fn summarize(cell: &Cell, rows: &[&TrialRow]) -> CellSummary {
    let kept: Vec<&&TrialRow> = rows.iter().filter(|r| !r.degenerate).collect();
    let fnrs: Vec<f64> = kept.iter().filter_map(|r| r.fnr).collect();
    let sizes: Vec<f64> = kept.iter().map(|r| r.mask_size_pct).collect();
    let acc: Vec<f64> = kept.iter().filter_map(|r| r.accepted_psnr_db).collect();
    let all: Vec<f64> = kept.iter().map(|r| r.overall_psnr_db).collect();
    let (mean_fnr, std_fnr) = mean_std(&fnrs);
    CellSummary {
        alpha: cell.alpha,
        tau_fail_db: cell.tau_fail_db,
        calibration_db: cell.calibration_db,
        n_trials: rows.len(),
        n_degenerate: rows.len() - kept.len(),
        mean_fnr,
        std_fnr,
        mean_mask_size_pct: mean_std(&sizes).0,
        mean_accepted_psnr_db: mean_std(&acc).0,
        mean_overall_psnr_db: mean_std(&all).0,
    }
}

/// Runs `cfg.n_trials` splits over arbitrary cells. Degenerate trials are kept in
/// the rows and excluded from the cell means.
pub fn run_cells(frames: &[EvalFrame], cfg: &TrialConfig, cells: &[Cell], source: &str) -> Result<TrialReport> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no evaluation frames".into()));
    }
    for c in cells {
        if !(0.0..=1.0).contains(&c.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", c.alpha)));
        }
    }
    let table = mask_table(frames, cells.iter().flat_map(|c| [c.tau_fail_db, c.calibration_db]))?;
    let per_trial: Vec<Vec<TrialRow>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_one_trial(frames, cfg, cells, &table, t))
        .collect::<Result<_>>()?;
    let trials: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let rows: Vec<&TrialRow> = trials.iter().skip(ci).step_by(cells.len()).collect();
            summarize(cell, &rows)
        })
        .collect();
    let n_units = match cfg.split_unit {
        SplitUnit::Video => {
            let mut v: Vec<usize> = frames.iter().map(|f| f.video).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        }
        SplitUnit::Image => frames.len(),
    };
    for s in &summaries {
        let s: &CellSummary = s;
        if s.n_degenerate > 0 {
            log::warn!(
                "alpha {} tau_fail {} dB: {} of {} trials had no positives",
                s.alpha,
                s.tau_fail_db,
                s.n_degenerate,
                s.n_trials
            );
        }
    }
    Ok(TrialReport {
        source: source.to_string(),
        config: cfg.clone(),
        n_frames: frames.len(),
        n_units,
        cells: summaries,
        trials,
    })
}

/// The full (alpha, tau_fail) grid of `cfg`, tau_fail-major.
pub fn run_trials(frames: &[EvalFrame], cfg: &TrialConfig, source: &str) -> Result<TrialReport> {
    let cells: Vec<Cell> = cfg
        .tau_fails
        .iter()
        .flat_map(|&t| cfg.alphas.iter().map(move |&a| Cell::standard(a, t)))
        .collect();
    run_cells(frames, cfg, &cells, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frames whose error equals `10^(-db/10)` for a given per-pixel dB pattern.
    fn frame(video: usize, dbs: &[f64]) -> EvalFrame {
        let se: Vec<f32> = dbs.iter().map(|d| 10f64.powf(-d / 10.0) as f32).collect();
        let se = ScalarMap::new(1, dbs.len(), MapUnit::SquaredIntensity, se).unwrap();
        let scores = ScalarMap::new(1, dbs.len(), MapUnit::Score, se.data().to_vec()).unwrap();
        EvalFrame::from_error(video, se, scores).unwrap()
    }

    fn toy() -> Vec<EvalFrame> {
        (0..6)
            .map(|v| frame(v, &[10.0, 18.0, 21.0 + v as f64 * 0.1, 30.0, 40.0, 50.0]))
            .collect()
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let frames = toy();
        let cfg = TrialConfig::default();
        let (cal, test) = split_frames(&frames, &cfg, 3).unwrap();
        assert_eq!(cal.len(), 4);
        assert_eq!(test.len(), 2);
        let mut all = [cal.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        assert_eq!(split_frames(&frames, &cfg, 3).unwrap(), (cal, test));
    }

    #[test]
    fn too_few_units_rejected() {
        let frames = vec![frame(0, &[10.0]), frame(0, &[20.0])];
        assert!(split_frames(&frames, &TrialConfig::default(), 0).is_err());
    }

    #[test]
    fn oracle_trials_accept_lower_error() {
        let frames = toy();
        let cfg = TrialConfig {
            n_trials: 10,
            ..TrialConfig::default()
        };
        let report = run_trials(&frames, &cfg, "oracle").unwrap();
        assert_eq!(report.cells.len(), 6);
        assert_eq!(report.trials.len(), 60);
        for r in &report.trials {
            if let Some(acc) = r.accepted_psnr_db {
                assert!(acc >= r.overall_psnr_db);
            }
        }
        // 3 positives per image at 22 dB, 4 calibration videos
        let row = &report.trials[0];
        assert_eq!(row.n_cal_positives, 12);
    }

    #[test]
    fn degenerate_trials_are_counted() {
        let frames: Vec<EvalFrame> = (0..4).map(|v| frame(v, &[40.0, 50.0])).collect();
        let cfg = TrialConfig {
            n_trials: 5,
            ..TrialConfig::default()
        };
        let report = run_trials(&frames, &cfg, "oracle").unwrap();
        for c in &report.cells {
            assert_eq!(c.n_degenerate, 5);
            assert_eq!(c.mean_fnr, None);
        }
    }

    #[test]
    fn report_is_reproducible() {
        let frames = toy();
        let cfg = TrialConfig {
            n_trials: 7,
            seed: 42,
            ..TrialConfig::default()
        };
        let a = run_trials(&frames, &cfg, "oracle").unwrap().to_json();
        let b = run_trials(&frames, &cfg, "oracle").unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let bad = TrialConfig {
            cal_fraction: 1.0,
            ..TrialConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrialConfig {
            n_trials: 0,
            ..TrialConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
