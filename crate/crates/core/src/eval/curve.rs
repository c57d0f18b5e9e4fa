//! Risk versus mask-size curves.

use serde::{Deserialize, Serialize};

use super::trials::{run_cells, Cell, EvalFrame, TrialConfig};
use crate::error::{Error, Result};

/// Header of the curve CSV.
pub const CURVE_HEADER: [&str; 4] = ["method", "parameter", "mean_fnr", "mean_mask_size_pct"];

pub const METHOD_CFM: &str = "cfm";
pub const METHOD_BASELINE: &str = "baseline_alpha0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub tau_fail: f64,
    pub alphas: Vec<f64>,
    /// Failure levels (dB) at which the alpha = 0 baseline is calibrated.
    pub baseline_levels: Vec<f64>,
    pub trials: TrialConfig,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            tau_fail: 22.0,
            alphas: vec![0.001, 0.005, 0.01, 0.025, 0.05, 0.10],
            baseline_levels: (13..=26).map(f64::from).collect(),
            trials: TrialConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    /// Alpha for CFM rows, calibration level in dB for baseline rows.
    pub parameter: f64,
    pub mean_fnr: Option<f64>,
    pub mean_mask_size_pct: Option<f64>,
}

/// CFM rows in the order of `cfg.alphas`, then baseline rows in the order of
/// `cfg.baseline_levels`. Every row is evaluated against failures at `tau_fail`
/// over the same splits.
pub fn risk_coverage_curve(frames: &[EvalFrame], cfg: &CurveConfig) -> Result<Vec<CurveRow>> {
    if cfg.alphas.is_empty() && cfg.baseline_levels.is_empty() {
        return Err(Error::InvalidArgument("curve needs alphas or baseline levels".into()));
    }
    let mut cells: Vec<Cell> = cfg.alphas.iter().map(|&a| Cell::standard(a, cfg.tau_fail)).collect();
    cells.extend(cfg.baseline_levels.iter().map(|&l| Cell {
        alpha: 0.0,
        tau_fail_db: cfg.tau_fail,
        calibration_db: l,
    }));
    let trials = TrialConfig {
        alphas: if cfg.alphas.is_empty() { vec![0.0] } else { cfg.alphas.clone() },
        tau_fails: vec![cfg.tau_fail],
        ..cfg.trials.clone()
    };
    let report = run_cells(frames, &trials, &cells, "curve")?;
    Ok(report
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (method, parameter) = if i < cfg.alphas.len() {
                (METHOD_CFM, c.alpha)
            } else {
                (METHOD_BASELINE, c.calibration_db)
            };
            CurveRow {
                method: method.to_string(),
                parameter,
                mean_fnr: c.mean_fnr,
                mean_mask_size_pct: c.mean_mask_size_pct,
            }
        })
        .collect())
}

/// CSV with [`CURVE_HEADER`]; undefined means are left empty.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{MapUnit, ScalarMap};
    use rand::Rng;

    fn frames() -> Vec<EvalFrame> {
        let mut rng = crate::rng::seeded(3);
        (0..8)
            .map(|v| {
                let se: Vec<f32> = (0..400).map(|_| 10f64.powf(-rng.gen_range(14.0..40.0) / 10.0) as f32).collect();
                let scores: Vec<f32> = se.iter().map(|&e| e * rng.gen_range(0.5f32..2.0)).collect();
                EvalFrame::from_error(
                    v,
                    ScalarMap::new(20, 20, MapUnit::SquaredIntensity, se).unwrap(),
                    ScalarMap::new(20, 20, MapUnit::Score, scores).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn curve_is_monotone_and_baseline_is_conservative() {
        let cfg = CurveConfig {
            trials: TrialConfig {
                n_trials: 20,
                ..TrialConfig::default()
            },
            ..CurveConfig::default()
        };
        let rows = risk_coverage_curve(&frames(), &cfg).unwrap();
        assert_eq!(rows.len(), 6 + 14);
        let cfm: Vec<&CurveRow> = rows.iter().filter(|r| r.method == METHOD_CFM).collect();
        for w in cfm.windows(2) {
            assert!(w[0].mean_fnr.unwrap() <= w[1].mean_fnr.unwrap());
            assert!(w[0].mean_mask_size_pct.unwrap() >= w[1].mean_mask_size_pct.unwrap());
        }
        let base = rows
            .iter()
            .find(|r| r.method == METHOD_BASELINE && r.parameter == 22.0)
            .unwrap();
        for r in &cfm {
            assert!(base.mean_fnr.unwrap() <= r.mean_fnr.unwrap());
            assert!(base.mean_mask_size_pct.unwrap() >= r.mean_mask_size_pct.unwrap());
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let rows = vec![CurveRow {
            method: METHOD_CFM.into(),
            parameter: 0.05,
            mean_fnr: Some(0.04),
            mean_mask_size_pct: None,
        }];
        assert_eq!(
            curve_csv(&rows),
            "method,parameter,mean_fnr,mean_mask_size_pct\ncfm,0.05,0.04,\n"
        );
    }
}
