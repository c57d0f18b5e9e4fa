//! Bi-level conformal risk control over pixel populations.
//!
//! For a failure level (a PSNR cutoff) the oracle mask marks failing pixels and a
//! predicted mask flags pixels whose error score is at least `tau`. A false negative
//! is a failing pixel with score `< tau`, so the pooled false-negative rate is
//! nondecreasing in `tau`. Calibration picks the largest `tau` with
//!
//! ```text
//! N/(N+1) * FNR_cal(tau) - 1/(N+1) <= alpha
//! ```
//!
//! where `N` counts positive calibration pixels. Multiplying through by `N + 1`,
//! the condition reads `FN(tau) <= alpha * (N + 1) + 1`, and because `FN` is an
//! integer this is `FN(tau) <= K` with `K = floor(alpha * (N + 1) + 1)`. With the
//! positive scores sorted as `s(1) <= ... <= s(N)`, exactly the scores strictly
//! below `s(K+1)` are missed at `tau = s(K+1)`, and there are at most `K` of them;
//! any larger `tau` misses at least `K + 1`. Hence the supremum is `s(K+1)`, or
//! unbounded when `K >= N`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::errormaps::{BinaryMask, FailureLevel};
use crate::error::{Error, Result};
use crate::raster::ScalarMap;

/// Operative score threshold. The infinite ends are explicit variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// `-inf`: every pixel is flagged.
    RejectAll,
    At(f64),
    /// `+inf`: nothing is flagged; the risk constraint is vacuous.
    Unconstrained,
}

impl Threshold {
    /// Predicted-mask membership: `score >= tau`.
    pub fn flags(self, score: f64) -> bool {
        match self {
            Threshold::RejectAll => true,
            Threshold::At(t) => score >= t,
            Threshold::Unconstrained => false,
        }
    }

    /// Rank on the extended real line, for comparisons in tests and reports.
    pub fn as_f64(self) -> f64 {
        match self {
            Threshold::RejectAll => f64::NEG_INFINITY,
            Threshold::At(t) => t,
            Threshold::Unconstrained => f64::INFINITY,
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::RejectAll => s.serialize_str("reject_all"),
            Threshold::At(t) => s.serialize_f64(*t),
            Threshold::Unconstrained => s.serialize_str("unconstrained"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) if t.is_finite() => Ok(Threshold::At(t)),
            Raw::Num(t) => Err(serde::de::Error::custom(format!("non-finite threshold {t}"))),
            Raw::Tag(s) if s == "unconstrained" => Ok(Threshold::Unconstrained),
            Raw::Tag(s) if s == "reject_all" => Ok(Threshold::RejectAll),
            Raw::Tag(s) => Err(serde::de::Error::custom(format!("unknown threshold tag {s:?}"))),
        }
    }
}

/// Paired predicted-score maps and oracle failure masks for one failure level.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    level: FailureLevel,
    items: Vec<(ScalarMap, BinaryMask)>,
}

impl CalibrationSet {
    pub fn new(level: FailureLevel, items: Vec<(ScalarMap, BinaryMask)>) -> Result<Self> {
        for (i, (scores, mask)) in items.iter().enumerate() {
            if scores.height() != mask.height() || scores.width() != mask.width() {
                return Err(Error::Shape(format!(
                    "item {i}: scores {}x{} vs mask {}x{}",
                    scores.height(),
                    scores.width(),
                    mask.height(),
                    mask.width()
                )));
            }
        }
        Ok(Self { level, items })
    }

    pub fn level(&self) -> FailureLevel {
        self.level
    }

    pub fn items(&self) -> &[(ScalarMap, BinaryMask)] {
        &self.items
    }

    /// Scores at every positive (failing) pixel, pooled over all items.
    pub fn positive_scores(&self) -> Vec<f64> {
        self.items
            .iter()
            .flat_map(|(s, m)| {
                s.data()
                    .iter()
                    .zip(m.data())
                    .filter(|(_, &m)| m == 1)
                    .map(|(&v, _)| f64::from(v))
            })
            .collect()
    }

    pub fn n_positives(&self) -> usize {
        self.items.iter().map(|(_, m)| m.count_ones()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub tau_fail_db: f64,
    pub alpha: f64,
    pub n_positives: u64,
    pub tau_tilde: Threshold,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Largest admissible calibration false-negative count, `floor(alpha * (N + 1) + 1)`,
/// evaluated in exact rational arithmetic.
pub fn max_false_negatives(alpha: f64, n_positives: u64) -> Result<u64> {
    check_alpha(alpha)?;
    let a = BigRational::from_float(alpha).expect("alpha is finite");
    let bound = a * BigRational::from_integer(BigInt::from(n_positives + 1))
        + BigRational::from_integer(BigInt::from(1));
    Ok(bound.floor().to_integer().to_u64().expect("bound fits in u64"))
}

/// Threshold from the pooled positive-pixel scores. `scores` is reordered in place.
pub fn threshold_from_scores(scores: &mut [f64], alpha: f64) -> Result<Threshold> {
    let n = scores.len() as u64;
    let k = max_false_negatives(alpha, n)?;
    if n == 0 || k >= n {
        return Ok(Threshold::Unconstrained);
    }
    // s(K+1) in 1-based order statistics is index K once sorted
    let k = k as usize;
    let (_, kth, _) = scores.select_nth_unstable_by(k, f64::total_cmp);
    Ok(Threshold::At(*kth))
}

/// Operative threshold controlling the pooled FNR at `alpha` on the calibration set.
pub fn calibrate(cal: &CalibrationSet, alpha: f64) -> Result<CalibrationResult> {
    check_alpha(alpha)?;
    let mut scores = cal.positive_scores();
    let n = scores.len() as u64;
    let tau_tilde = threshold_from_scores(&mut scores, alpha)?;
    let warning = (n == 0).then(|| {
        "no positive calibration pixels at this failure level; threshold is unconstrained".to_string()
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(CalibrationResult {
        tau_fail_db: cal.level().db(),
        alpha,
        n_positives: n,
        tau_tilde,
        warning,
    })
}

/// The conservative `alpha -> 0` special case.
pub fn baseline_alpha_zero(cal: &CalibrationSet) -> Result<CalibrationResult> {
    calibrate(cal, 0.0)
}

/// Predicted failure mask `1{score >= tau}`.
pub fn apply_mask(e_hat: &ScalarMap, tau: Threshold) -> BinaryMask {
    BinaryMask::from_fn(
        e_hat.height(),
        e_hat.width(),
        e_hat.data().iter().map(|&v| tau.flags(f64::from(v))),
    )
    .expect("dims taken from the score map")
}

/// Pooled false-negative and positive counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnrCounts {
    pub false_negatives: u64,
    pub positives: u64,
}

impl FnrCounts {
    pub fn add(&mut self, oracle: &[u8], predicted: &[u8]) {
        for (&m, &p) in oracle.iter().zip(predicted) {
            if m == 1 {
                self.positives += 1;
                if p == 0 {
                    self.false_negatives += 1;
                }
            }
        }
    }

    /// `FN / N`, undefined when there are no positives.
    pub fn rate(self) -> Result<f64> {
        if self.positives == 0 {
            return Err(Error::Undefined("no positive pixels".into()));
        }
        Ok(self.false_negatives as f64 / self.positives as f64)
    }
}

/// Pooled false-negative rate over paired oracle / predicted masks.
pub fn fnr(oracle: &[BinaryMask], predicted: &[BinaryMask]) -> Result<f64> {
    if oracle.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} oracle masks vs {} predicted masks",
            oracle.len(),
            predicted.len()
        )));
    }
    let mut counts = FnrCounts::default();
    for (m, p) in oracle.iter().zip(predicted) {
        if m.height() != p.height() || m.width() != p.width() {
            return Err(Error::Shape("oracle and predicted mask dims differ".into()));
        }
        counts.add(m.data(), p.data());
    }
    counts.rate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub fnr_test: f64,
    pub n_test_positives: u64,
    pub satisfied_at_alpha: bool,
    /// Per-image FNR, `None` for images without positives. Diagnostic only.
    pub per_image_fnr: Vec<Option<f64>>,
}

/// Evaluates the calibrated threshold on held-out data.
///
/// A single split may exceed `alpha`; the bound holds in expectation over
/// calibration draws.
pub fn guarantee_check(result: &CalibrationResult, test: &CalibrationSet) -> Result<GuaranteeReport> {
    let mut total = FnrCounts::default();
    let mut per_image = Vec::with_capacity(test.items().len());
    for (scores, oracle) in test.items() {
        let predicted = apply_mask(scores, result.tau_tilde);
        let mut c = FnrCounts::default();
        c.add(oracle.data(), predicted.data());
        per_image.push(c.rate().ok());
        total.false_negatives += c.false_negatives;
        total.positives += c.positives;
    }
    let fnr_test = total.rate()?;
    Ok(GuaranteeReport {
        fnr_test,
        n_test_positives: total.positives,
        satisfied_at_alpha: fnr_test <= result.alpha,
        per_image_fnr: per_image,
    })
}

/// Whether `tau` satisfies the calibration inequality, checked in exact arithmetic
/// against the literal form `N/(N+1) * FNR - 1/(N+1) <= alpha`.
pub fn satisfies_risk_bound(positive_scores: &[f64], tau: Threshold, alpha: f64) -> bool {
    let n = positive_scores.len() as i64;
    if n == 0 {
        return true;
    }
    let missed = positive_scores.iter().filter(|&&s| !tau.flags(s)).count() as i64;
    let r = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
    let fnr = r(missed, n);
    let lhs = r(n, n + 1) * fnr - r(1, n + 1);
    let alpha = BigRational::from_float(alpha).unwrap_or_else(BigRational::zero);
    lhs <= alpha
}
