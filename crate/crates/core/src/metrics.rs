//! Depth evaluation metrics: mean absolute error, root mean squared error,
//! and threshold-ratio accuracies.
//!
//! Evaluation runs over every pixel with valid ground truth. A prediction of
//! 0 (invalid) at such a pixel is scored as an error of the full ground
//! truth depth and fails every ratio threshold; skipping those pixels would
//! reward empty predictions. Depths are stored in meters and reported in
//! millimeters.

use serde::{Deserialize, Serialize};

use crate::image::DepthMap;
use crate::{Error, Result};

/// Ratio thresholds for the accuracy metrics, strictly increasing and > 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaThresholds {
    d1: f64,
    d2: f64,
    d3: f64,
}

impl DeltaThresholds {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Result<Self> {
        if !(d1.is_finite() && d2.is_finite() && d3.is_finite() && 1.0 < d1 && d1 < d2 && d2 < d3)
        {
            return Err(Error::InvalidInput(format!(
                "thresholds must satisfy 1 < d1 < d2 < d3, got ({d1}, {d2}, {d3})"
            )));
        }
        Ok(Self { d1, d2, d3 })
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    pub fn d3(&self) -> f64 {
        self.d3
    }
}

impl Default for DeltaThresholds {
    /// The strict thresholds used throughout: 1.05, 1.10, 1.25 cubed.
    fn default() -> Self {
        Self {
            d1: 1.05,
            d2: 1.10,
            d3: 1.25f64.powi(3),
        }
    }
}

/// Evaluation summary for one prediction against ground truth.
///
/// Errors are millimeters; accuracies are percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae_mm: f64,
    pub rmse_mm: f64,
    pub acc1: f64,
    pub acc2: f64,
    pub acc3: f64,
    pub valid_count: usize,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "frame,mae_mm,rmse_mm,d1,d2,d3,valid_count"
    }

    pub fn csv_row(&self, frame: &str) -> String {
        format!(
            "{frame},{},{},{},{},{},{}",
            self.mae_mm, self.rmse_mm, self.acc1, self.acc2, self.acc3, self.valid_count
        )
    }
}

/// Compares a predicted depth map against ground truth over all pixels with
/// valid ground truth.
///
/// The ratio metric is symmetric, `max(pred/gt, gt/pred)`, counted as
/// accurate when it does not exceed the threshold. Returns an error when the
/// shapes differ or ground truth has no valid pixel.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, thresholds: &DeltaThresholds) -> Result<EvalReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut n = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut hits = [0usize; 3];
    for (p, g) in pred.data().iter().zip(gt.data()) {
        if *g <= 0.0 {
            continue;
        }
        n += 1;
        let e = (p - g).abs();
        abs_sum += e;
        sq_sum += e * e;
        // p = 0 makes the ratio infinite, failing every threshold.
        let ratio = (p / g).max(g / p);
        if ratio <= thresholds.d1 {
            hits[0] += 1;
        }
        if ratio <= thresholds.d2 {
            hits[1] += 1;
        }
        if ratio <= thresholds.d3 {
            hits[2] += 1;
        }
    }
    if n == 0 {
        return Err(Error::Undefined(
            "ground truth has no valid pixels to evaluate against".into(),
        ));
    }
    let nf = n as f64;
    Ok(EvalReport {
        mae_mm: abs_sum / nf * 1000.0,
        rmse_mm: (sq_sum / nf).sqrt() * 1000.0,
        acc1: 100.0 * hits[0] as f64 / nf,
        acc2: 100.0 * hits[1] as f64 / nf,
        acc3: 100.0 * hits[2] as f64 / nf,
        valid_count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map_of(w: usize, h: usize, vals: &[f64]) -> DepthMap {
        let mut d = DepthMap::zeros(w, h);
        for (i, v) in vals.iter().enumerate() {
            if *v > 0.0 {
                d.set(i % w, i / w, *v);
            }
        }
        d
    }

    fn random_pair(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (DepthMap, DepthMap) {
        let mut pred = DepthMap::zeros(w, h);
        let mut gt = DepthMap::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.8) {
                    gt.set(x, y, rng.gen_range(0.3..8.0));
                }
                if rng.gen_bool(0.9) {
                    pred.set(x, y, rng.gen_range(0.3..8.0));
                }
            }
        }
        (pred, gt)
    }

    #[test]
    fn perfect_prediction_scores_zero_error_and_full_accuracy() {
        let gt = map_of(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = evaluate(&gt, &gt, &DeltaThresholds::default()).unwrap();
        assert_eq!(r.mae_mm, 0.0);
        assert_eq!(r.rmse_mm, 0.0);
        assert_eq!((r.acc1, r.acc2, r.acc3), (100.0, 100.0, 100.0));
        assert_eq!(r.valid_count, 4);
    }

    #[test]
    fn uniform_six_percent_overshoot_fails_only_the_tightest_threshold() {
        let gt = map_of(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let pred = map_of(2, 2, &[1.06, 2.12, 3.18, 4.24]);
        let r = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap();
        assert_eq!(r.acc1, 0.0);
        assert_eq!(r.acc2, 100.0);
        assert_eq!(r.acc3, 100.0);
        // MAE = 0.06 * mean(gt) meters = 60 * 2.5 mm / ... = 150 mm.
        assert!((r.mae_mm - 150.0).abs() < 1e-9);
    }

    #[test]
    fn hand_case_counts_invalid_prediction_as_error() {
        let gt = map_of(2, 2, &[1.0, 2.0, 0.0, 4.0]);
        let pred = map_of(2, 2, &[1.1, 2.0, 3.0, 2.0]);
        let r = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap();
        assert_eq!(r.valid_count, 3);
        assert!((r.mae_mm - 700.0).abs() < 1e-9);
        // Ratios (1.1, 1.0, 2.0): only 1.0 clears 1.05; 1.1 also clears
        // 1.10 (inclusive); 2.0 fails even 1.25^3.
        assert!((r.acc1 - 100.0 / 3.0).abs() < 1e-9);
        assert!((r.acc2 - 200.0 / 3.0).abs() < 1e-9);
        assert!((r.acc3 - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_prediction_fails_every_threshold() {
        let gt = map_of(1, 2, &[1.0, 1.0]);
        let pred = map_of(1, 2, &[1.0, 0.0]);
        let r = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap();
        assert_eq!(r.valid_count, 2);
        assert_eq!((r.acc1, r.acc2, r.acc3), (50.0, 50.0, 50.0));
        assert!((r.mae_mm - 500.0).abs() < 1e-9);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let gt = DepthMap::zeros(4, 4);
        let pred = map_of(4, 4, &[1.0; 16]);
        let err = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap_err();
        assert_eq!(err.category(), "undefined");
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let gt = map_of(2, 2, &[1.0; 4]);
        let pred = map_of(2, 3, &[1.0; 6]);
        assert_eq!(
            evaluate(&pred, &gt, &DeltaThresholds::default())
                .unwrap_err()
                .category(),
            "shape"
        );
    }

    #[test]
    fn invalid_threshold_ordering_is_rejected() {
        assert!(DeltaThresholds::new(1.05, 1.10, 1.953125).is_ok());
        assert!(DeltaThresholds::new(1.10, 1.05, 1.953125).is_err());
        assert!(DeltaThresholds::new(0.9, 1.10, 1.953125).is_err());
        assert!(DeltaThresholds::new(1.05, 1.05, 1.953125).is_err());
    }

    #[test]
    fn rmse_dominates_mae_and_accuracies_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (pred, gt) = random_pair(&mut rng, 12, 9);
            if gt.valid_count() == 0 {
                continue;
            }
            let r = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap();
            assert!(r.rmse_mm >= r.mae_mm - 1e-12);
            assert!(r.acc1 <= r.acc2 && r.acc2 <= r.acc3);
            for acc in [r.acc1, r.acc2, r.acc3] {
                assert!((0.0..=100.0).contains(&acc));
            }
        }
    }

    #[test]
    fn scaling_both_maps_scales_errors_and_preserves_accuracies() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let (pred, gt) = random_pair(&mut rng, 10, 10);
            if gt.valid_count() == 0 {
                continue;
            }
            let r = evaluate(&pred, &gt, &DeltaThresholds::default()).unwrap();
            // Power-of-two scale: exact in floating point, so the ratio set
            // and therefore the accuracies are bit-identical.
            let scale = 2.0;
            let scale_map = |m: &DepthMap| {
                let mut s = DepthMap::zeros(m.width(), m.height());
                for y in 0..m.height() {
                    for x in 0..m.width() {
                        s.set(x, y, m.get(x, y) * scale);
                    }
                }
                s
            };
            let rs = evaluate(&scale_map(&pred), &scale_map(&gt), &DeltaThresholds::default())
                .unwrap();
            assert_eq!(rs.acc1, r.acc1);
            assert_eq!(rs.acc2, r.acc2);
            assert_eq!(rs.acc3, r.acc3);
            assert!((rs.mae_mm - scale * r.mae_mm).abs() < 1e-9 * (1.0 + r.mae_mm));
            assert!((rs.rmse_mm - scale * r.rmse_mm).abs() < 1e-9 * (1.0 + r.rmse_mm));
        }
    }

    #[test]
    fn csv_row_matches_header_layout() {
        let r = EvalReport {
            mae_mm: 700.0,
            rmse_mm: 1161.8950037622322,
            acc1: 100.0 / 3.0,
            acc2: 200.0 / 3.0,
            acc3: 200.0 / 3.0,
            valid_count: 3,
        };
        assert_eq!(EvalReport::csv_header().split(',').count(), 7);
        let row = r.csv_row("frame_000");
        assert_eq!(row.split(',').count(), 7);
        assert!(row.starts_with("frame_000,700,"));
    }
}
