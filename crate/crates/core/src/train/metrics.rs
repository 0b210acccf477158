//! Radial-error metrics: MRE and SDR in millimetres, with pixel
//! equivalents and a per-landmark breakdown.

use serde::{Deserialize, Serialize};

use crate::codec::LandmarkSet;
use crate::data::Sample;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_THRESHOLDS_MM: [f64; 4] = [2.0, 2.5, 3.0, 4.0];

/// One evaluated landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialError {
    pub landmark: usize,
    pub px: f64,
    pub mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkStats {
    pub landmark: usize,
    pub count: usize,
    pub mre_mm: f64,
    pub mre_px: f64,
    pub sdr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub mre_mm: f64,
    pub mre_px: f64,
    pub thresholds_mm: Vec<f64>,
    /// Percentage of errors strictly below each threshold.
    pub sdr: Vec<f64>,
    pub per_landmark: Vec<LandmarkStats>,
}

impl EvalReport {
    pub fn sdr_at(&self, threshold_mm: f64) -> Option<f64> {
        self.thresholds_mm.iter().position(|&t| t == threshold_mm).map(|i| self.sdr[i])
    }
}

/// Errors of every landmark visible in the ground truth, in original-image
/// pixels and millimetres.
pub fn radial_errors(pred: &LandmarkSet, sample: &Sample) -> Result<Vec<RadialError>> {
    let gt = &sample.landmarks;
    if pred.len() != gt.len() {
        return Err(invalid!("{}: {} predicted landmarks, {} annotated", sample.id, pred.len(), gt.len()));
    }
    if !(sample.pixel_spacing_mm > 0.0 && sample.pixel_spacing_mm.is_finite()) {
        return Err(Error::Data(format!("{}: missing or invalid pixel spacing", sample.id)));
    }
    Ok((0..gt.len())
        .filter(|&j| gt.visible[j])
        .map(|j| {
            let [px, py] = pred.points[j];
            let [gx, gy] = gt.points[j];
            let d = (px - gx).hypot(py - gy);
            RadialError {
                landmark: j,
                px: d,
                mm: d * sample.pixel_spacing_mm,
            }
        })
        .collect())
}

/// Sorted summation makes the result independent of evaluation order.
fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn sdr(errors_mm: &[f64], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| 100.0 * errors_mm.iter().filter(|&&e| e < t).count() as f64 / errors_mm.len() as f64)
        .collect()
}

pub fn summarize(errors: &[RadialError], num_landmarks: usize, thresholds_mm: &[f64]) -> Result<EvalReport> {
    if errors.is_empty() {
        return Err(Error::Data("no visible landmarks to evaluate".into()));
    }
    let mut thresholds = thresholds_mm.to_vec();
    thresholds.sort_by(f64::total_cmp);
    let mm: Vec<f64> = errors.iter().map(|e| e.mm).collect();
    let per_landmark = (0..num_landmarks)
        .filter_map(|j| {
            let mine: Vec<&RadialError> = errors.iter().filter(|e| e.landmark == j).collect();
            if mine.is_empty() {
                return None;
            }
            let mm: Vec<f64> = mine.iter().map(|e| e.mm).collect();
            Some(LandmarkStats {
                landmark: j,
                count: mine.len(),
                mre_mm: sorted_mean(mm.clone()),
                mre_px: sorted_mean(mine.iter().map(|e| e.px).collect()),
                sdr: sdr(&mm, &thresholds),
            })
        })
        .collect();
    Ok(EvalReport {
        count: errors.len(),
        mre_mm: sorted_mean(mm.clone()),
        mre_px: sorted_mean(errors.iter().map(|e| e.px).collect()),
        sdr: sdr(&mm, &thresholds),
        thresholds_mm: thresholds,
        per_landmark,
    })
}
