//! Grounding metrics and distributional analyses: IoU, precision@threshold,
//! Gaussian kernel density estimates of box-area distributions, and the 1-D
//! Wasserstein distance between empirical distributions.
//!
//! Box areas are analyzed on the percent-of-image-area scale so distances
//! are comparable across environments with different image sizes.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::scene::BBox;

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let intersection = ix * iy;
    let union = a.area() + b.area() - intersection;
    if union <= 0.0 {
        return 0.0;
    }
    intersection / union
}

/// One gold/prediction comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub gold_box: BBox,
    pub predicted_box: BBox,
}

/// Precision summary over a pair set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub threshold: f64,
    /// Fraction of pairs with IoU strictly greater than the threshold.
    pub precision_at_threshold: f64,
    /// Per-pair IoU in input order.
    pub ious: Vec<f64>,
    /// Ids of the pairs that did not exceed the threshold.
    pub failures: Vec<String>,
}

/// precision@threshold with a strict inequality: IoU > threshold counts as
/// success.
pub fn precision_at(pairs: &[EvalPair], threshold: f64) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    let ious: Vec<f64> = pairs
        .iter()
        .map(|p| iou(&p.gold_box, &p.predicted_box))
        .collect();
    let failures: Vec<String> = pairs
        .iter()
        .zip(&ious)
        .filter(|(_, v)| **v <= threshold)
        .map(|(p, _)| p.id.clone())
        .collect();
    let successes = ious.iter().filter(|v| **v > threshold).count();
    Ok(EvalReport {
        n: pairs.len(),
        threshold,
        precision_at_threshold: successes as f64 / pairs.len() as f64,
        ious,
        failures,
    })
}

/// A labeled sample of box areas in percent of image area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    pub label: String,
    pub values: Vec<f64>,
}

impl AreaSample {
    pub fn new(label: String, values: Vec<f64>) -> Result<Self, EvalError> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvalError::NegativeArea);
        }
        Ok(Self { label, values })
    }

    /// Box area as percent of image area.
    pub fn percent_area(bbox: &BBox, image_width: u32, image_height: u32) -> f64 {
        100.0 * bbox.area() / (f64::from(image_width) * f64::from(image_height))
    }
}

/// Evenly spaced evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl EvalGrid {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        Self {
            start,
            stop,
            points,
        }
    }

    pub fn linspace(&self) -> Vec<f64> {
        if self.points <= 1 {
            return alloc::vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.start + step * i as f64)
            .collect()
    }
}

/// A density curve evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }
}

/// Floor applied to the KDE bandwidth so zero-variance samples produce a
/// finite spike instead of dividing by zero.
pub const MIN_BANDWIDTH: f64 = 1e-6;

/// Gaussian kernel density estimate with bandwidth
/// `bandwidth_factor × σ̂ × n^(−1/5)` (Scott's rule scaled by the factor).
pub fn kde_density(
    sample: &AreaSample,
    bandwidth_factor: f64,
    grid: &EvalGrid,
) -> Result<DensityCurve, EvalError> {
    let n = sample.values.len();
    if n < 2 {
        return Err(EvalError::SampleTooSmall { n, required: 2 });
    }
    if bandwidth_factor.is_nan() || bandwidth_factor <= 0.0 {
        return Err(EvalError::InvalidBandwidth(bandwidth_factor));
    }
    let nf = n as f64;
    let mean = sample.values.iter().sum::<f64>() / nf;
    let variance = sample
        .values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (nf - 1.0);
    let sigma = math::sqrt(variance);
    let bandwidth = (bandwidth_factor * sigma * math::powf(nf, -0.2)).max(MIN_BANDWIDTH);

    let norm = 1.0 / (nf * bandwidth * math::sqrt(2.0 * core::f64::consts::PI));
    let grid_points = grid.linspace();
    let values = grid_points
        .iter()
        .map(|x| {
            sample
                .values
                .iter()
                .map(|v| {
                    let z = (x - v) / bandwidth;
                    math::exp(-0.5 * z * z)
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityCurve {
        grid: grid_points,
        values,
        bandwidth,
    })
}

/// Order-1 Wasserstein distance between the empirical distributions of two
/// samples: the integral of |CDF_a − CDF_b|. Handles unequal sample sizes.
pub fn wasserstein_1d(a: &AreaSample, b: &AreaSample) -> Result<f64, EvalError> {
    if a.values.is_empty() || b.values.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let mut xs = a.values.clone();
    let mut ys = b.values.clone();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);

    let mut distance = 0.0;
    let mut i = 0usize;
    let mut j = 0usize;
    let mut prev = xs[0].min(ys[0]);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => break,
        };
        let cdf_a = i as f64 / n;
        let cdf_b = j as f64 / m;
        distance += (cdf_a - cdf_b).abs() * (next - prev);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(distance)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty pair list")]
    EmptyPairs,
    #[error("empty sample")]
    EmptySample,
    #[error("sample of {n} values needs at least {required}")]
    SampleTooSmall { n: usize, required: usize },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("bandwidth factor {0} must be positive")]
    InvalidBandwidth(f64),
    #[error("area values must be finite and non-negative")]
    NegativeArea,
}
