//! Occupation measure, local time and the self-intersection functional
//! Φ(u) = ∫₀^T ∫ l_t(y)² dy dt, estimated with a value-histogram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_radius::{trapezoid_weights, FieldGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    /// Shared bins of width (max − min + ε)/n_bins over the whole field.
    Auto { n_bins: usize },
    /// Fixed width, origin aligned to a multiple of the width.
    Fixed { width: f64 },
}

impl Default for BinRule {
    fn default() -> Self {
        BinRule::Auto { n_bins: 256 }
    }
}

/// Value-axis bins: [origin + kΔy, origin + (k+1)Δy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub origin: f64,
    pub width: f64,
    pub n_bins: usize,
}

impl BinGrid {
    pub fn covering(min: f64, max: f64, rule: BinRule) -> Result<Self> {
        match rule {
            BinRule::Auto { n_bins } => {
                if n_bins == 0 {
                    return Err(Error::InvalidArgument("n_bins must be positive".into()));
                }
                let eps = 1e-9 * min.abs().max(max.abs()).max(1.0);
                Ok(Self { origin: min, width: (max - min + eps) / n_bins as f64, n_bins })
            }
            BinRule::Fixed { width } => {
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bin width must be positive, got {width}")));
                }
                let origin = (min / width).floor() * width;
                let n_bins = ((max - origin) / width).floor() as usize + 1;
                Ok(Self { origin, width, n_bins })
            }
        }
    }

    fn index(&self, y: f64) -> usize {
        let k = ((y - self.origin) / self.width).floor();
        (k.max(0.0) as usize).min(self.n_bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub bin_width: f64,
    pub bin_origin: f64,
    /// L_t mass per value bin; sums to J.
    pub masses: Vec<f64>,
    pub t_index: usize,
}

impl LocalTimeEstimate {
    /// Local-time density l_t(y) on each bin.
    pub fn density(&self) -> impl Iterator<Item = f64> + '_ {
        self.masses.iter().map(move |m| m / self.bin_width)
    }

    /// Plug-in estimate of ∫ l_t(y)² dy.
    pub fn l2_norm_sq(&self) -> f64 {
        self.masses.iter().map(|m| m * m).sum::<f64>() / self.bin_width
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn histogram_on(slice: &[f64], dx: f64, grid: &BinGrid, t_index: usize) -> LocalTimeEstimate {
    let mut masses = vec![0.0; grid.n_bins];
    for &u in slice {
        masses[grid.index(u)] += dx;
    }
    LocalTimeEstimate { bin_width: grid.width, bin_origin: grid.origin, masses, t_index }
}

/// Occupation histogram of one slice: masses[k] = dx · #{j : u_j ∈ bin k},
/// bins aligned to multiples of `bin_width`.
pub fn occupation_histogram(slice: &[f64], dx: f64, bin_width: f64) -> Result<LocalTimeEstimate> {
    let (lo, hi) = min_max(slice);
    let grid = BinGrid::covering(lo, hi, BinRule::Fixed { width: bin_width })?;
    Ok(histogram_on(slice, dx, &grid, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfIntersection {
    /// Φ = ∫₀^T ∫ l_t² dy dt.
    pub phi: f64,
    /// ∫ l_{t_i}² dy per time slice.
    pub per_slice: Vec<f64>,
    pub bins: BinGrid,
    /// Slices where u(t_i, ·) is constant; their estimate is J²/Δy.
    pub degenerate_slices: Vec<usize>,
}

pub fn self_intersection(field: &FieldGrid, rule: BinRule) -> Result<SelfIntersection> {
    let (lo, hi) = min_max(&field.values);
    let bins = BinGrid::covering(lo, hi, rule)?;
    let dx = field.cfg.dx();
    let mut per_slice = Vec::with_capacity(field.n_times());
    let mut degenerate_slices = Vec::new();
    let mut counts = vec![0u32; bins.n_bins];
    for (i, s) in field.slices().enumerate() {
        let (a, b) = min_max(s);
        if a == b {
            degenerate_slices.push(i);
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &u in s {
            counts[bins.index(u)] += 1;
        }
        let sum_sq: f64 = counts.iter().map(|&c| (c as f64 * dx).powi(2)).sum();
        per_slice.push(sum_sq / bins.width);
    }
    let w = trapezoid_weights(field.cfg.n_t, field.cfg.dt());
    let phi = per_slice.iter().zip(&w).map(|(p, w)| p * w).sum();
    Ok(SelfIntersection { phi, per_slice, bins, degenerate_slices })
}

/// Φ of a flat profile of height 2R over the whole window:
/// 2TR·(J/(2R))² = TJ²/(2R).
pub fn heuristic_flat_phi(length: f64, horizon: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    Ok(horizon * length * length / (2.0 * radius))
}
