//! Field synthesis on the space-time grid and the radius statistic.
//!
//! Space integrals use the midpoint rule on cell centers, time integrals
//! the trapezoid rule. With midpoint sampling the cosine modes stay
//! discretely orthogonal, so the grid radius and the mode-sum radius
//! agree up to round-off whenever n_x ≥ N.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_dynamics::ModePath;
use crate::spectrum::DomainConfig;

/// u(t_i, x_j) on the (n_t + 1) × n_x grid, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub values: Vec<f64>,
    pub cfg: DomainConfig,
}

impl FieldGrid {
    pub fn from_values(values: Vec<f64>, cfg: DomainConfig) -> Result<Self> {
        let want = (cfg.n_t + 1) * cfg.n_x;
        if values.len() != want {
            return Err(Error::GridMismatch(format!("expected {want} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridMismatch("field contains non-finite values".into()));
        }
        Ok(Self { values, cfg })
    }

    /// Field u(t, x) = f(t, x) sampled on the grid of `cfg`.
    pub fn from_fn(cfg: DomainConfig, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = cfg.x_grid();
        let values = cfg.t_grid().iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).map(|(t, x)| f(t, x)).collect();
        Self::from_values(values, cfg)
    }

    pub fn n_times(&self) -> usize {
        self.cfg.n_t + 1
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n_x = self.cfg.n_x;
        &self.values[i * n_x..(i + 1) * n_x]
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cfg.n_x)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), cfg: self.cfg }
    }

    /// Reverses the time axis.
    pub fn time_reversed(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for i in (0..self.n_times()).rev() {
            values.extend_from_slice(self.slice(i));
        }
        Self { values, cfg: self.cfg }
    }
}

/// Trapezoid weights on the time grid; they sum to T.
pub fn trapezoid_weights(n_t: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n_t + 1];
    w[0] = 0.5 * dt;
    w[n_t] = 0.5 * dt;
    w
}

pub fn assemble_field(paths: &[ModePath], cfg: &DomainConfig) -> Result<FieldGrid> {
    let n_times = cfg.n_t + 1;
    for p in paths {
        if p.states.len() != n_times {
            return Err(Error::GridMismatch(format!(
                "mode {} has {} states, time grid has {n_times}",
                p.mode.n,
                p.states.len()
            )));
        }
        if (p.mode.length - cfg.length).abs() > 1e-12 * cfg.length {
            return Err(Error::GridMismatch(format!("mode {} built for J = {}", p.mode.n, p.mode.length)));
        }
    }
    let xs = cfg.x_grid();
    let basis: Vec<Vec<f64>> = paths.iter().map(|p| xs.iter().map(|&x| p.mode.eigenfunction(x)).collect()).collect();
    let n_x = cfg.n_x;
    let mut values = vec![0.0; n_times * n_x];
    values.par_chunks_mut(n_x).enumerate().for_each(|(i, row)| {
        for (p, phi) in paths.iter().zip(&basis) {
            let a = p.states[i].a;
            for (u, f) in row.iter_mut().zip(phi) {
                *u += a * f;
            }
        }
    });
    FieldGrid::from_values(values, *cfg)
}

/// ū(t_i) = (1/J) ∫ u(t_i, x) dx, midpoint rule.
pub fn spatial_mean(field: &FieldGrid) -> Vec<f64> {
    let n_x = field.cfg.n_x as f64;
    field.slices().map(|s| s.iter().sum::<f64>() / n_x).collect()
}

/// θ_u(t_i, J)² = (1/J) ∫ (u − ū)² dx per time slice.
pub fn theta_profile(field: &FieldGrid) -> Vec<f64> {
    let n_x = field.cfg.n_x as f64;
    field
        .slices()
        .map(|s| {
            let mean = s.iter().sum::<f64>() / n_x;
            s.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n_x
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusStat {
    pub r: f64,
    /// θ_u(t_i, J)² on the time grid.
    pub theta_sq: Vec<f64>,
    /// S_T^n / (TJ) per mode index, empty when no paths were supplied.
    pub mode_contrib: Vec<f64>,
}

impl RadiusStat {
    /// Σ_n S_T^n/(TJ): the radius squared rebuilt from the modes.
    pub fn mode_sum(&self) -> f64 {
        self.mode_contrib.iter().sum()
    }
}

fn time_average(values: &[f64], cfg: &DomainConfig) -> f64 {
    let w = trapezoid_weights(cfg.n_t, cfg.dt());
    values.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / cfg.horizon
}

pub fn radius(field: &FieldGrid) -> RadiusStat {
    let theta_sq = theta_profile(field);
    let r = time_average(&theta_sq, &field.cfg).max(0.0).sqrt();
    RadiusStat { r, theta_sq, mode_contrib: Vec::new() }
}

/// S_T^n/(TJ) = (1/(TJ)) ∫₀^T a_n(t)² dt for every supplied nonzero mode,
/// indexed by mode number.
pub fn mode_contributions(paths: &[ModePath], cfg: &DomainConfig) -> Vec<f64> {
    let n_max = paths.iter().map(|p| p.mode.n).max().map_or(0, |n| n + 1);
    let mut out = vec![0.0; n_max];
    let w = trapezoid_weights(cfg.n_t, cfg.dt());
    for p in paths.iter().filter(|p| p.mode.n > 0) {
        let s: f64 = p.coefficients().zip(&w).map(|(a, w)| a * a * w).sum();
        out[p.mode.n] += s / (cfg.horizon * cfg.length);
    }
    out
}

/// Grid radius plus the independent mode-sum decomposition.
pub fn radius_with_modes(field: &FieldGrid, paths: &[ModePath]) -> RadiusStat {
    let mut stat = radius(field);
    stat.mode_contrib = mode_contributions(paths, &field.cfg);
    stat
}

const MAGIC: &[u8; 4] = b"WPFG";
const VERSION: u32 = 1;

/// Writes the field as a 32-byte header (magic, version, n_t, n_x as u32;
/// J, T as f64; little-endian) followed by row-major f64 values.
pub fn write_field<W: Write>(field: &FieldGrid, mut w: W) -> std::io::Result<()> {
    let cfg = &field.cfg;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(cfg.n_t as u32).to_le_bytes())?;
    w.write_all(&(cfg.n_x as u32).to_le_bytes())?;
    w.write_all(&cfg.length.to_le_bytes())?;
    w.write_all(&cfg.horizon.to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a field dump. The returned config carries n_modes = 1 and
/// seed = 0 because the dump does not record them.
pub fn read_field<R: Read>(mut r: R) -> std::io::Result<FieldGrid> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (n_t, n_x) = (u32_at(8) as usize, u32_at(12) as usize);
    let cfg = DomainConfig { length: f64_at(16), horizon: f64_at(24), n_modes: 1, n_x, n_t, seed: 0 };
    let mut buf = vec![0u8; (n_t + 1) * n_x * 8];
    r.read_exact(&mut buf)?;
    let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    FieldGrid::from_values(values, cfg).map_err(|e| bad(&e.to_string()))
}
