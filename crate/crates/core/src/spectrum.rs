//! Neumann cosine eigenbasis on [0, J], damping regimes and the spatial
//! noise spectrum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and discretization parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Interval length J.
    pub length: f64,
    /// Time horizon T.
    pub horizon: f64,
    /// Spectral truncation N; modes 0..N−1 are simulated.
    pub n_modes: usize,
    /// Number of spatial cells (values live at cell midpoints).
    pub n_x: usize,
    /// Number of time steps; the time grid has n_t + 1 points.
    pub n_t: usize,
    pub seed: u64,
}

impl DomainConfig {
    pub fn new(length: f64, horizon: f64, n_modes: usize, n_x: usize, n_t: usize, seed: u64) -> Result<Self> {
        let cfg = Self { length, horizon, n_modes, n_x, n_t, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidDomain(format!("J must be positive, got {}", self.length)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidDomain(format!("T must be positive, got {}", self.horizon)));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidDomain("n_modes must be at least 1".into()));
        }
        if self.n_x < 8 {
            return Err(Error::InvalidDomain(format!("n_x must be at least 8, got {}", self.n_x)));
        }
        if self.n_t == 0 {
            return Err(Error::InvalidDomain("n_t must be at least 1".into()));
        }
        if self.n_x < 4 * self.n_modes {
            return Err(Error::AliasRule { n_x: self.n_x, n_modes: self.n_modes });
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    /// Cell midpoints of the uniform spatial grid.
    pub fn x_grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_x).map(|j| (j as f64 + 0.5) * dx).collect()
    }

    pub fn t_grid(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_t).map(|i| i as f64 * dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// J > 2πn: two distinct real characteristic roots.
    Overdamped,
    /// J = 2πn: a repeated root, defective mode matrix.
    Critical,
    /// J < 2πn: a complex-conjugate pair.
    Underdamped,
}

/// |J − 2πn| at or below this (relative to max(1, J)) counts as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

pub fn classify(length: f64, n: usize) -> Regime {
    let boundary = 2.0 * PI * n as f64;
    if (length - boundary).abs() <= CRITICAL_TOL * length.max(1.0) {
        Regime::Critical
    } else if length > boundary {
        Regime::Overdamped
    } else {
        Regime::Underdamped
    }
}

/// Per-mode constants of the Neumann eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub n: usize,
    pub length: f64,
    /// Laplacian eigenvalue −(nπ/J)².
    pub lambda: f64,
    /// Wavenumber nπ/J.
    pub k: f64,
    /// √|4k² − 1| / 2; the oscillation frequency when underdamped.
    pub omega: f64,
    pub regime: Regime,
    /// Noise amplitude γ_n.
    pub gamma: f64,
    /// Normalization c_n of φ_n = c_n cos(nπx/J).
    pub norm: f64,
}

impl ModeSpec {
    pub fn new(length: f64, n: usize, gamma: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidDomain(format!("J must be positive, got {length}")));
        }
        let k = n as f64 * PI / length;
        let (lambda, norm) = if n == 0 {
            (0.0, (1.0 / length).sqrt())
        } else {
            (-k * k, (2.0 / length).sqrt())
        };
        Ok(Self {
            n,
            length,
            lambda,
            k,
            omega: (4.0 * k * k - 1.0).abs().sqrt() / 2.0,
            regime: classify(length, n),
            gamma,
            norm,
        })
    }

    /// Gap √|1 − 4k²| between the two real roots (−1 ± gap)/2 of an
    /// overdamped mode; equals 2ω.
    pub fn root_gap(&self) -> f64 {
        (1.0 - 4.0 * self.k * self.k).abs().sqrt()
    }

    pub fn eigenfunction(&self, x: f64) -> f64 {
        self.norm * (self.k * x).cos()
    }

    /// Checked evaluation of φ_n(x) for x ∈ [0, J].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::OutOfDomain { x, length: self.length });
        }
        Ok(self.eigenfunction(x))
    }
}

pub fn build_eigenbasis(cfg: &DomainConfig) -> Result<Vec<ModeSpec>> {
    (0..cfg.n_modes).map(|n| ModeSpec::new(cfg.length, n, 0.0)).collect()
}

pub fn eval_eigenfunction(mode: &ModeSpec, x: f64) -> Result<f64> {
    mode.eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumProfile {
    /// γ_n = √(c / n^α) for n ≥ 1, the equality case of the cap.
    PowerLaw,
    /// Explicit γ_1, γ_2, …; missing trailing modes get γ = 0.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub c: f64,
    pub alpha: f64,
    /// γ_n for n = 0..N−1.
    pub gammas: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn gamma(&self, n: usize) -> f64 {
        self.gammas.get(n).copied().unwrap_or(0.0)
    }

    /// Upper bound c·N^{1−α}/(α−1) on the discarded Σ_{n≥N} γ_n².
    pub fn tail_bound(&self) -> Option<f64> {
        if self.alpha <= 1.0 {
            return None;
        }
        let n = self.gammas.len() as f64;
        Some(self.c * n.powf(1.0 - self.alpha) / (self.alpha - 1.0))
    }
}

/// Builds γ_n for every mode and writes it into `modes`.
///
/// γ_0 defaults to √c; the cap only constrains n ≥ 1.
pub fn attach_spectrum(
    modes: &mut [ModeSpec],
    c: f64,
    alpha: f64,
    profile: &SpectrumProfile,
    gamma0: Option<f64>,
) -> Result<NoiseSpectrum> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::SpectrumDivergent { alpha });
    }
    let n_modes = modes.len();
    let g0 = gamma0.unwrap_or(c.sqrt());
    let mut gammas = Vec::with_capacity(n_modes);
    if n_modes > 0 {
        gammas.push(g0);
    }
    match profile {
        SpectrumProfile::PowerLaw => {
            if alpha <= 1.0 {
                return Err(Error::SpectrumDivergent { alpha });
            }
            gammas.extend((1..n_modes).map(|n| (c / (n as f64).powf(alpha)).sqrt()));
        }
        SpectrumProfile::Custom(seq) => {
            let mut prev = f64::INFINITY;
            for (i, &g) in seq.iter().enumerate() {
                let n = i + 1;
                let g2 = g * g;
                if !g.is_finite() {
                    return Err(Error::InvalidArgument(format!("gamma_{n} is not finite")));
                }
                if g2 > prev {
                    return Err(Error::NonMonotone { index: n });
                }
                let cap = c / (n as f64).powf(alpha);
                if g2 > cap * (1.0 + 1e-12) {
                    return Err(Error::CapViolation { index: n, gamma_sq: g2, cap });
                }
                prev = g2;
            }
            gammas.extend((1..n_modes).map(|n| seq.get(n - 1).map_or(0.0, |g| g.abs())));
        }
    }
    for (mode, &g) in modes.iter_mut().zip(&gammas) {
        mode.gamma = g;
    }
    Ok(NoiseSpectrum { c, alpha, gammas })
}

/// Truncated spatial noise covariance f(x, y) = Σ_{n<N} γ_n² φ_n(x) φ_n(y).
pub fn noise_covariance_kernel(spec: &NoiseSpectrum, modes: &[ModeSpec], x: f64, y: f64) -> Result<f64> {
    let mut acc = 0.0;
    for m in modes {
        let g = spec.gamma(m.n);
        acc += g * g * m.eval(x)? * m.eval(y)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_mode_constants() {
        let m = ModeSpec::new(PI, 0, 0.0).unwrap();
        assert_eq!(m.lambda, 0.0);
        assert!(close(m.norm, (1.0 / PI).sqrt(), 1e-15));
    }

    #[test]
    fn critical_mode_at_two_pi() {
        let m = ModeSpec::new(2.0 * PI, 1, 0.0).unwrap();
        assert!(close(m.k, 0.5, 1e-15));
        assert!(close(1.0 - 4.0 * m.k * m.k, 0.0, 1e-14));
        assert_eq!(m.regime, Regime::Critical);
    }

    #[test]
    fn underdamped_frequency() {
        let m = ModeSpec::new(PI, 1, 0.0).unwrap();
        assert!(close(m.k, 1.0, 1e-15));
        assert!(close(m.omega, 3f64.sqrt() / 2.0, 1e-15));
        assert!(close(m.omega, 0.866_025, 1e-6));
        assert_eq!(m.regime, Regime::Underdamped);
    }

    #[test]
    fn regimes_around_boundary() {
        assert_eq!(classify(8.0 * PI, 1), Regime::Overdamped);
        assert_eq!(classify(2.0 * PI * 3.0, 3), Regime::Critical);
        assert_eq!(classify(2.0 * PI * (1.0 + 1e-9), 1), Regime::Overdamped);
        assert_eq!(classify(2.0 * PI * (1.0 - 1e-9), 1), Regime::Underdamped);
    }

    #[test]
    fn nonpositive_length_rejected() {
        let cfg = DomainConfig { length: 0.0, horizon: 1.0, n_modes: 4, n_x: 16, n_t: 4, seed: 0 };
        assert!(matches!(build_eigenbasis(&cfg), Err(Error::InvalidDomain(_))));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn alias_rule_enforced() {
        let err = DomainConfig::new(1.0, 1.0, 16, 32, 10, 0).unwrap_err();
        assert_eq!(err, Error::AliasRule { n_x: 32, n_modes: 16 });
    }

    #[test]
    fn eigenfunction_values() {
        let m0 = ModeSpec::new(1.0, 0, 0.0).unwrap();
        let m1 = ModeSpec::new(1.0, 1, 0.0).unwrap();
        let m2 = ModeSpec::new(1.0, 2, 0.0).unwrap();
        assert!(close(m0.eval(0.37).unwrap(), 1.0, 1e-15));
        assert!(close(m1.eval(0.0).unwrap(), 2f64.sqrt(), 1e-15));
        assert!(close(m2.eval(0.5).unwrap(), -(2f64.sqrt()), 1e-14));
        assert!(matches!(m1.eval(1.5), Err(Error::OutOfDomain { .. })));
        assert!(m1.eval(-1e-9).is_err());
    }

    #[test]
    fn neumann_derivative_vanishes_at_ends() {
        let m = ModeSpec::new(1.0, 3, 0.0).unwrap();
        for h in [1e-2, 5e-3] {
            // One-sided second-order difference.
            let d0 = (-3.0 * m.eigenfunction(0.0) + 4.0 * m.eigenfunction(h) - m.eigenfunction(2.0 * h)) / (2.0 * h);
            let d1 = (3.0 * m.eigenfunction(1.0) - 4.0 * m.eigenfunction(1.0 - h) + m.eigenfunction(1.0 - 2.0 * h)) / (2.0 * h);
            assert!(d0.abs() < 20.0 * h * h * m.k.powi(3));
            assert!(d1.abs() < 20.0 * h * h * m.k.powi(3));
        }
    }

    #[test]
    fn power_law_is_cap_equality() {
        let cfg = DomainConfig::new(1.0, 1.0, 8, 64, 10, 0).unwrap();
        let mut modes = build_eigenbasis(&cfg).unwrap();
        let spec = attach_spectrum(&mut modes, 1.0, 2.0, &SpectrumProfile::PowerLaw, None).unwrap();
        assert_eq!(spec.gammas[0], 1.0);
        for n in 1..8 {
            assert!(close(spec.gammas[n], 1.0 / n as f64, 1e-15));
            assert_eq!(modes[n].gamma, spec.gammas[n]);
        }
        assert!(close(spec.tail_bound().unwrap(), 1.0 / 8.0, 1e-15));
    }

    #[test]
    fn custom_spectrum_checks() {
        let mut modes: Vec<_> = (0..4).map(|n| ModeSpec::new(1.0, n, 0.0).unwrap()).collect();
        let ok = attach_spectrum(&mut modes, 1.0, 1.0, &SpectrumProfile::Custom(vec![1.0, 0.5, 0.4]), None);
        assert!(ok.is_ok());
        let bad = attach_spectrum(&mut modes, 1.0, 1.0, &SpectrumProfile::Custom(vec![0.5, 0.8]), None);
        assert_eq!(bad.unwrap_err(), Error::NonMonotone { index: 2 });
        let capped = attach_spectrum(&mut modes, 1.0, 2.0, &SpectrumProfile::Custom(vec![1.0, 0.9]), None);
        assert!(matches!(capped, Err(Error::CapViolation { index: 2, .. })));
        let neg = attach_spectrum(&mut modes, 1.0, 0.0, &SpectrumProfile::PowerLaw, None);
        assert!(matches!(neg, Err(Error::SpectrumDivergent { .. })));
        let slow = attach_spectrum(&mut modes, 1.0, 0.5, &SpectrumProfile::PowerLaw, None);
        assert!(matches!(slow, Err(Error::SpectrumDivergent { .. })));
    }

    #[test]
    fn zero_mode_kernel_is_constant() {
        let modes = vec![ModeSpec::new(1.0, 0, 1.0).unwrap()];
        let spec = NoiseSpectrum { c: 1.0, alpha: 2.0, gammas: vec![1.0] };
        for (x, y) in [(0.0, 1.0), (0.3, 0.7), (0.5, 0.5)] {
            assert!(close(noise_covariance_kernel(&spec, &modes, x, y).unwrap(), 1.0, 1e-15));
        }
    }

    #[test]
    fn midpoint_orthonormality() {
        let n_x = 4096;
        let length = 1.7;
        let dx = length / n_x as f64;
        let modes: Vec<_> = (0..=32).map(|n| ModeSpec::new(length, n, 0.0).unwrap()).collect();
        for a in &modes {
            for b in &modes {
                let s: f64 = (0..n_x)
                    .map(|j| {
                        let x = (j as f64 + 0.5) * dx;
                        a.eigenfunction(x) * b.eigenfunction(x)
                    })
                    .sum::<f64>()
                    * dx;
                let want = if a.n == b.n { 1.0 } else { 0.0 };
                assert!(close(s, want, 1e-8), "({}, {}) -> {s}", a.n, b.n);
            }
        }
    }
}
