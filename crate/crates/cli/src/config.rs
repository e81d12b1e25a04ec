//! Run configuration: a JSON file with unknown keys rejected and all
//! cross-field constraints checked at load time.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wavepolymer::experiments::{BetaRule, PcnSettings, SweepConfig};
use wavepolymer::gibbs::FieldPrior;
use wavepolymer::localtime::BinRule;
use wavepolymer::spectrum::{attach_spectrum, build_eigenbasis, DomainConfig, NoiseSpectrum, SpectrumProfile};
use wavepolymer::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Interval length J.
    #[serde(alias = "J")]
    pub length: f64,
    /// Time horizon T.
    #[serde(alias = "T")]
    pub horizon: f64,
    pub n_modes: usize,
    pub n_x: usize,
    pub n_t: usize,
    /// Optional; when given it must satisfy dt·n_t = T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Worker count; never affects results, so it is left out of the hash.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub bins: BinRule,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub gibbs: GibbsSection,
    #[serde(default)]
    pub girsanov: GirsanovSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub c: f64,
    pub alpha: f64,
    pub profile: SpectrumProfile,
    pub gamma0: Option<f64>,
    pub include_zero_mode: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { c: 1.0, alpha: 2.0, profile: SpectrumProfile::PowerLaw, gamma0: None, include_zero_mode: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_replicas: usize,
    pub write_fields: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n_replicas: 1, write_fields: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSection {
    pub n_replicas: usize,
    /// pCN cross-check; skipped when n_chains is 0.
    pub pcn: PcnSettings,
}

impl Default for GibbsSection {
    fn default() -> Self {
        Self { n_replicas: 1024, pcn: PcnSettings { n_chains: 0, ..PcnSettings::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GirsanovSection {
    pub a_values: Vec<f64>,
    pub n_replicas: usize,
    /// J of the overdamped tilted-mean check (must exceed 2π).
    pub tilted_mean_length: f64,
    pub tilted_mean_replicas: usize,
}

impl Default for GirsanovSection {
    fn default() -> Self {
        Self { a_values: vec![0.25, 0.5, 1.0], n_replicas: 10_000, tilted_mean_length: 8.0 * PI, tilted_mean_replicas: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lengths: Vec<f64>,
    /// Defaults to a constant rule at the top-level beta (or 1).
    pub beta_rule: Option<BetaRule>,
    pub n_replicas: usize,
    pub ess_floor: f64,
    pub pcn: PcnSettings,
    pub envelope: (f64, f64),
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            lengths: vec![0.5, 1.0, 2.0, 4.0],
            beta_rule: None,
            n_replicas: d.n_replicas,
            ess_floor: d.ess_floor,
            pcn: d.pcn,
            envelope: d.envelope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub variance_cases: Vec<(f64, usize)>,
    pub variance_draws: usize,
    pub ck_cases: Vec<(f64, usize)>,
    pub ck_dts: Vec<f64>,
    pub ck_tol: f64,
    pub parseval_fields: usize,
    pub parseval_modes: usize,
    pub parseval_n_x: usize,
    pub parseval_n_t: usize,
    pub parseval_tol: f64,
    pub pair_lengths: Vec<f64>,
    pub n_pairs: usize,
    pub pair_modes: usize,
    pub pair_delta0: f64,
    pub brownian_horizons: Vec<usize>,
    pub brownian_paths: usize,
    pub brownian_a: f64,
    pub brownian_b: f64,
    pub brownian_dt: f64,
    pub tail_sigmas: Vec<f64>,
    pub tail_q: Vec<f64>,
    pub exp_t_max: f64,
    pub exp_step: f64,
    pub jensen_samples: usize,
    pub jensen_k: Vec<f64>,
}

/// Twelve (J, n) pairs: four each side of critical plus the critical
/// points J = 2πn.
pub fn default_variance_cases() -> Vec<(f64, usize)> {
    vec![
        (0.5, 1),
        (1.0, 1),
        (PI, 1),
        (4.0, 2),
        (2.0 * PI, 1),
        (4.0 * PI, 2),
        (6.0 * PI, 3),
        (2.0 * PI, 3),
        (8.0, 1),
        (8.0 * PI, 1),
        (20.0, 2),
        (40.0, 3),
    ]
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            variance_cases: default_variance_cases(),
            variance_draws: 100_000,
            ck_cases: vec![(8.0 * PI, 1), (2.0 * PI, 1), (4.0 * PI, 2), (PI, 1), (1.0, 3)],
            ck_dts: vec![1e-3, 1e-2, 1e-1],
            ck_tol: 1e-10,
            parseval_fields: 20,
            parseval_modes: 64,
            parseval_n_x: 512,
            parseval_n_t: 64,
            parseval_tol: 5e-3,
            pair_lengths: vec![0.5, 1.0, 2.0],
            n_pairs: 10_000,
            pair_modes: wavepolymer::verify::DEFAULT_PAIR_MODES,
            pair_delta0: 0.2,
            brownian_horizons: vec![3, 4, 5],
            brownian_paths: 200,
            brownian_a: 1.0,
            brownian_b: 1.0,
            brownian_dt: 1e-4,
            tail_sigmas: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            tail_q: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            exp_t_max: 100.0,
            exp_step: 1e-3,
            jensen_samples: 100,
            jensen_k: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.domain()?;
        if let Some(dt) = self.dt {
            let implied = dt * self.n_t as f64;
            if (implied - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
                bail!("dt: dt * n_t = {implied} but T = {}", self.horizon);
            }
        }
        if let Some(beta) = self.beta {
            if !(beta >= 0.0) {
                return Err(Error::NegativeBeta(beta)).context("beta");
            }
        }
        if self.threads == Some(0) {
            bail!("threads: must be at least 1");
        }
        self.spectrum_check().context("spectrum")?;
        if self.sweep.lengths.len() < 4 {
            bail!("sweep.lengths: need at least 4 values, got {}", self.sweep.lengths.len());
        }
        if self.sweep.lengths.windows(2).any(|w| !(w[0] < w[1])) {
            bail!("sweep.lengths: values must be strictly increasing");
        }
        Ok(())
    }

    fn spectrum_check(&self) -> wavepolymer::Result<()> {
        self.noise_spectrum().map(|_| ())
    }

    pub fn noise_spectrum(&self) -> wavepolymer::Result<NoiseSpectrum> {
        let mut modes = build_eigenbasis(&self.domain()?)?;
        let s = &self.spectrum;
        attach_spectrum(&mut modes, s.c, s.alpha, &s.profile, s.gamma0)
    }

    pub fn domain(&self) -> wavepolymer::Result<DomainConfig> {
        DomainConfig::new(self.length, self.horizon, self.n_modes, self.n_x, self.n_t, self.seed)
    }

    pub fn prior(&self) -> wavepolymer::Result<FieldPrior> {
        self.prior_at(self.length)
    }

    pub fn prior_at(&self, length: f64) -> wavepolymer::Result<FieldPrior> {
        let cfg = DomainConfig { length, ..self.domain()? };
        let mut modes = build_eigenbasis(&cfg)?;
        let s = &self.spectrum;
        attach_spectrum(&mut modes, s.c, s.alpha, &s.profile, s.gamma0)?;
        FieldPrior::new(cfg, &modes, s.include_zero_mode)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            horizon: self.horizon,
            n_modes: self.n_modes,
            n_x: self.n_x,
            n_t: self.n_t,
            seed: self.seed,
            c: self.spectrum.c,
            alpha: self.spectrum.alpha,
            profile: self.spectrum.profile.clone(),
            n_replicas: self.sweep.n_replicas,
            ess_floor: self.sweep.ess_floor,
            bins: self.bins,
            pcn: self.sweep.pcn,
            envelope: self.sweep.envelope,
        }
    }

    pub fn beta_rule(&self) -> BetaRule {
        self.sweep.beta_rule.unwrap_or(BetaRule::Constant { beta: self.beta.unwrap_or(1.0) })
    }

    /// Canonical form: every default filled in, keys sorted, numbers in
    /// shortest round-trip notation.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config is always serializable");
        serde_json::to_string(&value).expect("json value is always serializable")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "beta": 0.5, "seed": 42}"#;

    #[test]
    fn minimal_config_accepted() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!((c.length, c.n_modes, c.seed, c.beta), (1.0, 16, 42, Some(0.5)));
        assert_eq!(c.spectrum.alpha, 2.0);
    }

    fn err_of(text: &str) -> String {
        format!("{:#}", RunConfig::from_json(text).unwrap_err())
    }

    #[test]
    fn constraint_violations() {
        let alias = err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 32, "n_t": 100}"#);
        assert!(alias.contains("anti-aliasing"), "{alias}");
        let alpha = err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "spectrum": {"alpha": 0.5}}"#);
        assert!(alpha.contains("alpha = 0.5"), "{alpha}");
        let dt = err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "dt": 0.02}"#);
        assert!(dt.contains("dt"), "{dt}");
        assert!(RunConfig::from_json(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "dt": 0.01}"#).is_ok());
        let unknown = err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "gamma": 3}"#);
        assert!(unknown.contains("unknown field `gamma`"), "{unknown}");
        let nested = err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "sweep": {"lenghts": [1]}}"#);
        assert!(nested.contains("lenghts"), "{nested}");
        assert!(err_of(r#"{"J": 1, "T": 1, "n_modes": 16, "n_x": 128, "n_t": 100, "beta": -1}"#).contains("beta"));
    }

    #[test]
    fn hash_ignores_spelling_and_threads() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let b = RunConfig::from_json(
            r#"{"seed": 42, "beta": 5e-1, "threads": 3, "n_t": 100, "n_x": 128, "n_modes": 16, "horizon": 1.0, "length": 1.00}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 43, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
