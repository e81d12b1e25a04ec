//! Scaling study: E^Q[R] across J, log-log fit, and the exponent balance
//! behind the J^{5/3} prediction.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::gibbs::{batch_means_se, estimate_weighted, mean, pcn_chain, prior_samples, FieldPrior, GibbsSample, PcnOptions};
use crate::localtime::{heuristic_flat_phi, BinRule};
use crate::quad::integrate;
use crate::spectrum::{attach_spectrum, build_eigenbasis, DomainConfig, SpectrumProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BetaRule {
    Constant { beta: f64 },
    /// β = max(β₀, J^p); p = 25/3 is the large-J regime of the theorem.
    PowerOfLength { beta0: f64, power: f64 },
}

impl BetaRule {
    pub fn beta(&self, length: f64) -> f64 {
        match *self {
            BetaRule::Constant { beta } => beta,
            BetaRule::PowerOfLength { beta0, power } => beta0.max(length.powf(power)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    ImportanceSampling,
    Pcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcnSettings {
    pub rho: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub block_len: Option<usize>,
}

impl Default for PcnSettings {
    fn default() -> Self {
        Self { rho: 0.2, n_steps: 2000, burn_in: 500, n_chains: 4, block_len: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub horizon: f64,
    pub n_modes: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub seed: u64,
    pub c: f64,
    pub alpha: f64,
    pub profile: SpectrumProfile,
    pub n_replicas: usize,
    /// IS is accepted when its ESS is at least this fraction of n_replicas.
    pub ess_floor: f64,
    pub bins: BinRule,
    pub pcn: PcnSettings,
    /// Envelope [ε J^{5/3}, K J^{5/3}] whose Q-probability is reported.
    pub envelope: (f64, f64),
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            horizon: 8.0,
            n_modes: 16,
            n_x: 64,
            n_t: 80,
            seed: 0,
            c: 1.0,
            alpha: 2.0,
            profile: SpectrumProfile::PowerLaw,
            n_replicas: 512,
            ess_floor: 0.1,
            bins: BinRule::default(),
            pcn: PcnSettings::default(),
            envelope: (0.05, 2.0),
        }
    }
}

impl SweepConfig {
    pub fn domain(&self, length: f64) -> Result<DomainConfig> {
        DomainConfig::new(length, self.horizon, self.n_modes, self.n_x, self.n_t, self.seed)
    }

    pub fn prior(&self, length: f64) -> Result<FieldPrior> {
        let cfg = self.domain(length)?;
        let mut modes = build_eigenbasis(&cfg)?;
        attach_spectrum(&mut modes, self.c, self.alpha, &self.profile, None)?;
        FieldPrior::new(cfg, &modes, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub length: f64,
    pub beta: f64,
    pub horizon: f64,
    pub q_radius_mean: f64,
    pub q_radius_se: f64,
    pub ess: f64,
    pub sampler: Sampler,
    /// IS ESS fell below the floor (the point then comes from pCN).
    pub ess_flagged: bool,
    pub prior_radius_mean: f64,
    pub log_z_hat: f64,
    pub envelope_probability: f64,
    pub pcn_acceptance: Option<f64>,
}

fn envelope_values(samples: &[GibbsSample], length: f64, envelope: (f64, f64)) -> Vec<f64> {
    let scale = length.powf(5.0 / 3.0);
    samples
        .iter()
        .map(|s| f64::from(u8::from((envelope.0 * scale..=envelope.1 * scale).contains(&s.radius.r))))
        .collect()
}

/// One J of the sweep: importance sampling first, pCN when its ESS is
/// below the floor.
pub fn sweep_point(length: f64, beta: f64, sc: &SweepConfig) -> Result<SweepPoint> {
    let prior = sc.prior(length)?;
    let samples = prior_samples(&prior, beta, sc.bins, sc.n_replicas)?;
    let radii: Vec<f64> = samples.iter().map(|s| s.radius.r).collect();
    let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let prior_radius_mean = mean(&radii);
    let is = estimate_weighted(&radii, &log_w);
    let floor = sc.ess_floor * sc.n_replicas as f64;
    let base = SweepPoint {
        length,
        beta,
        horizon: sc.horizon,
        q_radius_mean: f64::NAN,
        q_radius_se: f64::NAN,
        ess: 0.0,
        sampler: Sampler::ImportanceSampling,
        ess_flagged: false,
        prior_radius_mean,
        log_z_hat: is.as_ref().map_or(f64::NEG_INFINITY, |e| e.log_z_hat),
        envelope_probability: f64::NAN,
        pcn_acceptance: None,
    };
    if let Ok(est) = is {
        if est.ess >= floor {
            let env = estimate_weighted(&envelope_values(&samples, length, sc.envelope), &log_w)?;
            return Ok(SweepPoint {
                q_radius_mean: est.q_mean,
                q_radius_se: est.q_se,
                ess: est.ess,
                envelope_probability: env.q_mean.clamp(0.0, 1.0),
                ..base
            });
        }
    }
    let p = sc.pcn;
    let chains = (0..p.n_chains as u64)
        .into_par_iter()
        .map(|id| {
            let opts = PcnOptions { block_len: p.block_len, chain_id: id, rule: sc.bins };
            pcn_chain(&prior, beta, p.rho, p.burn_in + p.n_steps, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&[GibbsSample]> = chains.iter().map(|c| &c.samples[p.burn_in..]).collect();
    let per_chain: Vec<Vec<f64>> = kept.iter().map(|s| s.iter().map(|g| g.radius.r).collect()).collect();
    let pooled: Vec<f64> = per_chain.concat();
    let k = per_chain.len() as f64;
    let se = per_chain.iter().map(|v| batch_means_se(v, 20).powi(2)).sum::<f64>().sqrt() / k;
    let var = pooled.iter().map(|r| (r - mean(&pooled)).powi(2)).sum::<f64>() / (pooled.len() as f64 - 1.0);
    let env: Vec<f64> = kept.iter().flat_map(|s| envelope_values(s, length, sc.envelope)).collect();
    Ok(SweepPoint {
        q_radius_mean: mean(&pooled),
        q_radius_se: se,
        ess: if se > 0.0 { (var / (se * se)).min(pooled.len() as f64) } else { pooled.len() as f64 },
        sampler: Sampler::Pcn,
        ess_flagged: true,
        envelope_probability: mean(&env),
        pcn_acceptance: Some(chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / k),
        ..base
    })
}

pub fn run_sweep(lengths: &[f64], rule: BetaRule, sc: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if lengths.len() < 4 {
        return Err(Error::TooFewPoints { need: 4, got: lengths.len() });
    }
    if lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("J values must be strictly increasing".into()));
    }
    lengths.par_iter().map(|&j| sweep_point(j, rule.beta(j), sc)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% confidence interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub slope_se: f64,
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

/// Ordinary least squares of log y on log x.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let n = points.len();
    if n < 4 {
        return Err(Error::TooFewPoints { need: 4, got: n });
    }
    if let Some(&(_, y)) = points.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::NonPositiveMean(y));
    }
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !(*x > 0.0)) {
        return Err(Error::InvalidArgument(format!("J must be positive, got {x}")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - intercept - slope * x).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let df = (n - 2) as f64;
    let slope_se = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?.inverse_cdf(0.975);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        ci_low: slope - t * slope_se,
        ci_high: slope + t * slope_se,
        slope_se,
        residuals,
        n_points: n,
    })
}

pub fn fit_sweep(points: &[SweepPoint]) -> Result<ScalingFit> {
    fit_exponent(&points.iter().map(|p| (p.length, p.q_radius_mean)).collect::<Vec<_>>())
}

/// Solves J^{p₁} R^{q₁} = J^{p₂} R^{q₂} for R = J^e, e = (p₁ − p₂)/(q₂ − q₁).
pub fn heuristic_exponent(p1: Ratio<i64>, q1: Ratio<i64>, p2: Ratio<i64>, q2: Ratio<i64>) -> Result<Ratio<i64>> {
    if q1 == q2 {
        return Err(Error::NoSolution);
    }
    Ok((p1 - p2) / (q2 - q1))
}

/// Reads off (p, q) in f(J, R) ∝ J^p R^q by probing at powers of two.
pub fn power_exponents(f: impl Fn(f64, f64) -> f64) -> Result<(Ratio<i64>, Ratio<i64>)> {
    let base = f(1.0, 1.0);
    let read = |v: f64| {
        let e = (v / base).log2();
        Ratio::approximate_float(e).filter(|r: &Ratio<i64>| (*r.numer() as f64 / *r.denom() as f64 - e).abs() < 1e-12)
    };
    let p = read(f(2.0, 1.0)).ok_or(Error::NoSolution)?;
    let q = read(f(1.0, 2.0)).ok_or(Error::NoSolution)?;
    Ok((p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannCheck {
    /// ½∫₀^J (u″)² dx, by quadrature.
    pub energy: f64,
    /// 32R²/J³.
    pub closed_form: f64,
    pub u_left: f64,
    pub u_right: f64,
}

/// The piecewise quadratic with u(0) = R, u(J) = −R, u′(0) = u′(J) = 0.
pub fn neumann_profile(r: f64, length: f64) -> impl Fn(f64) -> f64 {
    let a = 4.0 * r / (length * length);
    move |x| if x <= length / 2.0 { a * length * length / 4.0 - a * x * x } else { a * (length - x).powi(2) - a * length * length / 4.0 }
}

pub fn neumann_minimizer_check(r: f64, length: f64) -> Result<NeumannCheck> {
    if !(r > 0.0 && length > 0.0) {
        return Err(Error::InvalidArgument(format!("need R, J > 0, got R={r}, J={length}")));
    }
    let u = neumann_profile(r, length);
    // Second differences of the profile itself, each centred well inside its
    // own quadratic piece so the stencil never straddles x = J/2.
    let h = length / 16.0;
    let u2 = |x: f64| {
        let c = if x <= length / 2.0 { x.clamp(h, length / 2.0 - h) } else { x.clamp(length / 2.0 + h, length - h) };
        (u(c + h) - 2.0 * u(c) + u(c - h)) / (h * h)
    };
    let half = length / 2.0;
    let left = integrate(|x| u2(x).powi(2), 0.0, half, 1e-13).value;
    let right = integrate(|x| u2(x).powi(2), half, length, 1e-13).value;
    let energy = 0.5 * (left + right);
    Ok(NeumannCheck { energy, closed_form: 32.0 * r * r / length.powi(3), u_left: u(0.0), u_right: u(length) })
}

/// Closes the heuristic: exponents read from the flat-profile Φ and the
/// minimizer energy, balanced exactly.
pub fn heuristic_pipeline() -> Result<Ratio<i64>> {
    let (p1, q1) = power_exponents(|j, r| heuristic_flat_phi(j, 1.0, r).unwrap_or(f64::NAN))?;
    let (p2, q2) = power_exponents(|j, r| 32.0 * r * r / j.powi(3))?;
    heuristic_exponent(p1, q1, p2, q2)
}
