//! The polymer measure dQ = exp(−βΦ)/Z_T dP.
//!
//! Two samplers are provided and are expected to agree: self-normalized
//! importance sampling over exact prior draws, and a preconditioned
//! Crank–Nicolson Metropolis chain run on the standard-normal noise record
//! that generates the prior. Weights only ever live in the log domain.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_radius::{assemble_field, radius, radius_with_modes, FieldGrid, RadiusStat};
use crate::localtime::{self_intersection, BinRule};
use crate::mode_dynamics::{apply_tilt, InitLaw, ModeNoise, ModePath, PathGenerator, TiltParams};
use crate::rng::{stream_id, task_rng, Purpose};
use crate::spectrum::{DomainConfig, ModeSpec};

/// Exact sampler of the field law on the truncated mode representation.
#[derive(Debug, Clone)]
pub struct FieldPrior {
    pub cfg: DomainConfig,
    pub generators: Vec<PathGenerator>,
}

/// Standard-normal record behind one field draw, one entry per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNoise {
    pub modes: Vec<ModeNoise>,
}

#[derive(Debug, Clone)]
pub struct PriorDraw {
    pub noise: FieldNoise,
    pub paths: Vec<ModePath>,
    pub field: FieldGrid,
}

impl FieldPrior {
    /// Modes 1..N−1 start from their stationary law; the zero mode, when
    /// included, starts from rest at the origin.
    pub fn new(cfg: DomainConfig, modes: &[ModeSpec], include_zero_mode: bool) -> Result<Self> {
        cfg.validate()?;
        let dt = cfg.dt();
        let generators = modes
            .iter()
            .filter(|m| include_zero_mode || m.n > 0)
            .map(|m| PathGenerator::new(*m, dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, generators })
    }

    pub fn with_tilt(mut self, tilt: TiltParams, init: InitLaw) -> Result<Self> {
        self.generators = self
            .generators
            .into_iter()
            .map(|g| {
                let g = apply_tilt(g, tilt)?;
                if g.mode.n == 1 {
                    g.with_init(init)
                } else {
                    Ok(g)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self)
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldNoise {
        FieldNoise { modes: self.generators.iter().map(|_| ModeNoise::draw(self.cfg.n_t, rng)).collect() }
    }

    /// Noise for a replica; each mode reads its own (seed, replica, mode)
    /// stream.
    pub fn replica_noise(&self, replica: u64) -> FieldNoise {
        FieldNoise {
            modes: self
                .generators
                .iter()
                .map(|g| {
                    let mut rng = task_rng(self.cfg.seed, Purpose::Field, replica, g.mode.n as u64);
                    ModeNoise::draw(self.cfg.n_t, &mut rng)
                })
                .collect(),
        }
    }

    pub fn paths(&self, noise: &FieldNoise, replica: u64) -> Vec<ModePath> {
        self.generators
            .iter()
            .zip(&noise.modes)
            .map(|(g, z)| g.path_from_noise(z, stream_id(Purpose::Field, replica, g.mode.n as u64)))
            .collect()
    }

    pub fn realize(&self, noise: FieldNoise, replica: u64) -> Result<PriorDraw> {
        let paths = self.paths(&noise, replica);
        let field = assemble_field(&paths, &self.cfg)?;
        Ok(PriorDraw { noise, paths, field })
    }

    pub fn sample(&self, replica: u64) -> Result<PriorDraw> {
        self.realize(self.replica_noise(replica), replica)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
    pub replica: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSample {
    pub phi: f64,
    /// −β·Φ.
    pub log_weight: f64,
    pub radius: RadiusStat,
    pub replica_id: u64,
    pub seed_info: SeedInfo,
}

pub fn weigh(field: &FieldGrid, beta: f64, rule: BinRule) -> Result<GibbsSample> {
    if !(beta >= 0.0) {
        return Err(Error::NegativeBeta(beta));
    }
    let phi = self_intersection(field, rule)?.phi;
    Ok(GibbsSample {
        phi,
        log_weight: -beta * phi,
        radius: radius(field),
        replica_id: 0,
        seed_info: SeedInfo { seed: field.cfg.seed, replica: 0 },
    })
}

fn weigh_draw(draw: &PriorDraw, beta: f64, rule: BinRule, replica: u64) -> Result<GibbsSample> {
    let mut s = weigh(&draw.field, beta, rule)?;
    s.radius = radius_with_modes(&draw.field, &draw.paths);
    s.replica_id = replica;
    s.seed_info.replica = replica;
    Ok(s)
}

/// Weighs `n_replicas` independent prior draws, in replica order.
pub fn prior_samples(prior: &FieldPrior, beta: f64, rule: BinRule, n_replicas: usize) -> Result<Vec<GibbsSample>> {
    (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| weigh_draw(&prior.sample(r)?, beta, rule, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Radius,
    RadiusSq,
    IndicatorRadiusBelow(f64),
    IndicatorRadiusAbove(f64),
}

impl Functional {
    pub fn eval(&self, s: &GibbsSample) -> f64 {
        let r = s.radius.r;
        match *self {
            Functional::Radius => r,
            Functional::RadiusSq => r * r,
            Functional::IndicatorRadiusBelow(k) => f64::from(u8::from(r < k)),
            Functional::IndicatorRadiusAbove(k) => f64::from(u8::from(r > k)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsEstimate {
    /// Mean weight, the Monte Carlo estimate of Z_T.
    pub z_hat: f64,
    pub log_z_hat: f64,
    pub q_mean: f64,
    /// Delta-method standard error of the self-normalized mean.
    pub q_se: f64,
    pub ess: f64,
    pub n_replicas: usize,
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized weights w̃_i = w_i / Σ w.
pub fn normalized_weights(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights.iter().copied());
    log_weights.iter().map(|l| (l - lse).exp()).collect()
}

pub fn estimate_q(samples: &[GibbsSample], functional: Functional) -> Result<GibbsEstimate> {
    let values: Vec<f64> = samples.iter().map(|s| functional.eval(s)).collect();
    let log_w: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    estimate_weighted(&values, &log_w)
}

/// Self-normalized estimate of Σ w f / Σ w from log-weights.
pub fn estimate_weighted(values: &[f64], log_weights: &[f64]) -> Result<GibbsEstimate> {
    let n = values.len();
    if n < 2 || log_weights.len() != n {
        return Err(Error::TooFewPoints { need: 2, got: n.min(log_weights.len()) });
    }
    let lse = log_sum_exp(log_weights.iter().copied());
    let log_z_hat = lse - (n as f64).ln();
    let z_hat = log_z_hat.exp();
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w = normalized_weights(log_weights);
    let q_mean: f64 = w.iter().zip(values).map(|(w, f)| w * f).sum();
    let q_se = w.iter().zip(values).map(|(w, f)| (w * (f - q_mean)).powi(2)).sum::<f64>().sqrt();
    let ess = 1.0 / w.iter().map(|w| w * w).sum::<f64>();
    Ok(GibbsEstimate { z_hat: z_hat.min(1.0), log_z_hat, q_mean, q_se, ess: ess.clamp(1.0, n as f64), n_replicas: n })
}

/// Metropolis acceptance probability min(1, exp(−β(Φ' − Φ))).
pub fn acceptance_probability(beta: f64, phi_current: f64, phi_proposed: f64) -> f64 {
    let log_ratio = -beta * (phi_proposed - phi_current);
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcnOptions {
    /// Refresh only a window of this many time steps per proposal,
    /// cycling through the windows; `None` refreshes the whole path.
    pub block_len: Option<usize>,
    pub chain_id: u64,
    pub rule: BinRule,
}

impl Default for PcnOptions {
    fn default() -> Self {
        Self { block_len: None, chain_id: 0, rule: BinRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<GibbsSample>,
    pub acceptance_rate: f64,
}

impl ChainOutput {
    pub fn values(&self, functional: Functional) -> Vec<f64> {
        self.samples.iter().map(|s| functional.eval(s)).collect()
    }
}

/// Preconditioned Crank–Nicolson chain targeting Q.
///
/// Proposal on the noise record: z' = √(1−ρ²) z + ρ ξ with ξ a fresh
/// standard-normal record. The noise-to-path map is linear, so this is
/// exactly the pCN move on the Gaussian path law and the acceptance ratio
/// reduces to exp(−β(Φ' − Φ)).
pub fn pcn_chain(prior: &FieldPrior, beta: f64, rho: f64, n_steps: usize, options: PcnOptions) -> Result<ChainOutput> {
    if !(beta >= 0.0) {
        return Err(Error::NegativeBeta(beta));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::RhoOutOfRange(rho));
    }
    let n_t = prior.cfg.n_t;
    let seed = prior.cfg.seed;
    let mut proposals = task_rng(seed, Purpose::Proposal, options.chain_id, 0);
    let mut uniforms = task_rng(seed, Purpose::Accept, options.chain_id, 0);

    let chain_replica = u64::MAX - options.chain_id;
    let mut current = prior.realize(prior.draw_noise(&mut proposals), chain_replica)?;
    let mut current_phi = self_intersection(&current.field, options.rule)?.phi;
    let mut samples = Vec::with_capacity(n_steps);
    let mut accepted = 0usize;
    let block = options.block_len.unwrap_or(n_t).clamp(1, n_t.max(1));
    let n_blocks = n_t.div_ceil(block).max(1);

    for step in 0..n_steps {
        let b = step % n_blocks;
        let range = (b * block).min(n_t)..((b + 1) * block).min(n_t);
        let fresh = prior.draw_noise(&mut proposals);
        let noise = FieldNoise {
            modes: current
                .noise
                .modes
                .iter()
                .zip(&fresh.modes)
                .map(|(z, xi)| z.crank_nicolson(xi, rho, range.clone(), b == 0))
                .collect(),
        };
        let proposal = prior.realize(noise, chain_replica)?;
        let phi = self_intersection(&proposal.field, options.rule)?.phi;
        let p = acceptance_probability(beta, current_phi, phi);
        let u: f64 = uniforms.random();
        if u < p {
            current = proposal;
            current_phi = phi;
            accepted += 1;
        }
        samples.push(GibbsSample {
            phi: current_phi,
            log_weight: -beta * current_phi,
            radius: radius_with_modes(&current.field, &current.paths),
            replica_id: step as u64,
            seed_info: SeedInfo { seed, replica: options.chain_id },
        });
    }
    let acceptance_rate = if n_steps == 0 { 0.0 } else { accepted as f64 / n_steps as f64 };
    Ok(ChainOutput { samples, acceptance_rate })
}

/// Batch-means standard error of a correlated series.
pub fn batch_means_se(values: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2).min(values.len());
    let size = values.len() / n_batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = values.chunks_exact(size).take(n_batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (var / n_batches as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
