//! Change of measure for the mode-1 drift tilt.
//!
//! Adding the forcing a·φ₁ shifts the mode-1 Brownian motion by θ = a/γ₁
//! per unit time, so on [0, T]
//!
//!   log dP̂/dP = θ·W₁(T) − θ²T/2,
//!
//! with W₁ the Brownian motion driving mode 1 under P. The normalization
//! ζ̂(T, a) is the exponential of ½a²T∬φ₁φ₁f, computed by quadrature of the
//! truncated noise kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_radius::{mode_contributions, trapezoid_weights};
use crate::gibbs::{prior_samples, FieldPrior};
use crate::localtime::{self_intersection, BinRule};
use crate::mode_dynamics::{InitLaw, ModeNoise, ModePath, ModeState, PathGenerator, TiltParams};
use crate::quad::integrate;
use crate::rng::{stream_id, task_rng, Purpose};
use crate::spectrum::{ModeSpec, Regime};

/// ∬ φ₁(x) φ₁(y) f(x, y) dx dy for the truncated kernel f = Σ γ_n² φ_n φ_n.
pub fn kernel_mass(modes: &[ModeSpec]) -> Result<f64> {
    let phi1 = modes.iter().find(|m| m.n == 1).ok_or(Error::TiltMode(1))?;
    let length = phi1.length;
    let f = |x: f64, y: f64| modes.iter().map(|m| m.gamma * m.gamma * m.eigenfunction(x) * m.eigenfunction(y)).sum::<f64>();
    let inner = |x: f64| integrate(|y| phi1.eigenfunction(y) * f(x, y), 0.0, length, 1e-13).value;
    Ok(integrate(|x| phi1.eigenfunction(x) * inner(x), 0.0, length, 1e-12).value)
}

/// σ_X² = Var F(T, φ₁) = T·∬φ₁φ₁f.
pub fn sigma_x_sq(horizon: f64, modes: &[ModeSpec]) -> Result<f64> {
    Ok(horizon * kernel_mass(modes)?)
}

/// log ζ̂(T, a) = ½a²T∬φ₁φ₁f.
pub fn log_zeta(a: f64, horizon: f64, modes: &[ModeSpec]) -> Result<f64> {
    Ok(0.5 * a * a * sigma_x_sq(horizon, modes)?)
}

/// E^P̂[log dP̂/dP] for the forcing-a tilt, a²T/(2γ₁²). Agrees with
/// [`log_zeta`] when γ₁ = 1.
pub fn tilt_log_zeta(a: f64, horizon: f64, gamma1: f64) -> Result<f64> {
    Ok(0.5 * horizon * shift_rate(a, gamma1)?.powi(2))
}

/// The closed form a²TJγ₁²/4 quoted for log ζ̂; kept for reporting only.
pub fn quoted_log_zeta(a: f64, horizon: f64, length: f64, gamma1: f64) -> f64 {
    a * a * horizon * length * gamma1 * gamma1 / 4.0
}

fn shift_rate(a: f64, gamma1: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(0.0);
    }
    if gamma1 == 0.0 || !gamma1.is_finite() {
        return Err(Error::InvalidArgument("tilt requires a noisy first mode (gamma_1 != 0)".into()));
    }
    Ok(a / gamma1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirsanovDensity {
    pub a: f64,
    /// Brownian shift per unit time, a/γ₁.
    pub theta: f64,
    pub horizon: f64,
    pub log_zeta: f64,
}

impl GirsanovDensity {
    pub fn new(a: f64, horizon: f64, modes: &[ModeSpec]) -> Result<Self> {
        let gamma1 = modes.iter().find(|m| m.n == 1).ok_or(Error::TiltMode(1))?.gamma;
        Ok(Self { a, theta: shift_rate(a, gamma1)?, horizon, log_zeta: log_zeta(a, horizon, modes)? })
    }

    /// log dP̂/dP from the untilted mode-1 Wiener increments.
    pub fn log_density(&self, wiener: &[f64]) -> f64 {
        let w: f64 = wiener.iter().sum();
        self.theta * w - 0.5 * self.theta * self.theta * self.horizon
    }

    /// log dP̂/dP seen from the tilted side, where the recorded increments
    /// are those of the P̂-Brownian motion W̃₁ = W₁ − θt.
    pub fn log_density_tilted(&self, wiener_tilde: &[f64]) -> f64 {
        let w: f64 = wiener_tilde.iter().sum();
        self.theta * w + 0.5 * self.theta * self.theta * self.horizon
    }
}

/// Free-function form of [`GirsanovDensity::log_density`].
pub fn log_density(wiener: &[f64], a: f64, horizon: f64, gamma1: f64) -> Result<f64> {
    let theta = shift_rate(a, gamma1)?;
    Ok(theta * wiener.iter().sum::<f64>() - 0.5 * theta * theta * horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        (self.mean - target).abs() <= n_se * self.se
    }
}

fn mode1_generator(prior: &FieldPrior) -> Result<&PathGenerator> {
    prior.generators.iter().find(|g| g.mode.n == 1).ok_or(Error::TiltMode(1))
}

/// Mode-1 path of replica `r`, on the same stream the field prior uses.
fn mode1_path(generator: &PathGenerator, seed: u64, n_t: usize, replica: u64) -> ModePath {
    let mut rng = task_rng(seed, Purpose::Field, replica, 1);
    generator.path_from_noise(&ModeNoise::draw(n_t, &mut rng), stream_id(Purpose::Field, replica, 1))
}

/// Mean of exp(log dP̂/dP) over untilted replicas; 1 in expectation.
pub fn martingale_check(prior: &FieldPrior, a: f64, n_replicas: usize) -> Result<MeanEstimate> {
    let g = mode1_generator(prior)?;
    let density = GirsanovDensity::new(a, prior.cfg.horizon, &[g.mode])?;
    let values: Vec<f64> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| density.log_density(&mode1_path(g, prior.cfg.seed, prior.cfg.n_t, r).wiener).exp())
        .collect();
    Ok(MeanEstimate::from_values(&values))
}

/// Tilted-side mean of log dP̂/dP; should match the normalization.
pub fn log_ratio_identity(prior: &FieldPrior, a: f64, n_replicas: usize) -> Result<MeanEstimate> {
    let g = mode1_generator(prior)?;
    let density = GirsanovDensity::new(a, prior.cfg.horizon, &[g.mode])?;
    let tilted = crate::mode_dynamics::apply_tilt(g.clone(), TiltParams::new(a))?;
    let values: Vec<f64> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| density.log_density_tilted(&mode1_path(&tilted, prior.cfg.seed, prior.cfg.n_t, r).wiener))
        .collect();
    Ok(MeanEstimate::from_values(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFunctional {
    /// (1/T)∫₀^T â₁(t) dt.
    TimeAverageA1,
    /// R(T, J) from the mode sum.
    Radius,
}

impl PathFunctional {
    pub fn eval(&self, paths: &[ModePath], prior: &FieldPrior) -> f64 {
        match self {
            PathFunctional::TimeAverageA1 => {
                let Some(p) = paths.iter().find(|p| p.mode.n == 1) else { return 0.0 };
                let w = trapezoid_weights(prior.cfg.n_t, prior.cfg.dt());
                p.coefficients().zip(&w).map(|(a, w)| a * w).sum::<f64>() / prior.cfg.horizon
            }
            PathFunctional::Radius => mode_contributions(paths, &prior.cfg).iter().sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub functional: PathFunctional,
    pub a: f64,
    pub tilted: MeanEstimate,
    pub reweighted: MeanEstimate,
    pub difference: f64,
    /// SE of the paired difference; both sides share each replica's noise.
    pub difference_se: f64,
    pub pass: bool,
}

/// Compares E^P̂[g] from tilted paths with E^P[g·dP̂/dP] from untilted
/// paths driven by the same noise. The tilted paths start from the
/// untilted stationary law, so the density on [0, T] is exact.
pub fn tilt_consistency(prior: &FieldPrior, functional: PathFunctional, a: f64, n_replicas: usize) -> Result<ConsistencyReport> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("tilt amplitude must be finite, got {a}")));
    }
    let density = GirsanovDensity::new(a, prior.cfg.horizon, &[mode1_generator(prior)?.mode])?;
    let tilted_prior = prior.clone().with_tilt(TiltParams::new(a), InitLaw::Stationary)?;
    let pairs: Vec<(f64, f64)> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let noise = prior.replica_noise(r);
            let plain = prior.paths(&noise, r);
            let tilted = tilted_prior.paths(&noise, r);
            let w1 = plain.iter().find(|p| p.mode.n == 1).map_or(&[][..], |p| &p.wiener[..]);
            let weight = density.log_density(w1).exp();
            (functional.eval(&tilted, prior), functional.eval(&plain, prior) * weight)
        })
        .collect();
    let (t, w): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let d: Vec<f64> = pairs.iter().map(|(t, w)| t - w).collect();
    let diff = MeanEstimate::from_values(&d);
    let pass = if diff.se == 0.0 { diff.mean.abs() <= 1e-12 } else { diff.within(0.0, 4.0) };
    Ok(ConsistencyReport {
        functional,
        a,
        tilted: MeanEstimate::from_values(&t),
        reweighted: MeanEstimate::from_values(&w),
        difference: diff.mean,
        difference_se: diff.se,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedMeanReport {
    pub length: f64,
    pub a: f64,
    /// Root gap w = √(1 − 4k²) of the overdamped first mode.
    pub root_gap: f64,
    /// (a/w)(2/(1−w) − 2/(1+w)).
    pub closed_form: f64,
    pub estimate: MeanEstimate,
    pub pass: bool,
}

/// Long-run mean of â₁ under the forcing-a tilt for an overdamped first
/// mode, from independent replicas relaxed from rest.
pub fn tilted_mean_check(length: f64, gamma1: f64, a: f64, n_replicas: usize, seed: u64) -> Result<TiltedMeanReport> {
    let mode = ModeSpec::new(length, 1, gamma1)?;
    if mode.regime != Regime::Overdamped {
        return Err(Error::InvalidArgument(format!("first mode is not overdamped at J = {length}")));
    }
    let w = mode.root_gap();
    let closed_form = (a / w) * (2.0 / (1.0 - w) - 2.0 / (1.0 + w));
    let slow_rate = (1.0 - w) / 2.0;
    let dt = 1.0;
    let n_burn = (40.0 / slow_rate / dt).ceil() as usize;
    let generator = PathGenerator::new(mode, dt)?.with_drift(a).with_init(InitLaw::Fixed(ModeState::default()))?;
    let values: Vec<f64> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, Purpose::Tilted, r, 1);
            let noise = ModeNoise::draw(n_burn, &mut rng);
            generator.path_from_noise(&noise, 0).states.last().map_or(0.0, |s| s.a)
        })
        .collect();
    let estimate = MeanEstimate::from_values(&values);
    Ok(TiltedMeanReport { length, a, root_gap: w, closed_form, estimate, pass: estimate.within(closed_form, 4.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZtBoundReport {
    pub beta: f64,
    pub a: f64,
    pub horizon: f64,
    /// (1/T) log ẑ_T.
    pub lhs: f64,
    pub lhs_se: f64,
    /// −β·Ê[Φ]/T − (1/T)·log ζ̂.
    pub rhs: f64,
    pub rhs_se: f64,
    pub tilted_phi_mean: f64,
    pub log_zeta: f64,
    pub margin: f64,
    pub margin_se: f64,
    pub holds: bool,
}

/// Both sides of the Jensen lower bound on (1/T) log Z_T at finite T.
pub fn zt_lower_bound_report(prior: &FieldPrior, beta: f64, a: f64, n_replicas: usize, rule: BinRule) -> Result<ZtBoundReport> {
    let t = prior.cfg.horizon;
    let samples = prior_samples(prior, beta, rule, n_replicas)?;
    let weights: Vec<f64> = samples.iter().map(|s| s.log_weight.exp()).collect();
    let z = MeanEstimate::from_values(&weights);
    if z.mean <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let lhs = z.mean.ln() / t;
    let lhs_se = z.se / (z.mean * t);

    let gamma1 = mode1_generator(prior)?.mode.gamma;
    let lz = tilt_log_zeta(a, t, gamma1)?;
    let tilted = prior.clone().with_tilt(TiltParams::new(a), InitLaw::Stationary)?;
    let phis: Vec<f64> = (0..n_replicas as u64)
        .into_par_iter()
        .map(|r| Ok(self_intersection(&tilted.sample(r)?.field, rule)?.phi))
        .collect::<Result<_>>()?;
    let phi = MeanEstimate::from_values(&phis);
    let rhs = -beta * phi.mean / t - lz / t;
    let rhs_se = beta * phi.se / t;
    let margin = lhs - rhs;
    let margin_se = lhs_se.hypot(rhs_se);
    Ok(ZtBoundReport {
        beta,
        a,
        horizon: t,
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        tilted_phi_mean: phi.mean,
        log_zeta: lz,
        margin,
        margin_se,
        holds: margin >= -4.0 * margin_se,
    })
}

/// The girsanov-check output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub a: f64,
    pub log_zeta: f64,
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub consistency_pass: bool,
    pub horizon: f64,
    pub length: f64,
    pub gamma1: f64,
    pub tilt_log_zeta: f64,
    pub quoted_log_zeta: f64,
    pub identity_mean: f64,
    pub identity_se: f64,
    pub identity_pass: bool,
    pub martingale_pass: bool,
    pub consistency: Vec<ConsistencyReport>,
}

pub fn girsanov_check(prior: &FieldPrior, a: f64, n_replicas: usize) -> Result<GirsanovReport> {
    let modes: Vec<ModeSpec> = prior.generators.iter().map(|g| g.mode).collect();
    let gamma1 = mode1_generator(prior)?.mode.gamma;
    let t = prior.cfg.horizon;
    let lz = log_zeta(a, t, &modes)?;
    let tlz = tilt_log_zeta(a, t, gamma1)?;
    let mart = martingale_check(prior, a, n_replicas)?;
    let ident = log_ratio_identity(prior, a, n_replicas)?;
    let consistency = [PathFunctional::TimeAverageA1, PathFunctional::Radius]
        .into_iter()
        .map(|f| tilt_consistency(prior, f, a, n_replicas))
        .collect::<Result<Vec<_>>>()?;
    let within = |m: &MeanEstimate, target: f64| if m.se == 0.0 { (m.mean - target).abs() <= 1e-12 } else { m.within(target, 4.0) };
    Ok(GirsanovReport {
        a,
        log_zeta: lz,
        martingale_mean: mart.mean,
        martingale_se: mart.se,
        consistency_pass: consistency.iter().all(|c| c.pass),
        horizon: t,
        length: prior.cfg.length,
        gamma1,
        tilt_log_zeta: tlz,
        quoted_log_zeta: quoted_log_zeta(a, t, prior.cfg.length, gamma1),
        identity_mean: ident.mean,
        identity_se: ident.se,
        identity_pass: within(&ident, tlz),
        martingale_pass: within(&mart, 1.0),
        consistency,
    })
}
