//! Exact-in-distribution simulation of the per-mode damped oscillator
//!
//! ```text
//! dX = V dt,   dV = (−V + λ_n X) dt + γ_n dW_n
//! ```
//!
//! Every mode is linear-Gaussian, so paths are produced by sampling the
//! exact transition law over one time step. The drift matrix exponential
//! uses the closed forms for the three root configurations (the critical
//! case is defective and never goes through an eigen-decomposition); the
//! step covariance and the response to a constant forcing come from
//! augmented matrix exponentials.
//!
//! Paths are generated from an explicit standard-normal "noise record"
//! (two draws for the initial state, three per step). The map from noise
//! to path is linear and deterministic, which is what lets the pCN sampler
//! and the Girsanov reweighting operate on the same representation.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{ModeSpec, Regime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    /// Mode coefficient a_n(t).
    pub a: f64,
    /// Its time derivative.
    pub v: f64,
}

impl ModeState {
    pub fn new(a: f64, v: f64) -> Self {
        Self { a, v }
    }

    fn vec(self) -> Vector2<f64> {
        Vector2::new(self.a, self.v)
    }

    fn from_vec(v: Vector2<f64>) -> Self {
        Self { a: v[0], v: v[1] }
    }
}

pub fn drift_matrix(mode: &ModeSpec) -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, mode.lambda, -1.0)
}

/// e^{M t} from the closed form of the regime.
pub fn mean_map_closed_form(mode: &ModeSpec, t: f64) -> Matrix2<f64> {
    match mode.regime {
        Regime::Critical => {
            let e = (-0.5 * t).exp() / 4.0;
            Matrix2::new(4.0 + 2.0 * t, 4.0 * t, -t, 4.0 - 2.0 * t) * e
        }
        Regime::Underdamped => {
            let w = mode.omega;
            let (s, c) = (w * t).sin_cos();
            let e = (-0.5 * t).exp();
            Matrix2::new(
                c + s / (2.0 * w),
                s / w,
                -(w + 1.0 / (4.0 * w)) * s,
                c - s / (2.0 * w),
            ) * e
        }
        Regime::Overdamped => {
            // Sylvester's formula with distinct real roots r1 > r2.
            let gap = mode.root_gap();
            let r1 = 0.5 * (-1.0 + gap);
            let r2 = 0.5 * (-1.0 - gap);
            let m = drift_matrix(mode);
            let id = Matrix2::identity();
            ((m - id * r2) * (r1 * t).exp() - (m - id * r1) * (r2 * t).exp()) / gap
        }
    }
}

/// Exact one-step transition of a mode over `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    /// e^{M dt}.
    pub mean_map: Matrix2<f64>,
    /// ∫₀^dt e^{Ms} α αᵀ e^{Mᵀs} ds with α = (0, γ)ᵀ.
    pub cov: Matrix2<f64>,
    /// ∫₀^dt e^{Ms} (0, 1)ᵀ ds: the state response to a unit constant
    /// forcing in the velocity equation.
    pub forcing: Vector2<f64>,
    pub dt: f64,
    pub gamma: f64,
    /// E[ξ ΔW]/dt, where ξ is the state innovation.
    cross: Vector2<f64>,
    /// Cholesky factor of Cov[ξ | ΔW].
    residual: Matrix2<f64>,
}

fn psd_cholesky(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = m[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { m[(1, 0)] / l11 } else { 0.0 };
    let l22 = (m[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

/// Van Loan: exp of [[−M, ααᵀ], [0, Mᵀ]]·dt yields e^{M dt} and the
/// integrated diffusion in its blocks.
fn van_loan_cov(m: &Matrix2<f64>, gamma: f64, dt: f64) -> Matrix2<f64> {
    let mut c = Matrix4::<f64>::zeros();
    c.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-m * dt));
    c[(1, 3)] = gamma * gamma * dt;
    c.fixed_view_mut::<2, 2>(2, 2).copy_from(&(m.transpose() * dt));
    let e = c.exp();
    let f12: Matrix2<f64> = e.fixed_view::<2, 2>(0, 2).into();
    let f22: Matrix2<f64> = e.fixed_view::<2, 2>(2, 2).into();
    let q = f22.transpose() * f12;
    (q + q.transpose()) * 0.5
}

fn forcing_response(m: &Matrix2<f64>, dt: f64) -> Vector2<f64> {
    let mut c = Matrix3::<f64>::zeros();
    c.fixed_view_mut::<2, 2>(0, 0).copy_from(&(m * dt));
    c[(1, 2)] = dt;
    let e = c.exp();
    Vector2::new(e[(0, 2)], e[(1, 2)])
}

pub fn build_transition(mode: &ModeSpec, dt: f64) -> Result<TransitionKernel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let m = drift_matrix(mode);
    let mean_map = mean_map_closed_form(mode, dt);
    let cov = van_loan_cov(&m, mode.gamma, dt);
    let forcing = forcing_response(&m, dt);
    let cross = forcing * (mode.gamma / dt);
    let residual = psd_cholesky(&(cov - cross * cross.transpose() * dt));
    Ok(TransitionKernel { mean_map, cov, forcing, dt, gamma: mode.gamma, cross, residual })
}

impl TransitionKernel {
    /// Deterministic part of one step under constant forcing `drift`.
    pub fn mean_step(&self, s: ModeState, drift: f64) -> ModeState {
        ModeState::from_vec(self.mean_map * s.vec() + self.forcing * drift)
    }

    /// One exact step from three standard normals. Returns the new state
    /// and the Wiener increment that drove it.
    pub fn step(&self, s: ModeState, drift: f64, z: [f64; 3]) -> (ModeState, f64) {
        let dw = self.dt.sqrt() * z[0];
        let xi = self.cross * dw + self.residual * Vector2::new(z[1], z[2]);
        (ModeState::from_vec(self.mean_map * s.vec() + self.forcing * drift + xi), dw)
    }

    /// Law of two consecutive steps: (mean map, covariance).
    pub fn compose(&self, next: &TransitionKernel) -> (Matrix2<f64>, Matrix2<f64>) {
        let mean = next.mean_map * self.mean_map;
        let cov = next.mean_map * self.cov * next.mean_map.transpose() + next.cov;
        (mean, cov)
    }
}

/// Stationary covariance of (a, v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub var_a: f64,
    pub var_v: f64,
    pub cov_av: f64,
}

impl StationaryLaw {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.var_a, self.cov_av, self.cov_av, self.var_v)
    }
}

/// Solves the Lyapunov equation M Σ + Σ Mᵀ + α αᵀ = 0.
pub fn stationary_law(mode: &ModeSpec) -> Result<StationaryLaw> {
    if mode.n == 0 {
        return Err(Error::ZeroMode);
    }
    let m = drift_matrix(mode);
    let id = Matrix2::<f64>::identity();
    // Column-major vec: (I ⊗ M + M ⊗ I) vec Σ = −vec(α αᵀ).
    let mut op = Matrix4::<f64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    op[(i * 2 + p, j * 2 + q)] = id[(i, j)] * m[(p, q)] + m[(i, j)] * id[(p, q)];
                }
            }
        }
    }
    let mut rhs = nalgebra::Vector4::<f64>::zeros();
    rhs[3] = -mode.gamma * mode.gamma;
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular Lyapunov operator".into()))?;
    Ok(StationaryLaw { var_a: sol[0], var_v: sol[3], cov_av: 0.5 * (sol[1] + sol[2]) })
}

/// (Var a, Var v, Cov(a, v)) under the stationary law.
pub fn stationary_variance(mode: &ModeSpec) -> Result<(f64, f64, f64)> {
    let law = stationary_law(mode)?;
    Ok((law.var_a, law.var_v, law.cov_av))
}

/// Fixed point of the mean dynamics under a constant forcing.
pub fn stationary_mean(mode: &ModeSpec, drift: f64) -> Result<ModeState> {
    if mode.n == 0 {
        return Err(Error::ZeroMode);
    }
    let m = drift_matrix(mode);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular drift matrix".into()))?;
    Ok(ModeState::from_vec(-(inv * Vector2::new(0.0, drift))))
}

pub fn sample_stationary<R: Rng + ?Sized>(mode: &ModeSpec, rng: &mut R) -> Result<ModeState> {
    let law = stationary_law(mode)?;
    let l = psd_cholesky(&law.matrix());
    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    Ok(ModeState::from_vec(l * z))
}

/// Standard-normal record that determines one mode path.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeNoise {
    pub init: [f64; 2],
    pub steps: Vec<[f64; 3]>,
}

impl ModeNoise {
    pub fn draw<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> Self {
        let mut n = || rng.sample::<f64, _>(StandardNormal);
        let init = [n(), n()];
        let steps = (0..n_t).map(|_| [n(), n(), n()]).collect();
        Self { init, steps }
    }

    /// √(1−ρ²)·self + ρ·fresh, coordinate-wise over the selected steps.
    /// The initial draws are refreshed iff `refresh_init`.
    pub fn crank_nicolson(&self, fresh: &ModeNoise, rho: f64, steps: std::ops::Range<usize>, refresh_init: bool) -> Self {
        let keep = (1.0 - rho * rho).sqrt();
        let mut out = self.clone();
        if refresh_init {
            for i in 0..2 {
                out.init[i] = keep * self.init[i] + rho * fresh.init[i];
            }
        }
        for i in steps {
            for c in 0..3 {
                out.steps[i][c] = keep * self.steps[i][c] + rho * fresh.steps[i][c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePath {
    pub mode: ModeSpec,
    /// States at t_0, …, t_{n_t}.
    pub states: Vec<ModeState>,
    /// Wiener increments of W_n over each step.
    pub wiener: Vec<f64>,
    pub rng_stream_id: u64,
}

impl ModePath {
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.a)
    }

    pub fn n_t(&self) -> usize {
        self.states.len() - 1
    }

    /// W_n(T) − W_n(0).
    pub fn wiener_total(&self) -> f64 {
        self.wiener.iter().sum()
    }
}

/// How a generator draws the state at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitLaw {
    /// The untilted stationary law (centered).
    Stationary,
    /// The stationary law of the forced dynamics: same covariance, mean
    /// shifted to the forced fixed point.
    StationaryForced,
    Fixed(ModeState),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    /// Drift amplitude a of the forcing a·φ₁ added to the noise.
    pub a: f64,
    pub target_mode: usize,
}

impl TiltParams {
    pub fn new(a: f64) -> Self {
        Self { a, target_mode: 1 }
    }
}

/// Samples paths of a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGenerator {
    pub mode: ModeSpec,
    pub kernel: TransitionKernel,
    /// Constant forcing in the velocity equation; a for the tilted mode 1.
    pub drift: f64,
    pub init: InitLaw,
    stationary_chol: Matrix2<f64>,
}

impl PathGenerator {
    pub fn new(mode: ModeSpec, dt: f64) -> Result<Self> {
        let kernel = build_transition(&mode, dt)?;
        let (init, stationary_chol) = if mode.n == 0 {
            (InitLaw::Fixed(ModeState::default()), Matrix2::zeros())
        } else {
            (InitLaw::Stationary, psd_cholesky(&stationary_law(&mode)?.matrix()))
        };
        Ok(Self { mode, kernel, drift: 0.0, init, stationary_chol })
    }

    /// Sets the constant forcing in the velocity equation.
    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_init(mut self, init: InitLaw) -> Result<Self> {
        if self.mode.n == 0 && !matches!(init, InitLaw::Fixed(_)) {
            return Err(Error::ZeroMode);
        }
        self.init = init;
        Ok(self)
    }

    pub fn initial_state(&self, z: [f64; 2]) -> ModeState {
        match self.init {
            InitLaw::Fixed(s) => s,
            InitLaw::Stationary => ModeState::from_vec(self.stationary_chol * Vector2::new(z[0], z[1])),
            InitLaw::StationaryForced => {
                let mu = stationary_mean(&self.mode, self.drift).expect("n >= 1 checked at construction");
                ModeState::from_vec(mu.vec() + self.stationary_chol * Vector2::new(z[0], z[1]))
            }
        }
    }

    pub fn path_from_noise(&self, noise: &ModeNoise, rng_stream_id: u64) -> ModePath {
        let mut states = Vec::with_capacity(noise.steps.len() + 1);
        let mut wiener = Vec::with_capacity(noise.steps.len());
        let mut s = self.initial_state(noise.init);
        states.push(s);
        for z in &noise.steps {
            let (next, dw) = self.kernel.step(s, self.drift, *z);
            s = next;
            states.push(s);
            wiener.push(dw);
        }
        ModePath { mode: self.mode, states, wiener, rng_stream_id }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_t: usize, rng: &mut R, rng_stream_id: u64) -> ModePath {
        self.path_from_noise(&ModeNoise::draw(n_t, rng), rng_stream_id)
    }

    /// Deterministic mean path from `init`.
    pub fn mean_path(&self, init: ModeState, n_t: usize) -> Vec<ModeState> {
        let mut out = Vec::with_capacity(n_t + 1);
        let mut s = init;
        out.push(s);
        for _ in 0..n_t {
            s = self.kernel.mean_step(s, self.drift);
            out.push(s);
        }
        out
    }
}

/// Adds the drift a·φ₁ to the noise. Mode 1 gets constant forcing a in
/// its velocity equation (a drift a/γ₁ in dW₁); other modes are untouched.
pub fn apply_tilt(generator: PathGenerator, tilt: TiltParams) -> Result<PathGenerator> {
    if tilt.target_mode != 1 {
        return Err(Error::TiltMode(tilt.target_mode));
    }
    if generator.mode.n != 1 {
        return Ok(generator);
    }
    Ok(PathGenerator { drift: tilt.a, ..generator })
}

/// Evolves `init` through `n_t` exact steps of `kernel`.
pub fn evolve_path<R: Rng + ?Sized>(
    mode: &ModeSpec,
    init: ModeState,
    kernel: &TransitionKernel,
    n_t: usize,
    rng: &mut R,
    rng_stream_id: u64,
) -> ModePath {
    let mut states = Vec::with_capacity(n_t + 1);
    let mut wiener = Vec::with_capacity(n_t);
    let mut s = init;
    states.push(s);
    for _ in 0..n_t {
        let z = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let (next, dw) = kernel.step(s, 0.0, z);
        s = next;
        states.push(s);
        wiener.push(dw);
    }
    ModePath { mode: *mode, states, wiener, rng_stream_id }
}

/// Zero mode: V is an Ornstein–Uhlenbeck velocity and X its integral.
pub fn evolve_zero_mode<R: Rng + ?Sized>(
    gamma0: f64,
    init: ModeState,
    length: f64,
    dt: f64,
    n_t: usize,
    rng: &mut R,
    rng_stream_id: u64,
) -> Result<ModePath> {
    let mode = ModeSpec::new(length, 0, gamma0)?;
    let kernel = build_transition(&mode, dt)?;
    Ok(evolve_path(&mode, init, &kernel, n_t, rng, rng_stream_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{task_rng, Purpose};
    use std::f64::consts::PI;

    fn rel(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn modes_all_regimes() -> Vec<ModeSpec> {
        vec![
            ModeSpec::new(8.0 * PI, 1, 1.0).unwrap(),
            ModeSpec::new(2.0 * PI, 1, 1.0).unwrap(),
            ModeSpec::new(PI, 1, 1.0).unwrap(),
            ModeSpec::new(1.0, 3, 0.4).unwrap(),
            ModeSpec::new(1.0, 0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn closed_form_matches_numeric_exponential() {
        for mode in modes_all_regimes() {
            for t in [1e-3, 0.1, 1.0, 7.5] {
                let numeric = (drift_matrix(&mode) * t).exp();
                let closed = mean_map_closed_form(&mode, t);
                assert!(rel(&closed, &numeric) < 1e-12, "n={} t={t}", mode.n);
            }
        }
    }

    #[test]
    fn critical_closed_form_entries() {
        let mode = ModeSpec::new(2.0 * PI, 1, 1.0).unwrap();
        let t = 0.37;
        let k = build_transition(&mode, t).unwrap();
        let e = (-t / 2.0).exp() / 4.0;
        let want = Matrix2::new((4.0 + 2.0 * t) * e, 4.0 * t * e, -t * e, (4.0 - 2.0 * t) * e);
        assert!(rel(&k.mean_map, &want) < 1e-15);
    }

    #[test]
    fn small_step_limit() {
        for mode in modes_all_regimes() {
            let k = build_transition(&mode, 1e-8).unwrap();
            assert!((k.mean_map - Matrix2::identity()).norm() <= 1e-6);
            assert!(k.cov.norm() <= 1e-8 * mode.gamma * mode.gamma + 1e-300);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        for mode in modes_all_regimes() {
            for dt in [1e-3, 1e-2, 1e-1] {
                let one = build_transition(&mode, dt).unwrap();
                let two = build_transition(&mode, 2.0 * dt).unwrap();
                let (m, c) = one.compose(&one);
                assert!(rel(&m, &two.mean_map) < 1e-10);
                assert!(rel(&c, &two.cov) < 1e-10, "n={} dt={dt}: {}", mode.n, rel(&c, &two.cov));
            }
        }
    }

    #[test]
    fn lyapunov_fixed_point_of_transition() {
        for mode in modes_all_regimes().into_iter().filter(|m| m.n > 0) {
            let law = stationary_law(&mode).unwrap();
            let k = build_transition(&mode, 0.3).unwrap();
            let s = law.matrix();
            let pushed = k.mean_map * s * k.mean_map.transpose() + k.cov;
            assert!(rel(&pushed, &s) < 1e-12);
        }
    }

    #[test]
    fn zero_mode_has_no_stationary_law() {
        let m0 = ModeSpec::new(1.0, 0, 1.0).unwrap();
        assert_eq!(stationary_variance(&m0), Err(Error::ZeroMode));
        let mut rng = task_rng(1, Purpose::Misc, 0, 0);
        assert!(sample_stationary(&m0, &mut rng).is_err());
    }

    #[test]
    fn noiseless_overdamped_follows_flow() {
        let mode = ModeSpec::new(8.0 * PI, 1, 0.0).unwrap();
        let k = build_transition(&mode, 0.05).unwrap();
        let mut rng = task_rng(3, Purpose::Misc, 0, 0);
        let path = evolve_path(&mode, ModeState::new(1.0, 0.0), &k, 40, &mut rng, 0);
        for (i, s) in path.states.iter().enumerate() {
            let flow = mean_map_closed_form(&mode, 0.05 * i as f64) * Vector2::new(1.0, 0.0);
            assert!((s.a - flow[0]).abs() < 1e-12 && (s.v - flow[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_zero_mode() {
        let mut rng = task_rng(5, Purpose::Misc, 0, 0);
        let (x0, v0) = (0.3, -1.2);
        let path = evolve_zero_mode(0.0, ModeState::new(x0, v0), 1.0, 0.1, 50, &mut rng, 0).unwrap();
        for (i, s) in path.states.iter().enumerate() {
            let t = 0.1 * i as f64;
            assert!((s.a - (x0 + v0 * (1.0 - (-t).exp()))).abs() < 1e-12);
            assert!((s.v - v0 * (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_only_on_mode_one() {
        let g = PathGenerator::new(ModeSpec::new(PI, 2, 0.5).unwrap(), 0.1).unwrap();
        assert_eq!(apply_tilt(g.clone(), TiltParams { a: 1.0, target_mode: 2 }), Err(Error::TiltMode(2)));
        assert_eq!(apply_tilt(g.clone(), TiltParams::new(1.0)).unwrap(), g);
    }

    #[test]
    fn null_tilt_is_bitwise_identical() {
        let g = PathGenerator::new(ModeSpec::new(PI, 1, 1.0).unwrap(), 0.1).unwrap();
        let t = apply_tilt(g.clone(), TiltParams::new(0.0)).unwrap();
        let p1 = g.sample(30, &mut task_rng(9, Purpose::Field, 0, 1), 0);
        let p2 = t.sample(30, &mut task_rng(9, Purpose::Field, 0, 1), 0);
        assert_eq!(p1, p2);
    }

    #[test]
    fn tilt_mean_is_linear_in_amplitude() {
        for mode in modes_all_regimes().into_iter().filter(|m| m.n == 1) {
            let base = PathGenerator::new(mode, 0.2).unwrap();
            let unit = apply_tilt(base.clone(), TiltParams::new(1.0)).unwrap().mean_path(ModeState::default(), 200);
            let scaled = apply_tilt(base, TiltParams::new(-2.7)).unwrap().mean_path(ModeState::default(), 200);
            for (u, s) in unit.iter().zip(&scaled) {
                assert!((s.a - -2.7 * u.a).abs() <= 1e-12 * (1.0 + u.a.abs()));
                assert!((s.v - -2.7 * u.v).abs() <= 1e-12 * (1.0 + u.v.abs()));
            }
        }
    }

    #[test]
    fn variance_continuous_across_critical_length() {
        let crit = stationary_law(&ModeSpec::new(2.0 * PI, 1, 1.0).unwrap()).unwrap().var_a;
        for f in [1.0 - 1e-6, 1.0 + 1e-6] {
            let v = stationary_law(&ModeSpec::new(2.0 * PI * f, 1, 1.0).unwrap()).unwrap().var_a;
            assert!((v - crit).abs() / crit < 1e-4);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let mode = ModeSpec::new(PI, 1, 1.0).unwrap();
        let a = sample_stationary(&mode, &mut task_rng(11, Purpose::Field, 2, 1)).unwrap();
        let b = sample_stationary(&mode, &mut task_rng(11, Purpose::Field, 2, 1)).unwrap();
        assert_eq!(a, b);
    }
}
