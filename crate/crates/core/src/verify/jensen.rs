use super::LemmaReport;
use crate::error::{Error, Result};
use crate::field_radius::{radius, spatial_mean, theta_profile, trapezoid_weights, FieldGrid};
use crate::localtime::{self_intersection, BinRule};

/// Margins of the three steps of the chain for one field and one K; all
/// are nonnegative (the middle one strictly positive) when the chain holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainMargins {
    /// (|{t : θ² ≤ 2K²}| − T/2)/T.
    pub time: f64,
    /// min over those slices of (|{x : |u − ū| ≤ 2K}| − J/2)/J.
    pub space: f64,
    /// (Φ − bound)/bound with bound = TJ²/(32K)·(1 − ε), ε = Δy/(2K + Δy).
    pub phi: f64,
    pub epsilon: f64,
}

impl ChainMargins {
    pub fn holds(&self) -> bool {
        self.time >= 0.0 && self.space > 0.0 && self.phi >= 0.0
    }

    fn worst(&self) -> f64 {
        // A zero spatial margin is already a violation.
        let space = if self.space > 0.0 { self.space } else { self.space.min(-f64::MIN_POSITIVE) };
        self.time.min(space).min(self.phi)
    }
}

/// Evaluates the chain on a field with R ≤ K; `None` when R > K.
pub fn chain_margins(field: &FieldGrid, k: f64, rule: BinRule) -> Result<Option<ChainMargins>> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("K must be positive, got {k}")));
    }
    if radius(field).r > k {
        return Ok(None);
    }
    let cfg = field.cfg;
    let (t, j) = (cfg.horizon, cfg.length);
    let theta_sq = theta_profile(field);
    let means = spatial_mean(field);
    let w = trapezoid_weights(cfg.n_t, cfg.dt());
    let good: Vec<usize> = (0..theta_sq.len()).filter(|&i| theta_sq[i] <= 2.0 * k * k).collect();
    let time = (good.iter().map(|&i| w[i]).sum::<f64>() - t / 2.0) / t;
    let dx = cfg.dx();
    let space = good
        .iter()
        .map(|&i| {
            let inside = field.slice(i).iter().filter(|u| (*u - means[i]).abs() <= 2.0 * k).count() as f64 * dx;
            (inside - j / 2.0) / j
        })
        .fold(f64::INFINITY, f64::min);
    let si = self_intersection(field, rule)?;
    let dy = si.bins.width;
    let epsilon = dy / (2.0 * k + dy);
    let bound = t * j * j / (32.0 * k) * (1.0 - epsilon);
    Ok(Some(ChainMargins { time, space, phi: (si.phi - bound) / bound, epsilon }))
}

/// Runs the chain on every field and every K in `k_values`.
pub fn check_jensen_chain(fields: &[FieldGrid], k_values: &[f64], rule: BinRule) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("jensen_chain", 0.0);
    let mut skipped = 0usize;
    let mut violations = 0usize;
    let mut max_eps = 0.0f64;
    for (s, f) in fields.iter().enumerate() {
        for &k in k_values {
            match chain_margins(f, k, rule)? {
                None => skipped += 1,
                Some(m) => {
                    violations += usize::from(!m.holds());
                    max_eps = max_eps.max(m.epsilon);
                    report.record(format!("sample={s} K={k}"), m.worst());
                }
            }
        }
    }
    report.metric("violations", violations as f64);
    report.metric("skipped_radius_above_k", skipped as f64);
    report.metric("max_binning_slack", max_eps);
    Ok(report.finish())
}
