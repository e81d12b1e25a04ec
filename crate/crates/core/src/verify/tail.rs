use statrs::function::erf::erfc;

use super::LemmaReport;
use crate::error::{Error, Result};
use crate::quad::integrate_to_infinity;

/// log P(Z ≥ z) for standard normal Z, accurate far into the tail.
fn log_upper_tail(z: f64) -> f64 {
    if z < 30.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

fn check_domain(sigma: f64, gamma: f64) -> Result<f64> {
    let q = 2.0 * gamma * sigma * sigma;
    if !(sigma > 0.0 && gamma > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("need sigma, gamma > 0 and 2*gamma*sigma^2 < 1, got sigma={sigma}, gamma={gamma}")));
    }
    Ok(q)
}

/// ∫₁^∞ P(X ≥ √(log x / γ)) dx for X ~ N(0, σ²), by quadrature after
/// y = log x.
pub fn tail_integral(sigma: f64, gamma: f64) -> Result<f64> {
    let q = check_domain(sigma, gamma)?;
    // The integrand decays like exp(−y(1/q − 1)); rescale so that is O(1).
    let scale = q / (1.0 - q);
    let f = |s: f64| {
        let y = scale * s;
        scale * (log_upper_tail((y / gamma).sqrt() / sigma) + y).exp()
    };
    Ok(integrate_to_infinity(f, 0.0, 1e-13).value)
}

/// Closed form ½((1 − 2γσ²)^{−1/2} − 1) = E[(e^{γX²} − 1)1_{X≥0}].
pub fn tail_integral_exact(sigma: f64, gamma: f64) -> Result<f64> {
    let q = check_domain(sigma, gamma)?;
    Ok(0.5 * ((1.0 - q).powf(-0.5) - 1.0))
}

/// σ²γ/√(1 − 2γσ²).
pub fn tail_bound(sigma: f64, gamma: f64) -> Result<f64> {
    let q = check_domain(sigma, gamma)?;
    Ok(sigma * sigma * gamma / (1.0 - q).sqrt())
}

/// Checks the quadrature against the bound on every (σ, 2γσ²) pair.
pub fn check_tail_integral_bound(sigmas: &[f64], q_values: &[f64]) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("lemma_4_2_tail_integral", 0.0);
    let mut worst_quad_err = 0.0f64;
    for &sigma in sigmas {
        for &q in q_values {
            let gamma = q / (2.0 * sigma * sigma);
            let integral = tail_integral(sigma, gamma)?;
            let bound = tail_bound(sigma, gamma)?;
            worst_quad_err = worst_quad_err.max((integral - tail_integral_exact(sigma, gamma)?).abs());
            report.record(format!("sigma={sigma} gamma={gamma}"), (bound - integral) / bound);
        }
    }
    report.metric("bound_sigma1_gamma0.25", tail_bound(1.0, 0.25)?);
    report.metric("integral_sigma1_gamma0.25", tail_integral(1.0, 0.25)?);
    report.metric("max_abs_quadrature_vs_closed_form", worst_quad_err);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_closed_form() {
        for (s, g) in [(1.0, 0.25), (2.0, 0.1), (0.5, 1.8), (3.0, 0.05), (1.0, 1e-6)] {
            let i = tail_integral(s, g).unwrap();
            let e = tail_integral_exact(s, g).unwrap();
            assert!((i - e).abs() < 1e-9 * e.max(1e-3), "{s} {g}: {i} vs {e}");
            assert!(i <= tail_bound(s, g).unwrap());
        }
    }

    #[test]
    fn bound_values() {
        assert!((tail_bound(1.0, 0.25).unwrap() - 0.25 / 0.5f64.sqrt()).abs() < 1e-15);
        assert!((tail_bound(2.0, 0.1).unwrap() - 0.4 / 0.2f64.sqrt()).abs() < 1e-14);
        assert!(tail_bound(1.0, 0.5).is_err());
        assert!(tail_bound(1.0, 1e-6).unwrap() < 2e-6);
    }

    #[test]
    fn mills_series_matches_erfc() {
        let z: f64 = 26.0;
        let direct = (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
        let z2 = z * z;
        let series = -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln();
        assert!((direct - series).abs() < 1e-6 * direct.abs());
        assert!(log_upper_tail(40.0).is_finite());
    }
}
