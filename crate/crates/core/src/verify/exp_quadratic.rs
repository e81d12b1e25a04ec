use super::LemmaReport;
use crate::error::{Error, Result};

/// e^{0.9t} − t² − 1.
pub fn exp_quadratic_margin(t: f64) -> f64 {
    (0.9 * t).exp() - t * t - 1.0
}

/// Checks t² + 1 ≤ e^{0.9t} on {0, step, …, t_max}.
pub fn check_exp_quadratic(t_max: f64, step: f64) -> Result<LemmaReport> {
    if !(t_max > 0.0 && step > 0.0) {
        return Err(Error::InvalidArgument(format!("need t_max > 0 and step > 0, got {t_max}, {step}")));
    }
    let mut report = LemmaReport::new("lemma_4_3_exp_quadratic", 0.0);
    let n = (t_max / step).round() as usize;
    let mut reverse_holds = 0usize;
    for i in 0..=n {
        let t = i as f64 * step;
        let m = exp_quadratic_margin(t);
        // Relative to the larger side, so e^{90} does not swamp the scale.
        report.record(format!("t={t}"), m / (0.9 * t).exp());
        reverse_holds += usize::from(m <= 0.0);
    }
    let t_star = 180.0 / 119.0;
    report.metric("t_star", t_star);
    report.metric("exp_at_t_star", (0.9 * t_star).exp());
    report.metric("quadratic_at_t_star", t_star * t_star + 1.0);
    report.metric("margin_at_t_star", exp_quadratic_margin(t_star));
    report.metric("points_where_reverse_direction_holds", reverse_holds as f64);
    report.notes.push("checked in the direction t^2 + 1 <= e^{0.9t}; the reverse direction holds only at t = 0".into());
    Ok(report.finish())
}
