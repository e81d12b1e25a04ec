//! Numerical certification of the inequalities the scaling argument rests
//! on. Each check returns a [`LemmaReport`]; margins are positive when the
//! inequality holds with room to spare.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

mod brownian;
mod exp_quadratic;
mod jensen;
mod modes;
mod tail;
mod variance;

pub use brownian::{check_brownian_decomposition, decomposition_sides, DecompositionSides};
pub use exp_quadratic::{check_exp_quadratic, exp_quadratic_margin};
pub use jensen::{check_jensen_chain, chain_margins, ChainMargins};
pub use modes::{check_chapman_kolmogorov, check_mode_variances, check_parseval, ParsevalCase};
pub use tail::{check_tail_integral_bound, tail_bound, tail_integral, tail_integral_exact};
pub use variance::{check_variance_lower_bound, pair_variance, variance_oracle, DEFAULT_PAIR_MODES};

/// One grid point or sample, kept when it is among the tightest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub label: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub n_cases: usize,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub details_path: Option<String>,
    /// Named scalar diagnostics, sorted by key.
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Tightest cases, smallest margin first.
    pub worst_cases: Vec<CaseRecord>,
}

pub(crate) const WORST_KEPT: usize = 10;

impl LemmaReport {
    pub(crate) fn new(lemma_id: &str, tolerance: f64) -> Self {
        Self {
            lemma_id: lemma_id.to_string(),
            n_cases: 0,
            worst_margin: f64::INFINITY,
            tolerance,
            pass: true,
            details_path: None,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            worst_cases: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, label: impl Into<String>, margin: f64) {
        self.n_cases += 1;
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        self.worst_margin = self.worst_margin.min(margin);
        let worst_kept = self.worst_cases.last().map_or(f64::INFINITY, |c| c.margin);
        if self.worst_cases.len() < WORST_KEPT || margin < worst_kept {
            let pos = self.worst_cases.partition_point(|c| c.margin <= margin);
            self.worst_cases.insert(pos, CaseRecord { label: label.into(), margin });
            self.worst_cases.truncate(WORST_KEPT);
        }
    }

    pub(crate) fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub(crate) fn finish(mut self) -> Self {
        if self.n_cases == 0 {
            self.worst_margin = 0.0;
        }
        self.pass = self.worst_margin >= -self.tolerance;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lemma_id: String,
    pub n_cases: usize,
    pub worst_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub all_pass: bool,
    pub lemmas: Vec<SummaryRow>,
}

pub fn summarize(reports: &[LemmaReport]) -> VerifySummary {
    VerifySummary {
        all_pass: reports.iter().all(|r| r.pass),
        lemmas: reports
            .iter()
            .map(|r| SummaryRow { lemma_id: r.lemma_id.clone(), n_cases: r.n_cases, worst_margin: r.worst_margin, pass: r.pass })
            .collect(),
    }
}
