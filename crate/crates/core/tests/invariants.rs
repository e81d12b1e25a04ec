use std::f64::consts::PI;

use num_rational::Ratio;
use proptest::prelude::*;
use wavepolymer::experiments::{fit_exponent, heuristic_exponent};
use wavepolymer::field_radius::{radius, read_field, write_field, FieldGrid};
use wavepolymer::gibbs::{acceptance_probability, estimate_weighted, log_sum_exp, FieldPrior};
use wavepolymer::girsanov::{log_density, tilt_log_zeta};
use wavepolymer::localtime::{histogram_on, self_intersection, BinGrid, BinRule};
use wavepolymer::mode_dynamics::{build_transition, stationary_variance};
use wavepolymer::spectrum::{attach_spectrum, build_eigenbasis, classify, DomainConfig, ModeSpec, Regime, SpectrumProfile};
use wavepolymer::verify::{chain_margins, exp_quadratic_margin, tail_bound, tail_integral};

fn config(length: f64, n_modes: usize, n_x: usize, n_t: usize, seed: u64) -> DomainConfig {
    DomainConfig::new(length, 1.0, n_modes, n_x, n_t, seed).unwrap()
}

fn prior(cfg: DomainConfig) -> FieldPrior {
    let mut modes = build_eigenbasis(&cfg).unwrap();
    attach_spectrum(&mut modes, 1.0, 2.0, &SpectrumProfile::PowerLaw, None).unwrap();
    FieldPrior::new(cfg, &modes, false).unwrap()
}

fn smooth_field(cfg: DomainConfig, coeffs: &[f64]) -> FieldGrid {
    let l = cfg.length;
    FieldGrid::from_fn(cfg, |t, x| {
        coeffs.iter().enumerate().map(|(i, c)| c * (1.0 + t * i as f64).cos() * ((i + 1) as f64 * PI * x / l).cos()).sum()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regime_follows_critical_length(length in 0.1f64..60.0, n in 1usize..6) {
        let expected = if length > 2.0 * PI * n as f64 { Regime::Overdamped } else { Regime::Underdamped };
        prop_assert_eq!(classify(length, n), expected);
    }

    #[test]
    fn stationary_variance_is_gamma_sq_over_two_k_sq(length in 0.2f64..40.0, n in 1usize..8, gamma in 0.05f64..3.0) {
        let m = ModeSpec::new(length, n, gamma).unwrap();
        let (var_a, var_v, cov) = stationary_variance(&m).unwrap();
        let k = n as f64 * PI / length;
        prop_assert!((var_a - gamma * gamma / (2.0 * k * k)).abs() <= 1e-9 * var_a);
        prop_assert!((var_v - gamma * gamma / 2.0).abs() <= 1e-9 * var_v);
        prop_assert!(cov.abs() <= 1e-9 * (var_a * var_v).sqrt());
    }

    #[test]
    fn chapman_kolmogorov(length in 0.3f64..40.0, n in 1usize..5, dt in 1e-3f64..0.5) {
        let m = ModeSpec::new(length, n, 1.0).unwrap();
        let one = build_transition(&m, dt).unwrap();
        let two = build_transition(&m, 2.0 * dt).unwrap();
        let (mean, cov) = one.compose(&one);
        prop_assert!((mean - two.mean_map).norm() <= 1e-10 * two.mean_map.norm());
        prop_assert!((cov - two.cov).norm() <= 1e-10 * two.cov.norm());
    }

    #[test]
    fn power_law_spectrum_respects_cap(c in 0.1f64..5.0, alpha in 1.01f64..4.0, n_modes in 1usize..40) {
        let cfg = DomainConfig::new(1.0, 1.0, n_modes, 4 * n_modes.max(2), 4, 0).unwrap();
        let mut modes = build_eigenbasis(&cfg).unwrap();
        let s = attach_spectrum(&mut modes, c, alpha, &SpectrumProfile::PowerLaw, None).unwrap();
        for n in 1..n_modes {
            prop_assert!(s.gammas[n].powi(2) <= c / (n as f64).powf(alpha) * (1.0 + 1e-12));
            prop_assert!(n == 1 || s.gammas[n] <= s.gammas[n - 1]);
        }
        prop_assert!(s.tail_bound().unwrap() > 0.0);
    }

    #[test]
    fn radius_is_shift_invariant_and_homogeneous(coeffs in prop::collection::vec(-2.0f64..2.0, 1..5), shift in -5.0f64..5.0, scale in -3.0f64..3.0) {
        let cfg = config(1.3, 4, 32, 12, 0);
        let f = smooth_field(cfg, &coeffs);
        let r = radius(&f).r;
        let shifted = FieldGrid::from_values(f.values.iter().map(|u| u + shift).collect(), cfg).unwrap();
        prop_assert!((radius(&shifted).r - r).abs() <= 1e-9 * (1.0 + shift.abs()));
        prop_assert!((radius(&f.scaled(scale)).r - scale.abs() * r).abs() <= 1e-12 * (1.0 + r));
        prop_assert!((radius(&f.time_reversed()).r - r).abs() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn local_time_mass_is_interval_length(values in prop::collection::vec(-10.0f64..10.0, 8..64), n_bins in 1usize..300) {
        let dx = 0.37;
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let grid = BinGrid::covering(lo, hi, BinRule::Auto { n_bins }).unwrap();
        let est = histogram_on(&values, dx, &grid, 0);
        prop_assert!((est.total_mass() - dx * values.len() as f64).abs() <= 1e-9);
        // Cauchy-Schwarz: ∫l² ≥ (∫l)²/|support|.
        let support = grid.width * est.masses.iter().filter(|m| **m > 0.0).count() as f64;
        prop_assert!(est.l2_norm_sq() >= est.total_mass().powi(2) / support * (1.0 - 1e-12));
    }

    #[test]
    fn phi_is_nonnegative_and_shift_invariant(coeffs in prop::collection::vec(-2.0f64..2.0, 1..5), shift in prop::sample::select(vec![-4.0, -0.5, 0.25, 2.0, 8.0])) {
        let cfg = config(1.0, 4, 32, 10, 0);
        let f = smooth_field(cfg, &coeffs);
        let rule = BinRule::Fixed { width: 0.125 };
        let phi = self_intersection(&f, rule).unwrap().phi;
        // Shifting by a multiple of the bin width maps bins onto bins.
        let shifted = FieldGrid::from_values(f.values.iter().map(|u| u + shift).collect(), cfg).unwrap();
        prop_assert!(phi > 0.0);
        prop_assert!((self_intersection(&shifted, rule).unwrap().phi - phi).abs() <= 1e-9 * phi);
    }

    #[test]
    fn field_dump_round_trips(coeffs in prop::collection::vec(-2.0f64..2.0, 1..4), n_t in 1usize..20) {
        let f = smooth_field(config(2.0, 2, 16, n_t, 0), &coeffs);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), 32 + 8 * f.values.len());
        let back = read_field(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values, f.values);
        prop_assert_eq!((back.cfg.n_t, back.cfg.n_x, back.cfg.length, back.cfg.horizon), (n_t, 16, 2.0, 1.0));
    }

    #[test]
    fn log_sum_exp_shift(xs in prop::collection::vec(-50.0f64..50.0, 1..30), c in -500.0f64..500.0) {
        let base = log_sum_exp(xs.iter().copied());
        let shifted = log_sum_exp(xs.iter().map(|x| x + c));
        prop_assert!((shifted - base - c).abs() <= 1e-9 * (1.0 + c.abs()));
        prop_assert!(base >= xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn weighted_estimate_is_shift_free(values in prop::collection::vec(0.0f64..5.0, 2..40), seed_w in prop::collection::vec(-20.0f64..0.0, 40), c in -300.0f64..300.0) {
        let lw: Vec<f64> = seed_w[..values.len()].to_vec();
        let a = estimate_weighted(&values, &lw).unwrap();
        let b = estimate_weighted(&values, &lw.iter().map(|w| w + c).collect::<Vec<_>>()).unwrap();
        prop_assert!((a.q_mean - b.q_mean).abs() <= 1e-9 * (1.0 + a.q_mean.abs()));
        prop_assert!((a.ess - b.ess).abs() <= 1e-9 * a.ess);
        prop_assert!(a.ess >= 1.0 - 1e-12 && a.ess <= values.len() as f64 + 1e-9);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a.q_mean >= lo - 1e-12 && a.q_mean <= hi + 1e-12);
    }

    #[test]
    fn metropolis_acceptance_in_unit_interval(beta in 0.0f64..10.0, cur in 0.0f64..100.0, prop_phi in 0.0f64..100.0) {
        let p = acceptance_probability(beta, cur, prop_phi);
        prop_assert!((0.0..=1.0).contains(&p));
        if prop_phi <= cur {
            prop_assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn girsanov_density_basics(a in -2.0f64..2.0, horizon in 0.1f64..10.0, gamma1 in 0.1f64..2.0, w in -5.0f64..5.0) {
        let zero = log_density(&[0.0, w], 0.0, horizon, gamma1).unwrap();
        prop_assert_eq!(zero, 0.0);
        let lz = tilt_log_zeta(a, horizon, gamma1).unwrap();
        prop_assert!(lz >= 0.0);
        prop_assert!((lz - tilt_log_zeta(-a, horizon, gamma1).unwrap()).abs() <= 1e-15 * (1.0 + lz));
    }

    #[test]
    fn exp_quadratic_direction(t in 0.0f64..100.0) {
        prop_assert!(exp_quadratic_margin(t) >= 0.0);
    }

    #[test]
    fn tail_integral_below_bound(sigma in 0.2f64..4.0, q in 0.01f64..0.95) {
        let gamma = q / (2.0 * sigma * sigma);
        prop_assert!(tail_integral(sigma, gamma).unwrap() <= tail_bound(sigma, gamma).unwrap());
    }

    #[test]
    fn exponent_balance_is_exact(p1 in -6i64..6, q1 in -6i64..6, p2 in -6i64..6, q2 in -6i64..6) {
        prop_assume!(q1 != q2);
        let r = |n| Ratio::from_integer(n);
        let e = heuristic_exponent(r(p1), r(q1), r(p2), r(q2)).unwrap();
        prop_assert_eq!(r(p1) + r(q1) * e, r(p2) + r(q2) * e);
    }

    #[test]
    fn fit_recovers_power_law(slope in -3.0f64..3.0, c in 0.1f64..10.0, n in 4usize..10) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| { let j = 0.3 * 1.7f64.powi(i as i32); (j, c * j.powf(slope)) }).collect();
        let f = fit_exponent(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() <= 1e-10);
        prop_assert!((f.intercept - c.ln()).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jensen_chain_holds_on_prior_draws(seed in 0u64..1_000_000, k in prop::sample::select(vec![0.3, 0.6, 1.0, 2.0])) {
        let p = prior(config(1.0, 8, 64, 20, seed));
        let d = p.sample(0).unwrap();
        if let Some(m) = chain_margins(&d.field, k, BinRule::default()).unwrap() {
            prop_assert!(m.holds(), "{:?}", m);
        }
    }

    #[test]
    fn sampling_is_reproducible(seed in 0u64..1_000_000, replica in 0u64..100) {
        let p = prior(config(1.5, 4, 16, 8, seed));
        let a = p.sample(replica).unwrap();
        let b = p.sample(replica).unwrap();
        prop_assert_eq!(a.field.values, b.field.values);
    }
}
