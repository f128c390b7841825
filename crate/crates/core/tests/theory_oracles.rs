//! Theory calculators against exact rational evaluation.

use momsync_core::momentum::HyperParams;
use momsync_core::theory::{
    bound_decentralized, bound_polyak, comm_rounds, decentralized_gamma_max, gate_decentralized,
    gate_nesterov, gate_polyak, interval_bound, max_interval, nesterov_gamma_max, polyak_gamma_max,
    rate_gamma, reduced_comm_min_horizon, BoundInputs, CommRegime, RestartedVariant,
};
use momsync_core::Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(r: &BigRational) -> f64 {
    // Enough precision for a 1e-12 relative comparison.
    let scale = BigInt::from(10u64).pow(30);
    let scaled = (r * BigRational::from_integer(scale.clone()))
        .round()
        .to_integer();
    scaled.to_string().parse::<f64>().unwrap() / 1e30
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

/// Largest integer `k` with `k^p <= value`.
fn floor_root(value: &BigRational, p: u32) -> u64 {
    let mut k: u64 = 0;
    while BigRational::from_integer(BigInt::from(k + 1).pow(p)) <= *value {
        k += 1;
    }
    k
}

/// `⌊(1−β)/(6L) · √T / N^{3/2}⌋` via `v² = (1−β)² T / (36 L² N³)`, or
/// `⌊(1−β)/(6L) · T^{1/4} / N^{3/4}⌋` via `v⁴ = (1−β)⁴ T / (6⁴ L⁴ N³)`.
fn oracle_max_interval(
    n: u64,
    t: u64,
    l: &BigRational,
    beta: &BigRational,
    kappa_zero: bool,
) -> u64 {
    let one = q(1, 1);
    let omb = &one - beta;
    let n3 = BigRational::from_integer(BigInt::from(n).pow(3));
    let t = BigRational::from_integer(BigInt::from(t));
    if kappa_zero {
        let v2 = &omb * &omb * t / (q(36, 1) * l * l * n3);
        floor_root(&v2, 2)
    } else {
        let omb4 = &omb * &omb * &omb * &omb;
        let l4 = l * l * l * l;
        let v4 = omb4 * t / (q(1296, 1) * l4 * n3);
        floor_root(&v4, 4)
    }
}

fn hp(gamma: f64, beta: f64, interval: u64, horizon: u64) -> HyperParams {
    HyperParams::new(gamma, beta, interval, horizon).unwrap()
}

#[test]
fn gamma_gates_match_rational_values() {
    // β = 9/10, L = 1: (1/10)² / (19/10) = 1/190 and (1/100) / (1729/1000) = 10/1729.
    assert!(close(polyak_gamma_max(0.9, 1.0), to_f64(&q(1, 190))));
    assert!(close(nesterov_gamma_max(0.9, 1.0), to_f64(&q(10, 1729))));
    assert!((polyak_gamma_max(0.9, 1.0) - 5.263e-3).abs() < 1e-6);
    assert!((nesterov_gamma_max(0.9, 1.0) - 5.784e-3).abs() < 1e-6);
    // ρ = 1/4: (1/100)(1/4)/6 = 1/2400 against (1/10)(1/2)/4 = 1/80.
    assert!(close(
        decentralized_gamma_max(0.9, 1.0, 0.25),
        to_f64(&q(1, 2400))
    ));
    assert!((decentralized_gamma_max(0.9, 1.0, 0.25) - 4.167e-4).abs() < 1e-7);
    // ρ = 0, β = 0: min{1/(6L), 1/(4L)}.
    assert!(close(
        decentralized_gamma_max(0.0, 2.0, 0.0),
        to_f64(&q(1, 12))
    ));
}

#[test]
fn interval_gate_example() {
    // γ = 5e-3, β = 0.9, L = 1: 0.1 / 0.03 = 10/3.
    assert!(close(interval_bound(0.9, 1.0, 5e-3), to_f64(&q(10, 3))));
    assert!(gate_polyak(&hp(5e-3, 0.9, 3, 100), 1.0).ok());
    let r = gate_polyak(&hp(5e-3, 0.9, 4, 100), 1.0);
    assert_eq!(
        r.violations(),
        vec!["interval exceeds (1-beta)/(6 L gamma)".to_string()]
    );
}

#[test]
fn beta_zero_gates_agree() {
    for gamma in [0.01, 0.3, 0.9, 1.5] {
        for interval in [1, 2, 50] {
            let h = hp(gamma, 0.0, interval, 10);
            let p = gate_polyak(&h, 1.0);
            let n = gate_nesterov(&h, 1.0);
            assert_eq!(p.ok(), n.ok());
            for (a, b) in p.checks.iter().zip(&n.checks) {
                assert_eq!((a.value, a.threshold, a.ok), (b.value, b.threshold, b.ok));
            }
        }
    }
}

#[test]
fn decentralized_gate_vanishes_with_poor_mixing() {
    let mut previous = f64::INFINITY;
    for rho in [0.0, 0.5, 0.9, 0.99, 0.9999, 1.0] {
        let g = decentralized_gamma_max(0.5, 1.0, rho);
        assert!(g <= previous);
        previous = g;
    }
    assert_eq!(previous, 0.0);
    assert!(!gate_decentralized(&hp(1e-12, 0.5, 1, 10), 1.0, 1.0).ok());
}

#[test]
fn max_interval_examples() {
    assert_eq!(max_interval(4, 1_000_000, 1.0, 0.0, true).unwrap(), 20);
    assert_eq!(max_interval(4, 1_000_000, 1.0, 0.0, false).unwrap(), 1);
    assert_eq!(
        oracle_max_interval(4, 1_000_000, &q(1, 1), &q(0, 1), true),
        20
    );
    assert_eq!(
        oracle_max_interval(4, 1_000_000, &q(1, 1), &q(0, 1), false),
        1
    );
    // N = 1: at least √T / 6.
    for t in [36u64, 100, 10_000, 1_000_000] {
        let i = max_interval(1, t, 1.0, 0.0, true).unwrap();
        assert!(i as f64 >= (t as f64).sqrt() / 6.0 - 1.0);
        assert_eq!(i, oracle_max_interval(1, t, &q(1, 1), &q(0, 1), true));
    }
    // Exact integer value: √36 / 6 = 1.
    assert_eq!(max_interval(1, 36, 1.0, 0.0, true).unwrap(), 1);
    assert!(matches!(
        max_interval(1, 35, 1.0, 0.0, true),
        Err(Error::Threshold(_))
    ));
}

#[test]
fn comm_rounds_examples() {
    let r = comm_rounds(4, 1_000_000, CommRegime::KappaZero, 1.0, 0.0).unwrap();
    assert_eq!((r.interval, r.count), (20, 49_999));
    assert_eq!(r.order, "O(N^{3/2} T^{1/2})");
    let r = comm_rounds(4, 1_000_000, CommRegime::KappaNonzero, 1.0, 0.0).unwrap();
    assert_eq!((r.interval, r.count), (1, 999_999));
    assert_eq!(r.order, "O(N^{3/4} T^{3/4})");
    for regime in [CommRegime::EveryStep, CommRegime::Decentralized] {
        assert_eq!(comm_rounds(4, 1_000, regime, 1.0, 0.0).unwrap().count, 999);
    }
}

#[test]
fn every_step_rate_substitution() {
    // β = 0, γ = √(N/T), I = 1, κ = 0:
    // 2(f₀−f*)/√(NT) + Lσ²/√(NT) + 4L²σ²N/T.
    let (n, t, l, sigma, gap) = (4usize, 10_000u64, 0.5, 1.5, 3.0);
    let gamma = rate_gamma(n, t);
    let inputs = BoundInputs {
        l,
        sigma,
        kappa: 0.0,
        num_workers: n,
        f0_minus_fstar: gap,
    };
    let r = bound_polyak(&hp(gamma, 0.0, 1, t), &inputs, RestartedVariant::Polyak).unwrap();
    let nt = ((n as u64 * t) as f64).sqrt();
    let expected = [
        2.0 * gap / nt,
        l * sigma * sigma / nt,
        4.0 * l * l * sigma * sigma * n as f64 / t as f64,
        0.0,
    ];
    for (a, b) in r.term_breakdown.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
    }
    assert!(close(r.bound_value, expected.iter().sum()));
}

#[test]
fn decentralized_bound_at_zero_rho() {
    let inputs = BoundInputs {
        l: 1.0,
        sigma: 1.0,
        kappa: 0.5,
        num_workers: 4,
        f0_minus_fstar: 1.0,
    };
    let h = hp(1e-3, 0.5, 1, 10_000);
    let d = bound_decentralized(&h, &inputs, 0.0).unwrap();
    let p = bound_polyak(&h, &inputs, RestartedVariant::Polyak).unwrap();
    assert_eq!(d.term_breakdown[..2], p.term_breakdown[..2]);
    assert!(close(d.term_breakdown[2], p.term_breakdown[2]));
    assert!(close(d.term_breakdown[3] * 9.0 / 4.0, p.term_breakdown[3]));
}

proptest! {
    #[test]
    fn max_interval_matches_rational_oracle(
        n in 1u64..32,
        t in 1u64..5_000_000,
        beta_pct in 0i64..95,
        l_tenths in 1i64..40,
        kappa_zero in any::<bool>(),
    ) {
        let beta = beta_pct as f64 / 100.0;
        let l = l_tenths as f64 / 10.0;
        let got = max_interval(n as usize, t, l, beta, kappa_zero);
        let threshold = reduced_comm_min_horizon(n as usize, l, beta);
        let oracle = oracle_max_interval(n, t, &q(l_tenths, 10), &q(beta_pct, 100), kappa_zero);
        if (t as f64) < threshold || oracle == 0 {
            prop_assert!(got.is_err());
        } else {
            prop_assert_eq!(got.unwrap(), oracle);
        }
    }

    #[test]
    fn comm_count_is_floor_of_iterations(n in 1usize..16, t in 2u64..2_000_000, kappa_zero in any::<bool>()) {
        let regime = if kappa_zero { CommRegime::KappaZero } else { CommRegime::KappaNonzero };
        if let Ok(r) = comm_rounds(n, t, regime, 1.0, 0.0) {
            prop_assert_eq!(r.count, (t - 1) / r.interval);
            prop_assert_eq!(r.interval, max_interval(n, t, 1.0, 0.0, kappa_zero).unwrap());
        }
    }

    #[test]
    fn gamma_gates_nonincreasing(
        b1 in 0.0f64..0.999, b2 in 0.0f64..0.999,
        l1 in 0.01f64..100.0, l2 in 0.01f64..100.0,
        r1 in 0.0f64..1.0, r2 in 0.0f64..1.0,
    ) {
        let (blo, bhi) = (b1.min(b2), b1.max(b2));
        let (llo, lhi) = (l1.min(l2), l1.max(l2));
        let (rlo, rhi) = (r1.min(r2), r1.max(r2));
        prop_assert!(polyak_gamma_max(bhi, l1) <= polyak_gamma_max(blo, l1));
        prop_assert!(nesterov_gamma_max(bhi, l1) <= nesterov_gamma_max(blo, l1));
        prop_assert!(decentralized_gamma_max(bhi, l1, r1) <= decentralized_gamma_max(blo, l1, r1));
        prop_assert!(polyak_gamma_max(b1, lhi) <= polyak_gamma_max(b1, llo));
        prop_assert!(nesterov_gamma_max(b1, lhi) <= nesterov_gamma_max(b1, llo));
        prop_assert!(decentralized_gamma_max(b1, lhi, r1) <= decentralized_gamma_max(b1, llo, r1));
        prop_assert!(decentralized_gamma_max(b1, l1, rhi) <= decentralized_gamma_max(b1, l1, rlo));
    }

    #[test]
    fn bound_equals_sum_of_nonnegative_terms(
        gamma in 1e-6f64..1e-2, beta in 0.0f64..0.5, interval in 1u64..5, horizon in 1u64..1_000_000,
        sigma in 0.0f64..3.0, kappa in 0.0f64..3.0, n in 1usize..64, gap in 0.0f64..10.0,
    ) {
        let inputs = BoundInputs { l: 1.0, sigma, kappa, num_workers: n, f0_minus_fstar: gap };
        let h = hp(gamma, beta, interval, horizon);
        let r = bound_polyak(&h, &inputs, RestartedVariant::Polyak).unwrap();
        prop_assert!(r.gate_ok);
        prop_assert!(r.term_breakdown.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(r.bound_value, r.term_breakdown.iter().sum::<f64>());
        prop_assert_eq!(r.comm_rounds_formula, (horizon - 1) / interval);
    }

    /// At `γ = √(N/T)` and the maximal interval, every term is at most a
    /// constant (free of N and T) over `√(NT)`.
    #[test]
    fn rate_terms_within_envelope(
        n in 1usize..16,
        t_exp in 3.0f64..8.0,
        beta in 0.0f64..0.6,
        l in 0.2f64..2.0,
        sigma in 0.1f64..3.0,
        kappa in 0.1f64..3.0,
        gap in 0.1f64..10.0,
        kappa_zero in any::<bool>(),
    ) {
        let t = 10f64.powf(t_exp) as u64;
        // The κ ≠ 0 envelope of the σ-drift term needs T ≥ N³.
        prop_assume!(kappa_zero || t >= (n * n * n) as u64);
        let interval = match max_interval(n, t, l, beta, kappa_zero) {
            Ok(i) => i,
            Err(_) => return Ok(()),
        };
        let kappa = if kappa_zero { 0.0 } else { kappa };
        let inputs = BoundInputs { l, sigma, kappa, num_workers: n, f0_minus_fstar: gap };
        let h = hp(rate_gamma(n, t), beta, interval, t);
        let r = bound_polyak(&h, &inputs, RestartedVariant::Polyak).unwrap();
        let root = ((n as f64) * (t as f64)).sqrt();
        let omb = 1.0 - beta;
        let envelope = [
            2.0 * omb * gap,
            l * sigma * sigma / (omb * omb),
            2.0 * l * sigma * sigma / (3.0 * omb),
            kappa * kappa / 4.0,
        ];
        for (term, c) in r.term_breakdown.iter().zip(envelope) {
            prop_assert!(term * root <= c * (1.0 + 1e-9), "{} > {}", term * root, c);
        }
    }
}
