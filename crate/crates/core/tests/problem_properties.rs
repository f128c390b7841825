//! Certified constants and gradient oracles checked against sampling and
//! finite differences.

use momsync_core::numerics::{dist_sq, norm, symmetric_eigenvalues, Mat, RngStream};
use momsync_core::problems::{
    make_quadratic, make_rational_nonconvex, GradientTarget, ProblemSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn problems() -> Vec<ProblemSpec> {
    vec![
        make_quadratic(5, 4, 2.0, &[1.0, 0.7, 0.4, 0.2, 0.05], 0.5, 7).unwrap(),
        make_quadratic(3, 1, 1.0, &[2.0, 1.0, 0.0], 1.0, 8).unwrap(),
        make_rational_nonconvex(4, 6, 3.0, 0.3, 9).unwrap(),
        make_rational_nonconvex(1, 3, 1.0, 0.0, 10).unwrap(),
    ]
}

fn point_in_box(p: &ProblemSpec, stream: &mut RngStream) -> Vec<f64> {
    p.sampling_box()
        .iter()
        .map(|(lo, hi)| lo + (hi - lo) * stream.next_f64())
        .collect()
}

#[test]
fn worker_gradients_are_lipschitz() {
    let mut s = RngStream::new(1, 0);
    for p in problems() {
        let l = p.certified_l();
        for _ in 0..500 {
            let x = point_in_box(&p, &mut s);
            let y = point_in_box(&p, &mut s);
            for i in 0..p.num_workers() {
                let gx = p.mean_gradient(GradientTarget::Worker(i), &x).unwrap();
                let gy = p.mean_gradient(GradientTarget::Worker(i), &y).unwrap();
                let lhs = dist_sq(&gx, &gy).sqrt();
                assert!(lhs <= l * dist_sq(&x, &y).sqrt() + 1e-12);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut s = RngStream::new(2, 0);
    let h = 1e-6;
    for p in problems() {
        for _ in 0..50 {
            let x = point_in_box(&p, &mut s);
            let g = p.mean_gradient(GradientTarget::All, &x).unwrap();
            for k in 0..p.dimension() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd =
                    (p.objective_value(&xp).unwrap() - p.objective_value(&xm).unwrap()) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-6 * g[k].abs().max(1.0),
                    "{fd} vs {}",
                    g[k]
                );
            }
        }
    }
}

#[test]
fn certified_kappa_and_fstar_hold_on_samples() {
    let mut s = RngStream::new(3, 0);
    for p in problems() {
        let kappa_sq = p.certified_kappa() * p.certified_kappa();
        for _ in 0..2000 {
            let x = point_in_box(&p, &mut s);
            assert!(p.deviation_norm(&x).unwrap() <= kappa_sq + 1e-12);
            assert!(p.objective_value(&x).unwrap() >= p.f_star());
        }
        assert!(p.objective_value(p.minimizer()).unwrap() >= p.f_star());
        assert!(p.objective_value(p.minimizer()).unwrap() - p.f_star() < 1e-6);
    }
}

#[test]
fn heterogeneity_inequality_on_random_tuples() {
    let mut s = RngStream::new(4, 0);
    for p in problems() {
        for _ in 0..1000 {
            let points: Vec<Vec<f64>> = (0..p.num_workers())
                .map(|_| point_in_box(&p, &mut s))
                .collect();
            let (lhs, rhs) = p.heterogeneity_sides(&points).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }
}

#[test]
fn stochastic_gradient_is_unbiased_with_variance_sigma_sq() {
    let p = make_quadratic(6, 2, 1.0, &[1.0, 0.9, 0.5, 0.5, 0.3, 0.1], 1.5, 11).unwrap();
    let x = vec![0.3; 6];
    let exact = p.mean_gradient(GradientTarget::Worker(1), &x).unwrap();
    let mut stream = RngStream::new(99, 1);
    let trials = 100_000;
    let mut sum = [0.0; 6];
    let mut sq = 0.0;
    for t in 0..trials {
        let g = p.sample_gradient(1, &x, t, &mut stream).unwrap().g;
        for (a, b) in sum.iter_mut().zip(&g) {
            *a += b;
        }
        sq += dist_sq(&g, &exact);
    }
    let mean: Vec<f64> = sum.iter().map(|v| v / trials as f64).collect();
    // Standard error of each coordinate mean is σ/√(m·trials) ≈ 1.9e-3.
    assert!(dist_sq(&mean, &exact).sqrt() < 0.02);
    let var = sq / trials as f64;
    assert!((var / 2.25 - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn sampling_is_pure_given_the_stream() {
    let p = make_rational_nonconvex(3, 2, 1.0, 0.7, 12).unwrap();
    let x = vec![0.1, -0.4, 2.0];
    let a = p
        .sample_gradient(0, &x, 5, &mut RngStream::at(3, 0, 10))
        .unwrap();
    let b = p
        .sample_gradient(0, &x, 5, &mut RngStream::at(3, 0, 10))
        .unwrap();
    assert_eq!(a, b);
    let c = p
        .sample_gradient(0, &x, 5, &mut RngStream::at(3, 0, 11))
        .unwrap();
    assert_ne!(a.g, c.g);
}

fn random_symmetric(n: usize, seed: u64) -> Mat {
    let mut s = RngStream::new(seed, 0);
    let mut m = Mat::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = 2.0 * s.next_f64() - 1.0;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[test]
fn eigenvalues_agree_with_nalgebra() {
    for (n, seed) in [(1, 1), (2, 2), (5, 3), (9, 4), (16, 5), (24, 6)] {
        let m = random_symmetric(n, seed);
        let ours = symmetric_eigenvalues(&m).unwrap();
        let dm = DMatrix::from_row_slice(n, n, m.as_slice());
        let mut theirs: Vec<f64> = dm.symmetric_eigenvalues().iter().cloned().collect();
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10, "n = {n}: {a} vs {b}");
        }
        let trace: f64 = (0..n).map(|i| m[(i, i)]).sum();
        assert!((ours.iter().sum::<f64>() - trace).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn quadratic_constants_match_definitions(
        seed in 0u64..1000,
        n in 1usize..6,
        spread in 0.0f64..3.0,
    ) {
        let spectrum = [1.0, 0.6, 0.25];
        let p = make_quadratic(3, n, spread, &spectrum, 0.0, seed).unwrap();
        let a = p.curvature().unwrap();
        let c_bar: Vec<f64> = (0..3)
            .map(|k| p.centers().iter().map(|c| c[k]).sum::<f64>() / n as f64)
            .collect();
        prop_assert!(dist_sq(&c_bar, p.minimizer()).sqrt() < 1e-12);
        let mut kappa_sq = 0.0;
        let mut f_star = 0.0;
        for c in p.centers() {
            let d: Vec<f64> = c.iter().zip(&c_bar).map(|(a, b)| a - b).collect();
            let ad = a.mat_vec(&d);
            kappa_sq += ad.iter().map(|v| v * v).sum::<f64>();
            f_star += 0.5 * d.iter().zip(&ad).map(|(x, y)| x * y).sum::<f64>();
        }
        prop_assert!((p.certified_kappa() - (kappa_sq / n as f64).sqrt()).abs() < 1e-12);
        prop_assert!((p.f_star() - f_star / n as f64).abs() < 1e-12);
        prop_assert_eq!(p.certified_l(), 1.0);
        for c in p.centers() {
            prop_assert!(norm(c) <= spread + 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_exact(seed in 0u64..1000, nonconvex in any::<bool>()) {
        let p = if nonconvex {
            make_rational_nonconvex(2, 3, 1.0, 0.5, seed).unwrap()
        } else {
            make_quadratic(3, 3, 1.0, &[1.0, 0.5, 0.1], 0.5, seed).unwrap()
        };
        let back = ProblemSpec::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}
