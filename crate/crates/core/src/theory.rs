//! Step-size gates, convergence bounds, synchronization-interval formulas and
//! communication counts for both algorithms.
//!
//! All quantities are evaluated in `f64` on the given inputs. Interval counts
//! are floored; the floor tolerates a relative rounding error of a few ulps so
//! that an expression whose exact value is an integer is not floored to the
//! integer below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentum::HyperParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    /// Condition text, e.g. `gamma <= (1-beta)^2/((1+beta)L)`.
    pub condition: String,
    pub value: f64,
    pub threshold: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub statement: String,
    pub checks: Vec<GateCheck>,
}

impl GateReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    /// Named description of every violated condition.
    pub fn violations(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.ok)
            .map(|c| c.condition.replacen(" <= ", " exceeds ", 1))
            .collect()
    }

    fn into_result(self) -> Result<GateReport> {
        if self.ok() {
            Ok(self)
        } else {
            Err(Error::Gate(self.violations().join("; ")))
        }
    }
}

fn check(condition: &str, value: f64, threshold: f64) -> GateCheck {
    GateCheck {
        condition: condition.to_string(),
        value,
        threshold,
        ok: value <= threshold,
    }
}

/// `⌊v⌋`, nudged by a few ulps so exact integers survive rounding.
pub fn guarded_floor(v: f64) -> f64 {
    (v + v.abs() * 8.0 * f64::EPSILON).floor()
}

pub fn polyak_gamma_max(beta: f64, l: f64) -> f64 {
    (1.0 - beta) * (1.0 - beta) / ((1.0 + beta) * l)
}

pub fn nesterov_gamma_max(beta: f64, l: f64) -> f64 {
    (1.0 - beta) * (1.0 - beta) / (l * (1.0 + beta * beta * beta))
}

/// `(1 − β) / (6Lγ)` before flooring.
pub fn interval_bound(beta: f64, l: f64, gamma: f64) -> f64 {
    (1.0 - beta) / (6.0 * l * gamma)
}

pub fn decentralized_gamma_max(beta: f64, l: f64, rho: f64) -> f64 {
    let gap = 1.0 - rho.sqrt();
    let a = (1.0 - beta) * (1.0 - beta) * gap * gap / (6.0 * l);
    let b = (1.0 - beta) * gap / (4.0 * l);
    a.min(b)
}

const POLYAK_GAMMA: &str = "gamma <= (1-beta)^2/((1+beta)L)";
const NESTEROV_GAMMA: &str = "gamma <= (1-beta)^2/(L(1+beta^3))";
const INTERVAL: &str = "interval <= (1-beta)/(6 L gamma)";
const DECENTRALIZED_GAMMA: &str =
    "gamma <= min{(1-beta)^2(1-sqrt(rho))^2/(6L), (1-beta)(1-sqrt(rho))/(4L)}";

pub fn gate_polyak(hp: &HyperParams, l: f64) -> GateReport {
    GateReport {
        statement: "parallel restarted, Polyak momentum".into(),
        checks: vec![
            check(POLYAK_GAMMA, hp.gamma, polyak_gamma_max(hp.beta, l)),
            check(
                INTERVAL,
                hp.interval as f64,
                interval_bound(hp.beta, l, hp.gamma),
            ),
        ],
    }
}

pub fn gate_nesterov(hp: &HyperParams, l: f64) -> GateReport {
    GateReport {
        statement: "parallel restarted, Nesterov momentum".into(),
        checks: vec![
            check(NESTEROV_GAMMA, hp.gamma, nesterov_gamma_max(hp.beta, l)),
            check(
                INTERVAL,
                hp.interval as f64,
                interval_bound(hp.beta, l, hp.gamma),
            ),
        ],
    }
}

pub fn gate_decentralized(hp: &HyperParams, l: f64, rho: f64) -> GateReport {
    GateReport {
        statement: "decentralized momentum".into(),
        checks: vec![check(
            DECENTRALIZED_GAMMA,
            hp.gamma,
            decentralized_gamma_max(hp.beta, l, rho),
        )],
    }
}

/// Problem constants that enter the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub l: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub num_workers: usize,
    /// `f(x̄⁽⁰⁾) − f*`.
    pub f0_minus_fstar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartedVariant {
    Polyak,
    Nesterov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gate: GateReport,
    pub gate_ok: bool,
    /// Right-hand side of the average squared-gradient-norm bound.
    pub bound_value: f64,
    /// `[initial gap, noise, local drift from σ, local drift from κ]`.
    pub term_breakdown: [f64; 4],
    pub comm_rounds_formula: u64,
}

fn report(gate: GateReport, terms: [f64; 4], comm: u64) -> BoundReport {
    BoundReport {
        gate_ok: gate.ok(),
        gate,
        bound_value: terms.iter().sum(),
        term_breakdown: terms,
        comm_rounds_formula: comm,
    }
}

/// Bound on `(1/T) Σ_{t<T} E‖∇f(x̄⁽ᵗ⁾)‖²` for parallel restarted momentum SGD.
///
/// Both variants share the same right-hand side; only the gate differs.
pub fn bound_polyak(
    hp: &HyperParams,
    inputs: &BoundInputs,
    variant: RestartedVariant,
) -> Result<BoundReport> {
    let gate = match variant {
        RestartedVariant::Polyak => gate_polyak(hp, inputs.l),
        RestartedVariant::Nesterov => gate_nesterov(hp, inputs.l),
    }
    .into_result()?;
    let BoundInputs {
        l,
        sigma,
        kappa,
        num_workers,
        f0_minus_fstar,
    } = *inputs;
    let (g, b, t, i) = (hp.gamma, hp.beta, hp.horizon as f64, hp.interval as f64);
    let omb2 = (1.0 - b) * (1.0 - b);
    let terms = [
        2.0 * (1.0 - b) / (g * t) * f0_minus_fstar,
        l * g / omb2 * sigma * sigma / num_workers as f64,
        4.0 * l * l * g * g * i * sigma * sigma / omb2,
        9.0 * l * l * g * g * i * i * kappa * kappa / omb2,
    ];
    Ok(report(gate, terms, (hp.horizon - 1) / hp.interval))
}

/// Bound for decentralized momentum SGD with a mixing matrix of gap `ρ`.
pub fn bound_decentralized(
    hp: &HyperParams,
    inputs: &BoundInputs,
    rho: f64,
) -> Result<BoundReport> {
    let gate = gate_decentralized(hp, inputs.l, rho).into_result()?;
    let BoundInputs {
        l,
        sigma,
        kappa,
        num_workers,
        f0_minus_fstar,
    } = *inputs;
    let (g, b, t) = (hp.gamma, hp.beta, hp.horizon as f64);
    let omb2 = (1.0 - b) * (1.0 - b);
    let gap = 1.0 - rho.sqrt();
    let terms = [
        2.0 * (1.0 - b) / (g * t) * f0_minus_fstar,
        l * g / omb2 * sigma * sigma / num_workers as f64,
        4.0 * l * l * g * g * sigma * sigma / (omb2 * (1.0 - rho)),
        4.0 * l * l * g * g * kappa * kappa / (omb2 * gap * gap),
    ];
    Ok(report(gate, terms, hp.horizon - 1))
}

/// `γ = √N / √T`.
pub fn rate_gamma(num_workers: usize, horizon: u64) -> f64 {
    (num_workers as f64).sqrt() / (horizon as f64).sqrt()
}

/// Horizon required for `γ = √(N/T)`, `I = 1`: `T ≥ 36 L² N / (1 − β)²`.
pub fn every_step_min_horizon(num_workers: usize, l: f64, beta: f64) -> f64 {
    36.0 * l * l * num_workers as f64 / ((1.0 - beta) * (1.0 - beta))
}

/// Horizon required with reduced communication: `T ≥ (1 + β)² L² N / (1 − β)⁴`.
pub fn reduced_comm_min_horizon(num_workers: usize, l: f64, beta: f64) -> f64 {
    let omb2 = (1.0 - beta) * (1.0 - beta);
    (1.0 + beta) * (1.0 + beta) * l * l * num_workers as f64 / (omb2 * omb2)
}

/// Horizon required for `γ = √(N/T)` with gossip averaging.
pub fn decentralized_min_horizon(num_workers: usize, l: f64, beta: f64, rho: f64) -> f64 {
    let n = num_workers as f64;
    let omb = 1.0 - beta;
    let gap = 1.0 - rho.sqrt();
    let a = 36.0 * n * l * l / (omb.powi(4) * gap.powi(4));
    let b = 32.0 * n * l * l / (omb * omb * gap * gap);
    a.max(b)
}

/// Largest synchronization interval keeping the `O(1/√(NT))` rate at `γ = √(N/T)`.
///
/// κ = 0: `⌊(1−β)/(6L) · √T / N^{3/2}⌋`; κ ≠ 0: `⌊(1−β)/(6L) · T^{1/4} / N^{3/4}⌋`.
pub fn max_interval(
    num_workers: usize,
    horizon: u64,
    l: f64,
    beta: f64,
    kappa_is_zero: bool,
) -> Result<u64> {
    let required = reduced_comm_min_horizon(num_workers, l, beta);
    if (horizon as f64) < required {
        return Err(Error::Threshold(format!(
            "T = {horizon} below (1+beta)^2 L^2 N/(1-beta)^4 = {required} for N = {num_workers}"
        )));
    }
    let n = num_workers as f64;
    let t = horizon as f64;
    let raw = if kappa_is_zero {
        (1.0 - beta) * t.sqrt() / (6.0 * l * n * n.sqrt())
    } else {
        let n_quarter = n.sqrt().sqrt();
        (1.0 - beta) * t.sqrt().sqrt() / (6.0 * l * n_quarter * n_quarter * n_quarter)
    };
    let interval = guarded_floor(raw);
    if interval < 1.0 {
        return Err(Error::Threshold(format!(
            "interval formula gives {raw} < 1 for N = {num_workers}, T = {horizon}"
        )));
    }
    Ok(interval as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommRegime {
    KappaZero,
    KappaNonzero,
    Decentralized,
    EveryStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommRounds {
    pub order: String,
    pub interval: u64,
    pub count: u64,
}

/// Communication rounds over `T` iterations: the asymptotic order and the
/// concrete `⌊(T − 1)/I⌋` count.
pub fn comm_rounds(
    num_workers: usize,
    horizon: u64,
    regime: CommRegime,
    l: f64,
    beta: f64,
) -> Result<CommRounds> {
    let iterations = horizon.saturating_sub(1);
    let (order, interval) = match regime {
        CommRegime::KappaZero => (
            "O(N^{3/2} T^{1/2})",
            max_interval(num_workers, horizon, l, beta, true)?,
        ),
        CommRegime::KappaNonzero => (
            "O(N^{3/4} T^{3/4})",
            max_interval(num_workers, horizon, l, beta, false)?,
        ),
        CommRegime::Decentralized | CommRegime::EveryStep => ("O(T)", 1),
    };
    Ok(CommRounds {
        order: order.to_string(),
        interval,
        count: iterations / interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(gamma: f64, beta: f64, interval: u64, horizon: u64) -> HyperParams {
        HyperParams::new(gamma, beta, interval, horizon).unwrap()
    }

    #[test]
    fn violation_is_named() {
        let r = gate_nesterov(&hp(0.01, 0.9, 1, 10), 1.0);
        assert!(!r.ok());
        assert_eq!(
            r.violations(),
            vec!["gamma exceeds (1-beta)^2/(L(1+beta^3))".to_string()]
        );
        let r = gate_polyak(&hp(0.001, 0.0, 1000, 10), 1.0);
        assert_eq!(
            r.violations(),
            vec!["interval exceeds (1-beta)/(6 L gamma)".to_string()]
        );
    }

    #[test]
    fn beta_zero_gates_coincide() {
        assert_eq!(polyak_gamma_max(0.0, 2.0), nesterov_gamma_max(0.0, 2.0));
        assert_eq!(polyak_gamma_max(0.0, 2.0), 0.5);
        assert_eq!(interval_bound(0.0, 1.0, 0.5), 1.0 / 3.0);
    }

    #[test]
    fn bound_requires_gate() {
        let inputs = BoundInputs {
            l: 1.0,
            sigma: 1.0,
            kappa: 0.0,
            num_workers: 1,
            f0_minus_fstar: 1.0,
        };
        assert!(matches!(
            bound_polyak(&hp(1.0, 0.5, 1, 10), &inputs, RestartedVariant::Polyak),
            Err(Error::Gate(_))
        ));
        assert!(bound_decentralized(&hp(1.0, 0.5, 1, 10), &inputs, 0.0).is_err());
    }

    #[test]
    fn noiseless_bound_has_only_initial_term() {
        let inputs = BoundInputs {
            l: 1.0,
            sigma: 0.0,
            kappa: 0.0,
            num_workers: 4,
            f0_minus_fstar: 3.0,
        };
        let r = bound_polyak(
            &hp(0.01, 0.5, 2, 1_000_000),
            &inputs,
            RestartedVariant::Polyak,
        )
        .unwrap();
        assert!(r.term_breakdown[0] > 0.0);
        assert_eq!(&r.term_breakdown[1..], &[0.0, 0.0, 0.0]);
        assert_eq!(r.bound_value, r.term_breakdown[0]);
        let d = bound_decentralized(&hp(0.01, 0.5, 1, 1_000_000), &inputs, 0.25).unwrap();
        assert_eq!(&d.term_breakdown[1..], &[0.0, 0.0, 0.0]);
        assert_eq!(d.comm_rounds_formula, 999_999);
    }

    #[test]
    fn doubling_interval_quadruples_kappa_term() {
        let inputs = BoundInputs {
            l: 1.0,
            sigma: 1.0,
            kappa: 0.7,
            num_workers: 2,
            f0_minus_fstar: 1.0,
        };
        let a = bound_polyak(
            &hp(0.001, 0.5, 4, 10_000),
            &inputs,
            RestartedVariant::Polyak,
        )
        .unwrap();
        let b = bound_polyak(
            &hp(0.001, 0.5, 8, 10_000),
            &inputs,
            RestartedVariant::Polyak,
        )
        .unwrap();
        assert!((b.term_breakdown[3] / a.term_breakdown[3] - 4.0).abs() < 1e-12);
        assert!((b.term_breakdown[2] / a.term_breakdown[2] - 2.0).abs() < 1e-12);
        assert_eq!(a.comm_rounds_formula, 9_999 / 4);
    }

    #[test]
    fn max_interval_errors() {
        // κ ≠ 0, N = 64: T^{1/4} / (6 · 64^{3/4}) < 1.
        assert!(matches!(
            max_interval(64, 1_000_000, 1.0, 0.0, false),
            Err(Error::Threshold(_))
        ));
        // Horizon below threshold.
        assert!(matches!(
            max_interval(4, 100, 1.0, 0.9, true),
            Err(Error::Threshold(_))
        ));
    }

    #[test]
    fn guarded_floor_keeps_integers() {
        assert_eq!(guarded_floor(2.9999999999999996), 3.0);
        assert_eq!(guarded_floor(2.9999), 2.0);
        assert_eq!(guarded_floor(0.0), 0.0);
    }
}
