//! Single-worker momentum update rules and the averaging (restart) steps.
//!
//! The production rules work on the buffer form used by the simulator:
//!
//! * Polyak: `u' = βu + g`, `x' = x − γu'`
//! * Nesterov: `u' = βu + g`, `v' = βu' + g`, `x' = x − γv'`
//!
//! The single-variable heavy-ball form and the two-sequence Nesterov form are
//! kept alongside as independent oracles; they carry their own history
//! (`x_prev`, `y_prev`) which never enters [`WorkerState`].

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::fixed_order_mean_iter;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Nesterov scratch; recomputed every step and never averaged.
    pub v: Vec<f64>,
}

impl WorkerState {
    /// Fresh state at `x` with zero momentum.
    pub fn new(x: Vec<f64>) -> Self {
        let m = x.len();
        WorkerState {
            x,
            u: vec![0.0; m],
            v: vec![0.0; m],
        }
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma: f64,
    pub beta: f64,
    pub interval: u64,
    pub horizon: u64,
}

impl HyperParams {
    pub fn new(gamma: f64, beta: f64, interval: u64, horizon: u64) -> Result<Self> {
        let hp = HyperParams {
            gamma,
            beta,
            interval,
            horizon,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be > 0, got {}", self.gamma),
            ));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(
                "beta",
                format!("must lie in [0, 1), got {}", self.beta),
            ));
        }
        if self.interval < 1 {
            return Err(Error::invalid("interval", "must be at least 1"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        Ok(())
    }
}

/// Local update rule selected for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumOption {
    Polyak,
    Nesterov,
    /// Polyak local steps, but synchronization zeroes the momentum buffers
    /// instead of averaging them.
    ClearedMomentumBaseline,
}

fn check_state(state: &WorkerState, g: &[f64]) -> Result<()> {
    let m = state.x.len();
    check_dim(m, state.u.len())?;
    check_dim(m, state.v.len())?;
    check_dim(m, g.len())
}

pub fn polyak_step(state: &mut WorkerState, g: &[f64], hp: &HyperParams) -> Result<()> {
    check_state(state, g)?;
    for ((x, u), gi) in state.x.iter_mut().zip(state.u.iter_mut()).zip(g) {
        *u = hp.beta * *u + gi;
        *x -= hp.gamma * *u;
    }
    Ok(())
}

pub fn nesterov_step(state: &mut WorkerState, g: &[f64], hp: &HyperParams) -> Result<()> {
    check_state(state, g)?;
    for (((x, u), v), gi) in state
        .x
        .iter_mut()
        .zip(state.u.iter_mut())
        .zip(state.v.iter_mut())
        .zip(g)
    {
        *u = hp.beta * *u + gi;
        *v = hp.beta * *u + gi;
        *x -= hp.gamma * *v;
    }
    Ok(())
}

/// Apply the local rule of `option`; the cleared baseline steps like Polyak.
pub fn local_step(
    option: MomentumOption,
    state: &mut WorkerState,
    g: &[f64],
    hp: &HyperParams,
) -> Result<()> {
    match option {
        MomentumOption::Polyak | MomentumOption::ClearedMomentumBaseline => {
            polyak_step(state, g, hp)
        }
        MomentumOption::Nesterov => nesterov_step(state, g, hp),
    }
}

/// Heavy-ball form `x' = x − γg + β(x − x_prev)`.
pub fn polyak_step_single_variable(
    x: &[f64],
    x_prev: &[f64],
    g: &[f64],
    hp: &HyperParams,
) -> Result<Vec<f64>> {
    check_dim(x.len(), x_prev.len())?;
    check_dim(x.len(), g.len())?;
    Ok(x.iter()
        .zip(x_prev)
        .zip(g)
        .map(|((xi, pi), gi)| xi - hp.gamma * gi + hp.beta * (xi - pi))
        .collect())
}

/// Two-sequence Nesterov form: `y' = x − γg`, `x' = y' + β(y' − y_prev)`.
///
/// Starting from `y_prev = x⁽⁰⁾` reproduces the buffer form exactly.
pub fn nesterov_step_two_sequence(
    y_prev: &[f64],
    x: &[f64],
    g: &[f64],
    hp: &HyperParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(x.len(), y_prev.len())?;
    check_dim(x.len(), g.len())?;
    let y: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - hp.gamma * gi).collect();
    let x_next = y
        .iter()
        .zip(y_prev)
        .map(|(yi, pi)| yi + hp.beta * (yi - pi))
        .collect();
    Ok((y, x_next))
}

fn averages(states: &[WorkerState]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = states
        .first()
        .ok_or(Error::Empty("restart needs at least one worker"))?
        .dimension();
    for s in states {
        check_dim(m, s.x.len())?;
        check_dim(m, s.u.len())?;
    }
    let x_hat = fixed_order_mean_iter(states.iter().map(|s| s.x.as_slice()))?;
    let u_hat = fixed_order_mean_iter(states.iter().map(|s| s.u.as_slice()))?;
    Ok((x_hat, u_hat))
}

/// Reset every worker's solution and momentum buffer to the node averages.
pub fn restart_average(states: &mut [WorkerState]) -> Result<()> {
    let (x_hat, u_hat) = averages(states)?;
    for s in states.iter_mut() {
        s.x.copy_from_slice(&x_hat);
        s.u.copy_from_slice(&u_hat);
    }
    Ok(())
}

/// Average solutions and zero the momentum buffers.
pub fn restart_average_cleared(states: &mut [WorkerState]) -> Result<()> {
    let (x_hat, _) = averages(states)?;
    for s in states.iter_mut() {
        s.x.copy_from_slice(&x_hat);
        s.u.iter_mut().for_each(|u| *u = 0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(gamma: f64, beta: f64) -> HyperParams {
        HyperParams::new(gamma, beta, 1, 10).unwrap()
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::new(0.1, 1.0, 1, 1).is_err());
        assert!(HyperParams::new(0.0, 0.5, 1, 1).is_err());
        assert!(HyperParams::new(0.1, 0.5, 0, 1).is_err());
        assert!(HyperParams::new(0.1, -0.1, 1, 1).is_err());
        assert!(HyperParams::new(0.1, 0.0, 1, 1).is_ok());
    }

    #[test]
    fn polyak_examples() {
        let mut s = WorkerState::new(vec![0.5, 1.0]);
        polyak_step(&mut s, &[2.0, -1.0], &hp(0.1, 0.0)).unwrap();
        assert_eq!(s.u, vec![2.0, -1.0]);
        assert_eq!(s.x, vec![0.5 - 0.1 * 2.0, 1.0 + 0.1]);

        let mut s = WorkerState::new(vec![0.0, 0.0]);
        polyak_step(&mut s, &[1.0, 0.0], &hp(0.3, 0.9)).unwrap();
        assert_eq!(s.u, vec![1.0, 0.0]);
        assert_eq!(s.x, vec![-0.3, 0.0]);

        let mut s = WorkerState::new(vec![1.5, -2.0]);
        let before = s.clone();
        polyak_step(&mut s, &[0.0, 0.0], &hp(0.3, 0.9)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn nesterov_examples() {
        let mut s = WorkerState::new(vec![0.0]);
        nesterov_step(&mut s, &[2.0], &hp(1.0, 0.5)).unwrap();
        assert_eq!((s.u[0], s.v[0], s.x[0]), (2.0, 3.0, -3.0));

        let mut s = WorkerState::new(vec![1.0]);
        nesterov_step(&mut s, &[4.0], &hp(0.25, 0.0)).unwrap();
        assert_eq!((s.u[0], s.v[0], s.x[0]), (4.0, 4.0, 0.0));

        let mut s = WorkerState::new(vec![1.0, 2.0]);
        let before = s.clone();
        nesterov_step(&mut s, &[0.0, 0.0], &hp(0.3, 0.9)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn oracle_forms_degenerate_cases() {
        let x = [1.0, -1.0];
        let g = [0.5, 2.0];
        let expected: Vec<f64> = vec![1.0 - 0.2 * 0.5, -1.0 - 0.2 * 2.0];
        assert_eq!(
            polyak_step_single_variable(&x, &[7.0, 7.0], &g, &hp(0.2, 0.0)).unwrap(),
            expected
        );
        assert_eq!(
            polyak_step_single_variable(&x, &x, &g, &hp(0.2, 0.9)).unwrap(),
            expected
        );

        let (y, xn) = nesterov_step_two_sequence(&[3.0, 3.0], &x, &g, &hp(0.2, 0.0)).unwrap();
        assert_eq!(y, expected);
        assert_eq!(xn, expected);
        let (y, xn) = nesterov_step_two_sequence(&expected, &x, &g, &hp(0.2, 0.9)).unwrap();
        assert_eq!(y, xn);
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = WorkerState::new(vec![0.0, 0.0]);
        assert!(matches!(
            polyak_step(&mut s, &[1.0], &hp(0.1, 0.1)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(nesterov_step(&mut s, &[1.0, 2.0, 3.0], &hp(0.1, 0.1)).is_err());
        assert!(polyak_step_single_variable(&[0.0], &[0.0, 1.0], &[0.0], &hp(0.1, 0.1)).is_err());
        assert!(nesterov_step_two_sequence(&[0.0], &[0.0], &[0.0, 1.0], &hp(0.1, 0.1)).is_err());
        let mut states = vec![
            WorkerState::new(vec![0.0]),
            WorkerState::new(vec![0.0, 1.0]),
        ];
        assert!(restart_average(&mut states).is_err());
        assert!(restart_average(&mut []).is_err());
    }

    #[test]
    fn restart_examples() {
        let mut states = vec![
            WorkerState {
                x: vec![1.0, 0.0],
                u: vec![0.0, 2.0],
                v: vec![0.0, 0.0],
            },
            WorkerState {
                x: vec![3.0, 0.0],
                u: vec![0.0, 0.0],
                v: vec![0.0, 0.0],
            },
        ];
        let mut cleared = states.clone();
        restart_average(&mut states).unwrap();
        for s in &states {
            assert_eq!(s.x, vec![2.0, 0.0]);
            assert_eq!(s.u, vec![0.0, 1.0]);
        }
        restart_average_cleared(&mut cleared).unwrap();
        for s in &cleared {
            assert_eq!(s.x, vec![2.0, 0.0]);
            assert_eq!(s.u, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn restart_of_equal_states_is_identity() {
        let s = WorkerState {
            x: vec![0.1, 0.7, -3.3],
            u: vec![1.0 / 3.0, 0.2, 0.0],
            v: vec![0.0; 3],
        };
        let mut states = vec![s.clone(); 3];
        restart_average(&mut states).unwrap();
        assert!(states.iter().all(|t| *t == s));

        // With zero buffers the cleared variant coincides.
        let z = WorkerState::new(vec![1.0, 2.0]);
        let mut a = vec![z.clone(), WorkerState::new(vec![3.0, -2.0])];
        let mut b = a.clone();
        restart_average(&mut a).unwrap();
        restart_average_cleared(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
