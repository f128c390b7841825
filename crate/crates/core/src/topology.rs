//! Symmetric doubly stochastic mixing matrices and their spectral facts.
//!
//! A [`MixingMatrix`] can only be obtained through a constructor that runs
//! [`validate_mixing_matrix`], so every matrix in circulation is symmetric,
//! doubly stochastic, has `λ₁ = 1` and a certified
//! `ρ = max(|λ₂|, |λ_N|)² < 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::numerics::{max_abs, symmetric_eigenvalues, Mat};

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const TOP_EIGENVALUE_TOLERANCE: f64 = 1e-10;
/// Margin below 1 required of `max(|λ₂|, |λ_N|)`.
pub const SPECTRAL_GAP_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum MixingViolation {
    #[error("matrix is empty")]
    Empty,
    #[error("entry W[{row}][{col}] = {value} is not finite")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("not symmetric: |W[{row}][{col}] - W[{col}][{row}]| = {deviation:e} > 1e-12")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },
    #[error("not stochastic: entry W[{row}][{col}] = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("not stochastic: row {row} sums to {sum} instead of 1")]
    RowSum { row: usize, sum: f64 },
    #[error("largest eigenvalue is {value}, not 1")]
    TopEigenvalue { value: f64 },
    #[error("max(|λ₂|, |λ_N|) = {value} not < 1 (graph disconnected or bipartite)")]
    NoSpectralGap { value: f64 },
}

/// Check symmetry, double stochasticity and the spectral gap, and return `ρ = max(|λ₂|, |λ_N|)²`.
pub fn validate_mixing_matrix(w: &Mat) -> Result<f64, MixingViolation> {
    let n = w.n();
    if n == 0 {
        return Err(MixingViolation::Empty);
    }
    for i in 0..n {
        for j in 0..n {
            let value = w[(i, j)];
            if !value.is_finite() {
                return Err(MixingViolation::NonFinite {
                    row: i,
                    col: j,
                    value,
                });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let deviation = (w[(i, j)] - w[(j, i)]).abs();
            if deviation > SYMMETRY_TOLERANCE {
                return Err(MixingViolation::NotSymmetric {
                    row: i,
                    col: j,
                    deviation,
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let value = w[(i, j)];
            if !(0.0..=1.0).contains(&value) {
                return Err(MixingViolation::EntryOutOfRange {
                    row: i,
                    col: j,
                    value,
                });
            }
        }
        let sum: f64 = w.row(i).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MixingViolation::RowSum { row: i, sum });
        }
    }
    // Symmetry was checked above, so the solver cannot refuse the matrix.
    let eig = symmetric_eigenvalues(w).expect("symmetry already validated");
    if (eig[0] - 1.0).abs() > TOP_EIGENVALUE_TOLERANCE {
        return Err(MixingViolation::TopEigenvalue { value: eig[0] });
    }
    if n == 1 {
        return Ok(0.0);
    }
    let second = eig[1].abs().max(eig[n - 1].abs());
    if second >= 1.0 - SPECTRAL_GAP_SLACK {
        return Err(MixingViolation::NoSpectralGap { value: second });
    }
    Ok(second * second)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixingMatrixDoc", into = "MixingMatrixDoc")]
pub struct MixingMatrix {
    w: Mat,
    rho: f64,
}

/// On-disk form: `{"n": N, "rows": [[...], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingMatrixDoc {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<MixingMatrixDoc> for MixingMatrix {
    type Error = Error;
    fn try_from(doc: MixingMatrixDoc) -> Result<Self> {
        if doc.rows.len() != doc.n {
            return Err(Error::DimensionMismatch {
                expected: doc.n,
                found: doc.rows.len(),
            });
        }
        MixingMatrix::from_matrix(Mat::from_rows(doc.rows)?)
    }
}

impl From<MixingMatrix> for MixingMatrixDoc {
    fn from(m: MixingMatrix) -> Self {
        MixingMatrixDoc {
            n: m.w.n(),
            rows: m.w.rows(),
        }
    }
}

impl MixingMatrix {
    /// Accept a custom matrix after validation.
    pub fn from_matrix(w: Mat) -> Result<Self> {
        let rho = validate_mixing_matrix(&w)?;
        Ok(MixingMatrix { w, rho })
    }

    /// Parse `{"n": N, "rows": [...]}`; validation always runs.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MixingMatrixDoc = serde_json::from_str(text)?;
        MixingMatrix::try_from(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MixingMatrixDoc::from(self.clone()))?)
    }

    pub fn matrix(&self) -> &Mat {
        &self.w
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }
}

/// `W = (1/N) 𝟙𝟙ᵀ`: every mixing step is an exact global average.
pub fn complete_graph(n: usize) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(MixingMatrix {
        w: Mat::filled(n, 1.0 / n as f64),
        rho: 0.0,
    })
}

/// Ring where each node keeps `self_weight` and gives `(1 − self_weight)/2` to
/// each of its two neighbors.
pub fn ring_graph(n: usize, self_weight: f64) -> Result<MixingMatrix> {
    if n < 3 {
        return Err(Error::invalid(
            "n",
            format!("a ring needs at least 3 nodes, got {n}"),
        ));
    }
    if !(self_weight > 0.0 && self_weight < 1.0) {
        return Err(Error::invalid(
            "self_weight",
            format!("must lie in (0, 1), got {self_weight}"),
        ));
    }
    let side = 0.5 * (1.0 - self_weight);
    let mut w = Mat::zeros(n);
    for i in 0..n {
        w[(i, i)] = self_weight;
        w[(i, (i + 1) % n)] = side;
        w[(i, (i + n - 1) % n)] = side;
    }
    // Circulant spectrum: s + (1 − s) cos(2πk/N), k = 1..N−1.
    let second = (1..n)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n as f64;
            (self_weight + (1.0 - self_weight) * angle.cos()).abs()
        })
        .fold(0.0, f64::max);
    let rho = second * second;
    let validated = validate_mixing_matrix(&w)?;
    debug_assert!(
        (validated - rho).abs() < 1e-9,
        "circulant {rho} vs solver {validated}"
    );
    Ok(MixingMatrix { w, rho })
}

fn averaging_projector(n: usize) -> Mat {
    Mat::filled(n, 1.0 / n as f64)
}

/// Spectral norm of `(I − Q) Wᵏ`, with `Q = (1/N) 𝟙𝟙ᵀ`.
pub fn projector_mix_norm(w: &MixingMatrix, k: u32) -> f64 {
    let n = w.n();
    let mut p = Mat::identity(n).sub(&averaging_projector(n));
    for _ in 0..k {
        p = p.mul(w.matrix());
    }
    // (I − Q) and W commute, so the product is symmetric up to rounding.
    let mut sym = p.clone();
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (p[(i, j)] + p[(j, i)]);
        }
    }
    let eig = symmetric_eigenvalues(&sym).expect("symmetrized matrix");
    max_abs(&eig)
}

/// `(‖QW − WQ‖_max, ‖(I−Q)W − W(I−Q)‖_max)`.
pub fn commutation_residuals(w: &MixingMatrix) -> (f64, f64) {
    let n = w.n();
    let q = averaging_projector(n);
    let iq = Mat::identity(n).sub(&q);
    let a = q.mul(w.matrix()).max_abs_diff(&w.matrix().mul(&q));
    let b = iq.mul(w.matrix()).max_abs_diff(&w.matrix().mul(&iq));
    (a, b)
}

/// `max(‖W𝟙 − 𝟙‖_∞, ‖𝟙ᵀW − 𝟙ᵀ‖_∞)`.
pub fn stochasticity_residual(w: &MixingMatrix) -> f64 {
    let n = w.n();
    let m = w.matrix();
    let rows = (0..n).map(|i| (m.row(i).iter().sum::<f64>() - 1.0).abs());
    let cols = (0..n).map(|j| ((0..n).map(|i| m[(i, j)]).sum::<f64>() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}
