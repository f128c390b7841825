//! Dense vector/matrix arithmetic, counter-based random streams and
//! order-fixed reductions.
//!
//! Vectors are plain `[f64]` slices. Everything that combines values from
//! several workers goes through [`fixed_order_mean`] (or an explicitly ordered
//! loop) so that a run produces the same bits whatever the thread count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Arithmetic mean accumulated in the order the vectors are given.
///
/// Uses the running update `m_k = m_{k-1} + (v_k - m_{k-1}) / k`, so the mean
/// of identical vectors is returned bit-exactly.
pub fn fixed_order_mean<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    fixed_order_mean_iter(vectors.iter().map(AsRef::as_ref))
}

pub fn fixed_order_mean_iter<'a, I>(vectors: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter
        .next()
        .ok_or(Error::Empty("fixed_order_mean needs at least one vector"))?;
    let mut mean = first.to_vec();
    for (k, v) in iter.enumerate() {
        check_dim(mean.len(), v.len())?;
        let count = (k + 2) as f64;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += (x - *m) / count;
        }
    }
    Ok(mean)
}

/// `(1/K) Σ ‖v_k − mean‖²` for the given mean.
pub fn dispersion<'a, I>(vectors: I, mean: &[f64]) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut count = 0usize;
    let mut total = 0.0;
    for v in vectors {
        total += dist_sq(v, mean);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Square dense matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Mat {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Mat::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dim(n, row.len())?;
            data.extend(row);
        }
        if !all_finite(&data) {
            return Err(Error::invalid("matrix", "entries must be finite"));
        }
        Ok(Mat { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n, "matrix product dimension mismatch");
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n, "matrix difference dimension mismatch");
        Mat {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute entry of `self − other`.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.rows()
    }
}

/// A counter-based random stream keyed by `(seed, worker_id)`.
///
/// Backed by ChaCha8: the seed selects the key, the worker id selects the
/// stream, and `counter` is the number of 64-bit draws already consumed, so
/// `RngStream::at(seed, worker_id, counter)` reproduces the stream from any
/// position without replaying it.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    worker_id: u64,
    counter: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, worker_id: u64) -> Self {
        Self::at(seed, worker_id, 0)
    }

    pub fn at(seed: u64, worker_id: u64, counter: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_stream(worker_id);
        core.set_word_pos(u128::from(counter) * 2);
        RngStream {
            seed,
            worker_id,
            counter,
            core,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn worker_id(&self) -> u64 {
        self.worker_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (rejection sampling, no modulo bias).
    pub fn uniform_index(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "uniform_index needs a positive bound");
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let r = self.next_u64();
            if r <= zone {
                return r % bound;
            }
        }
    }

    /// A pair of independent standard normals (Box–Muller, two draws).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // (0, 1] keeps the logarithm finite.
        let u1 = ((self.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// `m` independent `N(0, scale²/m)` draws, so that `E‖v‖² = scale²`.
///
/// Always consumes `2·⌈m/2⌉` draws; for odd `m` the last sine branch is
/// discarded.
pub fn gaussian_vector(stream: &mut RngStream, m: usize, scale: f64) -> Vec<f64> {
    let std = if m == 0 {
        0.0
    } else {
        scale / (m as f64).sqrt()
    };
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let (a, b) = stream.normal_pair();
        out.push(a * std);
        if out.len() < m {
            out.push(b * std);
        }
    }
    out
}

/// Symmetry tolerance accepted by the eigen-solvers.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

fn check_symmetric(m: &Mat) -> Result<()> {
    let n = m.n();
    for i in 0..n {
        for j in (i + 1)..n {
            let deviation = (m[(i, j)] - m[(j, i)]).abs();
            if deviation > SYMMETRY_TOLERANCE || deviation.is_nan() {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    deviation,
                });
            }
        }
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as the columns of the returned matrix.
pub fn symmetric_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    check_symmetric(m)?;
    let n = m.n();
    let mut a = m.clone();
    // Work on the exactly symmetric part.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut v = Mat::identity(n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off == 0.0 {
            break;
        }
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * 1e-4 * diag {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        a[(r, p)] = new_rp;
                        a[(p, r)] = new_rp;
                        a[(r, q)] = new_rq;
                        a[(q, r)] = new_rq;
                    }
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok((values, vectors))
}

/// All eigenvalues of a symmetric matrix, in descending order.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    symmetric_eigen(m).map(|(values, _)| values)
}
