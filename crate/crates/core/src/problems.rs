//! Synthetic stochastic objectives `f(x) = (1/N) Σ_i f_i(x)` with certified
//! constants.
//!
//! Two families are provided:
//!
//! * heterogeneous quadratics `f_i(x) = ½ (x − c_i)ᵀ A (x − c_i)`, where the
//!   smoothness modulus, heterogeneity bound and minimum are closed forms;
//! * a separable nonconvex family `f_i(x) = (1/m) Σ_j φ(x_j − c_ij)` with
//!   `φ(u) = u² / (1 + u²)`, whose heterogeneity bound and minimum are
//!   certified by brute-force oracles.
//!
//! Stochastic gradients are the exact local gradient plus isotropic Gaussian
//! noise with `E‖noise‖² = σ²`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    self, dist_sq, fixed_order_mean, gaussian_vector, norm, symmetric_eigenvalues, Mat, RngStream,
};

/// Stream id reserved for problem construction draws.
pub const CONSTRUCTION_STREAM: u64 = u64::MAX - 1;

/// Inflation applied to the grid-maximized heterogeneity of the nonconvex family.
pub const KAPPA_INFLATION: f64 = 1.1;
/// Slack subtracted from the multi-start minimum of the nonconvex family.
pub const F_STAR_SLACK: f64 = 1e-9;
/// Starts used by the multi-start minimum oracle.
pub const F_STAR_STARTS: usize = 64;
/// Grid points per coordinate for the heterogeneity oracle.
pub const KAPPA_GRID_POINTS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    HeterogeneousQuadratic,
    RationalNonconvex,
}

/// Which gradient [`ProblemSpec::mean_gradient`] should return.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientTarget {
    Worker(usize),
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradSample {
    pub g: Vec<f64>,
    pub worker_id: usize,
    pub iteration: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    kind: ProblemKind,
    dimension: usize,
    num_workers: usize,
    centers: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    curvature: Option<Mat>,
    noise_sigma: f64,
    #[serde(rename = "certified_L")]
    certified_l: f64,
    certified_kappa: f64,
    f_star: f64,
    /// Exact minimizer (quadratic) or the best point found by the minimum oracle.
    minimizer: Vec<f64>,
}

fn phi(u: f64) -> f64 {
    let u2 = u * u;
    u2 / (1.0 + u2)
}

fn phi_prime(u: f64) -> f64 {
    let d = 1.0 + u * u;
    2.0 * u / (d * d)
}

#[cfg(test)]
fn phi_second(u: f64) -> f64 {
    let u2 = u * u;
    let d = 1.0 + u2;
    (2.0 - 6.0 * u2) / (d * d * d)
}

fn validate_common(m: usize, n: usize, sigma: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("dimension", "must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("num_workers", "must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    Ok(())
}

/// Points drawn uniformly from the ball of the given radius around the origin.
fn centers_in_ball(stream: &mut RngStream, m: usize, n: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let dir = gaussian_vector(stream, m, 1.0);
            let u = stream.next_f64();
            if radius == 0.0 {
                return vec![0.0; m];
            }
            let len = norm(&dir);
            let r = radius * u.powf(1.0 / m as f64);
            dir.iter().map(|d| d / len * r).collect()
        })
        .collect()
}

/// Haar-ish random rotation from Gram–Schmidt on a Gaussian matrix.
fn random_rotation(stream: &mut RngStream, m: usize) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    while cols.len() < m {
        let mut v = gaussian_vector(stream, m, 1.0);
        for _ in 0..2 {
            for c in &cols {
                let p = numerics::dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= p * ci;
                }
            }
        }
        let len = norm(&v);
        if len > 1e-8 {
            cols.push(v.iter().map(|x| x / len).collect());
        }
    }
    let mut r = Mat::zeros(m);
    for (j, c) in cols.iter().enumerate() {
        for (i, x) in c.iter().enumerate() {
            r[(i, j)] = *x;
        }
    }
    r
}

/// `R diag(s) Rᵀ`, computed so that entry `(i, j)` and `(j, i)` are bit-identical.
fn rotated_diagonal(r: &Mat, spectrum: &[f64]) -> Mat {
    let m = spectrum.len();
    let mut a = Mat::zeros(m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = (0..m).map(|k| r[(i, k)] * spectrum[k] * r[(j, k)]).sum();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Heterogeneous quadratic from randomly drawn centers and a rotated curvature spectrum.
pub fn make_quadratic(
    m: usize,
    n: usize,
    center_spread: f64,
    curvature_spectrum: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    validate_common(m, n, sigma)?;
    check_dim(m, curvature_spectrum.len())?;
    if let Some(bad) = curvature_spectrum
        .iter()
        .find(|s| !(**s >= 0.0 && s.is_finite()))
    {
        return Err(Error::invalid(
            "curvature_spectrum",
            format!("entries must be finite and >= 0, got {bad}"),
        ));
    }
    if !(center_spread >= 0.0 && center_spread.is_finite()) {
        return Err(Error::invalid("center_spread", "must be finite and >= 0"));
    }
    let mut stream = RngStream::new(seed, CONSTRUCTION_STREAM);
    let centers = centers_in_ball(&mut stream, m, n, center_spread);
    let rotation = random_rotation(&mut stream, m);
    let curvature = rotated_diagonal(&rotation, curvature_spectrum);
    let l = curvature_spectrum.iter().cloned().fold(0.0, f64::max);
    ProblemSpec::quadratic_with_l(curvature, centers, sigma, l)
}

/// Separable nonconvex problem with centers drawn uniformly in a ball.
pub fn make_rational_nonconvex(
    m: usize,
    n: usize,
    center_spread: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    validate_common(m, n, sigma)?;
    if !(center_spread >= 0.0 && center_spread.is_finite()) {
        return Err(Error::invalid("center_spread", "must be finite and >= 0"));
    }
    let mut stream = RngStream::new(seed, CONSTRUCTION_STREAM);
    let centers = centers_in_ball(&mut stream, m, n, center_spread);
    ProblemSpec::rational_nonconvex(centers, sigma)
}

impl ProblemSpec {
    /// Quadratic problem from an explicit curvature matrix and centers.
    ///
    /// The smoothness modulus is the largest eigenvalue of `curvature`.
    pub fn quadratic(curvature: Mat, centers: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let eig = symmetric_eigenvalues(&curvature)?;
        let l = eig.first().copied().unwrap_or(0.0);
        if let Some(min) = eig.last() {
            if *min < -1e-12 * l.max(1.0) {
                return Err(Error::invalid(
                    "curvature",
                    format!("must be positive semidefinite, smallest eigenvalue {min}"),
                ));
            }
        }
        Self::quadratic_with_l(curvature, centers, sigma, l)
    }

    fn quadratic_with_l(
        curvature: Mat,
        centers: Vec<Vec<f64>>,
        sigma: f64,
        certified_l: f64,
    ) -> Result<Self> {
        let m = curvature.n();
        let n = centers.len();
        validate_common(m, n, sigma)?;
        for c in &centers {
            check_dim(m, c.len())?;
        }
        let center_mean = fixed_order_mean(&centers)?;
        let shifted: Vec<Vec<f64>> = centers
            .iter()
            .map(|c| curvature.mat_vec(&numerics::sub(c, &center_mean)))
            .collect();
        let kappa_sq = shifted.iter().map(|v| numerics::norm_sq(v)).sum::<f64>() / n as f64;
        let f_star = centers
            .iter()
            .map(|c| {
                let d = numerics::sub(&center_mean, c);
                numerics::dot(&d, &curvature.mat_vec(&d))
            })
            .sum::<f64>()
            / (2.0 * n as f64);
        Ok(ProblemSpec {
            kind: ProblemKind::HeterogeneousQuadratic,
            dimension: m,
            num_workers: n,
            centers,
            curvature: Some(curvature),
            noise_sigma: sigma,
            certified_l,
            certified_kappa: kappa_sq.sqrt(),
            f_star,
            minimizer: center_mean,
        })
    }

    /// Nonconvex problem from explicit centers; κ and f* are certified by oracles.
    pub fn rational_nonconvex(centers: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let n = centers.len();
        let m = centers.first().map_or(0, Vec::len);
        validate_common(m, n, sigma)?;
        for c in &centers {
            check_dim(m, c.len())?;
        }
        let mut kappa_sq = 0.0;
        let mut f_star = 0.0;
        let mut minimizer = Vec::with_capacity(m);
        for j in 0..m {
            let column: Vec<f64> = centers.iter().map(|c| c[j]).collect();
            let (lo, hi) = sampling_interval(&column);
            kappa_sq += max_coordinate_deviation(&column, m, lo, hi);
            let (t, h) = min_coordinate_objective(&column);
            f_star += h;
            minimizer.push(t);
        }
        Ok(ProblemSpec {
            kind: ProblemKind::RationalNonconvex,
            dimension: m,
            num_workers: n,
            centers,
            curvature: None,
            noise_sigma: sigma,
            // |φ''| ≤ 2 everywhere and coordinates decouple.
            certified_l: 2.0,
            certified_kappa: KAPPA_INFLATION * kappa_sq.sqrt(),
            f_star: f_star / m as f64 - F_STAR_SLACK,
            minimizer,
        })
    }

    /// Parse and structurally validate a serialized problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn validate(&self) -> Result<()> {
        validate_common(self.dimension, self.num_workers, self.noise_sigma)?;
        check_dim(self.num_workers, self.centers.len())?;
        for c in &self.centers {
            check_dim(self.dimension, c.len())?;
        }
        check_dim(self.dimension, self.minimizer.len())?;
        match (self.kind, &self.curvature) {
            (ProblemKind::HeterogeneousQuadratic, Some(a)) => {
                check_dim(self.dimension, a.n())?;
                let top = symmetric_eigenvalues(a)?[0];
                if self.certified_l < top * (1.0 - 1e-12) {
                    return Err(Error::invalid(
                        "certified_L",
                        format!(
                            "{} is below the largest curvature eigenvalue {top}",
                            self.certified_l
                        ),
                    ));
                }
            }
            (ProblemKind::HeterogeneousQuadratic, None) => {
                return Err(Error::invalid(
                    "curvature",
                    "required for the quadratic kind",
                ))
            }
            (ProblemKind::RationalNonconvex, Some(_)) => {
                return Err(Error::invalid(
                    "curvature",
                    "only allowed for the quadratic kind",
                ))
            }
            (ProblemKind::RationalNonconvex, None) => {}
        }
        let constants = [self.certified_l, self.certified_kappa, self.f_star];
        if !constants.iter().all(|c| c.is_finite())
            || self.certified_l < 0.0
            || self.certified_kappa < 0.0
        {
            return Err(Error::invalid(
                "constants",
                "certified constants must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn num_workers(&self) -> usize {
        self.num_workers
    }
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }
    pub fn curvature(&self) -> Option<&Mat> {
        self.curvature.as_ref()
    }
    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
    pub fn certified_l(&self) -> f64 {
        self.certified_l
    }
    pub fn certified_kappa(&self) -> f64 {
        self.certified_kappa
    }
    pub fn f_star(&self) -> f64 {
        self.f_star
    }
    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// Per coordinate `(low, high)` bounds of the box used by the κ oracle.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        (0..self.dimension)
            .map(|j| {
                let column: Vec<f64> = self.centers.iter().map(|c| c[j]).collect();
                sampling_interval(&column)
            })
            .collect()
    }

    fn worker_gradient(&self, worker: usize, x: &[f64]) -> Vec<f64> {
        let c = &self.centers[worker];
        match &self.curvature {
            Some(a) => a.mat_vec(&numerics::sub(x, c)),
            None => {
                let scale = 1.0 / self.dimension as f64;
                x.iter()
                    .zip(c)
                    .map(|(xj, cj)| scale * phi_prime(xj - cj))
                    .collect()
            }
        }
    }

    /// Exact `∇f_i(x)` or `∇f(x)`.
    pub fn mean_gradient(&self, target: GradientTarget, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dimension, x.len())?;
        match target {
            GradientTarget::Worker(i) => {
                if i >= self.num_workers {
                    return Err(Error::UnknownWorker {
                        worker: i,
                        num_workers: self.num_workers,
                    });
                }
                Ok(self.worker_gradient(i, x))
            }
            GradientTarget::All => match &self.curvature {
                // A(x − c̄) = (1/N) Σ A(x − c_i).
                Some(a) => Ok(a.mat_vec(&numerics::sub(x, &self.minimizer))),
                None => {
                    let grads: Vec<Vec<f64>> = (0..self.num_workers)
                        .map(|i| self.worker_gradient(i, x))
                        .collect();
                    fixed_order_mean(&grads)
                }
            },
        }
    }

    /// Stochastic gradient: exact local gradient plus noise with `E‖noise‖² = σ²`.
    pub fn sample_gradient(
        &self,
        worker: usize,
        x: &[f64],
        iteration: u64,
        stream: &mut RngStream,
    ) -> Result<GradSample> {
        let mut g = self.mean_gradient(GradientTarget::Worker(worker), x)?;
        if self.noise_sigma > 0.0 {
            let noise = gaussian_vector(stream, self.dimension, self.noise_sigma);
            for (gi, ni) in g.iter_mut().zip(&noise) {
                *gi += ni;
            }
        }
        Ok(GradSample {
            g,
            worker_id: worker,
            iteration,
        })
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        let total: f64 = self
            .centers
            .iter()
            .map(|c| match &self.curvature {
                Some(a) => {
                    let d = numerics::sub(x, c);
                    0.5 * numerics::dot(&d, &a.mat_vec(&d))
                }
                None => {
                    x.iter().zip(c).map(|(xj, cj)| phi(xj - cj)).sum::<f64>()
                        / self.dimension as f64
                }
            })
            .sum();
        Ok(total / self.num_workers as f64)
    }

    /// `(1/N) Σ_i ‖∇f_i(x) − ∇f(x)‖²`.
    pub fn deviation_norm(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        let grads: Vec<Vec<f64>> = (0..self.num_workers)
            .map(|i| self.worker_gradient(i, x))
            .collect();
        let mean = fixed_order_mean(&grads)?;
        Ok(numerics::dispersion(grads.iter().map(Vec::as_slice), &mean))
    }

    /// Both sides of the heterogeneity inequality for the points `x_1..x_N`:
    /// `(1/N) Σ ‖∇f_i(x_i) − (1/N) Σ_j ∇f_j(x_j)‖²` and
    /// `6L² (1/N) Σ ‖x_i − x̄‖² + 3 (1/N) Σ ‖∇f_i(x̄) − ∇f(x̄)‖²`.
    pub fn heterogeneity_sides(&self, points: &[Vec<f64>]) -> Result<(f64, f64)> {
        check_dim(self.num_workers, points.len())?;
        for p in points {
            check_dim(self.dimension, p.len())?;
        }
        let grads: Vec<Vec<f64>> = points
            .iter()
            .enumerate()
            .map(|(i, p)| self.worker_gradient(i, p))
            .collect();
        let grad_mean = fixed_order_mean(&grads)?;
        let lhs = numerics::dispersion(grads.iter().map(Vec::as_slice), &grad_mean);
        let x_bar = fixed_order_mean(points)?;
        let spread = numerics::dispersion(points.iter().map(Vec::as_slice), &x_bar);
        let l = self.certified_l;
        let rhs = 6.0 * l * l * spread + 3.0 * self.deviation_norm(&x_bar)?;
        Ok((lhs, rhs))
    }

    /// Empirical `E‖(1/N) Σ g_i − ∇f(x)‖²` over `trials` independent rounds in
    /// which every worker samples at the common point `x`.
    pub fn averaged_noise_variance(&self, x: &[f64], trials: usize, seed: u64) -> Result<f64> {
        let exact = self.mean_gradient(GradientTarget::All, x)?;
        let mut streams: Vec<RngStream> = (0..self.num_workers)
            .map(|i| RngStream::new(seed, i as u64))
            .collect();
        let mut total = 0.0;
        for t in 0..trials {
            let samples = streams
                .iter_mut()
                .enumerate()
                .map(|(i, s)| self.sample_gradient(i, x, t as u64, s).map(|g| g.g))
                .collect::<Result<Vec<_>>>()?;
            total += dist_sq(&fixed_order_mean(&samples)?, &exact);
        }
        Ok(total / trials as f64)
    }
}

/// Bounding interval of the centers inflated threefold around its midpoint,
/// with a half-width of at least 3 so the decay region of φ′ is covered.
fn sampling_interval(column: &[f64]) -> (f64, f64) {
    let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let half = 3.0 * (0.5 * (hi - lo)).max(1.0);
    (mid - half, mid + half)
}

/// `(1/N) Σ_i (φ′(t − c_i)/m − mean)²` for one coordinate.
fn coordinate_deviation(column: &[f64], m: usize, t: f64) -> f64 {
    let scale = 1.0 / m as f64;
    let n = column.len() as f64;
    let grads: Vec<f64> = column.iter().map(|c| scale * phi_prime(t - c)).collect();
    // Running mean, so identical gradients give exactly zero deviation.
    let mean = grads
        .iter()
        .enumerate()
        .fold(0.0, |acc, (k, g)| acc + (g - acc) / (k + 1) as f64);
    grads.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n
}

/// Grid maximum of the coordinate deviation, refined by golden-section search
/// inside the bracketing grid cells.
fn max_coordinate_deviation(column: &[f64], m: usize, lo: f64, hi: f64) -> f64 {
    let g = KAPPA_GRID_POINTS;
    let step = (hi - lo) / (g - 1) as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..g {
        let v = coordinate_deviation(column, m, lo + step * k as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = lo + step * best_k.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_k + 1) as f64).min(hi);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if coordinate_deviation(column, m, c) >= coordinate_deviation(column, m, d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(coordinate_deviation(column, m, 0.5 * (a + b)))
}

/// Multi-start gradient descent on `h(t) = (1/N) Σ_i φ(t − c_i)`.
///
/// The minimum lies in the hull of the centers (every term grows away from
/// it), so starts are spread over that hull widened by one unit.
fn min_coordinate_objective(column: &[f64]) -> (f64, f64) {
    let n = column.len() as f64;
    let h = |t: f64| column.iter().map(|c| phi(t - c)).sum::<f64>() / n;
    let dh = |t: f64| column.iter().map(|c| phi_prime(t - c)).sum::<f64>() / n;
    let lo = column.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut best = (lo, h(lo));
    for s in 0..F_STAR_STARTS {
        let mut t = lo + (hi - lo) * s as f64 / (F_STAR_STARTS - 1) as f64;
        // h'' ≤ 2, so a step of 1/2 never overshoots.
        for _ in 0..20_000 {
            let d = dh(t);
            if d.abs() <= 1e-13 {
                break;
            }
            t -= 0.5 * d;
        }
        let v = h(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Serializable description of a problem family, instantiated per worker count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemRecipe {
    Quadratic {
        dimension: usize,
        #[serde(default)]
        center_spread: f64,
        curvature_spectrum: Spectrum,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    RationalNonconvex {
        dimension: usize,
        #[serde(default)]
        center_spread: f64,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Curvature eigenvalues: explicit list or `lo..=hi` evenly spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spectrum {
    Values(Vec<f64>),
    Linspace { linspace: (f64, f64) },
}

impl Spectrum {
    pub fn values(&self, m: usize) -> Vec<f64> {
        match self {
            Spectrum::Values(v) => v.clone(),
            Spectrum::Linspace { linspace: (lo, hi) } => {
                if m == 1 {
                    vec![*hi]
                } else {
                    (0..m)
                        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                        .collect()
                }
            }
        }
    }
}

impl ProblemRecipe {
    pub fn build(&self, num_workers: usize) -> Result<ProblemSpec> {
        match self {
            ProblemRecipe::Quadratic {
                dimension,
                center_spread,
                curvature_spectrum,
                sigma,
                seed,
            } => make_quadratic(
                *dimension,
                num_workers,
                *center_spread,
                &curvature_spectrum.values(*dimension),
                *sigma,
                *seed,
            ),
            ProblemRecipe::RationalNonconvex {
                dimension,
                center_spread,
                sigma,
                seed,
            } => make_rational_nonconvex(*dimension, num_workers, *center_spread, *sigma, *seed),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ProblemRecipe::Quadratic { dimension, .. }
            | ProblemRecipe::RationalNonconvex { dimension, .. } => *dimension,
        }
    }
}
