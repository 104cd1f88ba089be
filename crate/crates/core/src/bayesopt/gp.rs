//! Gaussian-process surrogate over the unit cube.

use serde::{Deserialize, Serialize};

use super::space::{halton, Observation, DIM};
use super::BayesOptError;

const SQRT_5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// ARD Matérn-5/2 kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scales: [f64; DIM],
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scales: [0.5; DIM],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }
}

impl KernelParams {
    /// `s^2 (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r)` with `r` the
    /// length-scaled distance.
    pub fn covariance(&self, a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
        let mut r2 = 0.0;
        for d in 0..DIM {
            let z = (a[d] - b[d]) / self.length_scales[d];
            r2 += z * z;
        }
        let s5r = SQRT_5 * r2.sqrt();
        self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
    }
}

/// Bounds and search settings for hyperparameter fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub length_scale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    /// Pins the noise variance instead of fitting it.
    pub fixed_noise: Option<f64>,
    /// Number of local searches; the first starts at the box centre.
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            length_scale_bounds: (0.05, 2.0),
            signal_variance_bounds: (0.1, 10.0),
            noise_variance_bounds: (1e-6, 1.0),
            fixed_noise: None,
            restarts: 8,
            max_iterations: 200,
        }
    }
}

/// Fitted GP posterior with its observation log.
///
/// Targets are standardized before fitting; [`SurrogateState::posterior`]
/// works on that scale and [`SurrogateState::predict`] maps back.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    observations: Vec<Observation>,
    points: Vec<[f64; DIM]>,
    targets: Vec<f64>,
    kernel: KernelParams,
    y_mean: f64,
    y_scale: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
}

pub fn fit_surrogate(observations: &[Observation]) -> Result<SurrogateState, BayesOptError> {
    fit_surrogate_with(observations, &GpConfig::default())
}

/// Fits kernel hyperparameters by maximizing the log marginal likelihood with
/// bounded multistart Nelder-Mead in log space.
pub fn fit_surrogate_with(
    observations: &[Observation],
    config: &GpConfig,
) -> Result<SurrogateState, BayesOptError> {
    if observations.is_empty() {
        return Err(BayesOptError::NoObservations);
    }
    for obs in observations {
        if !obs.value.is_finite() {
            return Err(BayesOptError::NonFiniteValue(obs.value));
        }
        if obs.point.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(BayesOptError::PointOutsideCube(obs.point));
        }
    }
    let (points, values) = merge_duplicates(observations);
    let n = values.len() as f64;
    let y_mean = values.iter().sum::<f64>() / n;
    let spread = (values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let y_scale = if spread > 0.0 { spread } else { 1.0 };
    let targets: Vec<f64> = values.iter().map(|v| (v - y_mean) / y_scale).collect();

    let search = HyperSearch {
        points: &points,
        targets: &targets,
        config,
    };
    let mut kernel = search.run();

    let mut attempt = 0;
    let factor = loop {
        match factorize(&points, &targets, &kernel) {
            Some(f) => break f,
            None if attempt < 12 => {
                let raised = (kernel.noise_variance * 10.0).max(1e-6);
                log::warn!(
                    "kernel matrix not positive definite at noise {:e}; retrying with {:e}",
                    kernel.noise_variance,
                    raised
                );
                kernel.noise_variance = raised;
                attempt += 1;
            }
            None => return Err(BayesOptError::NotPositiveDefinite(kernel.noise_variance)),
        }
    };
    Ok(SurrogateState {
        observations: observations.to_vec(),
        points,
        targets,
        kernel,
        y_mean,
        y_scale,
        chol: factor.chol,
        alpha: factor.alpha,
        log_marginal_likelihood: factor.lml,
    })
}

/// Collapses observations at identical points into one with the mean value.
fn merge_duplicates(observations: &[Observation]) -> (Vec<[f64; DIM]>, Vec<f64>) {
    let mut points: Vec<[f64; DIM]> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for obs in observations {
        match points.iter().position(|p| *p == obs.point) {
            Some(i) => {
                sums[i].0 += obs.value;
                sums[i].1 += 1;
            }
            None => {
                points.push(obs.point);
                sums.push((obs.value, 1));
            }
        }
    }
    let values = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (points, values)
}

impl SurrogateState {
    /// Zero-observation prior with default kernel hyperparameters.
    pub fn prior(config: &GpConfig) -> Self {
        let mut kernel = KernelParams::default();
        if let Some(noise) = config.fixed_noise {
            kernel.noise_variance = noise;
        }
        Self {
            observations: Vec::new(),
            points: Vec::new(),
            targets: Vec::new(),
            kernel,
            y_mean: 0.0,
            y_scale: 1.0,
            chol: Vec::new(),
            alpha: Vec::new(),
            log_marginal_likelihood: 0.0,
        }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Number of distinct points after merging duplicates.
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.y_mean) / self.y_scale
    }

    /// Smallest standardized target, or 0 for the prior.
    pub fn best_standardized(&self) -> f64 {
        if self.targets.is_empty() {
            0.0
        } else {
            self.targets.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }

    /// Latent posterior `(mean, variance)` on the standardized scale. The
    /// variance is clamped at 0.
    pub fn posterior(&self, x: &[f64; DIM]) -> (f64, f64) {
        let n = self.points.len();
        if n == 0 {
            return (0.0, self.kernel.signal_variance);
        }
        let k_star: Vec<f64> = self.points.iter().map(|p| self.kernel.covariance(p, x)).collect();
        let mean = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = solve_lower(&self.chol, n, &k_star);
        let variance = self.kernel.signal_variance - v.iter().map(|e| e * e).sum::<f64>();
        (mean, variance.max(0.0))
    }

    /// Posterior `(mean, variance)` in the units of the observed values.
    pub fn predict(&self, x: &[f64; DIM]) -> (f64, f64) {
        let (mean, variance) = self.posterior(x);
        (
            self.y_mean + self.y_scale * mean,
            self.y_scale * self.y_scale * variance,
        )
    }
}

struct Factorization {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lml: f64,
}

fn factorize(points: &[[f64; DIM]], targets: &[f64], kernel: &KernelParams) -> Option<Factorization> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = kernel.covariance(&points[i], &points[j]);
            k[i * n + j] = c;
            k[j * n + i] = c;
        }
        k[i * n + i] += kernel.noise_variance;
    }
    cholesky_in_place(&mut k, n)?;
    let z = solve_lower(&k, n, targets);
    let alpha = solve_upper_transposed(&k, n, &z);
    let fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let log_det: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
    let lml = -0.5 * fit - log_det - 0.5 * n as f64 * LN_2PI;
    lml.is_finite().then_some(Factorization { chol: k, alpha, lml })
}

/// Lower Cholesky factor written over the lower triangle; the upper triangle
/// is zeroed. `None` if the matrix is not numerically positive definite.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let d = diag.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Some(())
}

/// Solves `L x = b`.
fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `L^T x = b`.
fn solve_upper_transposed(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

struct HyperSearch<'a> {
    points: &'a [[f64; DIM]],
    targets: &'a [f64],
    config: &'a GpConfig,
}

impl HyperSearch<'_> {
    /// Log-space box: length scales, signal variance, then noise unless pinned.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.config;
        let mut lo = vec![c.length_scale_bounds.0.ln(); DIM];
        let mut hi = vec![c.length_scale_bounds.1.ln(); DIM];
        lo.push(c.signal_variance_bounds.0.ln());
        hi.push(c.signal_variance_bounds.1.ln());
        if c.fixed_noise.is_none() {
            lo.push(c.noise_variance_bounds.0.ln());
            hi.push(c.noise_variance_bounds.1.ln());
        }
        (lo, hi)
    }

    fn kernel_at(&self, theta: &[f64]) -> KernelParams {
        let mut length_scales = [0.0; DIM];
        for d in 0..DIM {
            length_scales[d] = theta[d].exp();
        }
        KernelParams {
            length_scales,
            signal_variance: theta[DIM].exp(),
            noise_variance: self.config.fixed_noise.unwrap_or_else(|| theta[DIM + 1].exp()),
        }
    }

    fn negative_lml(&self, theta: &[f64]) -> f64 {
        factorize(self.points, self.targets, &self.kernel_at(theta)).map_or(f64::INFINITY, |f| -f.lml)
    }

    fn run(&self) -> KernelParams {
        let (lo, hi) = self.bounds();
        let dims = lo.len();
        let primes = [2u64, 3, 5, 7, 11, 13];
        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in 0..self.config.restarts.max(1) {
            let x0: Vec<f64> = (0..dims)
                .map(|d| {
                    let u = if start == 0 {
                        0.5
                    } else {
                        halton(start as u64, primes[d])
                    };
                    lo[d] + u * (hi[d] - lo[d])
                })
                .collect();
            let (x, fx) = nelder_mead(
                |t| self.negative_lml(t),
                x0,
                &lo,
                &hi,
                self.config.max_iterations,
            );
            if best.as_ref().is_none_or(|(_, f)| fx < *f) {
                best = Some((x, fx));
            }
        }
        match best {
            Some((theta, f)) if f.is_finite() => self.kernel_at(&theta),
            _ => {
                // Every candidate was singular; start from the centre and let
                // the caller raise the noise floor.
                let centre: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
                self.kernel_at(&centre)
            }
        }
    }
}

/// Nelder-Mead minimization with every trial point clamped into `[lo, hi]`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    max_iterations: usize,
) -> (Vec<f64>, f64) {
    let dims = x0.len();
    let clamp = |mut x: Vec<f64>| {
        for d in 0..dims {
            x[d] = x[d].clamp(lo[d], hi[d]);
        }
        x
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dims + 1);
    let x0 = clamp(x0);
    simplex.push((x0.clone(), f(&x0)));
    for d in 0..dims {
        let step = 0.2 * (hi[d] - lo[d]);
        let mut x = x0.clone();
        x[d] = if x[d] + step <= hi[d] { x[d] + step } else { x[d] - step };
        let x = clamp(x);
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    for _ in 0..max_iterations {
        simplex.sort_by(by_value);
        let (best, worst) = (simplex[0].1, simplex[dims].1);
        if worst.is_finite() && (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; dims];
        for (x, _) in &simplex[..dims] {
            for d in 0..dims {
                centroid[d] += x[d] / dims as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            clamp(
                (0..dims)
                    .map(|d| centroid[d] + t * (simplex[dims].0[d] - centroid[d]))
                    .collect(),
            )
        };
        let reflected = toward(-1.0);
        let f_reflected = f(&reflected);
        if f_reflected < simplex[0].1 {
            let expanded = toward(-2.0);
            let f_expanded = f(&expanded);
            simplex[dims] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[dims - 1].1 {
            simplex[dims] = (reflected, f_reflected);
        } else {
            let contracted = if f_reflected < simplex[dims].1 {
                toward(-0.5)
            } else {
                toward(0.5)
            };
            let f_contracted = f(&contracted);
            if f_contracted < simplex[dims].1.min(f_reflected) {
                simplex[dims] = (contracted, f_contracted);
            } else {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..dims)
                        .map(|d| anchor[d] + 0.5 * (vertex.0[d] - anchor[d]))
                        .collect();
                    let x = clamp(x);
                    vertex.1 = f(&x);
                    vertex.0 = x;
                }
            }
        }
    }
    simplex.sort_by(by_value);
    simplex.swap_remove(0)
}
