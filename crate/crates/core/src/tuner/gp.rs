//! Gaussian-process regression with an ARD Matérn-5/2 kernel.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower bound on the observation noise variance (standardized units).
pub const NOISE_FLOOR: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-4;
const FIT_RESTARTS: usize = 5;

// Log-space box for hyperparameter fitting, in standardized units.
const LOG_LS: (f64, f64) = (-4.6, 2.3);
const LOG_SF2: (f64, f64) = (-6.9, 4.6);
const LOG_SN2: (f64, f64) = (-13.8, 0.0);

/// `σ²(1 + √5 r + 5r²/3) exp(−√5 r)` with `r` the lengthscale-scaled distance.
pub fn matern25(x1: &[f64], x2: &[f64], lengthscales: &[f64], variance: f64) -> f64 {
    let r2: f64 = x1
        .iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    matern25_r(r2.sqrt(), variance)
}

fn matern25_r(r: f64, variance: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl Kernel {
    pub fn new(lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "lengthscales must be positive".into(),
            ));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(
                "signal variance must be positive".into(),
            ));
        }
        Ok(Self {
            lengthscales,
            variance,
        })
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        matern25(x1, x2, &self.lengthscales, self.variance)
    }
}

/// GP posterior over a fixed training set.
///
/// Targets are standardized internally; the prior mean is the sample mean.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: Kernel,
    pub noise_var: f64,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    /// Jitter actually added to the diagonal.
    pub jitter: f64,
}

impl GpModel {
    /// Condition on `(x, y)` with fixed hyperparameters. `kernel.variance` and
    /// `noise_var` are in standardized target units.
    pub fn new(kernel: Kernel, noise_var: f64, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} targets",
                x.len(),
                y.len()
            )));
        }
        let dim = kernel.lengthscales.len();
        if x.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument(
                "input dimension does not match the kernel".into(),
            ));
        }
        if !(noise_var >= 0.0) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise and targets must be finite, noise ≥ 0".into(),
            ));
        }
        let (y_mean, y_scale) = standardization(&y);
        let mut model = Self {
            kernel,
            noise_var,
            x,
            y,
            y_mean,
            y_scale,
            chol: None,
            alpha: DVector::zeros(0),
            jitter: 0.0,
        };
        model.factorize()?;
        Ok(model)
    }

    /// Condition on `(x, y)` with hyperparameters chosen by maximizing the
    /// marginal likelihood (Nelder-Mead in log space, several random starts).
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, seed: u64) -> Result<Self> {
        let dim = x
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::InvalidArgument("no observations".into()))?;
        let (m, s) = standardization(&y);
        let ys: Vec<f64> = y.iter().map(|v| (v - m) / s).collect();
        let problem = NegLogLik { x: &x, y: &ys, dim };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts = vec![default_theta(dim)];
        for _ in 0..FIT_RESTARTS {
            starts.push(random_theta(dim, &mut rng));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let (theta, cost) = nelder_mead(problem, start, 300)?;
            if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, theta));
            }
        }
        let theta = best.map(|(_, t)| t).unwrap_or_else(|| default_theta(dim));
        let (kernel, noise) = unpack(&clamp_theta(&theta), dim);
        Self::new(kernel, noise, x, y)
    }

    fn factorize(&mut self) -> Result<()> {
        let n = self.x.len();
        if n == 0 {
            self.chol = None;
            self.alpha = DVector::zeros(0);
            return Ok(());
        }
        let k = self.gram();
        let ys = DVector::from_iterator(n, self.y.iter().map(|v| (v - self.y_mean) / self.y_scale));
        let mut jitter = 0.0;
        loop {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += self.noise_var + jitter;
            }
            if let Some(ch) = Cholesky::new(a) {
                self.alpha = ch.solve(&ys);
                self.chol = Some(ch);
                self.jitter = jitter;
                return Ok(());
            }
            jitter = if jitter == 0.0 {
                1e-12 * self.kernel.variance
            } else {
                jitter * 10.0
            };
            if jitter > MAX_JITTER * self.kernel.variance {
                return Err(Error::NotPositiveDefinite(jitter));
            }
        }
    }

    fn gram(&self) -> DMatrix<f64> {
        let n = self.x.len();
        DMatrix::from_fn(n, n, |i, j| self.kernel.eval(&self.x[i], &self.x[j]))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Posterior mean and variance of the latent function at `xs`, in target units.
    pub fn posterior(&self, xs: &[f64]) -> (f64, f64) {
        let Some(ch) = &self.chol else {
            return (
                self.y_mean,
                self.kernel.variance * self.y_scale * self.y_scale,
            );
        };
        let kx =
            DVector::from_iterator(self.x.len(), self.x.iter().map(|p| self.kernel.eval(p, xs)));
        let mean = kx.dot(&self.alpha);
        let v = ch
            .l()
            .solve_lower_triangular(&kx)
            .unwrap_or_else(|| DVector::zeros(kx.len()));
        let var = (self.kernel.variance - v.norm_squared()).max(0.0);
        (
            self.y_mean + self.y_scale * mean,
            var * self.y_scale * self.y_scale,
        )
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(ch) = &self.chol else { return 0.0 };
        let n = self.x.len() as f64;
        let ys = DVector::from_iterator(
            self.x.len(),
            self.y.iter().map(|v| (v - self.y_mean) / self.y_scale),
        );
        let log_det: f64 = ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * ys.dot(&self.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

pub(crate) fn posterior_of(model: Option<&GpModel>, x: &[f64]) -> (f64, f64) {
    model.map_or((0.0, 1.0), |m| m.posterior(x))
}

fn standardization(y: &[f64]) -> (f64, f64) {
    if y.is_empty() {
        return (0.0, 1.0);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

// theta = [log ℓ_1..ℓ_d, log σ², log σ_n²]
fn default_theta(dim: usize) -> Vec<f64> {
    let mut t = vec![0.3f64.ln(); dim];
    t.push(0.0);
    t.push(1e-3f64.ln());
    t
}

fn random_theta<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..dim)
        .map(|_| rng.random_range(LOG_LS.0..LOG_LS.1))
        .collect();
    t.push(rng.random_range(-2.0..2.0));
    t.push(rng.random_range(LOG_SN2.0..LOG_SN2.1));
    t
}

fn clamp_theta(theta: &[f64]) -> Vec<f64> {
    let dim = theta.len() - 2;
    theta
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (lo, hi) = if i < dim {
                LOG_LS
            } else if i == dim {
                LOG_SF2
            } else {
                LOG_SN2
            };
            v.clamp(lo, hi)
        })
        .collect()
}

fn unpack(theta: &[f64], dim: usize) -> (Kernel, f64) {
    let kernel = Kernel {
        lengthscales: theta[..dim].iter().map(|v| v.exp()).collect(),
        variance: theta[dim].exp(),
    };
    (kernel, theta[dim + 1].exp().max(NOISE_FLOOR))
}

#[derive(Clone, Copy)]
struct NegLogLik<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    dim: usize,
}

impl CostFunction for NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let clamped = clamp_theta(theta);
        // Quadratic wall outside the box keeps the simplex from drifting.
        let penalty: f64 = theta
            .iter()
            .zip(&clamped)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let (kernel, noise) = unpack(&clamped, self.dim);
        let n = self.x.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&self.x[i], &self.x[j]));
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let Some(ch) = Cholesky::new(k) else {
            return Ok(1e10 + penalty);
        };
        let y = DVector::from_column_slice(self.y);
        let alpha = ch.solve(&y);
        let log_det: f64 = ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(0.5 * y.dot(&alpha) + log_det + 10.0 * penalty)
    }
}

/// Nelder-Mead from `start` with an axis-aligned initial simplex of step 0.5.
pub(crate) fn nelder_mead<C>(problem: C, start: Vec<f64>, max_iters: u64) -> Result<(Vec<f64>, f64)>
where
    C: CostFunction<Param = Vec<f64>, Output = f64>,
{
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut p = start.clone();
        p[i] += 0.5;
        simplex.push(p);
    }
    nelder_mead_simplex(problem, simplex, max_iters)
}

pub(crate) fn nelder_mead_simplex<C>(
    problem: C,
    simplex: Vec<Vec<f64>>,
    max_iters: u64,
) -> Result<(Vec<f64>, f64)>
where
    C: CostFunction<Param = Vec<f64>, Output = f64>,
{
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let state = res.state();
    let best = state
        .best_param
        .clone()
        .ok_or_else(|| Error::InvalidArgument("optimizer returned no point".into()))?;
    Ok((best, state.best_cost))
}
