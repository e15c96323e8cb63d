//! Zero-mean Gaussian-process regression with a separable Gaussian
//! correlation kernel and a nugget term.
//!
//! The prior covariance between two inputs is
//!
//! `k(x, x') = exp(-Σ_p (x_p - x'_p)² / φ_p)`
//!
//! with unit process variance (responses are standardized upstream), and the
//! covariance of the observed responses is `C_n = K + (σ² + jitter) I`.
//! Hyperparameters `(φ, σ²)` are estimated by maximizing the marginal
//! likelihood over log-parameters with a bounded quasi-Newton search started
//! from several points.

mod linalg;
mod optimize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

pub use linalg::Cholesky;
pub use optimize::GpOptions;

pub const PHI_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGMA2_BOUNDS: (f64, f64) = (1e-8, 10.0);

/// Diagonal jitter schedule: start at 1e-8, ×10 on factorization failure, stop after 1e-4.
pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

pub const VARIANCE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Separable Gaussian correlation between two inputs.
#[inline]
pub fn kernel(x: &[f64], xp: &[f64], phi: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .zip(xp)
        .zip(phi)
        .map(|((a, b), f)| {
            let d = a - b;
            d * d / f
        })
        .sum();
    (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Length-scales, one per input dimension (squared input units).
    pub phi: Vec<f64>,
    /// Nugget / noise variance in standardized-response units.
    pub sigma2: f64,
}

impl GpHyperparams {
    pub fn new(phi: Vec<f64>, sigma2: f64) -> Self {
        GpHyperparams { phi, sigma2 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.phi.len() != dim {
            return Err(Error::config(format!(
                "expected {dim} length-scales, got {}",
                self.phi.len()
            )));
        }
        if let Some(p) = self.phi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::config(format!("length-scale {p} is not positive")));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::config(format!("noise variance {} is negative", self.sigma2)));
        }
        Ok(())
    }

    /// `[ln φ_1, …, ln φ_d, ln σ²]`
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.phi.iter().map(|p| p.ln()).collect();
        v.push(self.sigma2.ln());
        v
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let (phi, s) = theta.split_at(theta.len() - 1);
        GpHyperparams {
            phi: phi.iter().map(|t| t.exp()).collect(),
            sigma2: s[0].exp(),
        }
    }
}

/// Gaussian predictive distribution at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: f64,
    pub variance: f64,
}

/// Which variance a prediction reports: the latent process or a noisy observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    #[default]
    NoisyY,
    LatentZ,
}

/// Correlation matrix `K` (row-major, `m × m`).
pub fn correlation_matrix(x: &Points, phi: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut k = vec![0.0; m * m];
    for i in 0..m {
        k[i * m + i] = 1.0;
        for j in 0..i {
            let v = kernel(x.row(i), x.row(j), phi);
            k[i * m + j] = v;
            k[j * m + i] = v;
        }
    }
    k
}

/// Factor `K + (σ² + jitter) I`, escalating the jitter on failure.
/// Returns the factor and the jitter that succeeded.
pub fn factor_covariance(k: &[f64], m: usize, sigma2: f64) -> Option<(Cholesky, f64)> {
    let mut c = k.to_vec();
    let mut jitter = JITTER_START;
    loop {
        for i in 0..m {
            c[i * m + i] = k[i * m + i] + sigma2 + jitter;
        }
        if let Some(ch) = Cholesky::factor(&c, m) {
            return Some((ch, jitter));
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn check_data(x: &Points, y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::data(format!("{} inputs but {} responses", x.len(), y.len())));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite value in GP inputs"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite value in GP responses"));
    }
    Ok(())
}

/// Negative log marginal likelihood
/// `½ log det C_n + ½ yᵀ C_n⁻¹ y + (m/2) log 2π`.
///
/// Returns `f64::INFINITY` when `C_n` cannot be factored even at maximum jitter.
pub fn neg_log_likelihood(h: &GpHyperparams, x: &Points, y: &[f64]) -> f64 {
    let m = y.len();
    let k = correlation_matrix(x, &h.phi);
    match factor_covariance(&k, m, h.sigma2) {
        Some((ch, _)) => nll_from_factor(&ch, y),
        None => f64::INFINITY,
    }
}

fn nll_from_factor(ch: &Cholesky, y: &[f64]) -> f64 {
    let z = ch.solve_lower(y);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    0.5 * ch.log_det() + 0.5 * quad + 0.5 * y.len() as f64 * LN_2PI
}

/// NLL and its gradient with respect to `[ln φ_1, …, ln φ_d, ln σ²]`.
///
/// `∂NLL/∂θ = ½ tr((C⁻¹ − α αᵀ) ∂C/∂θ)` with `α = C⁻¹ y`.
pub fn nll_and_gradient(theta: &[f64], x: &Points, y: &[f64]) -> Option<(f64, Vec<f64>)> {
    let h = GpHyperparams::from_log(theta);
    let m = y.len();
    let d = x.dim();
    let k = correlation_matrix(x, &h.phi);
    let (ch, _) = factor_covariance(&k, m, h.sigma2)?;
    let nll = nll_from_factor(&ch, y);
    let alpha = ch.solve(y);
    let inv = ch.inverse();

    let mut grad = vec![0.0; d + 1];
    let mut trace_g = 0.0;
    for i in 0..m {
        let gi = inv[i * m + i] - alpha[i] * alpha[i];
        trace_g += gi;
        let xi = x.row(i);
        for j in 0..i {
            let g = inv[i * m + j] - alpha[i] * alpha[j];
            let w = g * k[i * m + j];
            if w == 0.0 {
                continue;
            }
            let xj = x.row(j);
            for p in 0..d {
                let diff = xi[p] - xj[p];
                // off-diagonal pair counted twice, times ½
                grad[p] += w * diff * diff / h.phi[p];
            }
        }
    }
    grad[d] = 0.5 * h.sigma2 * trace_g;
    if !nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    Some((nll, grad))
}

/// A fitted Gaussian process with its cached factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GpModelRecord", try_from = "GpModelRecord")]
pub struct GpModel {
    hyper: GpHyperparams,
    x: Points,
    y: Vec<f64>,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    /// Build a model from fixed hyperparameters, factoring `C_n`.
    pub fn with_hyperparams(hyper: GpHyperparams, x: Points, y: Vec<f64>) -> Result<Self> {
        check_data(&x, &y)?;
        if y.is_empty() {
            return Err(Error::data("GP needs at least one training point"));
        }
        hyper.validate(x.dim())?;
        let k = correlation_matrix(&x, &hyper.phi);
        let (chol, jitter) = factor_covariance(&k, y.len(), hyper.sigma2)
            .ok_or_else(|| Error::numerical(format!("covariance not positive definite at jitter {JITTER_MAX:e}")))?;
        let alpha = chol.solve(&y);
        Ok(GpModel {
            hyper,
            x,
            y,
            chol,
            alpha,
            jitter,
        })
    }

    /// Maximum-likelihood fit.
    pub fn fit(x: Points, y: Vec<f64>, opts: &GpOptions) -> Result<Self> {
        let hyper = fit_hyperparams(&x, &y, opts)?;
        GpModel::with_hyperparams(hyper, x, y)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn train_inputs(&self) -> &Points {
        &self.x
    }

    pub fn train_responses(&self) -> &[f64] {
        &self.y
    }

    pub fn factor(&self) -> &Cholesky {
        &self.chol
    }

    /// Jitter added to the diagonal on top of σ².
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        nll_from_factor(&self.chol, &self.y)
    }

    fn cross_correlation(&self, xs: &[f64]) -> Vec<f64> {
        self.x.rows().map(|xi| kernel(xs, xi, &self.hyper.phi)).collect()
    }

    /// Predictive distribution of a noisy observation at `xs`.
    pub fn predict(&self, xs: &[f64]) -> GaussianPredictive {
        self.predict_with(xs, VarianceMode::NoisyY)
    }

    pub fn predict_with(&self, xs: &[f64], mode: VarianceMode) -> GaussianPredictive {
        assert_eq!(xs.len(), self.dim(), "query dimension mismatch");
        let c = self.cross_correlation(xs);
        let mean: f64 = c.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.solve_lower(&c);
        let explained: f64 = v.iter().map(|t| t * t).sum();
        let latent = 1.0 - explained;
        let variance = match mode {
            VarianceMode::NoisyY => latent + self.hyper.sigma2,
            VarianceMode::LatentZ => latent,
        };
        GaussianPredictive {
            mean,
            variance: variance.max(VARIANCE_FLOOR),
        }
    }
}

/// On-disk form of a [`GpModel`]; the factorization is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModelRecord {
    pub phi: Vec<f64>,
    pub sigma2: f64,
    #[serde(rename = "X_train")]
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
}

impl From<GpModel> for GpModelRecord {
    fn from(m: GpModel) -> Self {
        GpModelRecord {
            phi: m.hyper.phi,
            sigma2: m.hyper.sigma2,
            x_train: m.x.rows().map(|r| r.to_vec()).collect(),
            y_train: m.y,
        }
    }
}

impl TryFrom<GpModelRecord> for GpModel {
    type Error = Error;

    fn try_from(r: GpModelRecord) -> Result<Self> {
        let dim = r.phi.len();
        if dim == 0 {
            return Err(Error::data("model record has no length-scales"));
        }
        if let Some(row) = r.x_train.iter().find(|row| row.len() != dim) {
            return Err(Error::data(format!(
                "training row has {} columns, expected {dim}",
                row.len()
            )));
        }
        let x = Points::from_rows(dim, &r.x_train);
        GpModel::with_hyperparams(GpHyperparams::new(r.phi, r.sigma2), x, r.y_train)
    }
}

/// Maximum-likelihood hyperparameters for `(x, y)`.
pub fn fit_hyperparams(x: &Points, y: &[f64], opts: &GpOptions) -> Result<GpHyperparams> {
    check_data(x, y)?;
    if y.len() < 2 {
        return Err(Error::data(format!("GP fit needs at least 2 points, got {}", y.len())));
    }
    optimize::maximize_likelihood(x, y, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, d: usize) -> (Points, Vec<f64>, GpHyperparams) {
        let data: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let phi: Vec<f64> = (0..d).map(|_| 0.05 + rng.random::<f64>() * 0.5).collect();
        let sigma2 = 0.01 + rng.random::<f64>() * 0.2;
        (Points::new(d, data), y, GpHyperparams::new(phi, sigma2))
    }

    /// Dense oracle: explicit inverse and LU determinant.
    fn dense_cov(x: &Points, h: &GpHyperparams, jitter: f64) -> DMatrix<f64> {
        let m = x.len();
        DMatrix::from_fn(m, m, |i, j| {
            let mut s = 0.0;
            for p in 0..x.dim() {
                let d = x.get(i, p) - x.get(j, p);
                s += d * d / h.phi[p];
            }
            (-s).exp() + if i == j { h.sigma2 + jitter } else { 0.0 }
        })
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel(&[0.3, 0.4], &[0.3, 0.4], &[0.2, 0.7]), 1.0);
        assert!((kernel(&[0.0], &[1.0], &[1.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel(&[0.0, 0.0], &[1.0, 2.0], &[1.0, 4.0]) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nll_scalar_gaussian() {
        let x = Points::new(1, vec![0.5]);
        let h = GpHyperparams::new(vec![1.0], 0.5);
        let nll = neg_log_likelihood(&h, &x, &[0.0]);
        // jitter 1e-8 enters the variance
        let expected = 0.5 * (2.0 * std::f64::consts::PI * (1.5 + 1e-8)).ln();
        assert!((nll - expected).abs() < 1e-12);
        assert!((nll - 1.121_671).abs() < 1e-6);
    }

    #[test]
    fn nll_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (x, y, h) = random_instance(&mut rng, 3, 2);
            let c = dense_cov(&x, &h, JITTER_START);
            let inv = c.clone().try_inverse().unwrap();
            let yv = DVector::from_vec(y.clone());
            let oracle = 0.5 * c.determinant().ln()
                + 0.5 * (yv.transpose() * &inv * &yv)[0]
                + 1.5 * (2.0 * std::f64::consts::PI).ln();
            let got = neg_log_likelihood(&h, &x, &y);
            assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
        }
    }

    #[test]
    fn duplicate_rows_without_noise_stay_finite() {
        let x = Points::new(1, vec![0.2, 0.2, 0.7]);
        let h = GpHyperparams::new(vec![0.1], 0.0);
        let nll = neg_log_likelihood(&h, &x, &[0.1, 0.1, -0.3]);
        assert!(nll.is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (x, y, h) = random_instance(&mut rng, 12, 3);
            let theta = h.to_log();
            let (_, g) = nll_and_gradient(&theta, &x, &y).unwrap();
            for k in 0..theta.len() {
                let eps = 1e-5;
                let mut tp = theta.clone();
                tp[k] += eps;
                let mut tm = theta.clone();
                tm[k] -= eps;
                let fp = neg_log_likelihood(&GpHyperparams::from_log(&tp), &x, &y);
                let fm = neg_log_likelihood(&GpHyperparams::from_log(&tm), &x, &y);
                let fd = (fp - fm) / (2.0 * eps);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-5, "param {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y, h) = random_instance(&mut rng, 15, 2);
        let perm: Vec<usize> = (0..15).rev().collect();
        let xp = x.select(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let a = neg_log_likelihood(&h, &x, &y);
        let b = neg_log_likelihood(&h, &xp, &yp);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn predict_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (x, y, h) = random_instance(&mut rng, 3, 2);
            let model = GpModel::with_hyperparams(h.clone(), x.clone(), y.clone()).unwrap();
            let c = dense_cov(&x, &h, model.jitter());
            let inv = c.try_inverse().unwrap();
            let xs = [rng.random::<f64>(), rng.random::<f64>()];
            let cv = DVector::from_iterator(3, x.rows().map(|r| kernel(&xs, r, &h.phi)));
            let mean = (cv.transpose() * &inv * DVector::from_vec(y.clone()))[0];
            let var = 1.0 - (cv.transpose() * &inv * &cv)[0] + h.sigma2;
            let p = model.predict(&xs);
            assert!((p.mean - mean).abs() < 1e-10);
            assert!((p.variance - var).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolates_without_noise() {
        let x = Points::new(1, vec![0.1, 0.4, 0.8]);
        let y = vec![0.3, -1.2, 0.5];
        let model = GpModel::with_hyperparams(GpHyperparams::new(vec![0.05], 0.0), x, y.clone()).unwrap();
        for (i, yi) in y.iter().enumerate() {
            let p = model.predict(model.train_inputs().row(i));
            assert!((p.mean - yi).abs() < 1e-6);
            assert!(p.variance <= 1e-8);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = Points::new(1, vec![0.1, 0.2]);
        let model = GpModel::with_hyperparams(GpHyperparams::new(vec![0.01], 0.2), x, vec![1.0, 2.0]).unwrap();
        let p = model.predict(&[10.0]);
        assert!(p.mean.abs() < 1e-12);
        assert!((p.variance - 1.2).abs() < 1e-12);
        let latent = model.predict_with(&[10.0], VarianceMode::LatentZ);
        assert!((latent.variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factorization_reconstructs_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, y, h) = random_instance(&mut rng, 20, 3);
        let model = GpModel::with_hyperparams(h.clone(), x.clone(), y).unwrap();
        let l = model.factor().factor_matrix();
        let m = 20;
        let k = correlation_matrix(&x, &h.phi);
        for i in 0..m {
            for j in 0..m {
                let v: f64 = (0..m).map(|t| l[i * m + t] * l[j * m + t]).sum();
                let c = k[i * m + j] + if i == j { h.sigma2 + model.jitter() } else { 0.0 };
                assert!((v - c).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn serialization_round_trip_preserves_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y, h) = random_instance(&mut rng, 10, 2);
        let model = GpModel::with_hyperparams(h, x, y).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"X_train\""));
        let back: GpModel = serde_json::from_str(&json).unwrap();
        assert!((back.neg_log_likelihood() - model.neg_log_likelihood()).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_finite_training_data() {
        let x = Points::new(1, vec![0.1, f64::NAN]);
        let err = GpModel::fit(x, vec![0.0, 1.0], &GpOptions::default()).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }
}
