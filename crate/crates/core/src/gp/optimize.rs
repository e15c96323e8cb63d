//! Bounded quasi-Newton maximum-likelihood search in log-parameter space.

use serde::{Deserialize, Serialize};

use super::{neg_log_likelihood, nll_and_gradient, GpHyperparams, PHI_BOUNDS, SIGMA2_BOUNDS};
use crate::error::{Error, Result};
use crate::points::Points;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    /// Number of optimizer starts: the first is deterministic, the rest quasi-random.
    pub starts: usize,
    pub max_iter: usize,
    /// Stop when an iteration improves the NLL by less than this.
    pub tol: f64,
    /// Rotates the quasi-random start sequence.
    pub seed: u64,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions {
            starts: 5,
            max_iter: 200,
            tol: 1e-8,
            seed: 0,
        }
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn new(dim: usize) -> Self {
        let mut lo = vec![PHI_BOUNDS.0.ln(); dim];
        let mut hi = vec![PHI_BOUNDS.1.ln(); dim];
        lo.push(SIGMA2_BOUNDS.0.ln());
        hi.push(SIGMA2_BOUNDS.1.ln());
        Bounds { lo, hi }
    }

    fn project(&self, t: &mut [f64]) {
        for ((v, lo), hi) in t.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Coordinates pinned at a bound with the gradient pushing outward.
    fn active(&self, t: &[f64], g: &[f64]) -> Vec<bool> {
        (0..t.len())
            .map(|k| (t[k] <= self.lo[k] && g[k] > 0.0) || (t[k] >= self.hi[k] && g[k] < 0.0))
            .collect()
    }
}

/// Starting points in log-space.
fn starting_points(dim: usize, opts: &GpOptions, bounds: &Bounds) -> Vec<Vec<f64>> {
    let mut starts = Vec::with_capacity(opts.starts);
    let mut first = GpHyperparams::new(vec![0.1 * dim as f64; dim], 0.05).to_log();
    bounds.project(&mut first);
    starts.push(first);
    let n = dim + 1;
    let mut state = opts.seed;
    let shift: Vec<f64> = (0..n)
        .map(|_| (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    for s in 1..opts.starts.max(1) {
        let t: Vec<f64> = (0..n)
            .map(|k| {
                let u = (radical_inverse(s as u64, PRIMES[k % PRIMES.len()]) + shift[k]).fract();
                bounds.lo[k] + u * (bounds.hi[k] - bounds.lo[k])
            })
            .collect();
        starts.push(t);
    }
    starts
}

struct Outcome {
    theta: Vec<f64>,
    nll: f64,
}

fn objective(theta: &[f64], x: &Points, y: &[f64]) -> f64 {
    neg_log_likelihood(&GpHyperparams::from_log(theta), x, y)
}

/// Projected BFGS: BFGS directions on the free coordinates, projected
/// backtracking line search, inverse-Hessian reset when progress stalls.
fn minimize_from(start: Vec<f64>, x: &Points, y: &[f64], opts: &GpOptions, bounds: &Bounds) -> Option<Outcome> {
    let n = start.len();
    let mut theta = start;
    let (mut f, mut g) = nll_and_gradient(&theta, x, y)?;
    let mut hinv = identity(n);
    let mut stalls = 0;

    for _ in 0..opts.max_iter {
        let active = bounds.active(&theta, &g);
        let pg_norm = g
            .iter()
            .zip(&active)
            .filter(|(_, a)| !**a)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
        if pg_norm < 1e-9 {
            break;
        }

        let mut dir = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            dir[i] = -(0..n)
                .filter(|&j| !active[j])
                .map(|j| hinv[i * n + j] * g[j])
                .sum::<f64>();
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gv)| d * gv).sum();
        if !(slope < 0.0) {
            hinv = identity(n);
            for i in 0..n {
                dir[i] = if active[i] { 0.0 } else { -g[i] };
            }
        }
        // keep the first trial step within a few units in log-space
        let max_dir = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if max_dir > 3.0 { 3.0 / max_dir } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            bounds.project(&mut trial);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&theta))
                .map(|(gv, (a, b))| gv * (a - b))
                .sum();
            let ft = objective(&trial, x, y);
            if ft.is_finite() && ft <= f + 1e-4 * decrease.min(0.0) {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }

        let Some((trial, ft)) = accepted else {
            if stalls > 0 {
                break;
            }
            stalls += 1;
            hinv = identity(n);
            continue;
        };
        let Some((_, gt)) = nll_and_gradient(&trial, x, y) else {
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        bfgs_update(&mut hinv, &s, &yv);

        let improvement = f - ft;
        theta = trial;
        f = ft;
        g = gt;
        if improvement < opts.tol {
            stalls += 1;
            if stalls >= 2 {
                break;
            }
            hinv = identity(n);
        } else {
            stalls = 0;
        }
    }
    Some(Outcome { theta, nll: f })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    if sy <= 1e-12 {
        return;
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

pub(super) fn maximize_likelihood(x: &Points, y: &[f64], opts: &GpOptions) -> Result<GpHyperparams> {
    let dim = x.dim();
    let bounds = Bounds::new(dim);
    let mut best: Option<Outcome> = None;
    for start in starting_points(dim, opts, &bounds) {
        if let Some(out) = minimize_from(start, x, y, opts, &bounds) {
            if best.as_ref().is_none_or(|b| out.nll < b.nll) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::numerical(format!(
            "every optimizer start failed: covariance of {} points is singular even at maximum jitter \
             (check for duplicated inputs or constant responses)",
            y.len()
        ))
    })?;
    Ok(GpHyperparams::from_log(&best.theta))
}
