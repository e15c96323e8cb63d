//! Calibration and accuracy diagnostics, and synthetic data with known truth.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::{MixturePredictive, Predictor, DENSITY_GRID};
use crate::error::{Error, Result};
use crate::ingest::{Catalog, NormalizationState};
use crate::points::Points;

pub const PIT_BINS: usize = 20;
pub const DEFAULT_MODE_SEPARATION: f64 = 0.5;
pub const DEFAULT_MODE_PROMINENCE: f64 = 1.2;
pub const DEFAULT_COVERAGE_LEVELS: [f64; 4] = [0.5, 0.68, 0.9, 0.95];

/// Closed-form latent function `[0,1]^d → ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LatentFn {
    Constant {
        value: f64,
    },
    /// `offset + amplitude · sin(2π · frequency · x[input] + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        input: usize,
    },
    Linear {
        coefficients: Vec<f64>,
        intercept: f64,
    },
}

impl LatentFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            LatentFn::Constant { value } => *value,
            LatentFn::Sine {
                amplitude,
                frequency,
                phase,
                offset,
                input,
            } => offset + amplitude * (std::f64::consts::TAU * frequency * x[*input] + phase).sin(),
            LatentFn::Linear {
                coefficients,
                intercept,
            } => intercept + coefficients.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self {
            LatentFn::Sine { input, .. } if *input >= dim => Err(Error::config(format!(
                "sine branch reads input {input} of a {dim}-dimensional space"
            ))),
            LatentFn::Linear { coefficients, .. } if coefficients.len() != dim => Err(Error::config(format!(
                "linear branch has {} coefficients for {dim} inputs",
                coefficients.len()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub branches: Vec<LatentFn>,
    pub weights: Vec<f64>,
    /// Noise standard deviation in raw response units.
    pub noise_sd: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `sin(2πx)` and `sin(2πx) + 3`, equal weights, noise sd 0.1, in one dimension.
    pub fn two_branch(n: usize, seed: u64) -> Self {
        let sine = |offset| LatentFn::Sine {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
            offset,
            input: 0,
        };
        SyntheticSpec {
            dim: 1,
            branches: vec![sine(0.0), sine(3.0)],
            weights: vec![0.5, 0.5],
            noise_sd: 0.1,
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("synthetic data needs at least one input"));
        }
        if self.branches.is_empty() || self.branches.len() != self.weights.len() {
            return Err(Error::config("need one weight per latent branch"));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config("branch weights must be non-negative and sum to 1"));
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::config("noise sd must be positive"));
        }
        if self.n < 2 {
            return Err(Error::config("synthetic catalog needs at least 2 rows"));
        }
        self.branches.iter().try_for_each(|b| b.check(self.dim))
    }

    fn branch_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Inputs in `[0,1]^d`, responses standardized.
    pub catalog: Catalog,
    pub labels: Vec<usize>,
    pub raw_y: Vec<f64>,
}

/// Uniform inputs, a branch per row drawn by weight, Gaussian noise, then
/// standardization of the responses.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    let mut raw_y = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; spec.dim];
    for _ in 0..spec.n {
        for v in row.iter_mut() {
            *v = rng.random();
        }
        let k = spec.branch_for(rng.random());
        let e: f64 = StandardNormal.sample(&mut rng);
        data.extend_from_slice(&row);
        labels.push(k);
        raw_y.push(spec.branches[k].eval(&row) + spec.noise_sd * e);
    }
    let n = spec.n as f64;
    let mean = raw_y.iter().sum::<f64>() / n;
    let sd = (raw_y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let state = NormalizationState {
        x_min: vec![0.0; spec.dim],
        x_max: vec![1.0; spec.dim],
        log_mean: mean,
        log_sd: sd,
        log_response: false,
    };
    let y = raw_y.iter().map(|&v| state.y_from_response(v)).collect();
    let catalog = Catalog::new(Points::new(spec.dim, data), y, state)?;
    Ok(SyntheticData { catalog, labels, raw_y })
}

/// The generating distribution itself, in standardized units.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    pub mean: f64,
    pub sd: f64,
}

impl SyntheticTruth {
    pub fn new(spec: SyntheticSpec, state: &NormalizationState) -> Self {
        SyntheticTruth {
            spec,
            mean: state.log_mean,
            sd: state.log_sd,
        }
    }
}

impl Predictor for SyntheticTruth {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn predictive(&self, x: &[f64]) -> MixturePredictive {
        let var = (self.spec.noise_sd / self.sd).powi(2);
        MixturePredictive::weighted(
            self.spec
                .branches
                .iter()
                .map(|b| (b.eval(x) - self.mean) / self.sd)
                .collect(),
            vec![var; self.spec.branches.len()],
            self.spec.weights.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitResult {
    pub values: Vec<f64>,
    pub histogram: Vec<usize>,
    pub chi2: f64,
    pub p_value: f64,
}

/// Histogram and chi-square uniformity test of PIT values.
pub fn pit_from_values(values: Vec<f64>) -> PitResult {
    let mut histogram = vec![0usize; PIT_BINS];
    for &v in &values {
        let b = ((v * PIT_BINS as f64) as usize).min(PIT_BINS - 1);
        histogram[b] += 1;
    }
    let expected = values.len() as f64 / PIT_BINS as f64;
    let chi2: f64 = histogram
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((PIT_BINS - 1) as f64).expect("positive degrees of freedom");
    let p_value = if chi2.is_finite() { dist.sf(chi2) } else { 0.0 };
    PitResult {
        values,
        histogram,
        chi2,
        p_value,
    }
}

pub fn pit_values<P: Predictor + ?Sized>(model: &P, x: &Points, y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .into_par_iter()
        .map(|j| model.predictive(x.row(j)).cdf(y[j]))
        .collect()
}

pub fn pit<P: Predictor + ?Sized>(model: &P, test: &Catalog) -> Result<PitResult> {
    if test.is_empty() {
        return Err(Error::data("PIT needs at least one test point"));
    }
    Ok(pit_from_values(pit_values(model, &test.x, &test.y)))
}

/// Kolmogorov–Smirnov distance between the sample and the uniform law on `[0,1]`.
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).max((i + 1) as f64 / n - u))
        .fold(0.0, f64::max)
}

/// Fraction of test responses inside the central `level` interval.
pub fn coverage<P: Predictor + ?Sized>(model: &P, test: &Catalog, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("coverage level must lie in (0,1), got {level}")));
    }
    if test.is_empty() {
        return Err(Error::data("coverage needs at least one test point"));
    }
    let hits: Vec<bool> = (0..test.len())
        .into_par_iter()
        .map(|j| {
            let (lo, hi) = model.predictive(test.x.row(j)).central_interval(level)?;
            Ok(lo <= test.y[j] && test.y[j] <= hi)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / test.len() as f64)
}

/// Number of density modes, after discarding peaks closer than
/// `min_separation` to a higher one or whose height over the saddle
/// separating them from a neighbouring peak is below `min_prominence`.
pub fn mode_count(mp: &MixturePredictive, min_separation: f64, min_prominence: f64) -> usize {
    let (ys, ps) = mp.density_grid(DENSITY_GRID);
    let n = ps.len();
    let mut peaks: Vec<usize> = (1..n - 1)
        .filter(|&k| ps[k] > ps[k - 1] && ps[k] >= ps[k + 1])
        .collect();
    if peaks.is_empty() {
        return 1;
    }
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for w in 0..peaks.len().saturating_sub(1) {
            let (a, b) = (peaks[w], peaks[w + 1]);
            let saddle = ps[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
            let low = ps[a].min(ps[b]);
            let ratio = if saddle > 0.0 { low / saddle } else { f64::INFINITY };
            if ys[b] - ys[a] < min_separation || ratio < min_prominence {
                let drop = if ps[a] < ps[b] { w } else { w + 1 };
                if worst.is_none_or(|(_, h)| low < h) {
                    worst = Some((drop, low));
                }
            }
        }
        match worst {
            Some((k, _)) => {
                peaks.remove(k);
            }
            None => return peaks.len(),
        }
    }
}

/// Per-test-point prediction summary in standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub id: usize,
    pub y_true: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    pub pit: f64,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_test: usize,
    pub pit_hist: Vec<usize>,
    pub chi2: f64,
    pub p_value: f64,
    pub ks_statistic: f64,
    pub coverage_by_level: BTreeMap<String, f64>,
    pub rmse_median: f64,
    pub mae_median: f64,
    /// Entry `k` counts test points whose predictive density has `k` modes.
    pub mode_count_hist: Vec<usize>,
}

pub fn summarize_points<P: Predictor + ?Sized>(model: &P, test: &Catalog) -> Vec<PointSummary> {
    (0..test.len())
        .into_par_iter()
        .map(|j| {
            let mp = model.predictive(test.x.row(j));
            let y = test.y[j];
            PointSummary {
                id: test.ids[j],
                y_true: y,
                median: mp.median(),
                q05: mp.quantile(0.05).expect("valid level"),
                q95: mp.quantile(0.95).expect("valid level"),
                pit: mp.cdf(y),
                modes: mode_count(&mp, DEFAULT_MODE_SEPARATION, DEFAULT_MODE_PROMINENCE),
            }
        })
        .collect()
}

pub fn diagnose<P: Predictor + ?Sized>(
    model: &P,
    test: &Catalog,
    levels: &[f64],
) -> Result<(Diagnostics, Vec<PointSummary>)> {
    if test.is_empty() {
        return Err(Error::data("diagnostics need at least one test point"));
    }
    let points = summarize_points(model, test);
    let pit = pit_from_values(points.iter().map(|p| p.pit).collect());
    let mut coverage_by_level = BTreeMap::new();
    for &level in levels {
        coverage_by_level.insert(format!("{level:.2}"), coverage(model, test, level)?);
    }
    let n = points.len() as f64;
    let rmse = (points.iter().map(|p| (p.median - p.y_true).powi(2)).sum::<f64>() / n).sqrt();
    let mae = points.iter().map(|p| (p.median - p.y_true).abs()).sum::<f64>() / n;
    let top = points.iter().map(|p| p.modes).max().unwrap_or(0);
    let mut mode_count_hist = vec![0; top + 1];
    for p in &points {
        mode_count_hist[p.modes] += 1;
    }
    let diag = Diagnostics {
        n_test: points.len(),
        pit_hist: pit.histogram,
        chi2: pit.chi2,
        p_value: pit.p_value,
        ks_statistic: ks_uniform(&pit.values),
        coverage_by_level,
        rmse_median: rmse,
        mae_median: mae,
        mode_count_hist,
    };
    Ok((diag, points))
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const PIT_FILE: &str = "pit.csv";
pub const SCATTER_FILE: &str = "scatter.csv";

/// `diagnostics.json` plus plot-ready `pit.csv` and `scatter.csv`.
pub fn write_diagnostics(dir: &Path, diag: &Diagnostics, points: &[PointSummary]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(DIAGNOSTICS_FILE);
    let mut text = serde_json::to_string_pretty(diag).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let write_csv = |name: &str, header: &str, line: &dyn Fn(&PointSummary) -> String| -> Result<()> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(w, "{header}").map_err(io)?;
        for p in points {
            writeln!(w, "{}", line(p)).map_err(io)?;
        }
        w.flush().map_err(io)
    };
    write_csv(PIT_FILE, "id,pit", &|p| format!("{},{}", p.id, p.pit))?;
    write_csv(SCATTER_FILE, "id,y_true,median,q05,q95,modes", &|p| {
        format!("{},{},{},{},{},{}", p.id, p.y_true, p.median, p.q05, p.q95, p.modes)
    })
}
