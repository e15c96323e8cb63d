//! Ensembles of GPs fitted on independent subsample draws, and the equally
//! weighted Gaussian mixture they predict.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{GaussianPredictive, GpModel, GpOptions, VarianceMode};
use crate::ingest::Catalog;
use crate::partition::{PartitionGraph, Partitioning};
use crate::sampler::{draw_subsample, member_seed, retry_seed, SamplerConfig};

/// Grid resolution for density-based summaries (HPD regions, modes).
pub const DENSITY_GRID: usize = 4096;
const ENVELOPE_SDS: f64 = 8.0;
const QUANTILE_TOL: f64 = 1e-8;
const HPD_TOL: f64 = 1e-6;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Finite mixture of Gaussians. Ensembles produce equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePredictive {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixturePredictive {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Self {
        let w = 1.0 / means.len() as f64;
        let weights = vec![w; means.len()];
        MixturePredictive::weighted(means, variances, weights)
    }

    /// Weights are normalized; zero-weight components are kept but ignored.
    pub fn weighted(means: Vec<f64>, variances: Vec<f64>, weights: Vec<f64>) -> Self {
        assert!(!means.is_empty(), "mixture needs at least one component");
        assert!(means.len() == variances.len() && means.len() == weights.len());
        assert!(
            variances.iter().all(|&v| v > 0.0),
            "component variances must be positive"
        );
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        MixturePredictive {
            means,
            variances,
            weights,
        }
    }

    pub fn from_components(c: &[GaussianPredictive]) -> Self {
        MixturePredictive::new(
            c.iter().map(|g| g.mean).collect(),
            c.iter().map(|g| g.variance).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.means
            .iter()
            .zip(&self.variances)
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|((&m, &v), &w)| (m, v, w))
    }

    pub fn mean(&self) -> f64 {
        self.components().map(|(m, _, w)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components().map(|(m, v, w)| w * (v + (m - mu).powi(2))).sum()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.components().map(|(m, v, w)| w * normal_pdf(y, m, v)).sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components()
            .map(|(m, v, w)| w * std_normal_cdf((y - m) / v.sqrt()))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// `[min(μ − 8σ), max(μ + 8σ)]` over the components.
    pub fn envelope(&self) -> (f64, f64) {
        self.components()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (m, v, _)| {
                let s = ENVELOPE_SDS * v.sqrt();
                (lo.min(m - s), hi.max(m + s))
            })
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::config(format!("quantile level must lie in (0,1), got {q}")));
        }
        let (mut lo, mut hi) = self.envelope();
        for _ in 0..200 {
            if hi - lo <= QUANTILE_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is a valid level")
    }

    /// Central interval `[q_{(1−level)/2}, q_{(1+level)/2}]`.
    pub fn central_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::config(format!("interval level must lie in (0,1), got {level}")));
        }
        let a = 0.5 * (1.0 - level);
        Ok((self.quantile(a)?, self.quantile(1.0 - a)?))
    }

    /// Evenly spaced grid over the envelope with the density at each node.
    pub fn density_grid(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.envelope();
        let step = (hi - lo) / (n - 1) as f64;
        let ys: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
        let ps = ys.iter().map(|&y| self.pdf(y)).collect();
        (ys, ps)
    }

    pub fn probability_of(&self, intervals: &[(f64, f64)]) -> f64 {
        intervals.iter().map(|&(a, b)| self.cdf(b) - self.cdf(a)).sum()
    }

    /// Highest-density region carrying probability `level`, as disjoint
    /// ascending intervals.
    pub fn hpd_region(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::config(format!("HPD level must lie in (0,1), got {level}")));
        }
        let (ys, ps) = self.density_grid(DENSITY_GRID);
        let top = ps.iter().copied().fold(0.0, f64::max);
        let (mut lo, mut hi) = (0.0, top);
        let mut best = superlevel_set(&ys, &ps, 0.0);
        for _ in 0..200 {
            let t = 0.5 * (lo + hi);
            let region = superlevel_set(&ys, &ps, t);
            let p = self.probability_of(&region);
            if p >= level {
                lo = t;
                best = region;
                if p - level < HPD_TOL {
                    break;
                }
            } else {
                hi = t;
            }
            if hi - lo <= top * 1e-15 {
                break;
            }
        }
        Ok(best)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let k = self.len();
        let uniform = self.weights.iter().all(|&w| w == self.weights[0]);
        (0..n)
            .map(|_| {
                let c = if uniform {
                    rng.random_range(0..k)
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    self.weights
                        .iter()
                        .position(|&w| {
                            acc += w;
                            u < acc
                        })
                        .unwrap_or(k - 1)
                };
                let z: f64 = StandardNormal.sample(rng);
                self.means[c] + self.variances[c].sqrt() * z
            })
            .collect()
    }
}

/// Intervals where the linearly interpolated density is at least `t`.
fn superlevel_set(ys: &[f64], ps: &[f64], t: f64) -> Vec<(f64, f64)> {
    let cross = |k: usize| {
        // density crosses t between nodes k and k + 1
        let (p0, p1) = (ps[k], ps[k + 1]);
        ys[k] + (t - p0) / (p1 - p0) * (ys[k + 1] - ys[k])
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for k in 0..ys.len() {
        let inside = ps[k] >= t;
        match (inside, start) {
            (true, None) => start = Some(if k == 0 { ys[0] } else { cross(k - 1) }),
            (false, Some(a)) => {
                out.push((a, cross(k - 1)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, ys[ys.len() - 1]));
    }
    out
}

/// Anything producing a predictive mixture at an input.
pub trait Predictor: Sync {
    fn dim(&self) -> usize;
    fn predictive(&self, x: &[f64]) -> MixturePredictive;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub eta: f64,
    pub base_seed: u64,
    pub n_members: usize,
    pub gp: GpOptions,
    #[serde(default)]
    pub variance_mode: VarianceMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<GpModel>,
    pub config: EnsembleConfig,
    /// Sampler seed actually used by each member (differs from the stream seed after a retry).
    pub seeds: Vec<u64>,
}

impl EnsembleModel {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_predictions(&self, x: &[f64]) -> Vec<GaussianPredictive> {
        self.members
            .iter()
            .map(|m| m.predict_with(x, self.config.variance_mode))
            .collect()
    }
}

impl Predictor for EnsembleModel {
    fn dim(&self) -> usize {
        self.members[0].dim()
    }

    fn predictive(&self, x: &[f64]) -> MixturePredictive {
        MixturePredictive::from_components(&self.member_predictions(x))
    }
}

fn fit_member(
    cat: &Catalog,
    part: &Partitioning,
    graph: &PartitionGraph,
    cfg: &SamplerConfig,
    gp: &GpOptions,
) -> Result<GpModel> {
    let draw = draw_subsample(part, graph, &cat.y, cfg, false)?;
    let (x, y) = draw.gather(&cat.x, &cat.y);
    GpModel::fit(
        x,
        y,
        &GpOptions {
            seed: cfg.seed,
            ..gp.clone()
        },
    )
}

/// Fit `n_members` GPs, member `i` on the draw seeded by `member_seed(seed, i)`.
///
/// Members are fitted on the current rayon pool; the result does not depend
/// on its size.
pub fn train_ensemble(
    cat: &Catalog,
    part: &Partitioning,
    graph: &PartitionGraph,
    n_members: usize,
    sampler: &SamplerConfig,
    gp: &GpOptions,
) -> Result<EnsembleModel> {
    if n_members == 0 {
        return Err(Error::config("ensemble needs at least one member"));
    }
    sampler.validate()?;
    let fitted: Vec<(GpModel, u64)> = (0..n_members)
        .into_par_iter()
        .map(|i| {
            let seed = member_seed(sampler.seed, i);
            let cfg = SamplerConfig { seed, ..*sampler };
            match fit_member(cat, part, graph, &cfg, gp) {
                Ok(m) => Ok((m, seed)),
                Err(e @ Error::Config(_)) => Err(e),
                Err(first) => {
                    let seed = retry_seed(seed);
                    log::warn!("member {i} failed ({first}); retrying with seed {seed}");
                    fit_member(cat, part, graph, &SamplerConfig { seed, ..*sampler }, gp)
                        .map(|m| (m, seed))
                        .map_err(|e| Error::MemberFailed {
                            member: i,
                            reason: e.to_string(),
                        })
                }
            }
        })
        .collect::<Result<_>>()?;
    let (members, seeds) = fitted.into_iter().unzip();
    Ok(EnsembleModel {
        members,
        config: EnsembleConfig {
            n_min: part.n_min(),
            n_max: part.n_max(),
            eta: sampler.eta,
            base_seed: sampler.seed,
            n_members,
            gp: gp.clone(),
            variance_mode: VarianceMode::default(),
        },
        seeds,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub file: String,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub created_unix: u64,
    pub config: EnsembleConfig,
    pub members: Vec<MemberEntry>,
    /// Anything else the caller wants recorded (run configuration, input hashes).
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn member_file(i: usize) -> String {
    format!("member_{i:03}.json")
}

/// Write member JSON files and the manifest; returns the manifest.
pub fn write_ensemble(dir: &Path, model: &EnsembleModel, extra: serde_json::Value) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(model.len());
    for (i, (m, &seed)) in model.members.iter().zip(&model.seeds).enumerate() {
        let file = member_file(i);
        let path = dir.join(&file);
        let bytes = serde_json::to_vec_pretty(m).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(MemberEntry {
            file,
            seed,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: model.config.clone(),
        members: entries,
        extra,
    };
    let path = dir.join(MANIFEST_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::json(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Load an ensemble, verifying member hashes against the manifest.
pub fn read_ensemble(dir: &Path) -> Result<(EnsembleModel, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(&path, e))?;
    if manifest.members.is_empty() {
        return Err(Error::data(format!("{} lists no members", path.display())));
    }
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let path: PathBuf = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::data(format!(
                "{} does not match its manifest hash",
                path.display()
            )));
        }
        let m: GpModel = serde_json::from_slice(&bytes).map_err(|e| Error::json(&path, e))?;
        members.push(m);
    }
    let seeds = manifest.members.iter().map(|e| e.seed).collect();
    let model = EnsembleModel {
        members,
        config: manifest.config.clone(),
        seeds,
    };
    Ok((model, manifest))
}
