//! Browser bindings for three small interactive views of `subgp`:
//! a 2-D balanced partition with its adjacency graph, a 1-D ensemble trained
//! on two-branch data, and the predictive density of that ensemble at one input.
//!
//! Everything crosses the boundary as JSON strings; the page draws on a canvas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use subgp::ensemble::{train_ensemble, EnsembleModel, Predictor};
use subgp::evaluate::{
    generate_synthetic, mode_count, SyntheticSpec, DEFAULT_MODE_PROMINENCE, DEFAULT_MODE_SEPARATION,
};
use subgp::gp::GpOptions;
use subgp::partition::partition_pipeline;
use subgp::sampler::SamplerConfig;
use subgp::Points;

#[derive(Serialize)]
struct Cell {
    lower: Vec<f64>,
    upper: Vec<f64>,
    count: usize,
    oversize: bool,
}

#[derive(Serialize)]
struct PartitionView {
    points: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    edges: Vec<[usize; 2]>,
}

/// Uniform background plus two Gaussian blobs, clipped to the unit square.
pub fn clustered_points(n: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs = [([0.3, 0.65], 0.08), ([0.7, 0.3], 0.12)];
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let u: f64 = rng.random();
        if u < 0.3 {
            data.push(rng.random());
            data.push(rng.random());
        } else {
            let (c, s) = blobs[(u >= 0.6) as usize];
            let d = Normal::new(0.0, s).unwrap();
            for centre in c {
                let v: f64 = centre + d.sample(&mut rng);
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Points::new(2, data)
}

pub fn partition_view(n: usize, n_min: usize, n_max: usize, seed: u64) -> subgp::Result<String> {
    let x = clustered_points(n, seed);
    let (part, graph) = partition_pipeline(&x, n_min, n_max, None)?;
    let view = PartitionView {
        points: x.rows().map(|r| [r[0], r[1]]).collect(),
        cells: part
            .cells()
            .iter()
            .map(|c| Cell {
                lower: c.lower.clone(),
                upper: c.upper.clone(),
                count: c.len(),
                oversize: c.oversize,
            })
            .collect(),
        edges: graph.edges().into_iter().map(|(a, b)| [a, b]).collect(),
    };
    Ok(serde_json::to_string(&view).expect("plain data serializes"))
}

/// Partition `n` clustered points in the unit square.
///
/// Returns `{points, cells: [{lower, upper, count, oversize}], edges}`.
#[wasm_bindgen(js_name = partitionDemo)]
pub fn partition_demo(n: usize, n_min: usize, n_max: usize, seed: u64) -> Result<String, JsError> {
    partition_view(n, n_min, n_max, seed).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct Curves {
    data: Vec<[f64; 2]>,
    x: Vec<f64>,
    members: Vec<Vec<f64>>,
    median: Vec<f64>,
    q05: Vec<f64>,
    q95: Vec<f64>,
}

#[derive(Serialize)]
struct Predictive {
    x: f64,
    y: Vec<f64>,
    density: Vec<f64>,
    members: Vec<[f64; 2]>,
    hpd: Vec<(f64, f64)>,
    level: f64,
    modes: usize,
}

/// A 1-D ensemble on the two-branch sine data, kept alive between calls.
#[wasm_bindgen]
pub struct Ensemble1d {
    data: Vec<[f64; 2]>,
    model: EnsembleModel,
}

impl Ensemble1d {
    pub fn train(n: usize, members: usize, eta: f64, seed: u64) -> subgp::Result<Self> {
        let synth = generate_synthetic(&SyntheticSpec::two_branch(n, seed))?;
        let cat = synth.catalog;
        let (part, graph) = partition_pipeline(&cat.x, 50, 150, None)?;
        let gp = GpOptions {
            starts: 3,
            seed,
            ..GpOptions::default()
        };
        let model = train_ensemble(&cat, &part, &graph, members, &SamplerConfig { eta, seed }, &gp)?;
        let data = cat.x.rows().zip(&cat.y).map(|(r, &y)| [r[0], y]).collect();
        Ok(Ensemble1d { data, model })
    }

    pub fn curves_json(&self, grid: usize) -> subgp::Result<String> {
        let grid = grid.max(2);
        let x: Vec<f64> = (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect();
        let mut members = vec![Vec::with_capacity(grid); self.model.len()];
        let (mut median, mut q05, mut q95) = (Vec::new(), Vec::new(), Vec::new());
        for &xi in &x {
            for (m, g) in members.iter_mut().zip(self.model.member_predictions(&[xi])) {
                m.push(g.mean);
            }
            let mp = self.model.predictive(&[xi]);
            median.push(mp.median());
            q05.push(mp.quantile(0.05)?);
            q95.push(mp.quantile(0.95)?);
        }
        let c = Curves {
            data: self
                .data
                .iter()
                .step_by((self.data.len() / 1500).max(1))
                .copied()
                .collect(),
            x,
            members,
            median,
            q05,
            q95,
        };
        Ok(serde_json::to_string(&c).expect("plain data serializes"))
    }

    pub fn predictive_json(&self, x: f64, level: f64) -> subgp::Result<String> {
        let x = x.clamp(0.0, 1.0);
        let mp = self.model.predictive(&[x]);
        let (y, density) = mp.density_grid(400);
        let p = Predictive {
            x,
            y,
            density,
            members: self
                .model
                .member_predictions(&[x])
                .iter()
                .map(|g| [g.mean, g.variance.sqrt()])
                .collect(),
            hpd: mp.hpd_region(level)?,
            level,
            modes: mode_count(&mp, DEFAULT_MODE_SEPARATION, DEFAULT_MODE_PROMINENCE),
        };
        Ok(serde_json::to_string(&p).expect("plain data serializes"))
    }
}

#[wasm_bindgen]
impl Ensemble1d {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, members: usize, eta: f64, seed: u64) -> Result<Ensemble1d, JsError> {
        Self::train(n, members, eta, seed).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Member means, mixture median and 5–95% band on an even grid over `[0, 1]`.
    pub fn curves(&self, grid: usize) -> Result<String, JsError> {
        self.curves_json(grid).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Mixture density, member components, HPD region and mode count at `x`.
    pub fn predictive(&self, x: f64, level: f64) -> Result<String, JsError> {
        self.predictive_json(x, level).map_err(|e| JsError::new(&e.to_string()))
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.model.len()
    }
}
