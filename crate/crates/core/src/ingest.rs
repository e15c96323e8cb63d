//! Catalog loading, colour features, normalization and holdout splitting.
//!
//! Inputs are scaled to the unit cube with per-dimension min/max fitted on the
//! training rows; the response is the natural log of the spectroscopic
//! redshift, standardized to mean 0 and (population) standard deviation 1.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

pub const BANDS: [&str; 5] = ["u", "g", "r", "i", "z"];
pub const REDSHIFT_COLUMN: &str = "spec_z";
pub const N_FEATURES: usize = 5;

/// One row of a photometric catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub u: f64,
    pub g: f64,
    pub r: f64,
    pub i: f64,
    pub z: f64,
    pub spec_z: f64,
}

impl RawRecord {
    pub fn validate(&self, index: usize) -> Result<()> {
        let mags = [self.u, self.g, self.r, self.i, self.z];
        if let Some(b) = mags.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidRecord {
                index,
                reason: format!("magnitude {} is not finite", BANDS[b]),
            });
        }
        if !(self.spec_z.is_finite() && self.spec_z > 0.0) {
            return Err(Error::InvalidRecord {
                index,
                reason: format!("spec_z = {} is not positive", self.spec_z),
            });
        }
        Ok(())
    }
}

/// Colours `(u−g, g−r, r−i, i−z)` and the i-band magnitude.
///
/// Magnitude differences are log flux ratios of consecutive filters.
pub fn compute_features(r: &RawRecord, index: usize) -> Result<[f64; N_FEATURES]> {
    r.validate(index)?;
    Ok([r.u - r.g, r.g - r.r, r.r - r.i, r.i - r.z, r.i])
}

/// Validated features and redshifts before normalization.
#[derive(Debug, Clone)]
pub struct RawCatalog {
    pub features: Points,
    pub spec_z: Vec<f64>,
    /// 1-based CSV line number of each accepted row.
    pub lines: Vec<usize>,
}

impl RawCatalog {
    pub fn len(&self) -> usize {
        self.spec_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spec_z.is_empty()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub accepted: usize,
    /// `(line, reason)` for every skipped row.
    pub rejected: Vec<(usize, String)>,
}

impl IngestReport {
    pub fn rejection_rate(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rejected.len() as f64 / self.rows_read as f64
        }
    }
}

/// Read a CSV with header `u,g,r,i,z,spec_z` (extra columns ignored).
/// Unparseable or invalid rows are skipped and reported by line number.
pub fn read_raw_catalog(path: &Path) -> Result<(RawCatalog, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_catalog_from(file, path)
}

pub fn read_raw_catalog_from<R: std::io::Read>(reader: R, path: &Path) -> Result<(RawCatalog, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(BANDS.iter().chain([&REDSHIFT_COLUMN])) {
        *slot = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut report = IngestReport::default();
    let mut data = Vec::new();
    let mut spec_z = Vec::new();
    let mut lines = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        report.rows_read += 1;
        let line = k + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push((line, e.to_string()));
                continue;
            }
        };
        let mut vals = [0.0f64; 6];
        let mut bad = None;
        for (v, &c) in vals.iter_mut().zip(&cols) {
            match rec.get(c).map(str::parse::<f64>) {
                Some(Ok(x)) => *v = x,
                Some(Err(_)) | None => {
                    bad = Some(format!("cannot parse column {}", headers.get(c).unwrap_or("?")));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            report.rejected.push((line, reason));
            continue;
        }
        let raw = RawRecord {
            u: vals[0],
            g: vals[1],
            r: vals[2],
            i: vals[3],
            z: vals[4],
            spec_z: vals[5],
        };
        match compute_features(&raw, line) {
            Ok(f) => {
                data.extend_from_slice(&f);
                spec_z.push(raw.spec_z);
                lines.push(line);
            }
            Err(e) => report.rejected.push((line, e.to_string())),
        }
    }
    report.accepted = spec_z.len();
    if !report.rejected.is_empty() {
        log::warn!(
            "{}: skipped {} of {} rows",
            path.display(),
            report.rejected.len(),
            report.rows_read
        );
    }
    Ok((
        RawCatalog {
            features: Points::new(N_FEATURES, data),
            spec_z,
            lines,
        },
        report,
    ))
}

fn default_true() -> bool {
    true
}

/// Constants of the input and response transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub log_mean: f64,
    pub log_sd: f64,
    /// Whether the raw response is log-transformed before standardizing.
    #[serde(default = "default_true")]
    pub log_response: bool,
}

impl NormalizationState {
    pub fn identity(dim: usize) -> Self {
        NormalizationState {
            x_min: vec![0.0; dim],
            x_max: vec![1.0; dim],
            log_mean: 0.0,
            log_sd: 1.0,
            log_response: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_min.len()
    }

    /// Scale a raw feature row into `[0,1]^d`; returns whether clamping was needed.
    pub fn scale_x(&self, raw: &[f64], out: &mut [f64]) -> bool {
        let mut clamped = false;
        for p in 0..raw.len() {
            let v = (raw[p] - self.x_min[p]) / (self.x_max[p] - self.x_min[p]);
            if !(0.0..=1.0).contains(&v) {
                clamped = true;
            }
            out[p] = v.clamp(0.0, 1.0);
        }
        clamped
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(p, v)| self.x_min[p] + v * (self.x_max[p] - self.x_min[p]))
            .collect()
    }

    pub fn y_from_response(&self, z: f64) -> f64 {
        let t = if self.log_response { z.ln() } else { z };
        (t - self.log_mean) / self.log_sd
    }

    pub fn response_from_y(&self, y: f64) -> f64 {
        let t = y * self.log_sd + self.log_mean;
        if self.log_response {
            t.exp()
        } else {
            t
        }
    }
}

/// Normalized dataset: inputs in `[0,1]^d`, standardized responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub x: Points,
    pub y: Vec<f64>,
    pub state: NormalizationState,
    /// Row identifiers carried through subsetting (original row positions).
    pub ids: Vec<usize>,
}

impl Catalog {
    pub fn new(x: Points, y: Vec<f64>, state: NormalizationState) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::data(format!("{} input rows but {} responses", x.len(), y.len())));
        }
        let ids = (0..y.len()).collect();
        Ok(Catalog { x, y, state, ids })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn subset(&self, idx: &[usize]) -> Catalog {
        Catalog {
            x: self.x.select(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            state: self.state.clone(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }
}

fn mean_and_population_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fit transforms on the rows in `fit_on` and apply them to every row.
///
/// Rows outside the fitted input range are clamped into `[0,1]` with a warning.
pub fn normalize(features: &Points, raw_z: &[f64], fit_on: &[usize]) -> Result<(Catalog, NormalizationState)> {
    if fit_on.is_empty() {
        return Err(Error::data("normalization needs a nonempty fitting set"));
    }
    if features.len() != raw_z.len() {
        return Err(Error::data("feature and redshift lengths differ"));
    }
    if let Some(k) = raw_z.iter().position(|z| !(z.is_finite() && *z > 0.0)) {
        return Err(Error::InvalidRecord {
            index: k,
            reason: format!("response {} outside the log domain", raw_z[k]),
        });
    }
    let d = features.dim();
    let mut x_min = vec![f64::INFINITY; d];
    let mut x_max = vec![f64::NEG_INFINITY; d];
    for &i in fit_on {
        for (p, v) in features.row(i).iter().enumerate() {
            x_min[p] = x_min[p].min(*v);
            x_max[p] = x_max[p].max(*v);
        }
    }
    for p in 0..d {
        if !(x_max[p] > x_min[p]) {
            return Err(Error::DegenerateDimension {
                dim: p,
                value: x_min[p],
            });
        }
    }
    let (log_mean, log_sd) = mean_and_population_sd(fit_on.iter().map(|&i| raw_z[i].ln()));
    if !(log_sd > 0.0) {
        return Err(Error::data("log-response has zero standard deviation"));
    }
    let state = NormalizationState {
        x_min,
        x_max,
        log_mean,
        log_sd,
        log_response: true,
    };

    let mut x = features.clone();
    let mut clamped = 0usize;
    let mut buf = vec![0.0; d];
    for (i, row) in x.as_mut_slice().chunks_exact_mut(d).enumerate() {
        if state.scale_x(features.row(i), &mut buf) {
            clamped += 1;
        }
        row.copy_from_slice(&buf);
    }
    if clamped > 0 {
        log::warn!("{clamped} rows fell outside the fitted input range and were clamped to [0,1]");
    }
    let y = raw_z.iter().map(|&z| state.y_from_response(z)).collect();
    let cat = Catalog::new(x, y, state.clone())?;
    Ok((cat, state))
}

/// Disjoint train/test row indices, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl HoldoutSplit {
    pub fn new(n: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::config(format!("holdout fraction {fraction} outside (0,1)")));
        }
        let n_test = (fraction * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Ok(HoldoutSplit { train, test })
    }
}

/// Split raw rows, fit the normalization on the training part only, and
/// return normalized train and test catalogs.
pub fn split_holdout(raw: &RawCatalog, fraction: f64, seed: u64) -> Result<(Catalog, Catalog, HoldoutSplit)> {
    let split = HoldoutSplit::new(raw.len(), fraction, seed)?;
    let (all, _) = normalize(&raw.features, &raw.spec_z, &split.train)?;
    Ok((all.subset(&split.train), all.subset(&split.test), split))
}

/// Drop rows with `|y| > k` or an input coordinate outside `[0,1]`.
/// `k = ∞` disables the response cut.
pub fn clip_outliers(cat: &Catalog, k: f64) -> Result<Catalog> {
    if !(k > 0.0) {
        return Err(Error::config(format!("clip multiplier {k} must be positive")));
    }
    let keep: Vec<usize> = (0..cat.len())
        .filter(|&i| cat.y[i].abs() <= k && cat.x.row(i).iter().all(|v| (0.0..=1.0).contains(v)))
        .collect();
    Ok(cat.subset(&keep))
}

/// Everything needed to reproduce a normalized catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogSidecar {
    pub state: NormalizationState,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub holdout_indices: Vec<usize>,
    #[serde(default)]
    pub rejected_rows: usize,
    /// Ground-truth branch labels of synthetic catalogs, indexed like the rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<crate::evaluate::SyntheticSpec>,
}

/// Write `id,x1..xd,y` rows.
pub fn write_catalog_csv(path: &Path, cat: &Catalog) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((1..=cat.dim()).map(|p| format!("x{p}")))
        .chain(["y".into()])
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for i in 0..cat.len() {
        let mut line = format!("{},", cat.ids[i]);
        for v in cat.x.row(i) {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{}", cat.y[i]));
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a catalog written by [`write_catalog_csv`].
pub fn read_catalog_csv(path: &Path, state: NormalizationState) -> Result<Catalog> {
    let (x, y, ids) = read_points_csv(path)?;
    let y = y.ok_or_else(|| Error::MissingColumn("y".into()))?;
    let mut cat = Catalog::new(x, y, state)?;
    if let Some(ids) = ids {
        cat.ids = ids
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse().map_err(|_| Error::InvalidRecord {
                    index: k + 2,
                    reason: format!("id {s:?} is not a row number"),
                })
            })
            .collect::<Result<_>>()?;
    }
    Ok(cat)
}

/// Read a normalized `x1..xd[,y][,id]` table. Missing `y` yields `None`.
pub fn read_points_csv(path: &Path) -> Result<(Points, Option<Vec<f64>>, Option<Vec<String>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut xcols = Vec::new();
    for p in 1.. {
        match headers.iter().position(|h| h == format!("x{p}")) {
            Some(c) => xcols.push(c),
            None => break,
        }
    }
    if xcols.is_empty() {
        return Err(Error::MissingColumn("x1".into()));
    }
    let ycol = headers.iter().position(|h| h == "y");
    let idcol = headers.iter().position(|h| h == "id");
    let d = xcols.len();
    let mut pts = Points::empty(d);
    let mut ys = Vec::new();
    let mut ids = Vec::new();
    let mut row = vec![0.0; d];
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidRecord {
                    index: line,
                    reason: format!("column {} missing or not numeric", headers.get(c).unwrap_or("?")),
                })
        };
        if rec.len() != headers.len() {
            return Err(Error::InvalidRecord {
                index: line,
                reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (v, &c) in row.iter_mut().zip(&xcols) {
            *v = parse(c)?;
        }
        pts.push(&row);
        if let Some(c) = ycol {
            ys.push(parse(c)?);
        }
        if let Some(c) = idcol {
            ids.push(rec.get(c).unwrap_or("").to_string());
        }
    }
    Ok((pts, ycol.map(|_| ys), idcol.map(|_| ids)))
}
