//! Acceptance suite: one line per criterion, `PASS`, `FAIL` or `SKIP`.
//!
//! Runs without the libtest harness so criteria execute in order and their
//! verdict lines are never captured. The process exits nonzero if any
//! criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use subgp::ensemble::{train_ensemble, EnsembleModel, MixturePredictive, Predictor};
use subgp::evaluate::{
    coverage, generate_synthetic, ks_uniform, mode_count, SyntheticData, SyntheticSpec, SyntheticTruth,
    DEFAULT_MODE_PROMINENCE, DEFAULT_MODE_SEPARATION,
};
use subgp::gp::{GpHyperparams, GpModel, GpOptions};
use subgp::partition::{partition_pipeline, PartitionGraph, Partitioning};
use subgp::sampler::SamplerConfig;
use subgp::Points;

type Criterion = Box<dyn Fn() -> Option<Verdict>>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Points from a few Gaussian clusters (rejected outside the cube) plus a uniform share.
fn clustered(rng: &mut ChaCha8Rng, n: usize, d: usize, clusters: usize, uniform_share: f64) -> Points {
    let centres: Vec<(Vec<f64>, f64)> = (0..clusters)
        .map(|_| {
            let c = (0..d).map(|_| rng.random_range(0.15..0.85)).collect();
            (c, rng.random_range(0.03..0.15))
        })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut row = vec![0.0; d];
    for _ in 0..n {
        if rng.random::<f64>() < uniform_share {
            row.iter_mut().for_each(|v| *v = rng.random());
        } else {
            let (c, s) = &centres[rng.random_range(0..clusters)];
            loop {
                for (v, m) in row.iter_mut().zip(c) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = m + s * z;
                }
                if row.iter().all(|v| (0.0..=1.0).contains(v)) {
                    break;
                }
            }
        }
        data.extend_from_slice(&row);
    }
    Points::new(d, data)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dims = [1, 2, 3, 5];
    let mut failures = Vec::new();
    let mut cells = 0usize;
    for k in 0..200 {
        let n = rng.random_range(500..=50_000);
        let d = dims[k % dims.len()];
        let n_min = rng.random_range(10..=100);
        let n_max = (n_min as f64 * rng.random_range(2.0..4.0)).ceil() as usize;
        let (clusters, share) = (rng.random_range(1..6), rng.random_range(0.0..1.0));
        let x = clustered(&mut rng, n, d, clusters, share);
        match partition_pipeline(&x, n_min, n_max, None) {
            Ok((part, _)) => {
                cells += part.len();
                if let Err(e) = part.check_invariants(&x, true) {
                    failures.push(format!("dataset {k} (N={n}, d={d}): {e}"));
                }
            }
            Err(e) => failures.push(format!("dataset {k} (N={n}, d={d}): {e}")),
        }
    }
    let took = start.elapsed();
    let ok = failures.is_empty() && took < Duration::from_secs(300);
    verdict(
        ok,
        format!(
            "{}/200 datasets valid, {cells} cells total, {} (limit 300s){}",
            200 - failures.len(),
            secs(took),
            failures
                .first()
                .map(|f| format!("; first failure: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let x = clustered(&mut rng, 80_000, 2, 6, 0.2);
    let start = Instant::now();
    let (part, _) = partition_pipeline(&x, 100, 300, None).expect("partition");
    let took = start.elapsed();
    let m = part.len();
    let valid = part.check_invariants(&x, true);
    let ok = (267..=800).contains(&m) && took < Duration::from_secs(60) && valid.is_ok();
    verdict(
        ok,
        format!(
            "{m} cells (forced range [267, 800], reference 393), {} (limit 60s), invariants {:?}",
            secs(took),
            valid
        ),
    )
}

fn random_instance(rng: &mut ChaCha8Rng, interpolate: bool) -> (GpHyperparams, Points, Vec<f64>) {
    let m = rng.random_range(1..=20);
    let (d, phi_range) = if interpolate {
        (rng.random_range(2..=3), 0.002..0.01)
    } else {
        (rng.random_range(1..=5), 0.01..1.0)
    };
    // noiseless instances keep inputs at least 0.1 apart so they stay distinct at jitter scale
    let min_gap: f64 = if interpolate { 0.1 } else { 0.0 };
    let mut x = Points::empty(d);
    while x.len() < m {
        let row: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        if x.rows()
            .all(|r| r.iter().zip(&row).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= min_gap * min_gap)
        {
            x.push(&row);
        }
    }
    let y = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    let phi = (0..d).map(|_| rng.random_range(phi_range.clone())).collect();
    let sigma2 = if interpolate {
        0.0
    } else {
        10f64.powf(rng.random_range(-2.0..0.0))
    };
    (GpHyperparams::new(phi, sigma2), x, y)
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (h, x, y) = random_instance(&mut rng, false);
        let model = GpModel::with_hyperparams(h.clone(), x.clone(), y.clone()).expect("factor");
        let m = y.len();
        let noise = h.sigma2 + model.jitter();
        let c = DMatrix::from_fn(m, m, |i, j| {
            subgp::gp::kernel(x.row(i), x.row(j), &h.phi) + if i == j { noise } else { 0.0 }
        });
        let cinv = c.clone().try_inverse().expect("invertible");
        let yv = DVector::from_vec(y.clone());
        let nll = 0.5 * c.determinant().ln()
            + 0.5 * (yv.transpose() * &cinv * &yv)[(0, 0)]
            + 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
        worst = worst.max((model.neg_log_likelihood() - nll).abs());
        for _ in 0..5 {
            let q: Vec<f64> = (0..x.dim()).map(|_| rng.random()).collect();
            let k = DVector::from_fn(m, |i, _| subgp::gp::kernel(&q, x.row(i), &h.phi));
            let mean = (k.transpose() * &cinv * &yv)[(0, 0)];
            let var = 1.0 - (k.transpose() * &cinv * &k)[(0, 0)] + h.sigma2;
            let p = model.predict(&q);
            worst = worst
                .max((p.mean - mean).abs())
                .max((p.variance - var.max(1e-12)).abs());
        }
    }
    verdict(
        worst < 1e-10,
        format!("max abs deviation from dense-inverse oracle {worst:.2e} (limit 1e-10)"),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst, mut worst_var): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let (h, x, y) = random_instance(&mut rng, true);
        let model = GpModel::with_hyperparams(h, x.clone(), y.clone()).expect("factor");
        for (i, row) in x.rows().enumerate() {
            let p = model.predict(row);
            worst = worst.max((p.mean - y[i]).abs());
            worst_var = worst_var.max(p.variance);
        }
    }
    verdict(
        worst < 1e-6,
        format!("max |mean − y| at training inputs {worst:.2e} (limit 1e-6); max variance there {worst_var:.1e}"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 1_000_000;
    let (mut cdf_dev, mut q_dev, mut hpd_dev, mut hpd_self): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..30 {
        let k = rng.random_range(1..=8);
        let mp = MixturePredictive::new(
            (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
            (0..k).map(|_| rng.random_range(0.2f64..1.5).powi(2)).collect(),
        );
        let mut s = mp.sample(n, &mut rng);
        s.sort_by(f64::total_cmp);
        let ecdf = |y: f64| s.partition_point(|&v| v <= y) as f64 / n as f64;
        let (lo, hi) = mp.envelope();
        for j in 0..=400 {
            let y = lo + (hi - lo) * j as f64 / 400.0;
            cdf_dev = cdf_dev.max((ecdf(y) - mp.cdf(y)).abs());
        }
        for q in [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95] {
            q_dev = q_dev.max((ecdf(mp.quantile(q).unwrap()) - q).abs());
        }
        for level in [0.5, 0.9] {
            let region = mp.hpd_region(level).unwrap();
            let inside = s
                .iter()
                .filter(|&&v| region.iter().any(|&(a, b)| a <= v && v <= b))
                .count();
            hpd_dev = hpd_dev.max((inside as f64 / n as f64 - level).abs());
            hpd_self = hpd_self.max((mp.probability_of(&region) - level).abs());
        }
    }
    let ok = cdf_dev < 5e-3 && q_dev < 5e-3 && hpd_dev < 5e-3 && hpd_self < 1e-3;
    verdict(
        ok,
        format!(
            "30 mixtures vs 1e6 samples: CDF sup-dev {cdf_dev:.1e}, quantile dev (probability scale) {q_dev:.1e}, \
             HPD region MC dev {hpd_dev:.1e} (limits 5e-3); HPD analytic prob dev {hpd_self:.1e} (limit 1e-3)"
        ),
    )
}

/// Two-branch dataset, its balanced partition and the 30-member ensemble.
struct Bimodal {
    data: SyntheticData,
    part: Partitioning,
    graph: PartitionGraph,
    model: EnsembleModel,
    elapsed: Duration,
}

fn sampler_cfg() -> SamplerConfig {
    let seed = std::env::var("SUBGP_ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(2024);
    SamplerConfig { eta: 0.5, seed }
}

fn bimodal() -> &'static Bimodal {
    static CELL: OnceLock<Bimodal> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let data = generate_synthetic(&SyntheticSpec::two_branch(20_000, 606)).expect("synthetic");
        let cat = &data.catalog;
        let (part, graph) = partition_pipeline(&cat.x, 50, 150, None).expect("partition");
        let model = train_ensemble(cat, &part, &graph, 30, &sampler_cfg(), &GpOptions::default()).expect("train");
        Bimodal {
            elapsed: start.elapsed(),
            data,
            part,
            graph,
            model,
        }
    })
}

fn criterion_6() -> Verdict {
    let b = bimodal();
    let cat = &b.data.catalog;
    let start = Instant::now();
    let single = train_ensemble(cat, &b.part, &b.graph, 1, &sampler_cfg(), &GpOptions::default()).expect("train");
    let baseline_time = start.elapsed();
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let xs: Vec<f64> = (0..200).map(|_| rng.random()).collect();
    let count = |m: &EnsembleModel, target: usize| {
        xs.iter()
            .filter(|&&x| mode_count(&m.predictive(&[x]), DEFAULT_MODE_SEPARATION, DEFAULT_MODE_PROMINENCE) == target)
            .count()
    };
    let two = count(&b.model, 2);
    let one = count(&single, 1);
    let total = b.elapsed + baseline_time + start.elapsed();
    let ok = two >= 160 && one >= 190 && total < Duration::from_secs(600);
    verdict(
        ok,
        format!(
            "{} cells; N_m=30: {two}/200 points bimodal (need ≥160); N_m=1: {one}/200 unimodal (need ≥190); {} end-to-end (limit 600s)",
            b.part.len(),
            secs(total)
        ),
    )
}

fn criterion_7() -> Verdict {
    let b = bimodal();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let pits: Vec<f64> = (0..10_000)
        .map(|_| {
            let mp = b.model.predictive(&[rng.random()]);
            let y = mp.sample(1, &mut rng)[0];
            mp.cdf(y)
        })
        .collect();
    let ks = ks_uniform(&pits);
    let spec = SyntheticSpec::two_branch(10_000, 7070);
    let test = generate_synthetic(&spec).expect("synthetic").catalog;
    let truth = SyntheticTruth::new(spec, &test.state);
    let cov = coverage(&truth, &test, 0.9).expect("coverage");
    let ok = ks < 0.02 && (cov - 0.9).abs() <= 0.02;
    verdict(
        ok,
        format!("self-PIT KS {ks:.4} (limit 0.02, n=1e4); coverage(0.9) on synthetic truth {cov:.4} (0.90 ± 0.02)"),
    )
}

fn criterion_8() -> Verdict {
    let b = bimodal();
    let cat = &b.data.catalog;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool");
        let start = Instant::now();
        let m = pool.install(|| {
            train_ensemble(cat, &b.part, &b.graph, 16, &sampler_cfg(), &GpOptions::default()).expect("train")
        });
        (m, start.elapsed())
    };
    let (serial, t1) = run(1);
    let (parallel, t8) = run(8);
    let identical = serial == parallel;
    let speedup = t1.as_secs_f64() / t8.as_secs_f64();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    verdict(
        identical && speedup >= 4.0,
        format!(
            "N_m=16: 1 thread {}, 8 threads {}, speedup {speedup:.2}× (need ≥4×); outputs bit-identical: {identical}; \
             machine exposes {cores} core(s)",
            secs(t1),
            secs(t8)
        ),
    )
}

fn criterion_9() -> Option<Verdict> {
    let path = std::env::var_os("SUBGP_SDSS_CATALOG")?;
    let start = Instant::now();
    let (raw, report) = subgp::ingest::read_raw_catalog(std::path::Path::new(&path)).expect("catalog");
    let (train, test, _) = subgp::ingest::split_holdout(&raw, 0.2, 9).expect("split");
    let (part, graph) = partition_pipeline(&train.x, 50, 150, None).expect("partition");
    let model = train_ensemble(
        &train,
        &part,
        &graph,
        50,
        &SamplerConfig { eta: 0.5, seed: 9 },
        &GpOptions::default(),
    )
    .expect("train");
    let sample = test.subset(&(0..test.len().min(500)).collect::<Vec<_>>());
    let _ = subgp::evaluate::summarize_points(&model, &sample);
    let took = start.elapsed();
    let n = train.len();
    let (lo, hi) = (n.div_ceil(150), n / 50);
    let mean = n as f64 / part.len() as f64;
    let ok = (lo..=hi).contains(&part.len()) && (mean / 107.0 - 1.0).abs() <= 0.3 && took < Duration::from_secs(1800);
    Some(verdict(
        ok,
        format!(
            "{} rows accepted, N_train {n}, {} cells (forced [{lo}, {hi}]), mean cardinality {mean:.1} (reference 107 ± 30%), {}",
            report.accepted,
            part.len(),
            secs(took)
        ),
    ))
}

fn main() {
    let _ = env_logger_init();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 partition property suite", Box::new(|| Some(criterion_1()))),
        ("2 balanced partition of 80k points", Box::new(|| Some(criterion_2()))),
        ("3 GP dense-oracle equivalence", Box::new(|| Some(criterion_3()))),
        ("4 noiseless interpolation", Box::new(|| Some(criterion_4()))),
        ("5 mixture math vs Monte Carlo", Box::new(|| Some(criterion_5()))),
        ("6 multimodality recovery", Box::new(|| Some(criterion_6()))),
        ("7 calibration self-consistency", Box::new(|| Some(criterion_7()))),
        ("8 parallel scaling", Box::new(|| Some(criterion_8()))),
        ("9 SDSS-scale smoke test", Box::new(criterion_9)),
    ];
    let only: Option<Vec<String>> = std::env::var("SUBGP_CRITERIA")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let mut failed = 0;
    line("acceptance criteria");
    for (name, run) in criteria {
        let id = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|t| t == id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let took = secs(start.elapsed());
        match outcome {
            Ok(Some(v)) => {
                if !v.pass {
                    failed += 1;
                }
                line(&format!(
                    "criterion {name}: {} [{took}] {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.detail
                ));
            }
            Ok(None) => line(&format!(
                "criterion {name}: SKIP (set SUBGP_SDSS_CATALOG to a raw catalog CSV)"
            )),
            Err(_) => {
                failed += 1;
                line(&format!("criterion {name}: FAIL [{took}] panicked"));
            }
        }
    }
    line(&format!("acceptance: {failed} criterion/criteria failed"));
    if failed > 0 {
        std::process::exit(1);
    }
}

fn env_logger_init() -> Result<(), log::SetLoggerError> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).try_init()
}
