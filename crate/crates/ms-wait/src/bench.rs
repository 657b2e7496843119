//! Monte Carlo benchmark harness: L1 error of the estimators against a
//! large-sample uncensored truth oracle, across sample sizes and methods.
//!
//! The error metric for one replicate is the mean absolute deviation between
//! the estimated and true curves over the truth curve's decile grid (the
//! times where the truth first reaches 10%, 20%, ..., 90% of its total
//! mass). Replicates draw from independent, counter-derived seed streams, so
//! reports are identical for any worker-thread count.

use crate::censor_weights::{aalen_censor_weights, km_censor_weights, CensorWeights, UnitWeights};
use crate::counting::Regime;
use crate::error::{Error, Result};
use crate::estimators::{estimate_targets, TargetSpec};
use crate::simulator::{empirical_truth, mix_seed, simulate, CensoringScheme, SimScenario};
use crate::stepfun::StepCurve;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

const ORACLE_SALT: u64 = 0x0AC1E5EED;

/// Times where `truth` first reaches k/10 of its total mass, k = 1..9.
pub fn percentile_grid(truth: &StepCurve) -> Result<[f64; 9]> {
    let total = truth.final_value();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::DegenerateTruth);
    }
    let times = truth.jump_times();
    let values = truth.values();
    let mut grid = [0.0; 9];
    for k in 1..=9usize {
        let q = total * k as f64 / 10.0;
        let idx = values.partition_point(|&v| v < q).min(times.len() - 1);
        grid[k - 1] = times[idx];
    }
    Ok(grid)
}

/// Mean absolute deviation over the grid.
pub fn l1_error(truth: &StepCurve, estimate: &StepCurve, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&t| (truth.eval(t) - estimate.eval(t)).abs())
        .sum::<f64>()
        / grid.len() as f64
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Regime>,
    pub targets: Vec<TargetSpec>,
    pub seed: u64,
    pub threads: usize,
    pub weight_floor: f64,
    /// Sample size of the uncensored truth oracle.
    pub oracle_n: usize,
    /// When set, oracle curves are cached here keyed by scenario content.
    pub cache_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(seed: u64) -> Self {
        BenchConfig {
            ns: vec![100, 300],
            reps: 500,
            methods: vec![Regime::Ipcw, Regime::Fre],
            targets: vec![
                TargetSpec::parse("F:3:1").unwrap(),
                TargetSpec::parse("P:3:5:1").unwrap(),
            ],
            seed,
            threads: 1,
            weight_floor: crate::censor_weights::DEFAULT_WEIGHT_FLOOR,
            oracle_n: 10_000,
            cache_dir: None,
        }
    }
}

/// Aggregated result for one (n, method, target) cell.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub scenario: String,
    pub n: usize,
    pub method: Regime,
    pub target: TargetSpec,
    pub reps: usize,
    pub delta_mean: f64,
    pub delta_se: f64,
    /// Mean realized fraction of censored subjects at this n.
    pub censor_rate: f64,
    /// Per-replicate errors, for custom uncertainty summaries.
    pub deltas: Vec<f64>,
    pub wall_ms: u128,
}

pub fn write_reports_csv<W: Write>(reports: &[BenchReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scenario,n,method,target,delta_mean,delta_se,censor_rate")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.scenario, r.n, r.method, r.target, r.delta_mean, r.delta_se, r.censor_rate
        )?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct OracleCacheFile {
    curves: Vec<(String, StepCurve)>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Truth curves per target, from cache or a fresh oracle run.
pub fn oracle_curves(
    sc: &SimScenario,
    cfg: &BenchConfig,
) -> Result<BTreeMap<TargetSpec, StepCurve>> {
    let oracle_seed = mix_seed(&[cfg.seed, ORACLE_SALT]);
    let cache_path = cfg.cache_dir.as_ref().map(|dir| {
        let targets: Vec<String> = cfg.targets.iter().map(|t| t.to_string()).collect();
        let key = serde_json::json!({
            "scenario": sc,
            "oracle_n": cfg.oracle_n,
            "oracle_seed": oracle_seed,
            "targets": targets,
        });
        dir.join(format!("oracle-{:016x}.json", fnv1a(key.to_string().as_bytes())))
    });

    if let Some(path) = &cache_path {
        if let Ok(bytes) = std::fs::read(path) {
            if let Ok(file) = serde_json::from_slice::<OracleCacheFile>(&bytes) {
                let mut out = BTreeMap::new();
                for (name, curve) in file.curves {
                    out.insert(TargetSpec::parse(&name)?, curve);
                }
                if cfg.targets.iter().all(|t| out.contains_key(t)) {
                    return Ok(out);
                }
            }
        }
    }

    let curves = empirical_truth(sc, cfg.oracle_n, oracle_seed, &cfg.targets)?;
    if let Some(path) = &cache_path {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OracleCacheFile {
            curves: curves
                .iter()
                .map(|(t, c)| (t.to_string(), c.clone()))
                .collect(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
    }
    Ok(curves)
}

enum FittedWeights {
    Unit,
    Curves(crate::censor_weights::WeightCurveSet),
}

impl FittedWeights {
    fn as_dyn(&self) -> &dyn CensorWeights {
        match self {
            FittedWeights::Unit => &UnitWeights,
            FittedWeights::Curves(w) => w,
        }
    }
}

fn fit_weights(ds: &crate::records::Dataset, scheme: &CensoringScheme, floor: f64) -> Result<FittedWeights> {
    Ok(match scheme {
        CensoringScheme::None => FittedWeights::Unit,
        CensoringScheme::Independent { .. } => FittedWeights::Curves(km_censor_weights(ds, floor)),
        CensoringScheme::StageDependent { .. } => {
            FittedWeights::Curves(aalen_censor_weights(ds, floor)?.1)
        }
    })
}

struct ReplicateOutcome {
    censored_fraction: f64,
    /// Indexed by (method, target) in configuration order.
    deltas: Vec<f64>,
}

fn run_replicate(
    sc: &SimScenario,
    cfg: &BenchConfig,
    truth: &BTreeMap<TargetSpec, (StepCurve, [f64; 9])>,
    n: usize,
    rep: usize,
) -> Result<ReplicateOutcome> {
    let rep_seed = mix_seed(&[cfg.seed, n as u64, rep as u64, 1]);
    let td = simulate(&sc.with_n(n), rep_seed)?;
    let ds = &td.observed;
    let weights = fit_weights(ds, &sc.censoring, cfg.weight_floor)?;

    let mut deltas = Vec::with_capacity(cfg.methods.len() * cfg.targets.len());
    for &method in &cfg.methods {
        let bundles = estimate_targets(ds, weights.as_dyn(), method, &cfg.targets)?;
        for bundle in &bundles {
            let (truth_curve, grid) = &truth[&bundle.target];
            deltas.push(l1_error(truth_curve, &bundle.curve, grid));
        }
    }
    Ok(ReplicateOutcome {
        censored_fraction: ds.censored_fraction(),
        deltas,
    })
}

/// Run the full grid of (n, method, target) cells.
pub fn run_benchmark(sc: &SimScenario, cfg: &BenchConfig) -> Result<Vec<BenchReport>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidScenario("replicate count must be >= 1".into()));
    }
    if cfg.methods.contains(&Regime::Empirical) && !sc.censoring.is_none() {
        return Err(Error::InvalidScenario(
            "the empirical method requires an uncensored scenario".into(),
        ));
    }
    sc.validate()?;

    let oracle = oracle_curves(sc, cfg)?;
    let mut truth = BTreeMap::new();
    for (t, curve) in oracle {
        let grid = percentile_grid(&curve)?;
        truth.insert(t, (curve, grid));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(format!("thread pool: {e}")))?;

    let mut reports = Vec::new();
    for &n in &cfg.ns {
        let start = Instant::now();
        let outcomes: Result<Vec<ReplicateOutcome>> = pool.install(|| {
            (0..cfg.reps)
                .into_par_iter()
                .map(|rep| run_replicate(sc, cfg, &truth, n, rep))
                .collect()
        });
        let outcomes = outcomes?;
        let wall_ms = start.elapsed().as_millis();

        // Aggregate in replicate-index order: scheduler invariant.
        let censor_rate =
            outcomes.iter().map(|o| o.censored_fraction).sum::<f64>() / cfg.reps as f64;
        let mut cell = 0;
        for &method in &cfg.methods {
            for &target in &cfg.targets {
                let deltas: Vec<f64> = outcomes.iter().map(|o| o.deltas[cell]).collect();
                let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
                let se = if deltas.len() > 1 {
                    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
                        / (deltas.len() - 1) as f64;
                    (var / deltas.len() as f64).sqrt()
                } else {
                    0.0
                };
                reports.push(BenchReport {
                    scenario: sc.id.clone(),
                    n,
                    method,
                    target,
                    reps: cfg.reps,
                    delta_mean: mean,
                    delta_se: se,
                    censor_rate,
                    deltas,
                    wall_ms,
                });
                cell += 1;
            }
        }
    }
    Ok(reports)
}
