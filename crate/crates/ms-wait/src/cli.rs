//! Command-line interface: `estimate`, `simulate`, `benchmark`,
//! `transitions` and `curves` over CSV/JSON files.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error. All machine
//! output goes to the designated files; diagnostics go to stderr.

use crate::bench::{run_benchmark, write_reports_csv, BenchConfig};
use crate::censor_weights::{
    aalen_censor_weights, km_censor_weights, CensorWeights, UnitWeights, DEFAULT_WEIGHT_FLOOR,
};
use crate::counting::{empirical_counts, fre_counts, ipcw_counts, CountingSystem, Regime};
use crate::error::{Error, Result};
use crate::estimators::{estimate_target, stage_curves, TargetSpec};
use crate::fractional::{fractional_vector, write_psi_csv, IncidenceMap};
use crate::records::{parse_dataset_path, Dataset};
use crate::simulator::{simulate, SimScenario};
use crate::stage_graph::{StageGraph, StageGraphSpec, StageId};
use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "ms-wait",
    version,
    about = "Stage waiting-time estimation in progressive multi-stage survival models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for benchmark replicates.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Lower clamp for censoring weights.
    #[arg(long, global = true, default_value_t = DEFAULT_WEIGHT_FLOOR)]
    pub weight_floor: f64,

    /// Master seed; required by simulate and benchmark.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Empirical,
    Ipcw,
    Fre,
}

impl From<MethodArg> for Regime {
    fn from(m: MethodArg) -> Regime {
        match m {
            MethodArg::Empirical => Regime::Empirical,
            MethodArg::Ipcw => Regime::Ipcw,
            MethodArg::Fre => Regime::Fre,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CensoringArg {
    Independent,
    StageDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    F,
    P,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a conditional waiting-time distribution or incidence curve.
    Estimate {
        /// Subject CSV (long format).
        #[arg(long)]
        data: PathBuf,
        /// Stage graph JSON.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Censoring-weight model for ipcw/fre.
        #[arg(long, value_enum, default_value = "independent")]
        censoring: CensoringArg,
        /// F = waiting-time distribution, P = cumulative incidence.
        #[arg(long, value_enum)]
        quantity: QuantityArg,
        /// Conditioning stage k.
        #[arg(long)]
        from: u32,
        /// Target stage j.
        #[arg(long)]
        stage: u32,
        /// Destination stage j' (quantity P only).
        #[arg(long)]
        to: Option<u32>,
        /// Curve CSV output; a `.components.json` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the observed transition table (diagonal = censored in stage).
    Transitions {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Generate a synthetic cohort from a scenario JSON.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Observed (censored) view output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional full-data view output CSV.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Monte Carlo L1-error benchmark against a large-sample truth oracle.
    Benchmark {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "100,300")]
        ns: String,
        /// Comma-separated subset of {empirical,ipcw,fre}.
        #[arg(long, default_value = "ipcw,fre")]
        methods: String,
        /// Comma-separated targets, e.g. F:3:1,P:3:5:1.
        #[arg(long, default_value = "F:3:1,P:3:5:1")]
        targets: String,
        #[arg(long)]
        out: PathBuf,
        /// Truth-oracle sample size.
        #[arg(long, default_value_t = 10_000)]
        oracle_n: usize,
        /// Directory for cached truth-oracle curves.
        #[arg(long)]
        truth_cache: Option<PathBuf>,
    },
    /// Export counting-process values for one stage (debugging aid).
    Curves {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Stage whose counting system is exported.
        #[arg(long)]
        stage: u32,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "independent")]
        censoring: CensoringArg,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of cumulative Aalen coefficient curves.
        #[arg(long)]
        aalen_out: Option<PathBuf>,
        /// Optional CSV of fractional observations targeting --stage.
        #[arg(long)]
        psi_out: Option<PathBuf>,
    },
}

fn load_graph(path: &Path) -> Result<StageGraph> {
    let file = File::open(path)?;
    let spec: StageGraphSpec = serde_json::from_reader(file)?;
    StageGraph::from_spec(&spec)
}

fn load_scenario(path: &Path) -> Result<SimScenario> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidScenario(format!("--seed is required for {what}")))
}

enum Weights {
    Unit,
    Fitted(crate::censor_weights::WeightCurveSet),
}

impl Weights {
    fn as_dyn(&self) -> &dyn CensorWeights {
        match self {
            Weights::Unit => &UnitWeights,
            Weights::Fitted(w) => w,
        }
    }
}

fn fit_weights(ds: &Dataset, method: MethodArg, censoring: CensoringArg, floor: f64) -> Result<Weights> {
    Ok(match (method, censoring) {
        (MethodArg::Empirical, _) => Weights::Unit,
        (_, CensoringArg::Independent) => Weights::Fitted(km_censor_weights(ds, floor)),
        (_, CensoringArg::StageDependent) => {
            Weights::Fitted(aalen_censor_weights(ds, floor)?.1)
        }
    })
}

fn comma_list<T, F: Fn(&str) -> Result<T>>(s: &str, f: F) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(f)
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate {
            data,
            graph,
            method,
            censoring,
            quantity,
            from,
            stage,
            to,
            out,
        } => {
            let g = load_graph(&graph)?;
            let ds = parse_dataset_path(&data, &g)?;
            let target = match (quantity, to) {
                (QuantityArg::F, None) => TargetSpec::WaitingDistribution {
                    stage: StageId(stage),
                    given: StageId(from),
                },
                (QuantityArg::P, Some(to)) => TargetSpec::Incidence {
                    stage: StageId(stage),
                    dest: StageId(to),
                    given: StageId(from),
                },
                (QuantityArg::F, Some(_)) => {
                    return Err(Error::InvalidScenario("--to is only valid with --quantity p".into()))
                }
                (QuantityArg::P, None) => {
                    return Err(Error::InvalidScenario("--quantity p requires --to".into()))
                }
            };
            let weights = fit_weights(&ds, method, censoring, cli.weight_floor)?;
            let bundle = estimate_target(&ds, weights.as_dyn(), method.into(), target)?;
            bundle.curve.write_csv(File::create(&out)?)?;

            let sidecar = out.with_extension("components.json");
            let doc = serde_json::json!({
                "target": bundle.target.to_string(),
                "method": bundle.regime.to_string(),
                "path_factors": bundle.path_factors,
                "path_product": bundle.path_factors.iter().map(|f| f.p_inf).product::<f64>(),
                "survival_final": bundle.survival.final_value(),
                "truncated": bundle.truncated,
            });
            std::fs::write(&sidecar, serde_json::to_string_pretty(&doc)?)?;
            if bundle.truncated {
                eprintln!("warning: risk set exhausted before the last exit; curve truncated");
            }
            Ok(())
        }

        Command::Transitions { data, graph } => {
            let g = load_graph(&graph)?;
            let ds = parse_dataset_path(&data, &g)?;
            print!("{}", ds.transition_table());
            Ok(())
        }

        Command::Simulate {
            scenario,
            out,
            truth_out,
        } => {
            let seed = require_seed(cli.seed, "simulate")?;
            let sc = load_scenario(&scenario)?;
            let td = simulate(&sc, seed)?;
            td.observed.write_csv_path(&out)?;
            if let Some(path) = truth_out {
                td.truth.write_csv_path(&path)?;
            }
            Ok(())
        }

        Command::Benchmark {
            scenario,
            reps,
            ns,
            methods,
            targets,
            out,
            oracle_n,
            truth_cache,
        } => {
            let seed = require_seed(cli.seed, "benchmark")?;
            let sc = load_scenario(&scenario)?;
            let mut cfg = BenchConfig::new(seed);
            cfg.reps = reps;
            cfg.threads = cli.threads;
            cfg.weight_floor = cli.weight_floor;
            cfg.oracle_n = oracle_n;
            cfg.cache_dir = truth_cache;
            cfg.ns = comma_list(&ns, |p| {
                p.parse::<usize>()
                    .map_err(|_| Error::InvalidScenario(format!("bad sample size '{p}'")))
            })?;
            cfg.methods = comma_list(&methods, |p| match p {
                "empirical" => Ok(Regime::Empirical),
                "ipcw" => Ok(Regime::Ipcw),
                "fre" => Ok(Regime::Fre),
                _ => Err(Error::InvalidScenario(format!("bad method '{p}'"))),
            })?;
            cfg.targets = comma_list(&targets, TargetSpec::parse)?;
            let reports = run_benchmark(&sc, &cfg)?;
            write_reports_csv(&reports, File::create(&out)?)?;
            Ok(())
        }

        Command::Curves {
            data,
            graph,
            stage,
            method,
            censoring,
            out,
            aalen_out,
            psi_out,
        } => {
            let g = load_graph(&graph)?;
            let ds = parse_dataset_path(&data, &g)?;
            let j = StageId(stage);
            let weights = fit_weights(&ds, method, censoring, cli.weight_floor)?;

            let cs: CountingSystem = match method {
                MethodArg::Empirical => empirical_counts(&ds, j)?,
                MethodArg::Ipcw => ipcw_counts(&ds, weights.as_dyn(), j)?,
                MethodArg::Fre => {
                    let path = g.unique_path(g.root(), j)?;
                    let mut incidence = IncidenceMap::new();
                    let mut s_ipcw = None;
                    for &s in &path {
                        let sc = stage_curves(&ipcw_counts(&ds, weights.as_dyn(), s)?);
                        for (&dest, curve) in &sc.incidence {
                            incidence.insert(s, dest, curve.clone());
                        }
                        if s == j {
                            s_ipcw = Some(sc.survival);
                        }
                    }
                    let psi = fractional_vector(&ds, j, &g, &incidence)?;
                    if let Some(path) = &psi_out {
                        write_psi_csv(&ds, &psi, File::create(path)?)?;
                    }
                    fre_counts(&ds, weights.as_dyn(), j, &psi, &s_ipcw.expect("j on its own path"))?
                }
            };
            cs.write_csv(File::create(&out)?)?;

            if let Some(path) = aalen_out {
                let (fit, _) = aalen_censor_weights(&ds, cli.weight_floor)?;
                fit.write_csv(File::create(&path)?)?;
            }
            if method != MethodArg::Fre {
                if let Some(path) = psi_out {
                    let incidence = {
                        let mut m = IncidenceMap::new();
                        for &s in &g.unique_path(g.root(), j)? {
                            let sc = stage_curves(&ipcw_counts(&ds, weights.as_dyn(), s)?);
                            for (&dest, curve) in &sc.incidence {
                                m.insert(s, dest, curve.clone());
                            }
                        }
                        m
                    };
                    let psi = fractional_vector(&ds, j, &g, &incidence)?;
                    write_psi_csv(&ds, &psi, File::create(path)?)?;
                }
            }
            Ok(())
        }
    }
}
