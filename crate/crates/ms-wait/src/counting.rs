//! Waiting-time-scale counting processes and at-risk sets.
//!
//! For one stage `j`, the system tracks the exit counts `N_j`, the
//! destination-split counts `N_jj'` and the at-risk mass `Y_j`, all on the
//! waiting-time scale, under one of three regimes:
//!
//! * `Empirical` — unweighted counts; requires fully uncensored data;
//! * `Ipcw` — every contribution divided by the subject's probability of
//!   remaining uncensored (`1/K_i(U_ij-)` for events, `1/K_i(T_ij + t)` for
//!   the at-risk mass);
//! * `Fre` — IPCW counts with the at-risk set augmented by fractional mass
//!   from subjects censored upstream of `j`.
//!
//! Event and at-risk values are materialized on the grid of observed exit
//! waits; at-risk values include mass departing at the grid time (subjects
//! with waits tied at `t` are at risk at `t`). Exact pointwise evaluators
//! are provided for querying the at-risk functions off the grid.

use crate::censor_weights::CensorWeights;
use crate::error::{Error, Result};
use crate::fractional::{FractionalAssignment, Provenance};
use crate::records::Dataset;
use crate::stage_graph::StageId;
use crate::stepfun::{JumpMeasure, StepCurve};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    Empirical,
    Ipcw,
    Fre,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Empirical => write!(f, "empirical"),
            Regime::Ipcw => write!(f, "ipcw"),
            Regime::Fre => write!(f, "fre"),
        }
    }
}

/// One subject's stake in stage `j`.
struct Entrant {
    subject: usize,
    entry: f64,
    wait: f64,
    exit_observed: bool,
    dest: Option<StageId>,
}

fn entrants(ds: &Dataset, j: StageId) -> Vec<Entrant> {
    ds.records()
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.visit(j).map(|v| Entrant {
                subject: i,
                entry: v.entry,
                wait: v.waiting_time(),
                exit_observed: r.exit_observed(j),
                dest: r.next_stage_after(j),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CountingSystem {
    pub stage: StageId,
    pub regime: Regime,
    grid: Vec<f64>,
    dn_total: Vec<f64>,
    dn_to: BTreeMap<StageId, Vec<f64>>,
    at_risk: Vec<f64>,
}

impl CountingSystem {
    /// Observed exit waits carrying events, ascending.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dn_total(&self) -> &[f64] {
        &self.dn_total
    }

    pub fn dn_to(&self, dest: StageId) -> Result<&[f64]> {
        self.dn_to
            .get(&dest)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownDestination {
                stage: self.stage,
                dest,
            })
    }

    pub fn destinations(&self) -> impl Iterator<Item = StageId> + '_ {
        self.dn_to.keys().copied()
    }

    /// At-risk mass at each grid time, inclusive of departing mass.
    pub fn at_risk(&self) -> &[f64] {
        &self.at_risk
    }

    pub fn total_exits(&self) -> JumpMeasure {
        JumpMeasure::from_events(self.grid.iter().copied().zip(self.dn_total.iter().copied()).collect())
    }

    pub fn exits_to(&self, dest: StageId) -> Result<JumpMeasure> {
        let dn = self.dn_to(dest)?;
        Ok(JumpMeasure::from_events(
            self.grid.iter().copied().zip(dn.iter().copied()).collect(),
        ))
    }

    /// Cumulative exit-count curve `N_j`.
    pub fn n_total_curve(&self) -> StepCurve {
        cumulative_curve(&self.grid, &self.dn_total)
    }

    /// Cumulative transition-count curve `N_jj'`.
    pub fn n_to_curve(&self, dest: StageId) -> Result<StepCurve> {
        Ok(cumulative_curve(&self.grid, self.dn_to(dest)?))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dests: Vec<StageId> = self.destinations().collect();
        write!(w, "t,at_risk,n_total")?;
        for d in &dests {
            write!(w, ",n_to_{d}")?;
        }
        writeln!(w)?;
        let mut cum_total = 0.0;
        let mut cum: BTreeMap<StageId, f64> = dests.iter().map(|&d| (d, 0.0)).collect();
        for (k, &t) in self.grid.iter().enumerate() {
            cum_total += self.dn_total[k];
            write!(w, "{t},{},{}", self.at_risk[k], cum_total)?;
            for d in &dests {
                let c = cum.get_mut(d).unwrap();
                *c += self.dn_to[d][k];
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn cumulative_curve(grid: &[f64], increments: &[f64]) -> StepCurve {
    let mut acc = 0.0;
    let jumps = grid
        .iter()
        .zip(increments)
        .map(|(&t, &d)| {
            acc += d;
            (t, acc)
        })
        .collect();
    StepCurve::new(0.0, jumps).expect("grid is strictly increasing")
}

fn build(ds: &Dataset, weights: &dyn CensorWeights, j: StageId, regime: Regime) -> Result<CountingSystem> {
    let children = ds.graph().successors(j)?.to_vec();
    let ents = entrants(ds, j);

    let mut grid: Vec<f64> = ents
        .iter()
        .filter(|e| e.exit_observed)
        .map(|e| e.wait)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let m = grid.len();
    let mut dn_total = vec![0.0; m];
    let mut dn_to: BTreeMap<StageId, Vec<f64>> =
        children.iter().map(|&c| (c, vec![0.0; m])).collect();
    for e in &ents {
        if !e.exit_observed {
            continue;
        }
        let k = grid.partition_point(|&t| t < e.wait);
        debug_assert_eq!(grid[k], e.wait);
        let w = 1.0 / weights.at_left(e.subject, e.entry + e.wait);
        dn_total[k] += w;
        let dest = e.dest.expect("observed exits carry a destination");
        dn_to.get_mut(&dest).expect("destination is a graph child")[k] += w;
    }

    let mut at_risk = vec![0.0; m];
    if weights.is_unit() {
        // unweighted: suffix counts over sorted waits
        let mut waits: Vec<f64> = ents.iter().map(|e| e.wait).collect();
        waits.sort_by(f64::total_cmp);
        for (k, &t) in grid.iter().enumerate() {
            at_risk[k] = (waits.len() - waits.partition_point(|&w| w < t)) as f64;
        }
    } else {
        for (k, &t) in grid.iter().enumerate() {
            let mut y = 0.0;
            for e in &ents {
                if e.wait >= t {
                    y += 1.0 / weights.at(e.subject, e.entry + t);
                }
            }
            at_risk[k] = y;
        }
    }

    assert!(dn_total.iter().all(|&d| d >= 0.0), "exit counts must not decrease");
    if regime == Regime::Empirical {
        assert!(
            at_risk.windows(2).all(|w| w[0] >= w[1]),
            "empirical at-risk mass must be nonincreasing"
        );
    }

    Ok(CountingSystem {
        stage: j,
        regime,
        grid,
        dn_total,
        dn_to,
        at_risk,
    })
}

/// Unweighted counts from fully uncensored data.
pub fn empirical_counts(ds: &Dataset, j: StageId) -> Result<CountingSystem> {
    if let Some(r) = ds.records().iter().find(|r| r.is_censored()) {
        return Err(Error::CensoredDataInEmpiricalRegime(r.id.clone()));
    }
    build(ds, &crate::censor_weights::UnitWeights, j, Regime::Empirical)
}

/// Inverse-probability-of-censoring weighted counts.
pub fn ipcw_counts(ds: &Dataset, weights: &dyn CensorWeights, j: StageId) -> Result<CountingSystem> {
    build(ds, weights, j, Regime::Ipcw)
}

/// IPCW counts with the at-risk set augmented by fractional mass
/// `psi_i * S_j(t)` from subjects censored upstream of `j`. `s_ipcw` is the
/// IPCW survival curve of the stage-`j` waiting time.
pub fn fre_counts(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    j: StageId,
    psi: &[FractionalAssignment],
    s_ipcw: &StepCurve,
) -> Result<CountingSystem> {
    let mut cs = build(ds, weights, j, Regime::Fre)?;
    let upstream_mass: f64 = psi
        .iter()
        .filter(|a| a.provenance == Provenance::CensoredUpstream)
        .map(|a| a.value)
        .sum();
    if upstream_mass > 0.0 {
        for (k, &t) in cs.grid.clone().iter().enumerate() {
            cs.at_risk[k] += upstream_mass * s_ipcw.eval(t);
        }
    }
    Ok(cs)
}

/// Exact `Y_j(t)` under IPCW weighting at an arbitrary time.
pub fn ipcw_at_risk_at(ds: &Dataset, weights: &dyn CensorWeights, j: StageId, t: f64) -> f64 {
    entrants(ds, j)
        .iter()
        .filter(|e| e.wait >= t)
        .map(|e| 1.0 / weights.at(e.subject, e.entry + t))
        .sum()
}

/// Exact FRE at-risk value at an arbitrary time.
pub fn fre_at_risk_at(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    j: StageId,
    psi: &[FractionalAssignment],
    s_ipcw: &StepCurve,
    t: f64,
) -> f64 {
    let upstream_mass: f64 = psi
        .iter()
        .filter(|a| a.provenance == Provenance::CensoredUpstream)
        .map(|a| a.value)
        .sum();
    ipcw_at_risk_at(ds, weights, j, t) + upstream_mass * s_ipcw.eval(t)
}
