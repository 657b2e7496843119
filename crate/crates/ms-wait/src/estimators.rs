//! Stage-level survival and incidence curves and the conditional quantities
//! built from them.
//!
//! For a stage `j` the product-limit estimator gives the waiting-time
//! survival `S_j`, and the product-integral against the destination-split
//! hazard gives each cumulative incidence `P_jj'`. Conditional on an
//! ancestor stage `k`, the chain rule over the unique path multiplies in the
//! limiting branch probabilities of every edge between `k` and `j`:
//!
//! * waiting-time distribution: `F_{j|k}(t) = [1 - S_j(t)] * prod P(inf)`
//! * incidence:                 `P_{jj'|k}(t) = P_{jj'}(t) * prod P(inf)`
//!
//! The FRE regime reuses the IPCW numerators and replaces the at-risk set by
//! its fraction-augmented version; fractional observations are always fed by
//! the IPCW incidence curves (computed in a first pass).

use crate::censor_weights::CensorWeights;
use crate::counting::{empirical_counts, fre_counts, ipcw_counts, CountingSystem, Regime};
use crate::error::{Error, Result};
use crate::fractional::{fractional_vector, IncidenceMap};
use crate::records::Dataset;
use crate::stage_graph::StageId;
use crate::stepfun::StepCurve;
use std::collections::BTreeMap;

/// Survival and incidence curves of one stage under one regime.
#[derive(Debug, Clone)]
pub struct StageCurves {
    pub stage: StageId,
    pub survival: StepCurve,
    pub incidence: BTreeMap<StageId, StepCurve>,
    /// True when the at-risk mass hit zero before the last exit and the
    /// remaining increments were dropped.
    pub truncated: bool,
}

/// Compute `S_j` and every `P_jj'` in one pass over the counting grid.
pub fn stage_curves(cs: &CountingSystem) -> StageCurves {
    let grid = cs.grid();
    let dests: Vec<StageId> = cs.destinations().collect();
    let mut s_prev = 1.0;
    let mut s_jumps = Vec::new();
    let mut p_acc: BTreeMap<StageId, f64> = dests.iter().map(|&d| (d, 0.0)).collect();
    let mut p_jumps: BTreeMap<StageId, Vec<(f64, f64)>> =
        dests.iter().map(|&d| (d, Vec::new())).collect();
    let mut truncated = false;

    for (k, &t) in grid.iter().enumerate() {
        let d = cs.dn_total()[k];
        if d <= 0.0 {
            continue;
        }
        let y = cs.at_risk()[k];
        if y <= 0.0 {
            truncated = true;
            break;
        }
        for &dest in &dests {
            let dd = cs.dn_to(dest).expect("destination from own key set")[k];
            if dd > 0.0 {
                let acc = p_acc.get_mut(&dest).unwrap();
                *acc += s_prev * dd / y;
                p_jumps.get_mut(&dest).unwrap().push((t, *acc));
            }
        }
        s_prev *= 1.0 - d / y;
        s_jumps.push((t, s_prev));
    }

    StageCurves {
        stage: cs.stage,
        survival: StepCurve::new(1.0, s_jumps).expect("grid ascends"),
        incidence: p_jumps
            .into_iter()
            .map(|(d, j)| (d, StepCurve::new(0.0, j).expect("grid ascends")))
            .collect(),
        truncated,
    }
}

/// Kaplan–Meier survival of the stage waiting time. Unlike the bundle
/// pipeline this propagates an exhausted risk set as an error.
pub fn waiting_survival(cs: &CountingSystem) -> Result<StepCurve> {
    crate::stepfun::product_limit(&cs.total_exits(), cs.at_risk())
}

/// Aalen–Johansen cumulative incidence toward one child stage.
pub fn cumulative_incidence(cs: &CountingSystem, dest: StageId) -> Result<StepCurve> {
    cs.dn_to(dest)?; // destination check
    let sc = stage_curves(cs);
    if sc.truncated {
        // match waiting_survival's contract on degenerate risk sets
        let t = *cs
            .grid()
            .last()
            .expect("truncation implies a nonempty grid");
        return Err(Error::RiskSetExhausted { time: t });
    }
    Ok(sc
        .incidence
        .get(&dest)
        .cloned()
        .unwrap_or_else(|| StepCurve::constant(0.0)))
}

/// What to estimate: `F_{j|k}` or `P_{jj'|k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TargetSpec {
    WaitingDistribution { stage: StageId, given: StageId },
    Incidence { stage: StageId, dest: StageId, given: StageId },
}

impl TargetSpec {
    pub fn stage(&self) -> StageId {
        match *self {
            TargetSpec::WaitingDistribution { stage, .. } => stage,
            TargetSpec::Incidence { stage, .. } => stage,
        }
    }

    pub fn given(&self) -> StageId {
        match *self {
            TargetSpec::WaitingDistribution { given, .. } => given,
            TargetSpec::Incidence { given, .. } => given,
        }
    }

    /// Parse `F:<stage>:<given>` or `P:<stage>:<dest>:<given>`.
    pub fn parse(s: &str) -> Result<TargetSpec> {
        let bad = || Error::InvalidScenario(format!("bad target spec '{s}'"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| p.trim().parse::<u32>().map(StageId).map_err(|_| bad());
        match parts.as_slice() {
            ["F", j, k] => Ok(TargetSpec::WaitingDistribution {
                stage: num(j)?,
                given: num(k)?,
            }),
            ["P", j, jp, k] => Ok(TargetSpec::Incidence {
                stage: num(j)?,
                dest: num(jp)?,
                given: num(k)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TargetSpec::WaitingDistribution { stage, given } => write!(f, "F:{stage}:{given}"),
            TargetSpec::Incidence { stage, dest, given } => {
                write!(f, "P:{stage}:{dest}:{given}")
            }
        }
    }
}

/// A branch-probability factor along the conditioning path.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PathFactor {
    pub from: StageId,
    pub to: StageId,
    pub p_inf: f64,
}

/// An estimated conditional curve with its components.
#[derive(Debug, Clone)]
pub struct EstimateBundle {
    pub regime: Regime,
    pub target: TargetSpec,
    pub curve: StepCurve,
    /// The stage-level survival curve `S_j`.
    pub survival: StepCurve,
    /// `P(inf)` of every edge between the conditioning stage and `j`.
    pub path_factors: Vec<PathFactor>,
    pub truncated: bool,
}

/// Stage-level curves for a path-closed set of stages (every stage's root
/// path is contained in the set), under the requested regime.
fn regime_curves(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    regime: Regime,
    stages: &[StageId],
) -> Result<BTreeMap<StageId, StageCurves>> {
    let graph = ds.graph();
    let mut out = BTreeMap::new();
    match regime {
        Regime::Empirical => {
            for &s in stages {
                out.insert(s, stage_curves(&empirical_counts(ds, s)?));
            }
        }
        Regime::Ipcw => {
            for &s in stages {
                out.insert(s, stage_curves(&ipcw_counts(ds, weights, s)?));
            }
        }
        Regime::Fre => {
            // Pass 1: IPCW curves supply the survival factor and the
            // incidence curves behind the fractional observations.
            let mut ipcw: BTreeMap<StageId, StageCurves> = BTreeMap::new();
            let mut incidence = IncidenceMap::new();
            for &s in stages {
                let sc = stage_curves(&ipcw_counts(ds, weights, s)?);
                for (&dest, curve) in &sc.incidence {
                    incidence.insert(s, dest, curve.clone());
                }
                ipcw.insert(s, sc);
            }
            // Pass 2: rebuild each stage with the fraction-augmented risk set.
            for &s in stages {
                let psi = fractional_vector(ds, s, graph, &incidence)?;
                let cs = fre_counts(ds, weights, s, &psi, &ipcw[&s].survival)?;
                out.insert(s, stage_curves(&cs));
            }
        }
    }
    Ok(out)
}

/// Union of the root paths of every target stage, in root-first order.
fn root_path_closure(ds: &Dataset, targets: &[TargetSpec]) -> Result<Vec<StageId>> {
    let graph = ds.graph();
    let mut seen = std::collections::BTreeSet::new();
    let mut ordered = Vec::new();
    for t in targets {
        for s in graph.unique_path(graph.root(), t.stage())? {
            if seen.insert(s) {
                ordered.push(s);
            }
        }
    }
    Ok(ordered)
}

/// Estimate several targets sharing one pass of stage-level curve building.
pub fn estimate_targets(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    regime: Regime,
    targets: &[TargetSpec],
) -> Result<Vec<EstimateBundle>> {
    let stages = root_path_closure(ds, targets)?;
    let curves = regime_curves(ds, weights, regime, &stages)?;
    targets
        .iter()
        .map(|&t| assemble_bundle(ds, &curves, regime, t))
        .collect()
}

fn assemble_bundle(
    ds: &Dataset,
    curves: &BTreeMap<StageId, StageCurves>,
    regime: Regime,
    target: TargetSpec,
) -> Result<EstimateBundle> {
    let (j, k) = (target.stage(), target.given());
    let factors = path_factors(ds, curves, k, j)?;
    let product: f64 = factors.iter().map(|f| f.p_inf).product();
    let sj = &curves[&j];
    let curve = match target {
        TargetSpec::WaitingDistribution { .. } => sj.survival.map_values(|s| (1.0 - s) * product),
        TargetSpec::Incidence { dest, .. } => {
            if !ds.graph().is_edge(j, dest) {
                return Err(Error::UnknownDestination { stage: j, dest });
            }
            sj.incidence
                .get(&dest)
                .cloned()
                .unwrap_or_else(|| StepCurve::constant(0.0))
                .map_values(|p| p * product)
        }
    };
    Ok(EstimateBundle {
        regime,
        target,
        curve,
        survival: sj.survival.clone(),
        path_factors: factors,
        truncated: curves.values().any(|c| c.truncated),
    })
}

fn path_factors(
    ds: &Dataset,
    curves: &BTreeMap<StageId, StageCurves>,
    k: StageId,
    j: StageId,
) -> Result<Vec<PathFactor>> {
    let edges = ds.graph().path_edges(k, j)?;
    edges
        .iter()
        .map(|&(a, b)| {
            let p_inf = curves[&a]
                .incidence
                .get(&b)
                .map(StepCurve::final_value)
                .unwrap_or(0.0);
            Ok(PathFactor { from: a, to: b, p_inf })
        })
        .collect()
}

/// `F_{j|k}(t)`: probability of entering stage `j` and leaving it within
/// waiting time `t`, conditional on a visit to ancestor stage `k`.
pub fn conditional_waiting_distribution(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    regime: Regime,
    j: StageId,
    k: StageId,
) -> Result<EstimateBundle> {
    estimate_target(
        ds,
        weights,
        regime,
        TargetSpec::WaitingDistribution { stage: j, given: k },
    )
}

/// `P_{jj'|k}(t)`: probability of moving from stage `j` to child `j'` within
/// waiting time `t` of entering `j`, conditional on a visit to `k`.
pub fn conditional_incidence(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    regime: Regime,
    j: StageId,
    dest: StageId,
    k: StageId,
) -> Result<EstimateBundle> {
    estimate_target(
        ds,
        weights,
        regime,
        TargetSpec::Incidence { stage: j, dest, given: k },
    )
}

/// Estimate a single target.
pub fn estimate_target(
    ds: &Dataset,
    weights: &dyn CensorWeights,
    regime: Regime,
    target: TargetSpec,
) -> Result<EstimateBundle> {
    Ok(estimate_targets(ds, weights, regime, &[target])?
        .pop()
        .expect("one bundle per target"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censor_weights::UnitWeights;
    use crate::records::parse_dataset;
    use crate::stage_graph::StageGraph;
    use approx::assert_abs_diff_eq;

    fn id(v: u32) -> StageId {
        StageId(v)
    }

    fn six() -> StageGraph {
        StageGraph::six_stage_example()
    }

    // Two subjects 1 -> 3 (waits in 1: 1 and 2; waits in 3: both 1, exiting
    // to 5), one subject 1 -> 4 (wait 1). Everyone reaches stage 1 from the
    // root with unit waits.
    fn three_subject_fixture() -> Dataset {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   a,0,0.0,1.0,to:1\n\
                   a,1,1.0,2.0,to:3\n\
                   a,3,2.0,3.0,to:5\n\
                   a,5,3.0,3.0,terminal\n\
                   b,0,0.0,1.0,to:1\n\
                   b,1,1.0,3.0,to:3\n\
                   b,3,3.0,4.0,to:5\n\
                   b,5,4.0,4.0,terminal\n\
                   c,0,0.0,1.0,to:1\n\
                   c,1,1.0,2.0,to:4\n\
                   c,4,2.0,2.0,terminal\n";
        parse_dataset(csv.as_bytes(), &six()).unwrap()
    }

    #[test]
    fn survival_hand_example() {
        let ds = three_subject_fixture();
        let cs = empirical_counts(&ds, id(1)).unwrap();
        let s = waiting_survival(&cs).unwrap();
        // waits {1, 1, 2}: S(1) = 1/3, S(2) = 0
        assert_abs_diff_eq!(s.eval(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.eval(2.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn incidence_hand_example() {
        let ds = three_subject_fixture();
        let cs = empirical_counts(&ds, id(1)).unwrap();
        // P_13: jump at 1 of S(1-)*dN/Y = 1 * 1/3, jump at 2 of (1/3)*(1/1)
        let p13 = cumulative_incidence(&cs, id(3)).unwrap();
        assert_abs_diff_eq!(p13.eval(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p13.final_value(), 2.0 / 3.0, epsilon = 1e-15);
        let p14 = cumulative_incidence(&cs, id(4)).unwrap();
        assert_abs_diff_eq!(p14.final_value(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(
            cumulative_incidence(&cs, id(5)),
            Err(Error::UnknownDestination { .. })
        ));
    }

    #[test]
    fn conservation_at_jump_times() {
        let ds = three_subject_fixture();
        for &j in &[id(0), id(1), id(3)] {
            let cs = empirical_counts(&ds, j).unwrap();
            let sc = stage_curves(&cs);
            for &t in sc.survival.jump_times() {
                let total: f64 = sc.incidence.values().map(|p| p.eval(t)).sum();
                assert_abs_diff_eq!(sc.survival.eval(t) + total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conditional_distribution_hand_example() {
        let ds = three_subject_fixture();
        let b = conditional_waiting_distribution(&ds, &UnitWeights, Regime::Empirical, id(3), id(1))
            .unwrap();
        // F_{3|1}(1) = [1 - S_3(1)] * P_13(inf) = 1 * 2/3
        assert_abs_diff_eq!(b.curve.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(b.path_factors.len(), 1);
        assert_abs_diff_eq!(b.path_factors[0].p_inf, 2.0 / 3.0, epsilon = 1e-15);
        // F at infinity equals the path product times 1 - S_j(inf)
        assert_abs_diff_eq!(
            b.curve.final_value(),
            (1.0 - b.survival.final_value()) * 2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn conditional_on_self_is_one_minus_survival() {
        let ds = three_subject_fixture();
        let b = conditional_waiting_distribution(&ds, &UnitWeights, Regime::Empirical, id(3), id(3))
            .unwrap();
        assert!(b.path_factors.is_empty());
        for &t in &[0.5, 1.0, 2.0] {
            assert_abs_diff_eq!(b.curve.eval(t), 1.0 - b.survival.eval(t), epsilon = 1e-15);
        }
    }

    #[test]
    fn conditional_incidence_hand_example() {
        let ds = three_subject_fixture();
        let b = conditional_incidence(&ds, &UnitWeights, Regime::Empirical, id(3), id(5), id(1))
            .unwrap();
        // P_{35|1}(1) = P_35(1) * P_13(inf) = 1 * 2/3
        assert_abs_diff_eq!(b.curve.eval(1.0), 2.0 / 3.0, epsilon = 1e-15);
        // conditioning on the stage itself drops the factor
        let b2 = conditional_incidence(&ds, &UnitWeights, Regime::Empirical, id(3), id(5), id(3))
            .unwrap();
        assert_abs_diff_eq!(b2.curve.eval(1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn no_path_is_an_error() {
        let ds = three_subject_fixture();
        assert!(matches!(
            conditional_waiting_distribution(&ds, &UnitWeights, Regime::Empirical, id(3), id(2)),
            Err(Error::NoPath { .. })
        ));
    }

    #[test]
    fn regimes_coincide_on_uncensored_data() {
        let ds = three_subject_fixture();
        let f_emp =
            conditional_waiting_distribution(&ds, &UnitWeights, Regime::Empirical, id(3), id(1))
                .unwrap();
        let f_ipcw =
            conditional_waiting_distribution(&ds, &UnitWeights, Regime::Ipcw, id(3), id(1))
                .unwrap();
        let f_fre = conditional_waiting_distribution(&ds, &UnitWeights, Regime::Fre, id(3), id(1))
            .unwrap();
        assert_eq!(f_emp.curve, f_ipcw.curve);
        assert_eq!(f_emp.curve, f_fre.curve);
    }

    #[test]
    fn target_spec_round_trip() {
        for s in ["F:3:1", "P:3:5:1"] {
            let t = TargetSpec::parse(s).unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!(TargetSpec::parse("Q:1:2").is_err());
        assert!(TargetSpec::parse("F:x:1").is_err());
    }
}
