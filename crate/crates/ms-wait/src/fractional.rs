//! Fractional observations: the probability that a subject censored upstream
//! of a target stage would eventually have entered it.
//!
//! A subject observed entering the target contributes 1; a subject observed
//! in any stage off the root-to-target path contributes 0; a subject
//! censored in a path stage contributes the residual transition probability
//! out of the censoring stage times the branching probabilities of the
//! remaining path edges. Incidence curves feeding these products are always
//! the IPCW estimates.

use crate::error::{Error, Result};
use crate::records::{Dataset, SubjectRecord};
use crate::stage_graph::{StageGraph, StageId};
use crate::stepfun::StepCurve;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ObservedEntry,
    OffPath,
    CensoredUpstream,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::ObservedEntry => write!(f, "observed_entry"),
            Provenance::OffPath => write!(f, "off_path"),
            Provenance::CensoredUpstream => write!(f, "censored_upstream"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalAssignment {
    pub subject: usize,
    pub target: StageId,
    /// Clamped to `[0, 1]`.
    pub value: f64,
    /// Pre-clamp value, kept for diagnostics.
    pub raw: f64,
    pub provenance: Provenance,
}

/// Cumulative incidence curves keyed by graph edge.
#[derive(Debug, Clone, Default)]
pub struct IncidenceMap {
    curves: BTreeMap<(StageId, StageId), StepCurve>,
}

impl IncidenceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: StageId, to: StageId, curve: StepCurve) {
        self.curves.insert((from, to), curve);
    }

    pub fn get(&self, from: StageId, to: StageId) -> Result<&StepCurve> {
        self.curves
            .get(&(from, to))
            .ok_or(Error::MissingIncidenceCurve { from, to })
    }
}

/// Fractional observation of one record for target stage `j`.
pub fn fractional_observation(
    rec: &SubjectRecord,
    subject: usize,
    j: StageId,
    graph: &StageGraph,
    incidence: &IncidenceMap,
) -> Result<FractionalAssignment> {
    let done = |value: f64, raw: f64, provenance| {
        Ok(FractionalAssignment {
            subject,
            target: j,
            value,
            raw,
            provenance,
        })
    };

    if rec.entry_observed(j) {
        return done(1.0, 1.0, Provenance::ObservedEntry);
    }

    let path = graph.unique_path(graph.root(), j)?;
    let on_path: BTreeSet<StageId> = path.iter().copied().collect();
    if rec.visits.iter().any(|v| !on_path.contains(&v.stage)) {
        return done(0.0, 0.0, Provenance::OffPath);
    }

    // Every visited stage is on the path and the target was never reached,
    // so the record ends censored in some path stage j^c strictly before j.
    debug_assert!(rec.is_censored());
    let censor_visit = rec.final_visit();
    let jc = censor_visit.stage;
    let censor_wait = censor_visit.waiting_time();

    let edges = graph.path_edges(jc, j)?;
    let (first_from, first_to) = edges[0];
    let first = incidence.get(first_from, first_to)?;
    let mut raw = first.final_value() - first.eval(censor_wait);
    for &(a, b) in &edges[1..] {
        raw *= incidence.get(a, b)?.final_value();
    }
    done(raw.clamp(0.0, 1.0), raw, Provenance::CensoredUpstream)
}

/// Fractional observations of every record in the dataset.
pub fn fractional_vector(
    ds: &Dataset,
    j: StageId,
    graph: &StageGraph,
    incidence: &IncidenceMap,
) -> Result<Vec<FractionalAssignment>> {
    ds.records()
        .iter()
        .enumerate()
        .map(|(i, r)| fractional_observation(r, i, j, graph, incidence))
        .collect()
}

/// Diagnostic export: `subject_id,target_stage,psi,provenance`.
pub fn write_psi_csv<W: Write>(
    ds: &Dataset,
    psi: &[FractionalAssignment],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "subject_id,target_stage,psi,provenance")?;
    for a in psi {
        writeln!(
            w,
            "{},{},{},{}",
            ds.records()[a.subject].id,
            a.target,
            a.value,
            a.provenance
        )?;
    }
    Ok(())
}
