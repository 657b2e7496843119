//! Subject histories under right censoring: per-stage entry/exit times,
//! derived entry/exit indicators, CSV ingestion and transition summaries.
//!
//! CSV layout is long format, one row per stage visit:
//! `subject_id,stage,entry_time,exit_time,status` with
//! `status in {to:<stage_id>, censored, terminal}`. Rows of one subject are
//! matched on `exit_time == next entry_time`, must follow graph edges and
//! must start at the root.

use crate::error::{Error, Result};
use crate::stage_graph::{StageGraph, StageId};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

/// One observed stage occupancy. For a censored final visit the exit time is
/// the censoring time; for a terminal-stage visit the exit is the entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StageVisit {
    pub stage: StageId,
    pub entry: f64,
    pub exit: f64,
}

impl StageVisit {
    pub fn waiting_time(&self) -> f64 {
        self.exit - self.entry
    }
}

/// How a subject's observation ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalStatus {
    /// Follow-up ended at calendar time `C` with the subject still in a
    /// transient stage; the final visit's exit is unobserved.
    Censored(f64),
    /// The subject was observed entering a terminal stage; no further
    /// transitions are possible.
    InTerminalStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub visits: Vec<StageVisit>,
    pub status: TerminalStatus,
}

impl SubjectRecord {
    pub fn visit(&self, j: StageId) -> Option<&StageVisit> {
        self.visits.iter().find(|v| v.stage == j)
    }

    /// Entry indicator: was the subject observed entering stage `j`?
    pub fn entry_observed(&self, j: StageId) -> bool {
        self.visit(j).is_some()
    }

    /// Exit indicator: was the subject observed leaving stage `j`?
    /// Only the final visited stage can have an unobserved exit.
    pub fn exit_observed(&self, j: StageId) -> bool {
        self.visits
            .iter()
            .position(|v| v.stage == j)
            .is_some_and(|k| k + 1 < self.visits.len())
    }

    /// Observed waiting time `U_ij - T_ij` in stage `j`.
    pub fn waiting_time(&self, j: StageId) -> Result<f64> {
        self.visit(j)
            .map(StageVisit::waiting_time)
            .ok_or(Error::StageNotVisited(j))
    }

    /// The stage entered on leaving `j`, when that transition was observed.
    pub fn next_stage_after(&self, j: StageId) -> Option<StageId> {
        let k = self.visits.iter().position(|v| v.stage == j)?;
        self.visits.get(k + 1).map(|v| v.stage)
    }

    pub fn final_visit(&self) -> &StageVisit {
        self.visits.last().expect("records have at least one visit")
    }

    pub fn is_censored(&self) -> bool {
        matches!(self.status, TerminalStatus::Censored(_))
    }

    pub fn censor_time(&self) -> Option<f64> {
        match self.status {
            TerminalStatus::Censored(c) => Some(c),
            TerminalStatus::InTerminalStage => None,
        }
    }

    /// End of observation: the censoring time, or the final transition time
    /// for subjects absorbed in a terminal stage.
    pub fn follow_up_end(&self) -> f64 {
        match self.status {
            TerminalStatus::Censored(c) => c,
            TerminalStatus::InTerminalStage => self.final_visit().entry,
        }
    }

    /// Stage occupied just before calendar time `t` (predictable version).
    pub fn stage_before(&self, t: f64) -> StageId {
        let mut current = self.visits[0].stage;
        for v in &self.visits {
            if v.entry < t {
                current = v.stage;
            } else {
                break;
            }
        }
        current
    }

    fn validate(&self, graph: &StageGraph) -> Result<()> {
        if self.visits.is_empty() {
            return Err(Error::MalformedRow {
                line: None,
                msg: format!("subject {} has no visits", self.id),
            });
        }
        let mut seen = BTreeSet::new();
        for v in &self.visits {
            if !graph.contains(v.stage) {
                return Err(Error::UnknownStage(v.stage));
            }
            if !seen.insert(v.stage) {
                return Err(Error::DuplicateStageVisit {
                    subject: self.id.clone(),
                    stage: v.stage,
                });
            }
            if !v.entry.is_finite() || !v.exit.is_finite() || v.entry < 0.0 {
                return Err(Error::TimeOrderViolation {
                    subject: self.id.clone(),
                    msg: "times must be finite and nonnegative".into(),
                });
            }
            if v.exit < v.entry {
                return Err(Error::TimeOrderViolation {
                    subject: self.id.clone(),
                    msg: format!("stage {}: exit {} before entry {}", v.stage, v.exit, v.entry),
                });
            }
        }
        if self.visits[0].stage != graph.root() {
            return Err(Error::EdgeViolation {
                subject: self.id.clone(),
                from: graph.root(),
                to: self.visits[0].stage,
            });
        }
        for w in self.visits.windows(2) {
            if !graph.is_edge(w[0].stage, w[1].stage) {
                return Err(Error::EdgeViolation {
                    subject: self.id.clone(),
                    from: w[0].stage,
                    to: w[1].stage,
                });
            }
            if w[0].exit != w[1].entry {
                return Err(Error::TimeOrderViolation {
                    subject: self.id.clone(),
                    msg: format!(
                        "exit of stage {} ({}) does not match entry of stage {} ({})",
                        w[0].stage, w[0].exit, w[1].stage, w[1].entry
                    ),
                });
            }
        }
        let last = self.final_visit();
        match self.status {
            TerminalStatus::Censored(c) => {
                if c != last.exit {
                    return Err(Error::TimeOrderViolation {
                        subject: self.id.clone(),
                        msg: format!(
                            "censoring time {} does not match final exit {}",
                            c, last.exit
                        ),
                    });
                }
            }
            TerminalStatus::InTerminalStage => {
                if !graph.is_terminal(last.stage)? {
                    return Err(Error::MalformedRow {
                        line: None,
                        msg: format!(
                            "subject {}: final stage {} marked terminal but has outgoing edges",
                            self.id, last.stage
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A validated collection of subject records over one stage graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    graph: StageGraph,
    records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(graph: StageGraph, records: Vec<SubjectRecord>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for r in &records {
            r.validate(&graph)?;
            if !ids.insert(r.id.clone()) {
                return Err(Error::DuplicateSubject(r.id.clone()));
            }
        }
        Ok(Dataset { graph, records })
    }

    pub fn graph(&self) -> &StageGraph {
        &self.graph
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of subjects whose observation ended by censoring.
    pub fn censored_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.is_censored()).count() as f64 / self.records.len() as f64
    }

    /// Observed transition counts; the diagonal holds per-stage censored
    /// counts. Stages are indexed in sorted id order.
    pub fn transition_table(&self) -> TransitionTable {
        let mut stages: Vec<StageId> = self.graph.stages().to_vec();
        stages.sort();
        let index: BTreeMap<StageId, usize> =
            stages.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let n = stages.len();
        let mut counts = vec![vec![0u64; n]; n];
        for r in &self.records {
            for w in r.visits.windows(2) {
                counts[index[&w[0].stage]][index[&w[1].stage]] += 1;
            }
            if r.is_censored() {
                let k = index[&r.final_visit().stage];
                counts[k][k] += 1;
            }
        }
        TransitionTable { stages, counts }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["subject_id", "stage", "entry_time", "exit_time", "status"])?;
        for r in &self.records {
            for (k, v) in r.visits.iter().enumerate() {
                let status = if k + 1 < r.visits.len() {
                    format!("to:{}", r.visits[k + 1].stage)
                } else {
                    match r.status {
                        TerminalStatus::Censored(_) => "censored".to_string(),
                        TerminalStatus::InTerminalStage => "terminal".to_string(),
                    }
                };
                wtr.write_record([
                    r.id.as_str(),
                    &v.stage.to_string(),
                    &format_time(v.entry),
                    &format_time(v.exit),
                    &status,
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(f)
    }
}

// Round-trip safe decimal formatting.
fn format_time(t: f64) -> String {
    let mut s = format!("{t}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Square count matrix over sorted stage ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTable {
    pub stages: Vec<StageId>,
    pub counts: Vec<Vec<u64>>,
}

impl TransitionTable {
    pub fn get(&self, from: StageId, to: StageId) -> u64 {
        let i = self.stages.iter().position(|&s| s == from);
        let j = self.stages.iter().position(|&s| s == to);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn row_sum(&self, from: StageId) -> u64 {
        self.stages
            .iter()
            .position(|&s| s == from)
            .map_or(0, |i| self.counts[i].iter().sum())
    }
}

impl fmt::Display for TransitionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .chain(self.stages.iter().map(|s| s.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(4);
        write!(f, "{:>width$}", "from")?;
        for s in &self.stages {
            write!(f, " {:>width$}", s.to_string())?;
        }
        writeln!(f)?;
        for (i, s) in self.stages.iter().enumerate() {
            write!(f, "{:>width$}", s.to_string())?;
            for c in &self.counts[i] {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, serde::Deserialize)]
struct CsvRow {
    subject_id: String,
    stage: u32,
    entry_time: f64,
    exit_time: f64,
    status: String,
}

enum RowStatus {
    To(StageId),
    Censored,
    Terminal,
}

fn parse_status(raw: &str, line: usize) -> Result<RowStatus> {
    let raw = raw.trim();
    if raw == "censored" {
        return Ok(RowStatus::Censored);
    }
    if raw == "terminal" {
        return Ok(RowStatus::Terminal);
    }
    if let Some(rest) = raw.strip_prefix("to:") {
        let id: u32 = rest.trim().parse().map_err(|_| Error::MalformedRow {
            line: Some(line),
            msg: format!("bad destination stage in status '{raw}'"),
        })?;
        return Ok(RowStatus::To(StageId(id)));
    }
    Err(Error::MalformedRow {
        line: Some(line),
        msg: format!("unknown status '{raw}'"),
    })
}

/// Parse a long-format subject CSV and validate it against `graph`.
pub fn parse_dataset<R: Read>(reader: R, graph: &StageGraph) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);

    // Group rows per subject keeping first-appearance order of subjects.
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(usize, CsvRow, RowStatus)>> = BTreeMap::new();
    for (k, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = k + 2; // header occupies line 1
        let row: CsvRow = rec.map_err(|e| Error::MalformedRow {
            line: Some(line),
            msg: e.to_string(),
        })?;
        let status = parse_status(&row.status, line)?;
        if !rows.contains_key(&row.subject_id) {
            order.push(row.subject_id.clone());
        }
        rows.entry(row.subject_id.clone())
            .or_default()
            .push((line, row, status));
    }

    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let mut subject_rows = rows.remove(&id).unwrap();
        subject_rows.sort_by(|a, b| a.1.entry_time.total_cmp(&b.1.entry_time));

        let mut visits = Vec::with_capacity(subject_rows.len());
        let mut status = None;
        for (k, (line, row, row_status)) in subject_rows.iter().enumerate() {
            let is_last = k + 1 == subject_rows.len();
            match row_status {
                RowStatus::To(dest) => {
                    if is_last {
                        return Err(Error::MalformedRow {
                            line: Some(*line),
                            msg: format!(
                                "subject {id}: transition to {dest} has no destination row"
                            ),
                        });
                    }
                    let next = &subject_rows[k + 1].1;
                    if StageId(next.stage) != *dest {
                        return Err(Error::MalformedRow {
                            line: Some(*line),
                            msg: format!(
                                "subject {id}: status says to:{dest} but next row is stage {}",
                                next.stage
                            ),
                        });
                    }
                }
                RowStatus::Censored => {
                    if !is_last {
                        return Err(Error::MalformedRow {
                            line: Some(*line),
                            msg: format!("subject {id}: censored row is not the final visit"),
                        });
                    }
                    status = Some(TerminalStatus::Censored(row.exit_time));
                }
                RowStatus::Terminal => {
                    if !is_last {
                        return Err(Error::MalformedRow {
                            line: Some(*line),
                            msg: format!("subject {id}: terminal row is not the final visit"),
                        });
                    }
                    status = Some(TerminalStatus::InTerminalStage);
                }
            }
            visits.push(StageVisit {
                stage: StageId(row.stage),
                entry: row.entry_time,
                exit: row.exit_time,
            });
        }
        let status = status.ok_or_else(|| Error::MalformedRow {
            line: None,
            msg: format!("subject {id}: final row must be censored or terminal"),
        })?;
        records.push(SubjectRecord { id, visits, status });
    }

    Dataset::new(graph.clone(), records)
}

pub fn parse_dataset_path(path: &Path, graph: &StageGraph) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    parse_dataset(f, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn id(v: u32) -> StageId {
        StageId(v)
    }

    fn six() -> StageGraph {
        StageGraph::six_stage_example()
    }

    #[test]
    fn parses_single_subject_path() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,2.0,to:1\n\
                   s1,1,2.0,3.5,to:3\n\
                   s1,3,3.5,7.0,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        assert_eq!(ds.len(), 1);
        let r = &ds.records()[0];
        assert!(r.entry_observed(id(3)));
        assert!(!r.exit_observed(id(3)));
        assert!(r.exit_observed(id(1)));
        assert_eq!(r.censor_time(), Some(7.0));
        assert_abs_diff_eq!(r.waiting_time(id(1)).unwrap(), 1.5);
    }

    #[test]
    fn rejects_non_edge_transition() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,1.0,to:2\n\
                   s1,2,1.0,2.0,to:3\n\
                   s1,3,2.0,3.0,censored\n";
        let err = parse_dataset(csv.as_bytes(), &six());
        assert!(matches!(err, Err(Error::EdgeViolation { .. })));
    }

    #[test]
    fn rejects_time_mismatch() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,1.0,to:1\n\
                   s1,1,1.5,2.0,censored\n";
        let err = parse_dataset(csv.as_bytes(), &six());
        assert!(matches!(err, Err(Error::TimeOrderViolation { .. })));
    }

    #[test]
    fn rejects_unterminated_subject() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,1.0,to:1\n\
                   s1,1,1.0,2.0,to:3\n";
        assert!(parse_dataset(csv.as_bytes(), &six()).is_err());
    }

    #[test]
    fn zero_waiting_time_is_accepted() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,0.0,to:1\n\
                   s1,1,0.0,1.0,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        assert_eq!(ds.records()[0].waiting_time(id(0)).unwrap(), 0.0);
    }

    #[test]
    fn waiting_time_of_unvisited_stage_errors() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   s1,0,0.0,4.0,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        assert!(matches!(
            ds.records()[0].waiting_time(id(3)),
            Err(Error::StageNotVisited(StageId(3)))
        ));
        assert_eq!(ds.records()[0].waiting_time(id(0)).unwrap(), 4.0);
    }

    #[test]
    fn transition_table_counts() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   a,0,0.0,1.0,to:1\n\
                   a,1,1.0,2.0,to:3\n\
                   a,3,2.0,4.0,to:5\n\
                   a,5,4.0,4.0,terminal\n\
                   b,0,0.0,2.0,to:2\n\
                   b,2,2.0,2.0,terminal\n\
                   c,0,0.0,3.0,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        let t = ds.transition_table();
        assert_eq!(t.get(id(0), id(1)), 1);
        assert_eq!(t.get(id(0), id(2)), 1);
        assert_eq!(t.get(id(0), id(0)), 1); // censored in stage 0
        assert_eq!(t.get(id(3), id(5)), 1);
        assert_eq!(t.row_sum(id(0)), 3);
        // row sums equal the number of subjects ever entering the stage
        assert_eq!(t.row_sum(id(1)), 1);
        assert_eq!(t.row_sum(id(5)), 0); // terminal occupants are not censored
    }

    #[test]
    fn empty_dataset_zero_table() {
        let ds = Dataset::new(six(), vec![]).unwrap();
        let t = ds.transition_table();
        assert!(t.counts.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn csv_round_trip() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   a,0,0.0,1.25,to:1\n\
                   a,1,1.25,2.5,to:4\n\
                   a,4,2.5,2.5,terminal\n\
                   b,0,0.0,0.75,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let ds2 = parse_dataset(buf.as_slice(), &six()).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn twelve_stage_breast_cancer_format_summary() {
        // Twelve-stage model: root 0 with four children, recurrence and
        // metastasis chains, six terminal death stages.
        let stages: Vec<StageId> = (0..12).map(StageId).collect();
        let edges: Vec<(StageId, StageId)> = [
            (0, 1), (0, 2), (0, 3), (0, 4), (1, 5), (1, 6),
            (2, 7), (2, 8), (3, 9), (5, 10), (7, 11),
        ]
        .iter()
        .map(|&(a, b)| (id(a), id(b)))
        .collect();
        let g = StageGraph::build(&stages, &edges).unwrap();

        let mut records = Vec::new();
        let mut emit = |path: &[u32], censored: bool, count: usize| {
            for _ in 0..count {
                let k = records.len();
                let mut visits = Vec::new();
                let mut t = 0.0;
                for (i, &s) in path.iter().enumerate() {
                    let last = i + 1 == path.len();
                    let exit = if last && censored {
                        t + 0.5
                    } else if last {
                        t
                    } else {
                        t + 1.0
                    };
                    visits.push(StageVisit {
                        stage: id(s),
                        entry: t,
                        exit,
                    });
                    t = exit;
                }
                let status = if censored {
                    TerminalStatus::Censored(t)
                } else {
                    TerminalStatus::InTerminalStage
                };
                records.push(SubjectRecord {
                    id: format!("e{k}"),
                    visits,
                    status,
                });
            }
        };

        emit(&[0], true, 1686);
        emit(&[0, 1], true, 143);
        emit(&[0, 1, 5], true, 17);
        emit(&[0, 1, 5, 10], false, 72);
        emit(&[0, 1, 6], false, 36);
        emit(&[0, 2], true, 122);
        emit(&[0, 2, 7], true, 3);
        emit(&[0, 2, 7, 11], false, 33);
        emit(&[0, 2, 8], false, 467);
        emit(&[0, 3], true, 12);
        emit(&[0, 3, 9], false, 68);
        emit(&[0, 4], false, 134);

        let ds = Dataset::new(g, records).unwrap();
        assert_eq!(ds.len(), 2793);
        let t = ds.transition_table();
        assert_eq!(t.get(id(0), id(0)), 1686);
        assert_eq!(t.get(id(0), id(2)), 625);
        assert_eq!(t.get(id(0), id(1)), 268);
        assert_eq!(t.get(id(0), id(3)), 80);
        assert_eq!(t.get(id(0), id(4)), 134);
        assert_eq!(t.row_sum(id(0)), 2793);
        assert_eq!(t.get(id(2), id(8)), 467);
        assert_eq!(t.row_sum(id(2)), 625);
    }

    #[test]
    fn stage_before_uses_left_limits() {
        let csv = "subject_id,stage,entry_time,exit_time,status\n\
                   a,0,0.0,1.0,to:1\n\
                   a,1,1.0,2.0,censored\n";
        let ds = parse_dataset(csv.as_bytes(), &six()).unwrap();
        let r = &ds.records()[0];
        assert_eq!(r.stage_before(0.5), id(0));
        assert_eq!(r.stage_before(1.0), id(0)); // just before the transition
        assert_eq!(r.stage_before(1.1), id(1));
        assert_eq!(r.stage_before(99.0), id(1));
    }
}
