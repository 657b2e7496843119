//! Per-subject uncensoring-probability curves `K_i(t)`.
//!
//! Two fitting routes: a Kaplan–Meier fit of the censoring distribution
//! (roles of events and censorings swapped) for independent censoring, and
//! Aalen's additive hazard model with stage-occupancy indicators for
//! stage-dependent censoring. Subjects absorbed in a terminal stage count as
//! at-risk for censoring up to their last transition, never as censoring
//! events.
//!
//! All emitted weights are clamped into `[floor, 1]` so that inverse weights
//! stay bounded.

use crate::error::Result;
use crate::records::Dataset;
use crate::stage_graph::StageId;
use crate::stepfun::StepCurve;
use nalgebra::{DMatrix, DVector};
use std::io::Write;

pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.01;

/// Singular values below this fraction of the largest are treated as zero
/// when pseudo-inverting the Aalen design matrix.
const SVD_RELATIVE_CUTOFF: f64 = 1e-10;

/// Evaluation interface used by the counting-process builders. `at` is the
/// right-continuous value `K_i(t)`, `at_left` the left limit `K_i(t-)`.
pub trait CensorWeights {
    fn at(&self, subject: usize, t: f64) -> f64;
    fn at_left(&self, subject: usize, t: f64) -> f64;

    /// True when `K == 1` identically; lets counting take a sorted-count fast
    /// path that produces bit-identical results.
    fn is_unit(&self) -> bool {
        false
    }
}

/// `K == 1` for everyone; the uncensored / empirical regime.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitWeights;

impl CensorWeights for UnitWeights {
    fn at(&self, _subject: usize, _t: f64) -> f64 {
        1.0
    }
    fn at_left(&self, _subject: usize, _t: f64) -> f64 {
        1.0
    }
    fn is_unit(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMethod {
    KaplanMeier,
    Aalen,
}

/// Fitted per-subject weight curves.
#[derive(Debug, Clone)]
pub struct WeightCurveSet {
    curves: Vec<StepCurve>,
    floor: f64,
    method: WeightMethod,
}

impl WeightCurveSet {
    pub fn method(&self) -> WeightMethod {
        self.method
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn curve(&self, subject: usize) -> &StepCurve {
        &self.curves[subject]
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }
}

impl CensorWeights for WeightCurveSet {
    fn at(&self, subject: usize, t: f64) -> f64 {
        self.curves[subject].eval(t)
    }
    fn at_left(&self, subject: usize, t: f64) -> f64 {
        self.curves[subject].eval_left(t)
    }
}

/// Follow-up endpoint and censoring indicator of every subject, the data the
/// censoring fits run on.
fn follow_up(ds: &Dataset) -> Vec<(f64, bool)> {
    ds.records()
        .iter()
        .map(|r| (r.follow_up_end(), r.is_censored()))
        .collect()
}

/// Kaplan–Meier estimate of the censoring survival function, assigned to
/// every subject. Transitions into terminal stages act as censorings of the
/// censoring process; at tied times they stay in the risk set.
pub fn km_censor_weights(ds: &Dataset, floor: f64) -> WeightCurveSet {
    let fu = follow_up(ds);
    let mut ends: Vec<f64> = fu.iter().map(|&(x, _)| x).collect();
    ends.sort_by(f64::total_cmp);

    let mut censor_times: Vec<f64> = fu
        .iter()
        .filter(|&&(_, c)| c)
        .map(|&(x, _)| x)
        .collect();
    censor_times.sort_by(f64::total_cmp);
    censor_times.dedup();

    let n = ends.len();
    let mut k = 1.0;
    let mut jumps = Vec::with_capacity(censor_times.len());
    for &c in &censor_times {
        let at_risk = (n - ends.partition_point(|&x| x < c)) as f64;
        let d = fu.iter().filter(|&&(x, cen)| cen && x == c).count() as f64;
        k *= 1.0 - d / at_risk;
        jumps.push((c, k.max(floor)));
    }
    let curve = StepCurve::new(1.0, jumps).expect("censor times sorted and deduped");
    WeightCurveSet {
        curves: vec![curve; ds.len()],
        floor,
        method: WeightMethod::KaplanMeier,
    }
}

/// Cumulative regression coefficient curves from the Aalen fit of the
/// censoring hazard, plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct AalenFit {
    /// Column labels: intercept first, then one non-root stage indicator each.
    pub covariates: Vec<String>,
    /// Cumulative coefficient curve per covariate, starting at zero.
    pub cumulative_coefficients: Vec<StepCurve>,
    /// Censoring times whose design matrix was numerically all-zero; the
    /// corresponding jumps were skipped.
    pub skipped_jumps: Vec<f64>,
}

impl AalenFit {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for c in &self.covariates {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        // All coefficient curves share the censoring-time jump grid.
        let times = self.cumulative_coefficients[0].jump_times();
        write!(w, "0")?;
        for _ in &self.covariates {
            write!(w, ",0")?;
        }
        writeln!(w)?;
        for &t in times {
            write!(w, "{t}")?;
            for c in &self.cumulative_coefficients {
                write!(w, ",{}", c.eval(t))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Aalen additive-hazards fit of the censoring process with stage-occupancy
/// covariates (intercept plus an indicator per non-root stage), and the
/// per-subject weight curves it implies.
///
/// Hazard increments are clamped into `[0, 1]` before entering the product
/// and the resulting weights are floored at `floor`.
pub fn aalen_censor_weights(ds: &Dataset, floor: f64) -> Result<(AalenFit, WeightCurveSet)> {
    let graph = ds.graph();
    let non_root = graph.non_root_stages();
    let dim = non_root.len() + 1;
    let col_of = |s: StageId| -> usize {
        match non_root.binary_search(&s) {
            Ok(k) => k + 1,
            Err(_) => 0, // root occupancy is absorbed by the intercept
        }
    };

    let fu = follow_up(ds);
    let n = ds.len();

    // Censoring jumps in time order, ties broken by subject index.
    let mut jumps: Vec<(f64, usize)> = fu
        .iter()
        .enumerate()
        .filter(|(_, &(_, c))| c)
        .map(|(i, &(x, _))| (x, i))
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let z_at = |i: usize, t: f64| -> DVector<f64> {
        let mut z = DVector::zeros(dim);
        z[0] = 1.0;
        let s = ds.records()[i].stage_before(t);
        let c = col_of(s);
        if c != 0 {
            z[c] = 1.0;
        }
        z
    };

    let mut b_cum = vec![0.0; dim];
    let mut b_jumps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); dim];
    let mut skipped = Vec::new();
    let mut k_values = vec![1.0f64; n];
    let mut k_jumps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];

    let mut idx = 0;
    while idx < jumps.len() {
        let t = jumps[idx].0;
        // R(t) is shared by all censorings tied at t.
        let mut r = DMatrix::<f64>::zeros(dim, dim);
        for (i, &(end, _)) in fu.iter().enumerate() {
            if end >= t {
                let z = z_at(i, t);
                r.ger(1.0, &z, &z, 1.0);
            }
        }
        let svd = r.clone().svd(true, true);
        let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let pinv = if s_max > 0.0 {
            svd.pseudo_inverse(SVD_RELATIVE_CUTOFF * s_max).ok()
        } else {
            None
        };

        let mut tie_end = idx;
        while tie_end < jumps.len() && jumps[tie_end].0 == t {
            tie_end += 1;
        }

        match pinv {
            None => skipped.push(t),
            Some(rinv) => {
                let mut delta_b = DVector::zeros(dim);
                for &(_, subj) in &jumps[idx..tie_end] {
                    delta_b += &rinv * z_at(subj, t);
                }
                for m in 0..dim {
                    b_cum[m] += delta_b[m];
                    b_jumps[m].push((t, b_cum[m]));
                }
                // d Lambda_i(t) = Z_i(t)' dB(t); one shared value per stage.
                let mut by_col = vec![0.0; dim];
                for (c, v) in by_col.iter_mut().enumerate() {
                    *v = if c == 0 {
                        delta_b[0]
                    } else {
                        delta_b[0] + delta_b[c]
                    };
                }
                for i in 0..n {
                    let c = col_of(ds.records()[i].stage_before(t));
                    let inc = by_col[c].clamp(0.0, 1.0);
                    if inc != 0.0 {
                        k_values[i] *= 1.0 - inc;
                        k_jumps[i].push((t, k_values[i].max(floor)));
                    }
                }
            }
        }
        idx = tie_end;
    }

    let fit = AalenFit {
        covariates: std::iter::once("intercept".to_string())
            .chain(non_root.iter().map(|s| format!("stage_{s}")))
            .collect(),
        cumulative_coefficients: b_jumps
            .into_iter()
            .map(|j| StepCurve::new(0.0, j).expect("jump times ascend"))
            .collect(),
        skipped_jumps: skipped,
    };
    let curves = k_jumps
        .into_iter()
        .map(|j| StepCurve::new(1.0, j).expect("jump times ascend"))
        .collect();
    Ok((
        fit,
        WeightCurveSet {
            curves,
            floor,
            method: WeightMethod::Aalen,
        },
    ))
}
