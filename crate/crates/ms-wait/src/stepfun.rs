//! Right-continuous step functions and the product-limit / Stieltjes
//! machinery every estimator is assembled from.
//!
//! Conventions, used consistently by the whole crate:
//! * curves are right-continuous: `eval(t)` is the value at the latest jump
//!   `<= t`, `eval_left(t)` the value just before `t`;
//! * simultaneous jump mass is merged into a single jump with summed weight;
//! * "evaluation at infinity" means the value at the last jump — every curve
//!   here is constant beyond its data.

use crate::error::{Error, Result};
use std::io::Write;

/// A right-continuous step function on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepCurve {
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepCurve {
    /// Constant curve with no jumps.
    pub fn constant(value: f64) -> Self {
        StepCurve {
            initial: value,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Curve taking `initial` on `[0, t_1)` and `v_k` on `[t_k, t_{k+1})`.
    /// Jump times must be finite, nonnegative and strictly increasing.
    pub fn new(initial: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        for w in jumps.windows(2) {
            if w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less) {
                return Err(Error::InvalidJumpTimes);
            }
        }
        if jumps.iter().any(|&(t, _)| !t.is_finite() || t < 0.0) {
            return Err(Error::InvalidJumpTimes);
        }
        let (times, values) = jumps.into_iter().unzip();
        Ok(StepCurve {
            initial,
            times,
            values,
        })
    }

    pub fn initial_value(&self) -> f64 {
        self.initial
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `t` (right-continuous).
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Left limit at `t`, i.e. the value on `[prev_jump, t)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Value after the last jump; the evaluation-at-infinity convention.
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    /// Map every value (initial included) through `f`, keeping jump times.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> StepCurve {
        StepCurve {
            initial: f(self.initial),
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `t,value` export: initial value at t=0, then one row per jump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        writeln!(w, "0,{}", self.initial)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// A finite jump measure: strictly increasing times with weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl JumpMeasure {
    /// Sort raw `(time, weight)` events and merge ties by summing weights.
    pub fn from_events(mut events: Vec<(f64, f64)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (t, w) in events {
            if times.last() == Some(&t) {
                *weights.last_mut().unwrap() += w;
            } else {
                times.push(t);
                weights.push(w);
            }
        }
        JumpMeasure { times, weights }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Kaplan–Meier style product limit `S(t) = prod_{s<=t} (1 - dN(s)/Y(s))`.
///
/// `at_risk[k]` is the risk mass at `dn.times()[k]`, inclusive of mass
/// leaving at that instant. Times with `dN = 0` contribute a unit factor
/// regardless of `Y`; positive event mass on an empty risk set is an error.
pub fn product_limit(dn: &JumpMeasure, at_risk: &[f64]) -> Result<StepCurve> {
    assert_eq!(dn.len(), at_risk.len(), "dN / at-risk grids differ");
    let mut surv = 1.0;
    let mut jumps = Vec::with_capacity(dn.len());
    for ((t, d), &y) in dn.iter().zip(at_risk) {
        if d > 0.0 {
            if y <= 0.0 {
                return Err(Error::RiskSetExhausted { time: t });
            }
            surv *= 1.0 - d / y;
            jumps.push((t, surv));
        }
    }
    StepCurve::new(1.0, jumps)
}

/// Lebesgue–Stieltjes cumulative integral
/// `t -> sum_{u<=t} integrand(u-) * d measure(u)`.
pub fn stieltjes_integrate(integrand_left: &StepCurve, measure: &JumpMeasure) -> StepCurve {
    let mut acc = 0.0;
    let mut jumps = Vec::with_capacity(measure.len());
    for (t, w) in measure.iter() {
        acc += integrand_left.eval_left(t) * w;
        jumps.push((t, acc));
    }
    StepCurve::new(0.0, jumps).expect("measure times are strictly increasing")
}
