//! Piecewise-constant weight functions.
//!
//! A [`StepWeight`] is a function `α: [0,1] → [0,1]` that is constant on the
//! half-open segments `[t_{i-1}, t_i)`; the value at `x = 1` is the last
//! segment's value. Adjacent segments with equal values are always merged, so
//! two weights describing the same function compare equal.
//!
//! The `t`-domain weight `η(t) = α(1/(1+t))` on `[0, ∞)` is stored through its
//! pullback to `[0,1]` ([`EtaWeight`]), so no infinite breakpoint is ever
//! materialised.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant weight on `[0,1]` in canonical (merged) form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightSpec", into = "WeightSpec")]
pub struct StepWeight {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

/// Wire form of a weight: `{"breakpoints":[0,…,1],"values":[…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl TryFrom<WeightSpec> for StepWeight {
    type Error = Error;

    fn try_from(spec: WeightSpec) -> Result<Self> {
        StepWeight::new(spec.breakpoints, spec.values)
    }
}

impl From<StepWeight> for WeightSpec {
    fn from(w: StepWeight) -> Self {
        WeightSpec {
            breakpoints: w.breakpoints,
            values: w.values,
        }
    }
}

fn check_value(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::weight(format!("value {v} outside [0,1]")));
    }
    Ok(())
}

fn check_increasing(points: &[f64], what: &str) -> Result<()> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::weight(format!("non-finite {what}")));
    }
    if points.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::weight(format!("{what} not strictly increasing")));
    }
    Ok(())
}

/// Drops interior breakpoints separating segments with equal values.
fn merge(breakpoints: Vec<f64>, values: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut bp = Vec::with_capacity(breakpoints.len());
    let mut vals: Vec<f64> = Vec::with_capacity(values.len());
    bp.push(breakpoints[0]);
    for (i, &v) in values.iter().enumerate() {
        if vals.last() == Some(&v) {
            *bp.last_mut().unwrap() = breakpoints[i + 1];
        } else {
            vals.push(v);
            bp.push(breakpoints[i + 1]);
        }
    }
    (bp, vals)
}

impl StepWeight {
    /// Validates and canonicalises a step weight.
    ///
    /// `breakpoints` must run strictly increasing from exactly `0` to exactly
    /// `1`, with one value in `[0,1]` per segment.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::weight("at least one segment is required"));
        }
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::weight(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::weight("breakpoints must start at 0 and end at 1"));
        }
        check_increasing(&breakpoints, "breakpoints")?;
        for &v in &values {
            check_value(v)?;
        }
        let (breakpoints, values) = merge(breakpoints, values);
        Ok(StepWeight {
            breakpoints,
            values,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    /// Iterates over `(left, right, value)` for every segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(b, &v)| (b[0], b[1], v))
    }

    /// Value of the weight at `x`, using half-open segments and `α(1) = a_n`.
    pub fn value_at(&self, x: f64) -> f64 {
        let idx = self.breakpoints[1..].partition_point(|&b| b <= x);
        self.values[idx.min(self.values.len() - 1)]
    }

    /// True when every segment value is zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Pointwise `1 − α`.
    pub fn complement(&self) -> StepWeight {
        StepWeight {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Common refinement of two weights, as `(left, right, a, b)` segments.
    pub fn refine_with<'a>(&'a self, other: &'a StepWeight) -> Vec<(f64, f64, f64, f64)> {
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|c| {
                let mid = 0.5 * (c[0] + c[1]);
                (c[0], c[1], self.value_at(mid), other.value_at(mid))
            })
            .collect()
    }

    /// `η(t) = α(1/(1+t))` on `[0, ∞)`.
    pub fn to_eta(&self) -> EtaWeight {
        EtaWeight {
            pullback: self.clone(),
        }
    }

    /// Inverse of [`StepWeight::to_eta`].
    pub fn from_eta(eta: &EtaWeight) -> StepWeight {
        eta.pullback.clone()
    }

    /// Piecewise-constant approximation on `n` equal-width segments.
    ///
    /// Each segment takes the mean of the samples whose `x` falls inside it
    /// (`x = 1` belongs to the last segment). A segment without samples takes
    /// the value of the sample nearest to its midpoint.
    pub fn approximate(samples: &[(f64, f64)], n: usize) -> Result<StepWeight> {
        if samples.is_empty() {
            return Err(Error::weight("empty sample set"));
        }
        if n < 1 {
            return Err(Error::weight("segment count must be at least 1"));
        }
        for &(x, v) in samples {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::weight(format!("sample abscissa {x} outside [0,1]")));
            }
            check_value(v)?;
        }
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for &(x, v) in samples {
            let k = ((x * n as f64).floor() as usize).min(n - 1);
            sums[k] += v;
            counts[k] += 1;
        }
        let values = (0..n)
            .map(|k| {
                if counts[k] > 0 {
                    (sums[k] / counts[k] as f64).clamp(0.0, 1.0)
                } else {
                    let mid = (k as f64 + 0.5) / n as f64;
                    samples
                        .iter()
                        .min_by(|a, b| (a.0 - mid).abs().total_cmp(&(b.0 - mid).abs()))
                        .map(|s| s.1)
                        .unwrap()
                }
            })
            .collect();
        let breakpoints = (0..=n).map(|k| k as f64 / n as f64).collect();
        StepWeight::new(breakpoints, values)
    }
}

/// A weight on `[0, ∞)` in the `t` variable, stored through `x = 1/(1+t)`.
///
/// The segment `[x_{i-1}, x_i)` of the pullback corresponds to
/// `((1−x_i)/x_i, (1−x_{i-1})/x_{i-1}]` in `t`; `x = 0` maps to `t = ∞` and
/// `x = 1` to `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaWeight {
    pullback: StepWeight,
}

/// Maps a breakpoint in `x` to `t = (1−x)/x`.
pub fn x_to_t(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - x) / x
    }
}

/// Maps `t ∈ [0, ∞]` back to `x = 1/(1+t)`.
pub fn t_to_x(t: f64) -> f64 {
    1.0 / (1.0 + t)
}

impl EtaWeight {
    /// Builds `η` from `t`-domain segments.
    ///
    /// `t_breakpoints` starts at `0` and is strictly increasing and finite;
    /// `values[j]` applies on `[t_j, t_{j+1})`, the last one on `[t_k, ∞)`.
    pub fn from_t_segments(t_breakpoints: &[f64], values: &[f64]) -> Result<Self> {
        if values.is_empty() || t_breakpoints.len() != values.len() {
            return Err(Error::weight(
                "eta needs one value per t-breakpoint (the last value extends to infinity)",
            ));
        }
        if t_breakpoints[0] != 0.0 {
            return Err(Error::weight("eta breakpoints must start at t = 0"));
        }
        check_increasing(t_breakpoints, "eta breakpoints")?;
        for &v in values {
            check_value(v)?;
        }
        let mut xs: Vec<f64> = t_breakpoints.iter().rev().map(|&t| t_to_x(t)).collect();
        xs.insert(0, 0.0);
        // 1/(1+t) can collapse two huge t-breakpoints onto the same x
        check_increasing(&xs, "pulled-back eta breakpoints")?;
        let vals: Vec<f64> = values.iter().rev().copied().collect();
        Ok(EtaWeight {
            pullback: StepWeight::new(xs, vals)?,
        })
    }

    pub fn pullback(&self) -> &StepWeight {
        &self.pullback
    }

    /// Finite `t`-breakpoints in increasing order, starting at `0`.
    pub fn t_breakpoints(&self) -> Vec<f64> {
        self.pullback.breakpoints[1..]
            .iter()
            .rev()
            .map(|&x| x_to_t(x))
            .collect()
    }

    /// Values in increasing-`t` order, aligned with [`EtaWeight::t_breakpoints`].
    pub fn t_values(&self) -> Vec<f64> {
        self.pullback.values.iter().rev().copied().collect()
    }

    /// `η(t)` with half-open `[t_j, t_{j+1})` segments.
    pub fn value_at_t(&self, t: f64) -> f64 {
        let bps = self.t_breakpoints();
        let vals = self.t_values();
        let idx = bps.partition_point(|&b| b <= t);
        vals[idx.saturating_sub(1)]
    }

    /// Wire form `{"t_breakpoints":[0,…],"values":[…]}`.
    pub fn to_spec(&self) -> EtaSpec {
        EtaSpec {
            t_breakpoints: self.t_breakpoints(),
            values: self.t_values(),
        }
    }
}

/// Wire form of an `η` weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaSpec {
    pub t_breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl TryFrom<&EtaSpec> for EtaWeight {
    type Error = Error;

    fn try_from(spec: &EtaSpec) -> Result<Self> {
        EtaWeight::from_t_segments(&spec.t_breakpoints, &spec.values)
    }
}

/// The pair `(γ, η)` describing a complete Bernstein function.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaRepresentation {
    pub gamma: f64,
    pub eta: EtaWeight,
}

/// Wire form `{"gamma":…,"t_breakpoints":[…],"values":[…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaRepresentationSpec {
    pub gamma: f64,
    #[serde(flatten)]
    pub eta: EtaSpec,
}

impl EtaRepresentation {
    pub fn to_spec(&self) -> EtaRepresentationSpec {
        EtaRepresentationSpec {
            gamma: self.gamma,
            eta: self.eta.to_spec(),
        }
    }

    pub fn from_spec(spec: &EtaRepresentationSpec) -> Result<Self> {
        if !spec.gamma.is_finite() {
            return Err(Error::weight("gamma must be finite"));
        }
        Ok(EtaRepresentation {
            gamma: spec.gamma,
            eta: EtaWeight::try_from(&spec.eta)?,
        })
    }
}

/// A step weight on an arbitrary interval `[c, d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalWeightSpec", into = "IntervalWeightSpec")]
pub struct IntervalWeight {
    c: f64,
    d: f64,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

/// Wire form: the weight-spec object plus `"c"` and `"d"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalWeightSpec {
    pub c: f64,
    pub d: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl TryFrom<IntervalWeightSpec> for IntervalWeight {
    type Error = Error;

    fn try_from(s: IntervalWeightSpec) -> Result<Self> {
        IntervalWeight::new(s.c, s.d, s.breakpoints, s.values)
    }
}

impl From<IntervalWeight> for IntervalWeightSpec {
    fn from(w: IntervalWeight) -> Self {
        IntervalWeightSpec {
            c: w.c,
            d: w.d,
            breakpoints: w.breakpoints,
            values: w.values,
        }
    }
}

impl IntervalWeight {
    /// `breakpoints` are given in `[c, d]` coordinates.
    pub fn new(c: f64, d: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(c.is_finite() && d.is_finite()) || c >= d {
            return Err(Error::weight(format!("interval [{c}, {d}] requires c < d")));
        }
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::weight("interval weight needs n+1 breakpoints for n values"));
        }
        if breakpoints[0] != c || *breakpoints.last().unwrap() != d {
            return Err(Error::weight("interval breakpoints must start at c and end at d"));
        }
        check_increasing(&breakpoints, "interval breakpoints")?;
        for &v in &values {
            check_value(v)?;
        }
        let (breakpoints, values) = merge(breakpoints, values);
        Ok(IntervalWeight {
            c,
            d,
            breakpoints,
            values,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c, self.d)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pulls the weight back to `[0,1]` via `u = (x − c)/(d − c)`.
    pub fn remap(&self) -> Result<StepWeight> {
        let width = self.d - self.c;
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .map(|&x| (x - self.c) / width)
            .collect();
        bps[0] = 0.0;
        *bps.last_mut().unwrap() = 1.0;
        StepWeight::new(bps, self.values.clone())
    }
}

/// Free-function form of [`IntervalWeight::remap`].
pub fn remap_interval(w: &IntervalWeight) -> Result<StepWeight> {
    w.remap()
}
