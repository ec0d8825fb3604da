//! Numerical checks of the structural claims: upper half-plane preservation,
//! Bernstein sign patterns, duality and monotonicity in the weight.
//!
//! Checks never fail with an error for a negative outcome; they return a
//! [`CheckReport`] whose `passed` flag is `worst_violation <= tolerance`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::{eval_product, log_eval_integral};
use crate::weights::StepWeight;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub worst_location: String,
    pub samples_used: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: true,
            worst_violation: 0.0,
            worst_location: String::new(),
            samples_used: 0,
            tolerance,
            seed: None,
            notes: Vec::new(),
        }
    }

    /// Records a violation if it is the worst seen so far.
    pub(crate) fn observe(&mut self, violation: f64, location: impl FnOnce() -> String) {
        self.samples_used += 1;
        let v = if violation.is_nan() { f64::INFINITY } else { violation.max(0.0) };
        if v > self.worst_violation || (self.worst_location.is_empty() && v == self.worst_violation) {
            self.worst_violation = v;
            self.worst_location = location();
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        self.passed = self.worst_violation <= self.tolerance;
        self
    }
}

/// Tolerance for `Im φ(z) ≥ −tol`.
pub const PICK_TOLERANCE: f64 = 1e-12;
/// Relative tolerance of the finite-difference sign checks.
pub const DIFFERENCE_TOLERANCE: f64 = 1e-8;
pub const DUALITY_TOLERANCE: f64 = 1e-10;
pub const MONOTONICITY_TOLERANCE: f64 = 1e-12;

/// Samples `count` points with `|z|` log-uniform in `[1e−3, 1e3]` and
/// `arg z` uniform in `(0, π)`.
pub fn sample_upper_half_plane(count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let log_r = rng.random_range(-3.0..3.0) * std::f64::consts::LN_10;
            let mut theta = rng.random_range(0.0..std::f64::consts::PI);
            if theta == 0.0 {
                theta = f64::MIN_POSITIVE;
            }
            Complex64::from_polar(log_r.exp(), theta)
        })
        .collect()
}

/// Upper half-plane preservation and existence of `φ(0+)`.
///
/// For each sampled `z` the violation is the largest of `−Im φ(z)`, the amount
/// by which the accumulated argument leaves `[0, π)`, and a unit penalty when
/// the argument is not strictly positive although the weight is not zero.
/// The `φ(0+)` part evaluates `log φ(2^{−k})` for `k = 0..=60` and requires
/// the sequence to be nonincreasing with stabilising increments, so that it
/// either converges or decreases linearly to `−∞`.
pub fn check_pick(w: &StepWeight, sample_count: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("pick", PICK_TOLERANCE);
    report.seed = Some(seed);
    let strict = !w.is_zero();
    let points = sample_upper_half_plane(sample_count.max(1), seed);
    let violations: Vec<(f64, Complex64, Complex64, f64)> = points
        .par_iter()
        .map(|&z| match eval_product(w, z) {
            Ok(v) => {
                let arg = v.argument();
                let mut viol = (-v.value.im).max(0.0);
                viol = viol.max(-arg).max(arg - std::f64::consts::PI + f64::EPSILON);
                if strict && arg <= 0.0 {
                    viol = viol.max(1.0);
                }
                (viol, z, v.value, arg)
            }
            Err(_) => (f64::INFINITY, z, Complex64::new(f64::NAN, f64::NAN), f64::NAN),
        })
        .collect();
    let max_im = violations.iter().map(|v| v.2.im.abs()).fold(0.0, f64::max);
    for (viol, z, val, arg) in violations {
        report.observe(viol, || format!("z={z}, phi={val}, arg={arg}"));
    }
    if !strict {
        report.notes.push(format!(
            "weight is a.e. zero: phi = 1 and Im phi = 0 on all samples (max |Im| {max_im:e}), not strictly Pick"
        ));
    }

    let logs: Vec<f64> = (0..=60)
        .map(|k| log_eval_integral(w, (-(k as f64)).exp2()).unwrap_or(f64::NAN))
        .collect();
    for k in 1..logs.len() {
        let rise = logs[k] - logs[k - 1];
        report.observe(rise.max(0.0), || format!("lambda=2^-{k}: log phi increased by {rise}"));
    }
    let increments: Vec<f64> = logs.windows(2).map(|p| p[0] - p[1]).collect();
    let tail = (increments[increments.len() - 1] - increments[increments.len() - 2]).abs();
    // increments converge to a_n·log 2 at rate 2^{-k}
    let drift = if tail <= 1e-9 { 0.0 } else { tail };
    report.observe(drift, || format!("log phi(2^-k) increments not stabilised (last change {tail})"));
    report.notes.push(format!(
        "log phi(2^-60) = {:.6}, last increment {:.6}",
        logs[60],
        increments[increments.len() - 1]
    ));
    report.finish()
}

/// Uniform grid `start + j·step`, `j = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(end > start) {
            return Err(Error::domain("grid needs step > 0 and end > start"));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        Ok(UniformGrid { start, step, count })
    }

    pub fn point(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.point(j)).collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sign check of forward differences `sign_k · Δ^k f ≥ −tol·scale` for
/// `k ∈ orders`, where `scale` is the largest `|C(k,i) f(x+ih)|`.
fn difference_signs(
    name: &str,
    values: &[f64],
    grid: &UniformGrid,
    orders: std::ops::RangeInclusive<usize>,
    sign: impl Fn(usize) -> f64,
) -> CheckReport {
    let mut report = CheckReport::new(name, DIFFERENCE_TOLERANCE);
    let mut first_failure: Option<usize> = None;
    for k in orders {
        for j in 0..values.len().saturating_sub(k) {
            let mut diff = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..=k {
                let term = binomial(k, i) * values[j + i];
                let signed = if (k - i) % 2 == 0 { term } else { -term };
                diff += signed;
                scale = scale.max(term.abs());
            }
            let v = sign(k) * diff;
            let violation = if v >= 0.0 {
                0.0
            } else if scale == 0.0 {
                f64::INFINITY
            } else {
                -v / scale
            };
            if violation > DIFFERENCE_TOLERANCE && first_failure.is_none() {
                first_failure = Some(k);
            }
            report.observe(violation, || format!("order {k} at x={}", grid.point(j)));
        }
    }
    if let Some(k) = first_failure {
        report.notes.push(format!("first failing order: {k}"));
    }
    report.finish()
}

/// Bernstein sign pattern `(−1)^{k−1} Δ_h^k f ≥ 0` for `k = 1..=max_order`.
pub fn check_bernstein_differences<F>(f: F, grid: &UniformGrid, max_order: usize) -> Result<CheckReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if max_order < 1 {
        return Err(Error::domain("max_order must be at least 1"));
    }
    if !(grid.start > 0.0) {
        return Err(Error::domain("Bernstein difference grid must lie in (0, ∞)"));
    }
    let pts = grid.points();
    let values: Vec<f64> = pts.par_iter().map(|&x| f(x)).collect();
    Ok(difference_signs(
        "bernstein",
        &values,
        grid,
        1..=max_order,
        |k| if k % 2 == 1 { 1.0 } else { -1.0 },
    ))
}

/// Complete monotonicity `(−1)^k Δ_h^k m ≥ 0` for `k = 0..=max_order` on
/// samples taken on a uniform grid.
pub fn check_completely_monotone(samples: &[f64], grid: &UniformGrid, max_order: usize) -> CheckReport {
    difference_signs(
        "completely_monotone",
        samples,
        grid,
        0..=max_order,
        |k| if k % 2 == 0 { 1.0 } else { -1.0 },
    )
}

/// `φ^(α)(λ) · φ^(1−α)(λ) = λ`, checked on the log scale.
pub fn check_duality(w: &StepWeight, lambdas: &[f64]) -> CheckReport {
    let mut report = CheckReport::new("duality", DUALITY_TOLERANCE);
    let dual = w.complement();
    for &l in lambdas {
        let viol = match (log_eval_integral(w, l), log_eval_integral(&dual, l)) {
            // |exp(δ) − 1| is the relative error of the product
            (Ok(a), Ok(b)) => (a + b - l.ln()).exp_m1().abs(),
            _ => f64::INFINITY,
        };
        report.observe(viol, || format!("lambda={l}"));
    }
    report.finish()
}

/// `φ^(wa) ≤ φ^(wb)` for `λ ≥ 1` and `≥` for `λ ≤ 1`, given `wa ≤ wb`.
pub fn check_weight_monotonicity(wa: &StepWeight, wb: &StepWeight, lambdas: &[f64]) -> Result<CheckReport> {
    if let Some(seg) = wa.refine_with(wb).into_iter().find(|s| s.2 > s.3) {
        return Err(Error::Mismatch(format!(
            "weights not comparable on [{}, {}): {} > {}",
            seg.0, seg.1, seg.2, seg.3
        )));
    }
    let mut report = CheckReport::new("monotone", MONOTONICITY_TOLERANCE);
    for &l in lambdas {
        let viol = match (log_eval_integral(wa, l), log_eval_integral(wb, l)) {
            (Ok(a), Ok(b)) => {
                let (fa, fb) = (a.exp(), b.exp());
                let scale = fa.abs().max(fb.abs()).max(f64::MIN_POSITIVE);
                let gap = if l >= 1.0 { fa - fb } else { fb - fa };
                (gap / scale).max(0.0)
            }
            _ => f64::INFINITY,
        };
        report.observe(viol, || format!("lambda={l}"));
    }
    Ok(report.finish())
}

/// `count` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}
