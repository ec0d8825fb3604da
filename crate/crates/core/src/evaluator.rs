//! Evaluation of `φ^(α)(λ) = exp ∫_0^1 (λ−1)/(1+(λ−1)x) α(x) dx`.
//!
//! For step weights every representation has a closed form:
//!
//! * the integral form, summed segment by segment with the antiderivative
//!   `log(1+(λ−1)x)`;
//! * the product form `Π ((1+(z−1)t_i)/(1+(z−1)t_{i−1}))^{a_i}`, which extends
//!   to the upper half-plane;
//! * the `(γ, η)` form `exp[γ + ∫_0^∞ (t/(1+t²) − 1/(λ+t)) η(t) dt]`.
//!
//! Adaptive quadrature is only used as an independent check for weights that
//! are not step functions.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{adaptive_gk, GkOptions};
use crate::weights::{x_to_t, EtaRepresentation, EtaWeight, IntervalWeight, StepWeight};

/// Complex function value with its logarithm kept alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfValue {
    pub log_value: Complex64,
    pub value: Complex64,
    pub at_argument: Complex64,
}

impl CbfValue {
    fn from_log(log_value: Complex64, at: Complex64) -> Self {
        CbfValue {
            log_value,
            value: log_value.exp(),
            at_argument: at,
        }
    }

    /// Accumulated argument `Im log φ(z)`.
    pub fn argument(&self) -> f64 {
        self.log_value.im
    }
}

/// Real evaluation on the positive half-line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealValue {
    pub lambda: f64,
    pub value: f64,
    pub log_value: f64,
}

impl RealValue {
    fn from_log(lambda: f64, log_value: f64) -> Self {
        RealValue {
            lambda,
            value: log_value.exp(),
            log_value,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// `1 + (λ−1)t`, arranged so that it stays accurate when `λ` is small and
/// `t` is close to one.
#[inline]
fn linear_factor(lambda: f64, t: f64) -> f64 {
    (1.0 - t) + lambda * t
}

/// `log φ^(α)(λ)` from the segment-wise antiderivative.
pub fn log_eval_integral(w: &StepWeight, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(w.segments()
        .map(|(lo, hi, a)| {
            if a == 0.0 {
                0.0
            } else {
                a * (linear_factor(lambda, hi).ln() - linear_factor(lambda, lo).ln())
            }
        })
        .sum())
}

/// `φ^(α)(λ)` for `λ > 0`. Underflows to `0` for tiny `λ`; use
/// [`eval_integral_full`] to keep the log-value.
pub fn eval_integral(w: &StepWeight, lambda: f64) -> Result<f64> {
    log_eval_integral(w, lambda).map(f64::exp)
}

pub fn eval_integral_full(w: &StepWeight, lambda: f64) -> Result<RealValue> {
    log_eval_integral(w, lambda).map(|l| RealValue::from_log(lambda, l))
}

/// Principal logarithms of the factor ratios `(1+(z−1)t_i)/(1+(z−1)t_{i−1})`.
///
/// For `Im z > 0` every imaginary part lies in `(0, π)`.
pub fn product_factor_logs(w: &StepWeight, z: Complex64) -> Result<Vec<Complex64>> {
    if z.im < 0.0 || (z.im == 0.0 && z.re <= 0.0) || !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain(format!(
            "product form needs Im z > 0 or z > 0, got {z}"
        )));
    }
    let factor = |t: f64| Complex64::new(1.0 - t, 0.0) + z * t;
    Ok(w.breakpoints()
        .windows(2)
        .map(|b| (factor(b[1]) / factor(b[0])).ln())
        .collect())
}

/// Product-form evaluation on the closed upper half-plane minus `(−∞, 0]`.
///
/// Each factor is raised to its exponent through its own principal logarithm
/// and the logarithms are summed, so the accumulated argument never wraps.
pub fn eval_product(w: &StepWeight, z: Complex64) -> Result<CbfValue> {
    let logs = product_factor_logs(w, z)?;
    let log_value = logs
        .iter()
        .zip(w.values())
        .filter(|(_, &a)| a != 0.0)
        .map(|(l, &a)| l * a)
        .sum();
    Ok(CbfValue::from_log(log_value, z))
}

/// Antiderivative `log(1+t) − ½ log(1+t²)` of `1/(1+t) − t/(1+t²)`, with
/// its limit `0` at `t = ∞`.
fn gamma_antiderivative(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else if t > 1.0 {
        let r = 1.0 / t;
        r.ln_1p() - 0.5 * (r * r).ln_1p()
    } else {
        t.ln_1p() - 0.5 * (t * t).ln_1p()
    }
}

/// The constant `γ` of the `(γ, η)` representation of `φ^(α)`.
pub fn gamma_of(w: &StepWeight) -> f64 {
    w.segments()
        .map(|(lo, hi, a)| {
            // x-segment [lo, hi) is the t-segment ((1-hi)/hi, (1-lo)/lo]
            a * (gamma_antiderivative(x_to_t(lo)) - gamma_antiderivative(x_to_t(hi)))
        })
        .sum()
}

/// Antiderivative `½ log(1+t²) − log(λ+t)` of `t/(1+t²) − 1/(λ+t)`.
fn eta_antiderivative(lambda: f64, t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else if t > 1.0 {
        let r = 1.0 / t;
        0.5 * (r * r).ln_1p() - (lambda * r).ln_1p()
    } else {
        0.5 * (t * t).ln_1p() - (lambda + t).ln()
    }
}

/// `log f(λ) = γ + ∫_0^∞ (t/(1+t²) − 1/(λ+t)) η(t) dt` for step `η`.
pub fn log_eval_eta(rep: &EtaRepresentation, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let integral: f64 = rep
        .eta
        .pullback()
        .segments()
        .map(|(lo, hi, a)| {
            if a == 0.0 {
                0.0
            } else {
                a * (eta_antiderivative(lambda, x_to_t(lo)) - eta_antiderivative(lambda, x_to_t(hi)))
            }
        })
        .sum();
    Ok(rep.gamma + integral)
}

pub fn eval_eta(rep: &EtaRepresentation, lambda: f64) -> Result<f64> {
    log_eval_eta(rep, lambda).map(f64::exp)
}

pub fn eval_eta_full(rep: &EtaRepresentation, lambda: f64) -> Result<RealValue> {
    log_eval_eta(rep, lambda).map(|l| RealValue::from_log(lambda, l))
}

/// `(γ(α), η)` for a step weight.
pub fn eta_representation(w: &StepWeight) -> EtaRepresentation {
    EtaRepresentation {
        gamma: gamma_of(w),
        eta: w.to_eta(),
    }
}

/// `f = scale · φ^(α)` with `φ^(α)(1) = 1`, so `scale = f(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCbf {
    pub scale: f64,
    pub weight: StepWeight,
}

impl NormalizedCbf {
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        Ok(self.scale * eval_integral(&self.weight, lambda)?)
    }
}

/// Splits a `(γ, η)` function into `f(1) · φ^(α)`.
pub fn normalize(gamma: f64, eta: &EtaWeight) -> NormalizedCbf {
    let weight = StepWeight::from_eta(eta);
    let scale = (gamma - gamma_of(&weight)).exp();
    NormalizedCbf { scale, weight }
}

/// Evaluates the interval form
/// `exp ∫_c^d (λ−1)/((d−c)+(λ−1)(x−c)) α(x) dx` directly in `[c, d]`
/// coordinates.
pub fn eval_interval(w: &IntervalWeight, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (c, d) = w.bounds();
    // (d−c) + (λ−1)(x−c) = (d−x) + λ(x−c)
    let factor = |x: f64| (d - x) + lambda * (x - c);
    let log: f64 = w
        .breakpoints()
        .windows(2)
        .zip(w.values())
        .map(|(b, &a)| if a == 0.0 { 0.0 } else { a * (factor(b[1]).ln() - factor(b[0]).ln()) })
        .sum();
    Ok(log.exp())
}

/// Weight given by samples on `[0,1]`, linearly interpolated.
#[derive(Debug, Clone)]
pub struct SampledWeight {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampledWeight {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::weight("empty sample set"));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(x, y) in &samples {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(Error::weight(format!("sample ({x}, {y}) outside [0,1]²")));
            }
        }
        let (xs, ys) = samples.into_iter().unzip();
        Ok(SampledWeight { xs, ys })
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&p| p <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i == self.xs.len() {
            return self.ys[i - 1];
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Adaptive quadrature of the log-integrand for an arbitrary weight function,
/// exponentiated. Fails rather than returning an inaccurate value.
pub fn eval_quadrature<F: Fn(f64) -> f64>(alpha: F, lambda: f64, rel_tol: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let integrand = |x: f64| (lambda - 1.0) / linear_factor(lambda, x) * alpha(x);
    // log φ is an absolute quantity; relative accuracy in φ is absolute
    // accuracy in the log.
    let q = adaptive_gk(
        integrand,
        0.0,
        1.0,
        GkOptions {
            rel_tol,
            abs_tol: rel_tol,
            max_subdivisions: 4000,
        },
    )?;
    Ok(q.value.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn two_seg() -> StepWeight {
        StepWeight::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.0]).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn integral_examples() {
        let half = StepWeight::constant(0.5).unwrap();
        assert!(close(eval_integral(&half, 4.0).unwrap(), 2.0, 1e-15));
        let w = StepWeight::new(vec![0.0, 0.3, 0.8, 1.0], vec![0.2, 0.9, 0.4]).unwrap();
        assert!((eval_integral(&w, 1.0).unwrap() - 1.0).abs() <= 1e-15);
        assert!(close(eval_integral(&two_seg(), 3.0).unwrap(), 2.0, 1e-15));
        assert!(eval_integral(&half, 0.0).is_err());
        assert!(eval_integral(&half, -1.0).is_err());
        assert!(eval_integral(&half, f64::NAN).is_err());
    }

    #[test]
    fn integral_underflow_keeps_log() {
        let one = StepWeight::constant(1.0).unwrap();
        let r = eval_integral_full(&one, 1e-320).unwrap();
        assert!(r.log_value < -700.0);
        assert!(r.value < 1e-300);
    }

    #[test]
    fn product_examples() {
        let half = StepWeight::constant(0.5).unwrap();
        let v = eval_product(&half, Complex64::i()).unwrap();
        let expect = Complex64::from_polar(1.0, PI / 4.0);
        assert!((v.value - expect).norm() < 1e-15);

        let one = StepWeight::constant(1.0).unwrap();
        let z = Complex64::new(2.0, 3.0);
        assert!((eval_product(&one, z).unwrap().value - z).norm() < 1e-14);

        let zero = StepWeight::constant(0.0).unwrap();
        assert_eq!(eval_product(&zero, z).unwrap().value, Complex64::new(1.0, 0.0));

        assert!(eval_product(&half, Complex64::new(-1.0, 0.0)).is_err());
        assert!(eval_product(&half, Complex64::new(0.0, 0.0)).is_err());
        assert!(eval_product(&half, Complex64::new(1.0, -1.0)).is_err());
    }

    #[test]
    fn product_factor_arguments_in_open_upper_half_plane() {
        let w = StepWeight::new(vec![0.0, 0.1, 0.4, 0.9, 1.0], vec![0.3, 1.0, 0.0, 0.6]).unwrap();
        let z = Complex64::new(-50.0, 0.01);
        let logs = product_factor_logs(&w, z).unwrap();
        for l in &logs {
            assert!(l.im > 0.0 && l.im < PI);
        }
        // the unweighted arguments telescope to arg z
        let total: f64 = logs.iter().map(|l| l.im).sum();
        assert!((total - z.arg()).abs() < 1e-12);
    }

    #[test]
    fn gamma_examples() {
        for a in [0.0, 0.25, 0.5, 1.0] {
            assert!(gamma_of(&StepWeight::constant(a).unwrap()).abs() < 1e-15);
        }
        assert!((gamma_of(&two_seg()) + LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_x_domain_closed_form() {
        // in x the antiderivative is −½ log(x² + (1−x)²)
        let g = |x: f64| -0.5 * (x * x + (1.0 - x) * (1.0 - x)).ln();
        let w = StepWeight::new(vec![0.0, 0.05, 0.3, 0.8, 1.0], vec![0.2, 0.9, 0.4, 0.7]).unwrap();
        let oracle: f64 = w.segments().map(|(lo, hi, a)| a * (g(lo) - g(hi))).sum();
        assert!((gamma_of(&w) - oracle).abs() < 1e-14);
    }

    #[test]
    fn eta_examples() {
        let rep = EtaRepresentation {
            gamma: 0.0,
            eta: EtaWeight::from_t_segments(&[0.0], &[0.5]).unwrap(),
        };
        assert!(close(eval_eta(&rep, 4.0).unwrap(), 2.0, 1e-14));

        let rep = EtaRepresentation {
            gamma: -LN_2 / 2.0,
            eta: EtaWeight::from_t_segments(&[0.0, 1.0], &[0.0, 1.0]).unwrap(),
        };
        assert!(close(eval_eta(&rep, 3.0).unwrap(), 2.0, 1e-14));

        let rep = EtaRepresentation {
            gamma: 0.0,
            eta: EtaWeight::from_t_segments(&[0.0], &[0.0]).unwrap(),
        };
        for l in [0.01, 1.0, 77.0] {
            assert_eq!(eval_eta(&rep, l).unwrap(), 1.0);
        }
        assert!(eval_eta(&rep, 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let half = EtaWeight::from_t_segments(&[0.0], &[0.5]).unwrap();
        let n = normalize(0.0, &half);
        assert!((n.scale - 1.0).abs() < 1e-15);
        assert_eq!(n.weight, StepWeight::constant(0.5).unwrap());
        let n = normalize(5f64.ln(), &half);
        assert!((n.scale - 5.0).abs() < 1e-14);
        let n = normalize(0.0, &EtaWeight::from_t_segments(&[0.0], &[0.0]).unwrap());
        assert_eq!(n.scale, 1.0);
        assert!(n.weight.is_zero());
    }

    #[test]
    fn interval_form_constant_half() {
        let iw = IntervalWeight::new(0.0, 2.0, vec![0.0, 2.0], vec![0.5]).unwrap();
        assert!(close(eval_interval(&iw, 4.0).unwrap(), 2.0, 1e-15));
    }

    #[test]
    fn quadrature_examples() {
        assert!((eval_quadrature(|_| 0.5, 4.0, 1e-10).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(eval_quadrature(|x| x, 1.0, 1e-10).unwrap(), 1.0);
        let sampled = SampledWeight::new((0..=200).map(|k| (k as f64 / 200.0, 0.5)).collect()).unwrap();
        let v = eval_quadrature(|x| sampled.value_at(x), 4.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        assert!(eval_quadrature(|x| x, -2.0, 1e-10).is_err());
    }

    #[test]
    fn step_approximation_stabilises() {
        // α(x) = x at λ = e; the gap to the quadrature value shrinks as n grows
        let lambda = std::f64::consts::E;
        let target = eval_quadrature(|x| x, lambda, 1e-12).unwrap();
        let grid: Vec<(f64, f64)> = (0..=100_000).map(|k| {
            let x = k as f64 / 100_000.0;
            (x, x)
        }).collect();
        let mut last = f64::INFINITY;
        for n in [1, 4, 16, 64, 256] {
            let w = StepWeight::approximate(&grid, n).unwrap();
            let gap = (eval_integral(&w, lambda).unwrap() - target).abs();
            assert!(gap < last, "n = {n}: gap {gap} did not shrink from {last}");
            last = gap;
        }
        assert!(last < 1e-4);
    }
}
