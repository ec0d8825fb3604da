//! Numerical quadrature used for cross-checks and for the Lévy-density
//! inversion.
//!
//! Two rules are provided: globally adaptive Gauss–Kronrod (7/15 points) for
//! smooth or mildly discontinuous integrands, and a tanh–sinh rule evaluated
//! in log space that tolerates integrable power singularities at both ends of
//! the interval.

use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Value of an integral together with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Options for [`adaptive_gk`].
#[derive(Debug, Clone, Copy)]
pub struct GkOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for GkOptions {
    fn default() -> Self {
        GkOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_subdivisions: 4000,
        }
    }
}

/// Globally adaptive Gauss–Kronrod quadrature of `f` over `[a, b]`.
///
/// Fails with [`Error::Accuracy`] when the subdivision budget runs out before
/// the error estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: GkOptions) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = gk15(&f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut splits = 0;
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target || !total.is_finite() {
            break;
        }
        if splits >= opts.max_subdivisions {
            return Err(Error::Accuracy {
                what: "adaptive Gauss-Kronrod quadrature exhausted its subdivision budget".into(),
                achieved: total_err,
                requested: target,
            });
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Accuracy {
                what: "adaptive Gauss-Kronrod quadrature hit floating-point resolution".into(),
                achieved: total_err,
                requested: target,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evaluations += 30;
        splits += 1;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        // resum occasionally so the running totals do not drift
        if splits % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    if !value.is_finite() {
        return Err(Error::Accuracy {
            what: "non-finite integrand value".into(),
            achieved: f64::INFINITY,
            requested: opts.rel_tol,
        });
    }
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}

fn softplus(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

fn ln_cosh(y: f64) -> f64 {
    let y = y.abs();
    y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
}

/// Node of the tanh–sinh rule on `[a, b]`.
struct Node {
    x: f64,
    ln_da: f64,
    ln_db: f64,
    ln_w: f64,
}

fn ts_node(a: f64, b: f64, t: f64) -> Node {
    let half = 0.5 * (b - a);
    let u = FRAC_PI_2 * t.sinh();
    let ln_2h = (2.0 * half).ln();
    let ln_da = ln_2h - softplus(-2.0 * u);
    let ln_db = ln_2h - softplus(2.0 * u);
    let x = if u > 0.0 { b - ln_db.exp() } else { a + ln_da.exp() };
    let ln_w = half.ln() + FRAC_PI_2.ln() + ln_cosh(t) - 2.0 * ln_cosh(u);
    Node { x, ln_da, ln_db, ln_w }
}

/// Tanh–sinh quadrature of a positive integrand given in log form.
///
/// `ln_f(x, ln(x−a), ln(b−x))` returns `ln f(x)` (or `-inf` where `f = 0`).
/// The exact log-distances to both endpoints are supplied so that the
/// integrand can resolve power-law singularities down to distances far below
/// the spacing of floating-point numbers near `a` and `b`.
pub fn tanh_sinh_log<F>(ln_f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature>
where
    F: Fn(f64, f64, f64) -> f64,
{
    const MAX_T: f64 = 9.0;
    const MAX_LEVEL: u32 = 12;
    const DROP: f64 = 60.0;
    if !(b > a) {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let term = |t: f64| {
        let n = ts_node(a, b, t);
        let lf = ln_f(n.x, n.ln_da, n.ln_db);
        if lf == f64::NEG_INFINITY { f64::NEG_INFINITY } else { n.ln_w + lf }
    };

    // Scan a coarse grid to find where the terms become negligible on each side.
    let scan_step = 0.125;
    let steps = (MAX_T / scan_step) as usize;
    let mut peak = term(0.0);
    let mut right = Vec::with_capacity(steps);
    let mut left = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 * scan_step;
        let r = term(t);
        let l = term(-t);
        peak = peak.max(r).max(l);
        right.push((t, r));
        left.push((t, l));
    }
    let mut evaluations = 1 + 2 * steps;
    if peak == f64::NEG_INFINITY {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations,
        });
    }
    if peak.is_nan() || peak == f64::INFINITY {
        return Err(Error::Accuracy {
            what: "tanh-sinh integrand is not finite".into(),
            achieved: f64::INFINITY,
            requested: rel_tol,
        });
    }
    let extent = |side: &[(f64, f64)]| {
        let last = side.iter().rposition(|&(_, v)| v > peak - DROP);
        match last {
            Some(i) if i + 1 == side.len() => None,
            Some(i) => Some(side[(i + 2).min(side.len() - 1)].0),
            None => Some(scan_step),
        }
    };
    let (t_right, t_left) = match (extent(&right), extent(&left)) {
        (Some(r), Some(l)) => (r, l),
        _ => {
            return Err(Error::Accuracy {
                what: "tanh-sinh terms did not decay within the truncation window".into(),
                achieved: f64::INFINITY,
                requested: rel_tol,
            })
        }
    };

    let sum_over = |h: f64, stride: usize, offset: usize| -> (f64, usize) {
        let mut s = 0.0;
        let mut n = 0;
        let mut k = offset;
        loop {
            let t = k as f64 * h;
            if t > t_right {
                break;
            }
            let v = term(t);
            if v > f64::NEG_INFINITY {
                s += v.exp();
            }
            n += 1;
            k += stride;
        }
        let mut k = offset.max(1);
        loop {
            let t = k as f64 * h;
            if t > t_left {
                break;
            }
            let v = term(-t);
            if v > f64::NEG_INFINITY {
                s += v.exp();
            }
            n += 1;
            k += stride;
        }
        (s, n)
    };

    let mut h = 1.0;
    let (mut sum, n) = sum_over(h, 1, 0);
    evaluations += n;
    let mut estimate = h * sum;
    let mut error = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let (s, n) = sum_over(h, 2, 1);
        evaluations += n;
        sum += s;
        let next = h * sum;
        error = (next - estimate).abs();
        estimate = next;
        if level >= 3 && error <= rel_tol * estimate.abs() {
            return Ok(Quadrature {
                value: estimate,
                error,
                evaluations,
            });
        }
    }
    Err(Error::Accuracy {
        what: "tanh-sinh refinement did not converge".into(),
        achieved: error / estimate.abs(),
        requested: rel_tol,
    })
}
