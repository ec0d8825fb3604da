//! Lévy–Khintchine triple `(a, b, m)` of `φ^(α)`:
//! `φ(λ) = a + bλ + ∫_(0,∞) (1 − e^{−λx}) m(x) dx`.
//!
//! Killing and drift are the `λ → 0+` and `λ → ∞` limits of the product
//! formula. The density is recovered from the boundary values on the
//! negative half-line,
//! `m(x) = (1/π) ∫_0^∞ e^{−sx} Im φ(−s + i0) ds`,
//! where `arg φ(−s+i0) = π η(s)` and `log |φ(−s+i0)|` has a closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::log_grid;
use crate::error::{Error, Result};
use crate::evaluator::gamma_of;
use crate::quad::{adaptive_gk, tanh_sinh_log, GkOptions};
use crate::weights::{x_to_t, StepWeight};

/// Killing `a = φ(0+)` and drift `b = lim φ(λ)/λ`.
pub fn killing_and_drift(w: &StepWeight) -> (f64, f64) {
    let bps = w.breakpoints();
    let vals = w.values();
    let n = vals.len();

    let a = if vals[n - 1] > 0.0 {
        0.0
    } else {
        // ratios (1 − t_i)/(1 − t_{i−1}) for the segments before the last
        let log_a: f64 = (0..n - 1)
            .filter(|&i| vals[i] != 0.0)
            .map(|i| vals[i] * ((1.0 - bps[i + 1]).ln() - (1.0 - bps[i]).ln()))
            .sum();
        log_a.exp()
    };

    let b = if vals[0] < 1.0 {
        0.0
    } else {
        let log_b: f64 = bps[1].ln()
            + (1..n)
                .filter(|&i| vals[i] != 0.0)
                .map(|i| vals[i] * (bps[i + 1].ln() - bps[i].ln()))
                .sum::<f64>();
        log_b.exp()
    };
    (a, b)
}

/// Boundary value `φ(−s + i0)` in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryValue {
    pub s: f64,
    pub log_modulus: f64,
    pub argument: f64,
    /// `s` sits on a jump of `η`; the argument is the right limit and the
    /// modulus is `0` or `∞`.
    pub at_jump: bool,
}

impl BoundaryValue {
    /// `Im φ(−s + i0)`.
    pub fn imag(&self) -> f64 {
        self.log_modulus.exp() * self.argument.sin()
    }
}

/// Precomputed data for boundary values of one weight.
///
/// With `τ_j = (1 − x_j)/x_j` the images of the breakpoints and
/// `c_j = a_{j+1} − a_j` (`a_{n+1} = 0`),
/// `log |φ(−s+i0)| = γ + Σ_j c_j [½ log(1+τ_j²) − log |τ_j − s|]`,
/// the principal-value integral of `t/(1+t²) − 1/(t−s)` against `η`.
#[derive(Debug, Clone)]
pub struct BoundaryModel {
    gamma: f64,
    /// `τ_j` for `j = 1..=n`, decreasing, ending with `τ_n = 0`.
    taus: Vec<f64>,
    coefs: Vec<f64>,
    half_log: Vec<f64>,
    /// `a_i` for `i = 1..=n`.
    values: Vec<f64>,
}

impl BoundaryModel {
    pub fn new(w: &StepWeight) -> Self {
        let vals = w.values();
        let n = vals.len();
        let taus: Vec<f64> = w.breakpoints()[1..].iter().map(|&x| x_to_t(x)).collect();
        let coefs: Vec<f64> = (0..n)
            .map(|j| {
                let next = if j + 1 < n { vals[j + 1] } else { 0.0 };
                next - vals[j]
            })
            .collect();
        let half_log = taus.iter().map(|&t| 0.5 * (t * t).ln_1p()).collect();
        BoundaryModel {
            gamma: gamma_of(w),
            taus,
            coefs,
            half_log,
            values: vals.to_vec(),
        }
    }

    /// Jump locations of `η` in increasing order (excluding `t = 0`).
    pub fn jumps(&self) -> Vec<f64> {
        self.taus.iter().rev().copied().filter(|&t| t > 0.0).collect()
    }

    /// `log |φ(−s+i0)|`, with `overrides` supplying `log |τ_j − s|` for
    /// selected breakpoints `j` (zero-based) where `s` is too close to `τ_j`
    /// to form the difference in floating point.
    fn log_modulus_with(&self, s: f64, overrides: &[(usize, f64)]) -> f64 {
        let mut acc = self.gamma;
        for (j, (&tau, &c)) in self.taus.iter().zip(&self.coefs).enumerate() {
            if c == 0.0 {
                continue;
            }
            let ln_dist = overrides
                .iter()
                .find(|o| o.0 == j)
                .map(|o| o.1)
                .unwrap_or_else(|| (tau - s).abs().ln());
            acc += c * (self.half_log[j] - ln_dist);
        }
        acc
    }

    /// Index `i` (zero-based) of the segment `(τ_{i+1}, τ_i)` containing `s`,
    /// together with whether `s` hits a breakpoint.
    fn locate(&self, s: f64) -> (usize, bool) {
        // taus decreasing: segment i has τ_i as its left end
        let i = self.taus.iter().position(|&t| t <= s).unwrap_or(self.taus.len() - 1);
        (i, self.taus[i] == s)
    }

    pub fn boundary_value(&self, s: f64) -> Result<BoundaryValue> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("boundary point must satisfy s > 0, got {s}")));
        }
        let (i, at_jump) = self.locate(s);
        let argument = std::f64::consts::PI * self.values[i];
        let log_modulus = if at_jump {
            let c = self.coefs[i];
            if c == 0.0 {
                self.log_modulus_with(s, &[])
            } else {
                c.signum() * f64::INFINITY
            }
        } else {
            self.log_modulus_with(s, &[])
        };
        Ok(BoundaryValue {
            s,
            log_modulus,
            argument,
            at_jump,
        })
    }
}

/// `φ(−s + i0)` for `s > 0`.
pub fn boundary_value(w: &StepWeight, s: f64) -> Result<BoundaryValue> {
    BoundaryModel::new(w).boundary_value(s)
}

/// Options for the density inversion.
#[derive(Debug, Clone, Copy)]
pub struct DensityOptions {
    pub rel_tol: f64,
    pub max_chunks: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions {
            rel_tol: 1e-10,
            max_chunks: 120,
        }
    }
}

impl BoundaryModel {
    /// `(1/π) ∫_0^∞ e^{−sx} Im φ(−s+i0) ds`.
    pub fn density(&self, x: f64, opts: DensityOptions) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::domain(format!("density needs x > 0, got {x}")));
        }
        let n = self.taus.len();
        let unit = 1.0 / x;
        let mut total = 0.0;

        // finite segments (τ_i, τ_{i−1}) for i = n..2 in one-based terms
        for i in 1..n {
            let a_val = self.values[i];
            let sin = (std::f64::consts::PI * a_val).sin();
            if sin <= 0.0 || a_val >= 1.0 {
                continue;
            }
            let (lo, hi) = (self.taus[i], self.taus[i - 1]);
            total += self.segment_integral(x, sin, lo, Some(i), hi, Some(i - 1), unit, opts)?;
        }

        // last segment (τ_1, ∞)
        let a_val = self.values[0];
        let sin = (std::f64::consts::PI * a_val).sin();
        if sin > 0.0 && a_val < 1.0 {
            let start = self.taus[0];
            let mut lo = start;
            let mut width = unit;
            let mut converged = false;
            let mut tail = f64::INFINITY;
            for k in 0..opts.max_chunks {
                let hi = lo + width;
                let left = if k == 0 { Some(0) } else { None };
                total += self.segment_integral(x, sin, lo, left, hi, None, unit, opts)?;
                lo = hi;
                width *= 2.0;
                tail = self.tail_bound(x, sin, lo);
                if tail <= 0.1 * opts.rel_tol * total || (total == 0.0 && tail == 0.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Accuracy {
                    what: format!("density tail at x = {x} not bounded"),
                    achieved: tail,
                    requested: opts.rel_tol * total,
                });
            }
        }
        Ok(total / std::f64::consts::PI)
    }

    /// Integral over `[lo, hi]` (split into chunks of growing width so that
    /// the exponential factor is resolved) of `e^{−sx} |φ(−s)| sin`.
    #[allow(clippy::too_many_arguments)]
    fn segment_integral(
        &self,
        x: f64,
        sin: f64,
        lo: f64,
        left: Option<usize>,
        hi: f64,
        right: Option<usize>,
        unit: f64,
        opts: DensityOptions,
    ) -> Result<f64> {
        let ln_sin = sin.ln();
        let mut total = 0.0;
        let mut a = lo;
        let mut width = unit;
        loop {
            let b = if hi - a <= 1.5 * width { hi } else { a + width };
            let lb = if a == lo { left } else { None };
            let rb = if b == hi { right } else { None };
            let q = tanh_sinh_log(
                |s, ln_da, ln_db| {
                    let mut ov = [(usize::MAX, 0.0); 2];
                    if let Some(j) = lb {
                        ov[0] = (j, ln_da);
                    }
                    if let Some(j) = rb {
                        ov[1] = (j, ln_db);
                    }
                    -s * x + self.log_modulus_with(s, &ov) + ln_sin
                },
                a,
                b,
                opts.rel_tol,
            )?;
            total += q.value;
            if b == hi {
                break;
            }
            // the exponential factor has made the rest negligible
            if (-b * x).exp() * self.segment_envelope(b, hi) * (hi - b) <= 1e-3 * opts.rel_tol * total {
                break;
            }
            a = b;
            width *= 2.0;
        }
        Ok(total)
    }

    /// Upper bound of `|φ(−s+i0)|` over `s ∈ [from, to]` away from jumps,
    /// assuming `[from, to]` does not contain a breakpoint image.
    fn segment_envelope(&self, from: f64, to: f64) -> f64 {
        let mut acc = self.gamma;
        for (j, (&tau, &c)) in self.taus.iter().zip(&self.coefs).enumerate() {
            if c == 0.0 {
                continue;
            }
            let d_from = (tau - from).abs();
            let d_to = (tau - to).abs();
            // −c log d is maximised at the smaller distance when c > 0
            let d = if c > 0.0 { d_from.min(d_to) } else { d_from.max(d_to) };
            acc += c * (self.half_log[j] - d.ln());
        }
        acc.exp()
    }

    /// Bound on `(1/π)·∫_S^∞ e^{−sx} Im φ(−s+i0) ds` for `S > τ_1`, using
    /// `|φ(−s)| ≤ K s^{a_1} ≤ K (1+s)` there.
    fn tail_bound(&self, x: f64, sin: f64, start: f64) -> f64 {
        let mut ln_k = self.gamma;
        for (j, (&tau, &c)) in self.taus.iter().zip(&self.coefs).enumerate() {
            if c == 0.0 {
                continue;
            }
            ln_k += c * self.half_log[j];
            if c > 0.0 {
                ln_k -= c * (1.0 - tau / start).ln();
            }
        }
        let integral = (-start * x).exp() * ((1.0 + start) / x + 1.0 / (x * x));
        sin * ln_k.exp() * integral / std::f64::consts::PI
    }
}

/// Lévy density `m(x)` of `φ^(α)` at `x > 0`.
pub fn levy_density(w: &StepWeight, x: f64) -> Result<f64> {
    BoundaryModel::new(w).density(x, DensityOptions::default())
}

/// Power-law extrapolation beyond one end of the density grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    /// Exponent `p` of `m(x) ≈ m(x_min)(x/x_min)^p` below the grid.
    pub small_x_exponent: f64,
    /// `∫_0^{x_min} x m(x) dx`, folded into the drift during reconstruction.
    pub small_x_drift: f64,
    /// `∫_0^{x_min} x² m(x) dx`, bounding the error of that folding.
    pub small_x_second_moment: f64,
    /// Exponent of the power law above the grid.
    pub tail_exponent: f64,
    /// `∫_{x_max}^∞ m(x) dx`.
    pub tail_mass: f64,
}

/// Sampled Lévy–Khintchine triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyTriple {
    pub a: f64,
    pub b: f64,
    pub grid: Vec<f64>,
    pub m: Vec<f64>,
    pub truncation_report: TruncationReport,
}

/// Density grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for DensityGrid {
    fn default() -> Self {
        DensityGrid {
            x_min: 1e-4,
            x_max: 1e4,
            points: 200,
        }
    }
}

/// `∫_{e^{lu}}^{e^{lv}} y^{q−1} dy`.
fn power_integral(lu: f64, lv: f64, q: f64) -> f64 {
    if lv == f64::INFINITY {
        return -(q * lu).exp() / q;
    }
    if q == 0.0 {
        lv - lu
    } else {
        (q * lu).exp() * (q * (lv - lu)).exp_m1() / q
    }
}

fn exponent(x0: f64, m0: f64, x1: f64, m1: f64) -> Option<f64> {
    (m0 > 0.0 && m1 > 0.0).then(|| (m1 / m0).ln() / (x1 / x0).ln())
}

/// Extracts the triple on a log-spaced grid.
pub fn extract(w: &StepWeight, grid: DensityGrid, opts: DensityOptions) -> Result<LevyTriple> {
    if !(grid.x_min > 0.0 && grid.x_max > grid.x_min && grid.points >= 2) {
        return Err(Error::domain("density grid needs 0 < x_min < x_max and at least 2 points"));
    }
    let (a, b) = killing_and_drift(w);
    let model = BoundaryModel::new(w);
    let xs = log_grid(grid.x_min, grid.x_max, grid.points);
    let m: Vec<f64> = xs
        .par_iter()
        .map(|&x| model.density(x, opts))
        .collect::<Result<_>>()?;
    let truncation_report = truncation(&xs, &m)?;
    Ok(LevyTriple {
        a,
        b,
        grid: xs,
        m,
        truncation_report,
    })
}

fn truncation(xs: &[f64], m: &[f64]) -> Result<TruncationReport> {
    let n = xs.len();
    let (small_x_exponent, small_x_drift, small_x_second_moment) =
        match exponent(xs[0], m[0], xs[1], m[1]) {
            None => (0.0, 0.0, 0.0),
            Some(p) if p > -2.0 => (
                p,
                m[0] * xs[0] * xs[0] / (p + 2.0),
                m[0] * xs[0] * xs[0] * xs[0] / (p + 3.0),
            ),
            Some(p) => {
                return Err(Error::Accuracy {
                    what: format!("small-x density exponent {p} is not integrable against x"),
                    achieved: f64::INFINITY,
                    requested: 0.0,
                })
            }
        };
    let (tail_exponent, tail_mass) = match exponent(xs[n - 2], m[n - 2], xs[n - 1], m[n - 1]) {
        None => (f64::NEG_INFINITY, 0.0),
        Some(p) if p < -1.0 => (p, m[n - 1] * xs[n - 1] / (-p - 1.0)),
        Some(p) => {
            return Err(Error::Accuracy {
                what: format!("large-x density exponent {p} leaves infinite mass beyond the grid"),
                achieved: f64::INFINITY,
                requested: 0.0,
            })
        }
    };
    Ok(TruncationReport {
        small_x_exponent,
        small_x_drift,
        small_x_second_moment,
        tail_exponent,
        tail_mass,
    })
}

/// Shape of the interpolated density on one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    /// `m(x) = m0 (x/x0)^p`.
    Power { x0: f64, m0: f64, p: f64 },
    /// Linear interpolation, used when an end value is zero.
    Linear { x0: f64, m0: f64, x1: f64, m1: f64 },
}

impl Cell {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Cell::Power { x0, m0, p } => m0 * (x / x0).powf(p),
            Cell::Linear { x0, m0, x1, m1 } => m0 + (m1 - m0) * (x - x0) / (x1 - x0),
        }
    }

    /// `∫_u^v x^k m(x) dx` for `k ∈ {0, 1}`.
    fn moment(&self, u: f64, v: f64, k: i32) -> f64 {
        match *self {
            Cell::Power { x0, m0, p } => {
                m0 * x0.powi(k + 1)
                    * power_integral((u / x0).ln(), (v / x0).ln(), p + 1.0 + k as f64)
            }
            Cell::Linear { m0, m1, .. } if m0 == 0.0 && m1 == 0.0 => 0.0,
            Cell::Linear { x0, m0, x1, m1 } => {
                let s = (m1 - m0) / (x1 - x0);
                let c = m0 - s * x0;
                let prim = |x: f64| match k {
                    0 => c * x + 0.5 * s * x * x,
                    _ => 0.5 * c * x * x + s * x * x * x / 3.0,
                };
                prim(v) - prim(u)
            }
        }
    }

    /// Point `v ≥ u` with `∫_u^v m = mass` (within this cell's law).
    fn quantile(&self, u: f64, hi: f64, mass: f64) -> f64 {
        match *self {
            Cell::Power { x0, m0, p } => {
                let q = p + 1.0;
                let lu = (u / x0).ln();
                let scaled = mass / (m0 * x0);
                let lv = if q == 0.0 {
                    lu + scaled
                } else if hi.is_infinite() {
                    ((q * lu).exp() + scaled * q).ln() / q
                } else {
                    lu + (scaled * q * (-q * lu).exp()).ln_1p() / q
                };
                let v = x0 * lv.exp();
                if v.is_nan() { hi } else { v.clamp(u, hi) }
            }
            Cell::Linear { .. } => {
                let (mut lo, mut up) = (u, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + up);
                    if self.moment(u, mid, 0) < mass {
                        lo = mid;
                    } else {
                        up = mid;
                    }
                    if up - lo <= 1e-15 * up {
                        break;
                    }
                }
                0.5 * (lo + up)
            }
        }
    }
}

impl LevyTriple {
    /// Number of interior cells plus the tail cell.
    fn cell(&self, j: usize) -> (f64, f64, Cell) {
        let n = self.grid.len();
        if j + 1 >= n {
            let x0 = self.grid[n - 1];
            let m0 = self.m[n - 1];
            let p = self.truncation_report.tail_exponent;
            let cell = if m0 > 0.0 {
                Cell::Power { x0, m0, p }
            } else {
                Cell::Linear { x0, m0: 0.0, x1: 2.0 * x0, m1: 0.0 }
            };
            return (x0, f64::INFINITY, cell);
        }
        let (x0, x1) = (self.grid[j], self.grid[j + 1]);
        let (m0, m1) = (self.m[j], self.m[j + 1]);
        let cell = match exponent(x0, m0, x1, m1) {
            Some(p) => Cell::Power { x0, m0, p },
            None => Cell::Linear { x0, m0, x1, m1 },
        };
        (x0, x1, cell)
    }

    fn cell_index(&self, x: f64) -> usize {
        self.grid.partition_point(|&g| g <= x).saturating_sub(1)
    }

    /// Interpolated density (log-log within cells, power-law beyond the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.grid[0] {
            let p = self.truncation_report.small_x_exponent;
            return self.m[0] * (x / self.grid[0]).powf(p);
        }
        let (_, _, cell) = self.cell(self.cell_index(x));
        cell.eval(x)
    }

    /// Iterates over the cells covering `[from, ∞)`.
    fn cells_from(&self, from: f64) -> impl Iterator<Item = (f64, f64, Cell)> + '_ {
        let start = self.cell_index(from);
        (start..self.grid.len()).map(move |j| {
            let (lo, hi, cell) = self.cell(j);
            (lo.max(from), hi, cell)
        })
    }

    /// `∫_from^∞ m(x) dx` of the interpolated density, `from ≥ x_min`.
    pub fn mass_above(&self, from: f64) -> f64 {
        self.cells_from(from).map(|(lo, hi, c)| c.moment(lo, hi, 0)).sum()
    }

    /// `∫_0^upto x m(x) dx`, including the small-x extrapolation.
    pub fn first_moment_below(&self, upto: f64) -> f64 {
        let mut acc = self.truncation_report.small_x_drift;
        for j in 0..self.grid.len() - 1 {
            let (lo, hi, cell) = self.cell(j);
            if lo >= upto {
                break;
            }
            acc += cell.moment(lo, hi.min(upto), 1);
        }
        acc
    }

    /// Cells on `[from, ∞)` with their masses, for inverse-CDF sampling.
    pub(crate) fn mass_table(&self, from: f64) -> Vec<(f64, f64, f64)> {
        self.cells_from(from)
            .map(|(lo, hi, c)| (lo, hi, c.moment(lo, hi, 0)))
            .collect()
    }

    /// Solves `∫_lo^v m = mass` inside the cell starting at `lo`.
    pub(crate) fn quantile_in_cell(&self, lo: f64, hi: f64, mass: f64) -> f64 {
        let (_, _, cell) = self.cell(self.cell_index(lo));
        cell.quantile(lo, hi, mass)
    }

    /// `∫_from^∞ (1 − e^{−λx}) m(x) dx` over the grid and the tail, with an
    /// error bound for the tail approximation.
    pub(crate) fn jump_part(&self, lambda: f64, from: f64) -> Result<(f64, f64)> {
        let mut value = 0.0;
        let mut error = 0.0;
        let n = self.grid.len();
        for j in self.cell_index(from)..n - 1 {
            let (lo, hi, cell) = self.cell(j);
            let lo = lo.max(from);
            let q = adaptive_gk(
                |x| -(-lambda * x).exp_m1() * cell.eval(x),
                lo,
                hi,
                GkOptions { rel_tol: 1e-12, abs_tol: 0.0, max_subdivisions: 200 },
            )?;
            value += q.value;
            error += q.error;
        }
        // tail: 1 − e^{−λx} ≈ 1 beyond x_max
        let x_max = self.grid[n - 1];
        let tail = self.truncation_report.tail_mass;
        value += tail;
        error += (-lambda * x_max).exp() * tail;
        Ok((value, error))
    }
}

/// Reconstructed `φ(λ)` with the bound on truncation and quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reconstruction {
    pub lambda: f64,
    pub value: f64,
    pub error_bound: f64,
    /// Contribution `λ · ∫_0^{x_min} x m(x) dx` of the folded small jumps.
    pub small_x_drift_term: f64,
}

/// `a + bλ + ∫ (1 − e^{−λx}) m(x) dx` from a sampled triple.
///
/// Jumps below `x_min` are folded into the drift (`1 − e^{−λx} ≈ λx`, error at
/// most `λ²/2 ∫ x² m`). Fails when the error bound exceeds `rel_tol · value`.
pub fn reconstruct(triple: &LevyTriple, lambda: f64, rel_tol: f64) -> Result<Reconstruction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    let tr = &triple.truncation_report;
    let small_x_drift_term = lambda * tr.small_x_drift;
    let (jumps, jump_err) = triple.jump_part(lambda, triple.grid[0])?;
    let value = triple.a + triple.b * lambda + small_x_drift_term + jumps;
    let error_bound = 0.5 * lambda * lambda * tr.small_x_second_moment + jump_err;
    if error_bound > rel_tol * value.abs() && error_bound > 0.0 {
        return Err(Error::Accuracy {
            what: format!("reconstruction at lambda = {lambda}"),
            achieved: error_bound,
            requested: rel_tol * value.abs(),
        });
    }
    Ok(Reconstruction {
        lambda,
        value,
        error_bound,
        small_x_drift_term,
    })
}
