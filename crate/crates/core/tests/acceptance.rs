//! Acceptance criteria. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion with its worst observed error and runtime;
//! the process exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use cbf_core::analysis::{check_bernstein_differences, check_pick, log_grid, UniformGrid};
use cbf_core::evaluator::{eval_eta, eval_interval, eval_integral, eval_product, gamma_of, normalize};
use cbf_core::levy::{extract, reconstruct, DensityGrid, DensityOptions};
use cbf_core::sim::{laplace_check, simulate, SimConfig};
use cbf_core::weights::IntervalWeight;
use cbf_core::{killing_and_drift, EtaRepresentation, EtaWeight, StepWeight};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{half, random_weights, rel, three_quarters, two_segment};

const WEIGHT_SEED: u64 = 20_240_601;

fn report(id: u32, name: &str, passed: bool, detail: String, elapsed: Duration, budget: Option<f64>) {
    let within = budget.is_none_or(|b| elapsed.as_secs_f64() < b);
    let status = if passed && within { "PASS" } else { "FAIL" };
    let budget = budget.map(|b| format!(" (budget {b} s)")).unwrap_or_default();
    println!(
        "acceptance {id}: {status} {name}: {detail}; {:.3} s{budget}",
        elapsed.as_secs_f64()
    );
    assert!(passed && within, "criterion {id} failed");
}

fn criterion_1_fractional_power_reproduction() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let a0 = k as f64 / 10.0;
        let w = StepWeight::constant(a0).unwrap();
        for l in log_grid(1e-3, 1e3, 50) {
            worst = worst.max(rel(eval_integral(&w, l).unwrap(), l.powf(a0)));
        }
    }
    report(1, "fractional powers", worst <= 1e-12, format!("max rel err {worst:e}"), start.elapsed(), Some(1.0));
}

fn criterion_2_representation_agreement() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for w in random_weights(100, WEIGHT_SEED) {
        let rep = EtaRepresentation { gamma: gamma_of(&w), eta: w.to_eta() };
        for l in log_grid(1e-2, 1e2, 30) {
            let i = eval_integral(&w, l).unwrap();
            let p = eval_product(&w, Complex64::new(l, 0.0)).unwrap().value.re;
            let e = eval_eta(&rep, l).unwrap();
            worst = worst.max(rel(i, p)).max(rel(i, e)).max(rel(p, e));
        }
    }
    report(2, "representation agreement", worst <= 1e-10, format!("max pairwise rel diff {worst:e}"), start.elapsed(), Some(5.0));
}

fn criterion_3_duality() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for w in random_weights(100, WEIGHT_SEED) {
        let c = w.complement();
        for l in log_grid(1e-2, 1e2, 30) {
            let prod = eval_integral(&w, l).unwrap() * eval_integral(&c, l).unwrap();
            worst = worst.max(rel(prod, l));
        }
    }
    report(3, "duality", worst <= 1e-10, format!("max rel err {worst:e}"), start.elapsed(), None);
}

fn criterion_4_pick_property() {
    let start = Instant::now();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for (i, w) in random_weights(100, WEIGHT_SEED).iter().enumerate() {
        let r = check_pick(w, 1000, 42 + i as u64);
        worst = worst.max(r.worst_violation);
        failures += usize::from(!r.passed);
    }
    report(4, "pick property", failures == 0, format!("{failures} failing weights, worst violation {worst:e}"), start.elapsed(), None);
}

fn criterion_5_bernstein_differences() {
    let start = Instant::now();
    let grid = UniformGrid::new(0.5, 10.0, 0.01).unwrap();
    let mut weights = random_weights(100, WEIGHT_SEED);
    weights.extend([half(), three_quarters(), two_segment()]);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let r = check_bernstein_differences(|l| eval_integral(w, l).unwrap(), &grid, 6).unwrap();
        worst = worst.max(r.worst_violation);
        if !r.passed {
            failures.push(format!("#{i}: {} {:?}", r.worst_location, r.notes));
        }
    }
    report(5, "Bernstein differences K=6", failures.is_empty(), format!("worst violation {worst:e} {failures:?}"), start.elapsed(), None);
}

fn criterion_6_levy_loop_closure() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut m1 = f64::NAN;
    for (name, w) in [("half", half()), ("three quarters", three_quarters()), ("two segment", two_segment())] {
        let triple = extract(&w, DensityGrid::default(), DensityOptions::default()).unwrap();
        if name == "half" {
            m1 = triple.density_at(1.0);
        }
        for l in log_grid(0.1, 10.0, 25) {
            let r = reconstruct(&triple, l, 1e-3).unwrap();
            worst = worst.max(rel(r.value, eval_integral(&w, l).unwrap()));
        }
    }
    let m1_err = (m1 - 0.5 / std::f64::consts::PI.sqrt()).abs();
    report(
        6,
        "Levy loop closure",
        worst <= 1e-3 && m1_err <= 1e-4,
        format!("max rel err {worst:e}, |m(1) - 1/(2 sqrt pi)| = {m1_err:e}"),
        start.elapsed(),
        Some(30.0),
    );
}

fn criterion_7_killing_and_drift() {
    let start = Instant::now();
    let cases = [
        (two_segment(), (0.5, 0.5)),
        (StepWeight::constant(1.0).unwrap(), (0.0, 1.0)),
        (half(), (0.0, 0.0)),
    ];
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for (w, expect) in &cases {
        let (a, b) = killing_and_drift(w);
        exact &= (a, b) == *expect;
        worst = worst.max((a - eval_integral(w, 1e-14).unwrap()).abs());
        worst = worst.max((b - eval_integral(w, 1e14).unwrap() / 1e14).abs());
    }
    report(7, "killing and drift", exact && worst <= 1e-6, format!("exact: {exact}, limit gap {worst:e}"), start.elapsed(), None);
}

fn criterion_8_monte_carlo_laplace() {
    let start = Instant::now();
    let lambdas = [0.5, 1.0, 2.0, 4.0];
    let mut cells = 0;
    let mut passed_cells = 0;
    let mut unit_ok = true;
    let mut lines = Vec::new();
    for (name, w) in [("half", half()), ("three quarters", three_quarters()), ("two segment", two_segment())] {
        let bundle = simulate(&w, &SimConfig::new(1e-3, 1.0, 100_000, 42)).unwrap();
        let check = laplace_check(&bundle, &lambdas, 1.0, 3.0, 0.95).unwrap();
        for c in &check.cells {
            cells += 1;
            passed_cells += usize::from(c.passed);
            unit_ok &= c.lambda != 1.0 || c.passed;
            lines.push(format!("{name} lambda={} z={:.2}", c.lambda, c.z_score));
        }
    }
    let fraction = passed_cells as f64 / cells as f64;
    report(
        8,
        "Monte Carlo Laplace exponent",
        fraction >= 0.95 && unit_ok,
        format!("{passed_cells}/{cells} cells within 3 s.e. [{}]", lines.join(", ")),
        start.elapsed(),
        Some(60.0),
    );
}

fn criterion_9_remap_and_normalization() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(WEIGHT_SEED);
    let mut remap_worst: f64 = 0.0;
    for w in random_weights(20, WEIGHT_SEED + 1) {
        let c = rng.random_range(-5.0..5.0);
        let d = c + rng.random_range(0.1..10.0);
        let bp = w.breakpoints().iter().map(|&x| c + (d - c) * x).collect();
        let iw = IntervalWeight::new(c, d, bp, w.values().to_vec()).unwrap();
        let pulled = iw.remap().unwrap();
        for l in log_grid(1e-2, 1e2, 30) {
            remap_worst = remap_worst.max(rel(eval_interval(&iw, l).unwrap(), eval_integral(&pulled, l).unwrap()));
        }
    }

    let mut norm_worst: f64 = 0.0;
    let mut scale_err: f64 = 0.0;
    let half_eta = EtaWeight::from_t_segments(&[0.0], &[0.5]).unwrap();
    let mut cases = vec![(5f64.ln(), half_eta.clone(), Some(5.0))];
    for (i, w) in random_weights(20, WEIGHT_SEED + 2).into_iter().enumerate() {
        cases.push((gamma_of(&w) + (i as f64 - 10.0) / 4.0, w.to_eta(), None));
    }
    for (gamma, eta, expect) in cases {
        let n = normalize(gamma, &eta);
        if let Some(c) = expect {
            scale_err = scale_err.max(rel(n.scale, c));
        }
        let rep = EtaRepresentation { gamma, eta };
        for l in log_grid(1e-2, 1e2, 30) {
            norm_worst = norm_worst.max(rel(eval_eta(&rep, l).unwrap(), n.scale * eval_integral(&n.weight, l).unwrap()));
        }
    }
    report(
        9,
        "interval remap and normalization",
        remap_worst <= 1e-12 && norm_worst <= 1e-10 && scale_err <= 1e-10,
        format!("remap {remap_worst:e}, normalize {norm_worst:e}, log 5 scale {scale_err:e}"),
        start.elapsed(),
        None,
    );
}

fn main() {
    let criteria: [(u32, fn()); 9] = [
        (1, criterion_1_fractional_power_reproduction),
        (2, criterion_2_representation_agreement),
        (3, criterion_3_duality),
        (4, criterion_4_pick_property),
        (5, criterion_5_bernstein_differences),
        (6, criterion_6_levy_loop_closure),
        (7, criterion_7_killing_and_drift),
        (8, criterion_8_monte_carlo_laplace),
        (9, criterion_9_remap_and_normalization),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if std::panic::catch_unwind(run).is_err() {
            // a panic before `report` has printed nothing yet
            println!("acceptance {id}: FAIL (see panic above)");
            failed.push(id);
        }
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
