//! Compound-Poisson simulation of the subordinator with Laplace exponent
//! `φ^(α)`, with killing and drift.
//!
//! Jumps larger than `ε` are drawn from the sampled Lévy density by inverse
//! CDF; jumps below `ε` are replaced by their mean, which enters the drift
//! `b_eff = b + ∫_0^ε x m(x) dx`. Killing is an exponential lifetime with rate
//! `a`; a killed path has value `+∞`, so it contributes `0` to `e^{−λS_t}`.
//!
//! A time change `c` runs the process on the operational clock `c·t`: the
//! bundle stores clock times, the drift slope `c·b_eff`, and killing times on
//! the clock.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::CheckReport;
use crate::error::{Error, Result};
use crate::evaluator::eval_integral;
use crate::levy::{extract, DensityGrid, DensityOptions, LevyTriple};
use crate::weights::StepWeight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub time_change: f64,
}

impl SimConfig {
    pub fn new(epsilon: f64, horizon: f64, paths: usize, seed: u64) -> Self {
        SimConfig {
            epsilon,
            horizon,
            paths,
            seed,
            time_change: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        if self.paths < 1 {
            return Err(Error::domain("at least one path is required"));
        }
        if !(self.time_change > 0.0 && self.time_change.is_finite()) {
            return Err(Error::domain("time change must be positive"));
        }
        Ok(())
    }

    /// Length of the operational-time window `c·T`.
    pub fn operational_horizon(&self) -> f64 {
        self.time_change * self.horizon
    }
}

/// What the sampled process looks like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Jumps,
    /// No jumps: deterministic drift, possibly killed.
    DriftOnly,
    /// `S ≡ 0` up to an exponential killing time (the case `α ≡ 0`).
    PureKilling,
}

/// Compound-Poisson jump law above `ε` plus drift and killing.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    pub rate: f64,
    pub effective_drift: f64,
    pub killing_rate: f64,
    pub epsilon: f64,
    pub kind: ProcessKind,
    triple: LevyTriple,
    /// `(lo, hi, cumulative mass up to hi)` per cell above `ε`.
    cells: Vec<(f64, f64, f64)>,
}

/// Builds the jump sampler of a sampled triple for cutoff `ε`.
pub fn build_sampler(triple: &LevyTriple, epsilon: f64) -> Result<JumpSampler> {
    let (g0, g1) = (triple.grid[0], *triple.grid.last().unwrap());
    if !(epsilon >= g0 && epsilon <= g1) {
        return Err(Error::domain(format!(
            "epsilon {epsilon} outside the density grid [{g0}, {g1}]"
        )));
    }
    let mut acc = 0.0;
    let cells: Vec<(f64, f64, f64)> = triple
        .mass_table(epsilon)
        .into_iter()
        .map(|(lo, hi, mass)| {
            acc += mass;
            (lo, hi, acc)
        })
        .collect();
    let rate = acc;
    let effective_drift = triple.b + triple.first_moment_below(epsilon);
    let killing_rate = triple.a;
    let kind = if rate > 0.0 {
        ProcessKind::Jumps
    } else if effective_drift > 0.0 {
        ProcessKind::DriftOnly
    } else if killing_rate > 0.0 {
        ProcessKind::PureKilling
    } else {
        return Err(Error::Degenerate(
            "no jumps, drift or killing: the process is identically zero".into(),
        ));
    };
    Ok(JumpSampler {
        rate,
        effective_drift,
        killing_rate,
        epsilon,
        kind,
        triple: triple.clone(),
        cells,
    })
}

impl JumpSampler {
    /// Jump size for a uniform variate `u ∈ (0,1)`.
    pub fn jump_size(&self, u: f64) -> f64 {
        let target = u * self.rate;
        let j = self
            .cells
            .partition_point(|c| c.2 <= target)
            .min(self.cells.len() - 1);
        let before = if j == 0 { 0.0 } else { self.cells[j - 1].2 };
        let (lo, hi, _) = self.cells[j];
        let x = self.triple.quantile_in_cell(lo, hi, target - before);
        // keep the strict inequality against the cutoff
        if x <= self.epsilon { self.epsilon.next_up() } else { x }
    }

    /// Laplace exponent of the approximating process,
    /// `a + b_eff λ + ∫_ε^∞ (1 − e^{−λx}) m(x) dx`.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        let (jumps, _) = self.triple.jump_part(lambda, self.epsilon)?;
        Ok(self.killing_rate + self.effective_drift * lambda + jumps)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub killing_time: Option<f64>,
}

impl Path {
    /// `S_t`, or `+∞` once the path has been killed.
    pub fn value_at(&self, t: f64, drift: f64) -> f64 {
        if self.killing_time.is_some_and(|k| k <= t) {
            return f64::INFINITY;
        }
        let n = self.jump_times.partition_point(|&s| s <= t);
        drift * t + self.jump_sizes[..n].iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub config: SimConfig,
    pub weight: StepWeight,
    /// Drift slope per unit of clock time, `c·b_eff`.
    pub drift: f64,
    /// Killing rate per unit of operational time.
    pub killing_rate: f64,
    pub jump_rate: f64,
    pub kind: ProcessKind,
    pub paths: Vec<Path>,
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn simulate_path(sampler: &JumpSampler, cfg: &SimConfig, index: usize) -> Path {
    let mut rng = path_rng(cfg.seed, index);
    let window = cfg.operational_horizon();
    let mut path = Path::default();
    if sampler.rate > 0.0 {
        let count = Poisson::new(sampler.rate * window).unwrap().sample(&mut rng) as usize;
        let mut jumps: Vec<(f64, f64)> = (0..count)
            .map(|_| {
                let t = rng.random::<f64>() * window;
                let u: f64 = rng.sample(Open01);
                (t, sampler.jump_size(u))
            })
            .collect();
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        path.jump_times = jumps.iter().map(|j| j.0 / cfg.time_change).collect();
        path.jump_sizes = jumps.iter().map(|j| j.1).collect();
    }
    if sampler.killing_rate > 0.0 {
        let life = Exp::new(sampler.killing_rate).unwrap().sample(&mut rng);
        if life < window {
            path.killing_time = Some(life / cfg.time_change);
        }
    }
    path
}

/// Simulates `cfg.paths` independent paths from an existing sampler. Path
/// `i` uses its own ChaCha stream `i` under `cfg.seed`, so the result does not
/// depend on scheduling.
pub fn simulate_with(sampler: &JumpSampler, weight: &StepWeight, cfg: &SimConfig) -> Result<PathBundle> {
    cfg.validate()?;
    if (sampler.epsilon - cfg.epsilon).abs() > 0.0 {
        return Err(Error::Mismatch(format!(
            "sampler built for epsilon {} but config asks for {}",
            sampler.epsilon, cfg.epsilon
        )));
    }
    let paths: Vec<Path> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| simulate_path(sampler, cfg, i))
        .collect();
    Ok(PathBundle {
        config: *cfg,
        weight: weight.clone(),
        drift: cfg.time_change * sampler.effective_drift,
        killing_rate: sampler.killing_rate,
        jump_rate: sampler.rate,
        kind: sampler.kind,
        paths,
    })
}

/// Extracts the Lévy triple on the default grid and simulates.
pub fn simulate(w: &StepWeight, cfg: &SimConfig) -> Result<PathBundle> {
    cfg.validate()?;
    let triple = extract(w, DensityGrid::default(), DensityOptions::default())?;
    let sampler = build_sampler(&triple, cfg.epsilon)?;
    simulate_with(&sampler, w, cfg)
}

/// Monte-Carlo estimate of `E[e^{−λS_t}]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub lambda: f64,
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
}

pub fn empirical_laplace(bundle: &PathBundle, lambda: f64, t: f64) -> Result<LaplaceEstimate> {
    if bundle.paths.is_empty() {
        return Err(Error::domain("empty bundle"));
    }
    if !(lambda > 0.0) {
        return Err(Error::domain("lambda must be positive"));
    }
    if !(t >= 0.0 && t <= bundle.config.horizon) {
        return Err(Error::domain(format!(
            "t = {t} outside the simulated horizon {}",
            bundle.config.horizon
        )));
    }
    let samples: Vec<f64> = bundle
        .paths
        .par_iter()
        .map(|p| (-lambda * p.value_at(t, bundle.drift)).exp())
        .collect();
    let n = samples.len() as f64;
    // shifted by the first sample, so a constant sample has exactly zero spread
    let shift = samples[0];
    let mean = shift + samples.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(LaplaceEstimate {
        lambda,
        t,
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}

/// One `(λ, t)` cell of a Laplace-transform check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceCell {
    pub lambda: f64,
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z_score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceCheck {
    pub cells: Vec<LaplaceCell>,
    pub sigma: f64,
    pub pass_fraction: f64,
    pub required_fraction: f64,
    pub passed: bool,
    pub seed: u64,
}

/// Compares the bundle against `e^{−c·t·φ(λ)}` on a grid of `λ` values.
///
/// A cell passes when the gap is at most `sigma` standard errors (plus
/// `1e−12` relative slack for deterministic bundles). The check passes when at
/// least `required_fraction` of cells pass and the `λ = 1` cell, if present,
/// passes.
pub fn laplace_check(
    bundle: &PathBundle,
    lambdas: &[f64],
    t: f64,
    sigma: f64,
    required_fraction: f64,
) -> Result<LaplaceCheck> {
    let c = bundle.config.time_change;
    let cells = lambdas
        .iter()
        .map(|&l| {
            let est = empirical_laplace(bundle, l, t)?;
            let target = (-c * t * eval_integral(&bundle.weight, l)?).exp();
            let gap = (est.estimate - target).abs();
            let z_score = if est.std_error > 0.0 { gap / est.std_error } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
            let passed = gap <= sigma * est.std_error + 1e-12 * target;
            Ok(LaplaceCell {
                lambda: l,
                t,
                estimate: est.estimate,
                std_error: est.std_error,
                target,
                z_score,
                passed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass_fraction = cells.iter().filter(|c| c.passed).count() as f64 / cells.len().max(1) as f64;
    let unit_ok = cells.iter().filter(|c| c.lambda == 1.0).all(|c| c.passed);
    Ok(LaplaceCheck {
        passed: pass_fraction >= required_fraction && unit_ok,
        pass_fraction,
        required_fraction,
        sigma,
        seed: bundle.config.seed,
        cells,
    })
}

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Range invariance under a deterministic time change.
///
/// `changed` runs at clock rate `c` over `[0, T]`, `reference` at rate `1`
/// over `[0, cT]`, both from the same seed. Their jump sizes, cumulative jump
/// levels, killing epochs (in operational time) and final drift level must
/// coincide.
pub fn time_change_check(changed: &PathBundle, reference: &PathBundle) -> Result<CheckReport> {
    if changed.config.seed != reference.config.seed {
        return Err(Error::Mismatch(format!(
            "seeds differ: {} vs {}",
            changed.config.seed, reference.config.seed
        )));
    }
    if changed.paths.len() != reference.paths.len() {
        return Err(Error::Mismatch("bundles have different path counts".into()));
    }
    let (h_c, h_r) = (changed.config.operational_horizon(), reference.config.operational_horizon());
    if rel_gap(h_c, h_r) > 1e-12 {
        return Err(Error::Mismatch(format!(
            "operational horizons differ: {h_c} vs {h_r}"
        )));
    }
    let mut report = CheckReport {
        name: "time_change".into(),
        passed: true,
        worst_violation: 0.0,
        worst_location: String::new(),
        samples_used: 0,
        tolerance: 1e-12,
        seed: Some(changed.config.seed),
        notes: vec![format!(
            "time change {} vs {}",
            changed.config.time_change, reference.config.time_change
        )],
    };
    let (cc, cr) = (changed.config.time_change, reference.config.time_change);
    let drift_end_c = changed.drift * changed.config.horizon;
    let drift_end_r = reference.drift * reference.config.horizon;
    report.observe(rel_gap(drift_end_c, drift_end_r), || "final drift level".into());
    for (i, (p, q)) in changed.paths.iter().zip(&reference.paths).enumerate() {
        if p.jump_sizes.len() != q.jump_sizes.len() || p.killing_time.is_some() != q.killing_time.is_some() {
            report.observe(f64::INFINITY, || format!("path {i}: jump or killing structure differs"));
            continue;
        }
        let mut level_p = 0.0;
        let mut level_q = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..p.jump_sizes.len() {
            level_p += p.jump_sizes[k];
            level_q += q.jump_sizes[k];
            worst = worst
                .max(rel_gap(p.jump_sizes[k], q.jump_sizes[k]))
                .max(rel_gap(level_p, level_q))
                .max(rel_gap(p.jump_times[k] * cc, q.jump_times[k] * cr));
        }
        if let (Some(kp), Some(kq)) = (p.killing_time, q.killing_time) {
            worst = worst.max(rel_gap(kp * cc, kq * cr));
        }
        report.observe(worst, || format!("path {i}"));
    }
    Ok(report.finish())
}

const CSV_MAGIC: &str = "# cbf-paths v1";

impl PathBundle {
    /// Writes the bundle as CSV: a `# key=value` header block, then one
    /// `path_id,time,size` row per jump. A killing is a row with size `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut head = String::new();
        let weight = serde_json::to_string(&self.weight).expect("weights serialise");
        let kind = serde_json::to_string(&self.kind).expect("kind serialises");
        writeln!(head, "{CSV_MAGIC}").unwrap();
        writeln!(head, "# weight={weight}").unwrap();
        writeln!(head, "# epsilon={}", self.config.epsilon).unwrap();
        writeln!(head, "# horizon={}", self.config.horizon).unwrap();
        writeln!(head, "# paths={}", self.config.paths).unwrap();
        writeln!(head, "# seed={}", self.config.seed).unwrap();
        writeln!(head, "# time_change={}", self.config.time_change).unwrap();
        writeln!(head, "# drift={}", self.drift).unwrap();
        writeln!(head, "# killing_rate={}", self.killing_rate).unwrap();
        writeln!(head, "# jump_rate={}", self.jump_rate).unwrap();
        writeln!(head, "# kind={}", kind.trim_matches('"')).unwrap();
        writeln!(head, "path_id,time,size").unwrap();
        out.write_all(head.as_bytes())?;
        let mut line = String::new();
        for (i, p) in self.paths.iter().enumerate() {
            line.clear();
            for (t, s) in p.jump_times.iter().zip(&p.jump_sizes) {
                writeln!(line, "{i},{t},{s}").unwrap();
            }
            if let Some(k) = p.killing_time {
                writeln!(line, "{i},{k},inf").unwrap();
            }
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<PathBundle> {
        let parse_err = |msg: String| Error::Parse(msg);
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| parse_err("empty bundle file".into()))?
            .map_err(|e| parse_err(e.to_string()))?;
        if first.trim() != CSV_MAGIC {
            return Err(parse_err(format!("missing '{CSV_MAGIC}' header")));
        }
        let mut fields = std::collections::HashMap::new();
        let mut paths: Vec<Path> = Vec::new();
        let mut in_body = false;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !in_body {
                if let Some(kv) = line.strip_prefix("# ") {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| parse_err(format!("bad header line '{line}'")))?;
                    fields.insert(k.to_string(), v.to_string());
                    continue;
                }
                if line != "path_id,time,size" {
                    return Err(parse_err(format!("unexpected line '{line}'")));
                }
                let n: usize = header(&fields, "paths")?;
                paths = vec![Path::default(); n];
                in_body = true;
                continue;
            }
            let mut parts = line.split(',');
            let row = (|| -> Option<(usize, f64, f64)> {
                Some((
                    parts.next()?.parse().ok()?,
                    parts.next()?.parse().ok()?,
                    parts.next()?.parse().ok()?,
                ))
            })()
            .ok_or_else(|| parse_err(format!("bad row {}: '{line}'", lineno + 2)))?;
            let path = paths
                .get_mut(row.0)
                .ok_or_else(|| parse_err(format!("path id {} out of range", row.0)))?;
            if row.2.is_infinite() {
                path.killing_time = Some(row.1);
            } else {
                path.jump_times.push(row.1);
                path.jump_sizes.push(row.2);
            }
        }
        if !in_body {
            return Err(parse_err("missing column header".into()));
        }
        let weight: StepWeight = serde_json::from_str(
            fields.get("weight").ok_or_else(|| parse_err("missing weight".into()))?,
        )
        .map_err(|e| parse_err(e.to_string()))?;
        let kind = match fields.get("kind").map(String::as_str) {
            Some("jumps") => ProcessKind::Jumps,
            Some("drift_only") => ProcessKind::DriftOnly,
            Some("pure_killing") => ProcessKind::PureKilling,
            other => return Err(parse_err(format!("unknown process kind {other:?}"))),
        };
        let config = SimConfig {
            epsilon: header(&fields, "epsilon")?,
            horizon: header(&fields, "horizon")?,
            paths: header(&fields, "paths")?,
            seed: header(&fields, "seed")?,
            time_change: header(&fields, "time_change")?,
        };
        config.validate()?;
        Ok(PathBundle {
            config,
            weight,
            drift: header(&fields, "drift")?,
            killing_rate: header(&fields, "killing_rate")?,
            jump_rate: header(&fields, "jump_rate")?,
            kind,
            paths,
        })
    }
}

fn header<T: std::str::FromStr>(fields: &std::collections::HashMap<String, String>, key: &str) -> Result<T> {
    fields
        .get(key)
        .ok_or_else(|| Error::Parse(format!("missing header '{key}'")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for header '{key}'")))
}
