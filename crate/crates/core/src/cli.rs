//! The `cbf` command-line tool.
//!
//! Every command prints one JSON document on stdout and diagnostics on
//! stderr. Exit codes: `0` success, `1` a requested check failed, `2` usage or
//! input error, `3` a numerical accuracy target was not met.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::analysis::{
    check_bernstein_differences, check_completely_monotone, check_duality, check_pick,
    check_weight_monotonicity, log_grid, CheckReport, UniformGrid,
};
use crate::error::Error;
use crate::evaluator::{
    eta_representation, eval_eta_full, eval_integral, eval_integral_full, eval_product, eval_quadrature,
    normalize,
};
use crate::levy::{extract, reconstruct, BoundaryModel, DensityGrid, DensityOptions};
use crate::sim::{laplace_check, simulate, PathBundle, SimConfig};
use crate::weights::{EtaRepresentation, EtaRepresentationSpec, StepWeight};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cbf", version, about = "Complete Bernstein functions from step weights")]
pub struct Cli {
    /// Emit JSON (the default payload format).
    #[arg(long, global = true)]
    pub json: bool,

    /// Emit CSV instead of JSON where the payload is tabular.
    #[arg(long, global = true, conflicts_with = "json")]
    pub csv: bool,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Relative tolerance for adaptive quadrature.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct WeightArgs {
    /// Weight file `{"breakpoints":[0,…,1],"values":[…]}`.
    #[arg(short = 'w', long = "weight", conflicts_with = "weight_json")]
    pub weight: Option<PathBuf>,

    /// Inline weight JSON with the same structure as a weight file.
    #[arg(long = "weight-json")]
    pub weight_json: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Integral,
    Product,
    Eta,
    Quadrature,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Integral => "integral",
            Method::Product => "product",
            Method::Eta => "eta",
            Method::Quadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    AlphaToEta,
    EtaToAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Pick,
    Bernstein,
    Duality,
    Monotone,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate φ(λ) by one or more representations.
    Eval {
        #[command(flatten)]
        weight: WeightArgs,
        #[arg(short = 'l', long = "lambda", value_delimiter = ',', required = true, allow_hyphen_values = true)]
        lambda: Vec<f64>,
        #[arg(short = 'm', long = "method", value_delimiter = ',', default_value = "integral")]
        method: Vec<Method>,
    },
    /// Convert between the weight and the (γ, η) representation.
    Convert {
        #[arg(long, value_enum)]
        direction: Direction,
        #[command(flatten)]
        weight: WeightArgs,
        /// `(γ, η)` file `{"gamma":…,"t_breakpoints":[0,…],"values":[…]}`.
        #[arg(long, conflicts_with = "eta_json")]
        eta: Option<PathBuf>,
        #[arg(long = "eta-json")]
        eta_json: Option<String>,
    },
    /// Run structural checks and report the worst violations.
    Verify {
        #[command(flatten)]
        weight: WeightArgs,
        #[arg(long, value_delimiter = ',', default_value = "pick,bernstein,duality,monotone")]
        checks: Vec<CheckKind>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Larger weight for the monotonicity check; without it the weight is
        /// compared against the constants 0 and 1.
        #[arg(long = "weight-b")]
        weight_b: Option<PathBuf>,
    },
    /// Extract the Lévy–Khintchine triple (a, b, m).
    Levy {
        #[command(flatten)]
        weight: WeightArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "x-min", default_value_t = 1e-4)]
        x_min: f64,
        #[arg(long = "x-max", default_value_t = 1e4)]
        x_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Extra points where the density is reported.
        #[arg(long = "density-at", value_delimiter = ',', default_value = "1")]
        density_at: Vec<f64>,
        /// Also run loop closure on [0.1, 10] and a complete-monotonicity check.
        #[arg(long)]
        verify: bool,
    },
    /// Simulate subordinator paths and write them as CSV.
    Simulate {
        #[command(flatten)]
        weight: WeightArgs,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "time-change", default_value_t = 1.0)]
        time_change: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a simulated bundle against e^{−c t φ(λ)}.
    LaplaceCheck {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long = "lambda-grid", value_delimiter = ',', default_value = "0.5,1,2,4")]
        lambda_grid: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long = "required-fraction", default_value_t = 0.95)]
        required_fraction: f64,
        /// Override the weight recorded in the bundle header.
        #[command(flatten)]
        weight: WeightArgs,
    },
}

/// Outcome of one command.
#[derive(Debug)]
pub struct CommandResult {
    pub exit_code: i32,
    pub payload: String,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Accuracy { .. } => EXIT_ACCURACY,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

type CmdResult = std::result::Result<(Value, bool), Failure>;

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_weight(args: &WeightArgs) -> std::result::Result<StepWeight, Failure> {
    let text = match (&args.weight, &args.weight_json) {
        (Some(p), _) => read_text(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => return Err(usage("a weight is required (--weight or --weight-json)")),
    };
    serde_json::from_str(&text).map_err(|e| usage(format!("malformed weight: {e}")))
}

fn load_optional_weight(args: &WeightArgs) -> std::result::Result<Option<StepWeight>, Failure> {
    if args.weight.is_none() && args.weight_json.is_none() {
        Ok(None)
    } else {
        load_weight(args).map(Some)
    }
}

/// Writes `contents` to `path` atomically.
fn write_file(path: &Path, contents: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> std::result::Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| usage(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        contents(&mut buf).map_err(io)?;
        buf.flush().map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn cmd_eval(weight: &WeightArgs, lambdas: &[f64], methods: &[Method], tol: f64, csv: bool) -> CmdResult {
    let w = load_weight(weight)?;
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(usage(format!("lambda must be positive, got {bad}")));
    }
    let mut methods = methods.to_vec();
    methods.dedup();
    let rep = eta_representation(&w);
    let mut rows = Vec::new();
    let mut csv_out = String::from("lambda,method,value,log_value\n");
    for &l in lambdas {
        let mut per = Map::new();
        let mut values = Vec::new();
        for &m in &methods {
            let (value, log_value) = match m {
                Method::Integral => {
                    let r = eval_integral_full(&w, l)?;
                    (r.value, r.log_value)
                }
                Method::Product => {
                    let r = eval_product(&w, Complex64::new(l, 0.0))?;
                    (r.value.re, r.log_value.re)
                }
                Method::Eta => {
                    let r = eval_eta_full(&rep, l)?;
                    (r.value, r.log_value)
                }
                Method::Quadrature => {
                    let v = eval_quadrature(|x| w.value_at(x), l, tol)?;
                    (v, v.ln())
                }
            };
            csv_out.push_str(&format!("{l},{},{value},{log_value}\n", m.name()));
            per.insert(m.name().into(), json!({"value": value, "log_value": log_value}));
            values.push((m, value, log_value));
        }
        let mut row = json!({
            "lambda": l,
            "value": values[0].1,
            "log_value": values[0].2,
        });
        if values.len() > 1 {
            let mut diffs = Map::new();
            let mut worst: f64 = 0.0;
            for i in 0..values.len() {
                for j in i + 1..values.len() {
                    let d = rel_diff(values[i].1, values[j].1);
                    worst = worst.max(d);
                    diffs.insert(format!("{}-{}", values[i].0.name(), values[j].0.name()), json!(d));
                }
            }
            row["methods"] = Value::Object(per);
            row["pairwise_rel_diff"] = Value::Object(diffs);
            row["max_rel_diff"] = json!(worst);
        }
        rows.push(row);
    }
    if csv {
        return Ok((Value::String(csv_out), true));
    }
    let payload = if rows.len() == 1 { rows.pop().unwrap() } else { Value::Array(rows) };
    Ok((payload, true))
}

fn cmd_convert(direction: Direction, weight: &WeightArgs, eta: &Option<PathBuf>, eta_json: &Option<String>) -> CmdResult {
    match direction {
        Direction::AlphaToEta => {
            let w = load_weight(weight)?;
            let rep = eta_representation(&w);
            Ok((serde_json::to_value(rep.to_spec()).unwrap(), true))
        }
        Direction::EtaToAlpha => {
            let text = match (eta, eta_json) {
                (Some(p), _) => read_text(p)?,
                (None, Some(s)) => s.clone(),
                (None, None) => return Err(usage("eta-to-alpha needs --eta or --eta-json")),
            };
            let spec: EtaRepresentationSpec =
                serde_json::from_str(&text).map_err(|e| usage(format!("malformed eta: {e}")))?;
            let rep = EtaRepresentation::from_spec(&spec)?;
            let n = normalize(rep.gamma, &rep.eta);
            Ok((json!({"c": n.scale, "alpha": n.weight}), true))
        }
    }
}

fn cmd_verify(
    weight: &WeightArgs,
    checks: &[CheckKind],
    seed: u64,
    samples: usize,
    weight_b: &Option<PathBuf>,
) -> CmdResult {
    let w = load_weight(weight)?;
    let mut reports: Vec<CheckReport> = Vec::new();
    let lambdas = log_grid(1e-2, 1e2, 30);
    for &c in checks {
        match c {
            CheckKind::Pick => reports.push(check_pick(&w, samples, seed)),
            CheckKind::Bernstein => {
                let grid = UniformGrid::new(0.5, 10.0, 0.01)?;
                let f = |l: f64| eval_integral(&w, l).unwrap_or(f64::NAN);
                reports.push(check_bernstein_differences(f, &grid, 6)?);
            }
            CheckKind::Duality => reports.push(check_duality(&w, &lambdas)),
            CheckKind::Monotone => match weight_b {
                Some(p) => {
                    let wb: StepWeight = serde_json::from_str(&read_text(p)?)
                        .map_err(|e| usage(format!("malformed weight-b: {e}")))?;
                    reports.push(check_weight_monotonicity(&w, &wb, &lambdas)?);
                }
                None => {
                    let zero = StepWeight::constant(0.0)?;
                    let one = StepWeight::constant(1.0)?;
                    let mut lo = check_weight_monotonicity(&zero, &w, &lambdas)?;
                    lo.name = "monotone_lower".into();
                    let mut hi = check_weight_monotonicity(&w, &one, &lambdas)?;
                    hi.name = "monotone_upper".into();
                    reports.push(lo);
                    reports.push(hi);
                }
            },
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok((json!({"passed": passed, "seed": seed, "checks": reports}), passed))
}

#[allow(clippy::too_many_arguments)]
fn cmd_levy(
    weight: &WeightArgs,
    out: &Option<PathBuf>,
    grid: DensityGrid,
    density_at: &[f64],
    verify: bool,
    tol: Option<f64>,
) -> CmdResult {
    let w = load_weight(weight)?;
    let opts = DensityOptions {
        rel_tol: tol.unwrap_or(DensityOptions::default().rel_tol),
        ..Default::default()
    };
    let triple = extract(&w, grid, opts)?;
    let model = BoundaryModel::new(&w);
    let points: Vec<Value> = density_at
        .iter()
        .map(|&x| Ok(json!({"x": x, "m": model.density(x, opts)?})))
        .collect::<std::result::Result<_, Error>>()?;
    let mut payload = serde_json::to_value(&triple).unwrap();
    let mut passed = true;
    if verify {
        let mut worst: f64 = 0.0;
        for l in log_grid(0.1, 10.0, 21) {
            let r = reconstruct(&triple, l, 1e-3)?;
            worst = worst.max(rel_diff(r.value, eval_integral(&w, l)?));
        }
        let cm_grid = UniformGrid::new(0.1, 10.0, 0.1)?;
        let samples: Vec<f64> = cm_grid.points().iter().map(|&x| model.density(x, opts)).collect::<std::result::Result<_, _>>()?;
        let cm = check_completely_monotone(&samples, &cm_grid, 5);
        passed = worst <= 1e-3 && cm.passed;
        payload["loop_closure_max_rel_diff"] = json!(worst);
        payload["completely_monotone"] = serde_json::to_value(&cm).unwrap();
    }
    match out {
        Some(path) => {
            let text = serde_json::to_string(&payload).unwrap();
            write_file(path, |f| f.write_all(text.as_bytes()))?;
            let mut summary = json!({
                "a": triple.a,
                "b": triple.b,
                "out": path.display().to_string(),
                "point_density": points,
                "truncation_report": triple.truncation_report,
            });
            if verify {
                summary["loop_closure_max_rel_diff"] = payload["loop_closure_max_rel_diff"].clone();
                summary["completely_monotone_passed"] = payload["completely_monotone"]["passed"].clone();
            }
            Ok((summary, passed))
        }
        None => {
            payload["point_density"] = Value::Array(points);
            Ok((payload, passed))
        }
    }
}

fn cmd_simulate(weight: &WeightArgs, cfg: SimConfig, out: &Option<PathBuf>) -> CmdResult {
    let w = load_weight(weight)?;
    cfg.validate()?;
    let bundle = simulate(&w, &cfg)?;
    let jumps: usize = bundle.paths.iter().map(|p| p.jump_sizes.len()).sum();
    let killed = bundle.paths.iter().filter(|p| p.killing_time.is_some()).count();
    let summary = json!({
        "config": cfg,
        "kind": bundle.kind,
        "drift": bundle.drift,
        "killing_rate": bundle.killing_rate,
        "jump_rate": bundle.jump_rate,
        "total_jumps": jumps,
        "killed_paths": killed,
    });
    match out {
        Some(path) => {
            write_file(path, |f| bundle.write_csv(f))?;
            let mut s = summary;
            s["out"] = json!(path.display().to_string());
            Ok((s, true))
        }
        None => {
            let mut buf = Vec::new();
            bundle.write_csv(&mut buf).map_err(|e| usage(e.to_string()))?;
            Ok((Value::String(String::from_utf8(buf).unwrap()), true))
        }
    }
}

fn cmd_laplace_check(
    bundle: &Path,
    lambdas: &[f64],
    t: f64,
    sigma: f64,
    fraction: f64,
    weight: &WeightArgs,
) -> CmdResult {
    let file = std::fs::File::open(bundle).map_err(|e| usage(format!("{}: {e}", bundle.display())))?;
    let mut b = PathBundle::read_csv(std::io::BufReader::new(file))?;
    if let Some(w) = load_optional_weight(weight)? {
        b.weight = w;
    }
    let check = laplace_check(&b, lambdas, t, sigma, fraction)?;
    let passed = check.passed;
    Ok((serde_json::to_value(check).unwrap(), passed))
}

/// Runs one parsed command and returns its payload and exit code.
pub fn execute(cli: &Cli) -> CommandResult {
    let tol = cli.tol.unwrap_or(1e-10);
    let result = match &cli.command {
        Command::Eval { weight, lambda, method } => cmd_eval(weight, lambda, method, tol, cli.csv),
        Command::Convert { direction, weight, eta, eta_json } => cmd_convert(*direction, weight, eta, eta_json),
        Command::Verify { weight, checks, seed, samples, weight_b } => {
            cmd_verify(weight, checks, *seed, *samples, weight_b)
        }
        Command::Levy { weight, out, x_min, x_max, points, density_at, verify } => cmd_levy(
            weight,
            out,
            DensityGrid { x_min: *x_min, x_max: *x_max, points: *points },
            density_at,
            *verify,
            cli.tol,
        ),
        Command::Simulate { weight, paths, horizon, epsilon, seed, time_change, out } => cmd_simulate(
            weight,
            SimConfig {
                epsilon: *epsilon,
                horizon: *horizon,
                paths: *paths,
                seed: *seed,
                time_change: *time_change,
            },
            out,
        ),
        Command::LaplaceCheck { bundle, lambda_grid, t, sigma, required_fraction, weight } => {
            cmd_laplace_check(bundle, lambda_grid, *t, *sigma, *required_fraction, weight)
        }
    };
    match result {
        Ok((Value::String(text), passed)) => CommandResult {
            exit_code: if passed { EXIT_OK } else { EXIT_CHECK_FAILED },
            payload: text,
        },
        Ok((value, passed)) => CommandResult {
            exit_code: if passed { EXIT_OK } else { EXIT_CHECK_FAILED },
            payload: format!("{}\n", serde_json::to_string(&value).unwrap()),
        },
        Err(f) => CommandResult {
            exit_code: f.code,
            payload: format!("{}\n", json!({"error": f.message, "exit_code": f.code})),
        },
    }
}

fn error_message(result: &CommandResult) -> Option<String> {
    if result.exit_code != EXIT_USAGE && result.exit_code != EXIT_ACCURACY {
        return None;
    }
    let v: Value = serde_json::from_str(&result.payload).ok()?;
    v.get("error")?.as_str().map(str::to_owned)
}

/// Parses arguments, runs the command and writes the payload to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }
    let result = execute(&cli);
    if let Some(msg) = error_message(&result) {
        eprintln!("error: {msg}");
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = lock.write_all(result.payload.as_bytes());
    let _ = lock.flush();
    result.exit_code
}
