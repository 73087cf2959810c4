//! `qfock`: JSON in, JSON out front end for the quadratic Fock space numerics.
//!
//! Exit codes: 0 on success, 2 when an input leaves the mathematical domain
//! (for instance `‖f‖∞ ≥ 1/2`), 1 for usage, parse and I/O errors. Errors are
//! written to stderr as `{"error": {"kind": …, "message": …}}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use qfock::fockspan::{
    contraction_witness_search, counterexample, loewner_leq, semigroup_apply, span_norm, FockSpan,
};
use qfock::nparticle::{
    inner_n_partition, inner_n_recursive, inner_n_table, series_kernel, tail_ratio,
};
use qfock::operators::{classify, decompose_isometry, DiscreteOperator, OperatorSpec};
use qfock::{
    acceptance, kernel, kernel_gram, sampling, Cell, CouplingConstant, HermitianMatrix,
    StepFunction,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const DEFAULT_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "qfock", version, about = "Quadratic Fock space numerics")]
struct Cli {
    /// Include wall-clock stage timings in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timings: bool,

    /// PSD tolerance; defaults to $QFOCK_TOL or 1e-10.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, Default, PartialEq, Eq)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct PairArgs {
    /// Step function JSON file (first, antilinear slot).
    #[arg(long)]
    f: PathBuf,
    /// Step function JSON file (second slot).
    #[arg(long)]
    g: PathBuf,
    /// Coupling constant c > 0.
    #[arg(long)]
    c: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form kernel ⟨Ψ(f), Ψ(g)⟩.
    Kernel(PairArgs),
    /// Gram matrix of the exponential vectors of a list of functions.
    Gram {
        /// JSON array of step functions.
        #[arg(long)]
        functions: PathBuf,
        #[arg(long)]
        c: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// n-particle inner product by recursion and by partition sum.
    Nmoment {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        n: usize,
    },
    /// Partial sums of the n-particle series against the closed-form kernel.
    Convergence {
        #[command(flatten)]
        pair: PairArgs,
        /// Truncation order.
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Classify an operator on seeded random samples.
    Classify {
        /// Operator JSON file.
        #[arg(long)]
        op: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Number of sampled function pairs.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Highest power moment compared.
        #[arg(long, default_value_t = 6)]
        k: u32,
    },
    /// Recover e^{iα} T_τ from the images of basis indicators.
    Decompose {
        #[arg(long)]
        op: PathBuf,
        /// JSON array of disjoint cells; defaults to the operator's geometry.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Two-vector example where averaging increases a norm.
    Counterexample {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        c: f64,
    },
    /// Search random spans for norm growth under Γ₂(T).
    WitnessSearch {
        #[arg(long)]
        op: PathBuf,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Apply e^{zH₀} to a span (Re z ≤ 0).
    Semigroup {
        /// Span JSON file: {"coefficients": [...], "functions": [...], "c": …}.
        #[arg(long)]
        span: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        z_re: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        z_im: f64,
    },
    /// Run the acceptance suite; one PASS/FAIL line per criterion.
    Selftest,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Parse(String),
    Io(String),
    Core(qfock::Error),
}

impl From<qfock::Error> for Failure {
    fn from(e: qfock::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Parse(_) => "parse",
            Failure::Io(_) => "io",
            Failure::Core(e) if e.is_domain() => "domain",
            Failure::Core(_) => "invalid_input",
        }
    }

    fn exit_code(&self) -> u8 {
        if self.kind() == "domain" {
            2
        } else {
            1
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Parse(m) | Failure::Io(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    inputs_digest: String,
    outputs: Value,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings_ms: Option<BTreeMap<&'static str, f64>>,
}

/// Collects the canonical inputs and stage timings of one run.
struct Session {
    inputs: BTreeMap<String, Value>,
    timings: BTreeMap<&'static str, f64>,
}

impl Session {
    fn new() -> Self {
        Session {
            inputs: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    fn record(&mut self, key: &str, value: Value) {
        self.inputs.insert(key.to_string(), value);
    }

    /// Reads and parses a JSON file, recording its canonical form.
    fn load<T: serde::de::DeserializeOwned>(&mut self, key: &str, path: &Path) -> Outcome<T> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let raw: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        let parsed = serde_json::from_value(raw.clone())
            .map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        self.record(key, raw);
        Ok(parsed)
    }

    fn timed<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .insert(stage, start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// SHA-256 of the inputs serialized with sorted keys.
    fn digest(&self, command: &str) -> String {
        let canonical = json!({ "command": command, "inputs": self.inputs });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

fn coupling(c: f64) -> Outcome<CouplingConstant> {
    Ok(CouplingConstant::new(c)?)
}

fn cjson(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn matrix_json(m: &HermitianMatrix) -> Value {
    Value::Array(
        m.rows()
            .into_iter()
            .map(|row| Value::Array(row.into_iter().map(cjson).collect()))
            .collect(),
    )
}

fn rel_diff(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

enum Output {
    Report(RunReport),
    Text(String),
    /// Selftest: printed lines plus pass/fail.
    Lines(String, bool),
}

fn default_tol() -> Outcome<f64> {
    match std::env::var("QFOCK_TOL") {
        Ok(v) => v
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| {
                Failure::Usage(format!("QFOCK_TOL must be a positive number, got {v:?}"))
            }),
        Err(_) => Ok(DEFAULT_TOL),
    }
}

fn run(cli: Cli) -> Outcome<Output> {
    let tol = match cli.tol {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Failure::Usage(format!("--tol must be positive, got {t}"))),
        None => default_tol()?,
    };
    let mut s = Session::new();
    let mut seed = None;
    let (command, outputs): (&'static str, Value) = match cli.command {
        Command::Kernel(p) => {
            let f: StepFunction = s.load("f", &p.f)?;
            let g: StepFunction = s.load("g", &p.g)?;
            s.record("c", json!(p.c));
            let k = s.timed("kernel", || {
                kernel(&f, &g, coupling(p.c)?).map_err(Failure::from)
            })?;
            (
                "kernel",
                json!({ "value": cjson(k.value), "log": cjson(k.log_value) }),
            )
        }
        Command::Gram {
            functions,
            c,
            format,
        } => {
            let fs: Vec<StepFunction> = s.load("functions", &functions)?;
            s.record("c", json!(c));
            let g = s.timed("gram", || {
                kernel_gram(&fs, coupling(c)?).map_err(Failure::from)
            })?;
            if format == Format::Csv {
                let mut out = String::from("i,j,re,im\n");
                for i in 0..g.order() {
                    for j in 0..g.order() {
                        let v = g.get(i, j);
                        writeln!(out, "{i},{j},{},{}", v.re, v.im).expect("write to string");
                    }
                }
                return Ok(Output::Text(out));
            }
            let eig = s.timed("eig", || g.eig())?;
            let psd = g.is_psd(tol)?;
            (
                "gram",
                json!({
                    "matrix": matrix_json(&g),
                    "eigenvalues": eig.values,
                    "min_eigenvalue": psd.min_eigenvalue,
                    "psd": psd.psd,
                }),
            )
        }
        Command::Nmoment { pair, n } => {
            let f: StepFunction = s.load("f", &pair.f)?;
            let g: StepFunction = s.load("g", &pair.g)?;
            s.record("c", json!(pair.c));
            s.record("n", json!(n));
            let c = coupling(pair.c)?;
            let r = s
                .timed("recursion", || inner_n_recursive(&f, &g, c, n))?
                .value;
            let p = s
                .timed("partition", || inner_n_partition(&f, &g, c, n))?
                .value;
            (
                "nmoment",
                json!({
                    "n": n,
                    "recursion": cjson(r),
                    "partition": cjson(p),
                    "abs_diff": (r - p).norm(),
                    "rel_diff": rel_diff(r, p),
                }),
            )
        }
        Command::Convergence {
            pair,
            n_max,
            format,
        } => {
            let f: StepFunction = s.load("f", &pair.f)?;
            let g: StepFunction = s.load("g", &pair.g)?;
            s.record("c", json!(pair.c));
            s.record("n_max", json!(n_max));
            let c = coupling(pair.c)?;
            let exact = s.timed("kernel", || kernel(&f, &g, c))?.value;
            let table = s.timed("series", || inner_n_table(&f, &g, c, n_max))?;
            let mut rows = Vec::with_capacity(table.len());
            let mut partial = Complex64::new(0.0, 0.0);
            let mut factorial = 1.0f64;
            for (n, i) in table.iter().enumerate() {
                if n > 0 {
                    factorial *= n as f64;
                }
                let term = i / (factorial * factorial);
                partial += term;
                rows.push((n, term, partial, (partial - exact).norm()));
            }
            if format == Format::Csv {
                let mut out = String::from("n,term_re,term_im,partial_re,partial_im,abs_error\n");
                for (n, t, p, e) in &rows {
                    writeln!(out, "{n},{},{},{},{},{e}", t.re, t.im, p.re, p.im)
                        .expect("write to string");
                }
                return Ok(Output::Text(out));
            }
            let bound = match series_kernel(&f, &g, c, n_max) {
                Ok((_, b)) => serde_json::to_value(b).expect("tail bound serializes"),
                Err(e) => json!({ "unavailable": e.to_string() }),
            };
            (
                "convergence",
                json!({
                    "kernel": cjson(exact),
                    "rows": rows.iter().map(|(n, t, p, e)| json!({
                        "n": n, "term": cjson(*t), "partial_sum": cjson(*p), "abs_error": e
                    })).collect::<Vec<_>>(),
                    "tail_bound": bound,
                    "tail_ratio": tail_ratio(&f, &g, c, n_max),
                }),
            )
        }
        Command::Classify {
            op,
            seed: sd,
            samples,
            k,
        } => {
            let t: OperatorSpec = s.load("op", &op)?;
            s.record("samples", json!(samples));
            s.record("k", json!(k));
            seed = Some(sd);
            let regions = sampling::operator_regions(&t)?;
            let mut rng = sampling::rng(sd);
            let pairs: Vec<(StepFunction, StepFunction)> = (0..samples)
                .map(|_| {
                    (
                        sampling::step_function_over(&mut rng, &regions, 6, 0.45),
                        sampling::step_function_over(&mut rng, &regions, 6, 0.45),
                    )
                })
                .collect();
            let cl = s.timed("classify", || classify(&t, &pairs, k))?;
            (
                "classify",
                serde_json::to_value(cl).expect("classification serializes"),
            )
        }
        Command::Decompose { op, basis } => {
            let t: OperatorSpec = s.load("op", &op)?;
            let basis: Vec<Cell> = match basis {
                Some(path) => s.load("basis", &path)?,
                None => sampling::operator_regions(&t)?,
            };
            let d = DiscreteOperator::from_spec(&t, basis)?;
            let out = match s.timed("decompose", || decompose_isometry(&d))? {
                Ok(dec) => json!({ "isometry": true, "decomposition": dec }),
                Err(not) => json!({ "isometry": false, "witness": not }),
            };
            ("decompose", out)
        }
        Command::Counterexample { lambda, c } => {
            s.record("lambda", json!(lambda));
            s.record("c", json!(c));
            let ce = s.timed("counterexample", || {
                counterexample(lambda, coupling(c)?).map_err(Failure::from)
            })?;
            let report = loewner_leq(&ce.b, &ce.a, tol)?;
            (
                "counterexample",
                json!({
                    "lambda": lambda,
                    "c": c,
                    "functions": ce.functions,
                    "images": ce.images,
                    "A": matrix_json(&ce.a),
                    "B": matrix_json(&ce.b),
                    "det_A_minus_B": report.determinant.re,
                    "min_eigenvalue": report.min_eigenvalue,
                    "psd": report.psd_a_minus_b,
                    "witness_vector": report.witness_vector.map(|v| v.into_iter().map(cjson).collect::<Vec<_>>()),
                }),
            )
        }
        Command::WitnessSearch {
            op,
            c,
            trials,
            seed: sd,
        } => {
            let t: OperatorSpec = s.load("op", &op)?;
            s.record("c", json!(c));
            s.record("trials", json!(trials));
            seed = Some(sd);
            let c = coupling(c)?;
            let w = s.timed("search", || contraction_witness_search(&t, c, trials, sd))?;
            let out = match w {
                Some(w) => json!({ "found": true, "witness": w }),
                None => json!({ "found": false, "trials": trials }),
            };
            ("witness-search", out)
        }
        Command::Semigroup { span, z_re, z_im } => {
            let xi: FockSpan = s.load("span", &span)?;
            s.record("z", json!({ "re": z_re, "im": z_im }));
            let z = Complex64::new(z_re, z_im);
            let out = s.timed("apply", || semigroup_apply(z, &xi))?;
            (
                "semigroup",
                json!({
                    "span": out,
                    "norm_before": span_norm(&xi)?,
                    "norm_after": span_norm(&out)?,
                }),
            )
        }
        Command::Selftest => {
            let results = acceptance::run_all();
            let mut text = String::new();
            for r in &results {
                writeln!(text, "{r}").expect("write to string");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(
                text,
                "selftest: {} passed, {failed} failed",
                results.len() - failed
            )
            .expect("write to string");
            return Ok(Output::Lines(text, failed == 0));
        }
    };
    Ok(Output::Report(RunReport {
        command,
        inputs_digest: s.digest(command),
        outputs,
        seed,
        timings_ms: cli.timings.then_some(s.timings),
    }))
}

fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        emit_error("internal", &info.to_string());
    }));
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", e.to_string().trim_end());
            return ExitCode::from(1);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(Output::Report(report))) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            ExitCode::SUCCESS
        }
        Ok(Ok(Output::Text(text))) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Ok(Output::Lines(text, ok))) => {
            print!("{text}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Ok(Err(failure)) => {
            emit_error(failure.kind(), &failure.message());
            ExitCode::from(failure.exit_code())
        }
        Err(_) => ExitCode::from(1),
    }
}
