//! Command-line front end for the `amo` binary.
//!
//! Every subcommand produces a table that is written as CSV with a header row
//! or as a JSON array of row objects. Numbers are printed like `%.12g` and
//! rows come out in a fixed order, so identical flags give identical bytes.
//! Diagnostics go to stderr; exit code 2 marks invalid input and 1 a
//! numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{Map, Number, Value};

use crate::base::{Frequency, Phase, RationalFrequency};
use crate::error::{AmoError, Result};
use crate::format::fmt_g;
use crate::funcalc::resolvent;
use crate::measures::{atomic_limit, convergence_experiment, gap_measure, integrate_monomial, SequenceSpec};
use crate::spectral::{intersection_spectrum, spectrum_union, theta_spectrum};
use crate::sympoly::{
    evaluate_moment, factored_display, normalized_moment_polynomial, symbolic_moment, symbolic_t,
};
use crate::traces::moment_four_traces;
use crate::verify::run_suites;

#[derive(Debug, Parser)]
#[command(
    name = "amo",
    version,
    about = "Spectra, intersection-spectrum measures and moment polynomials of the almost Mathieu operator",
    long_about = "Spectra, intersection-spectrum measures and moment polynomials of the almost \
                  Mathieu operator.\n\nOutput is CSV with a header row (default) or a JSON array \
                  of row objects. Numbers use %.12g formatting. Set AMO_LOG to error, warn, info \
                  or debug for diagnostics on stderr."
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv, global = true)]
    pub format: OutputFormat,
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    /// The intersection spectrum Σ⁻.
    Minus,
    /// The union spectrum Σ⁺.
    Plus,
    /// The spectrum at one phase.
    Theta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bands of Σ⁻, Σ⁺ or Σ_θ for a rational frequency.
    ///
    /// Columns: alpha, lambda, which, band, lo, hi, lo_source, hi_source.
    /// Endpoint sources name the eigenvalue family, e.g. per(theta+) or
    /// anti(0); they are "-" for Σ⁺ and Σ_θ.
    Spectrum(SpectrumArgs),
    /// Bands for every reduced p/q with q ≤ qmax.
    ///
    /// Columns: p, q, band, lo, hi, measure (total measure for that p/q).
    Butterfly(ButterflyArgs),
    /// Runs invariant suites and prints a pass/fail table.
    ///
    /// Columns: suite, check, status, detail.
    Verify(VerifyArgs),
    /// Moments c_{2k}, computed by up to three independent routes.
    ///
    /// Columns: alpha, lambda, k, value, method.
    Moment(MomentArgs),
    /// Exact moment polynomials in λ and t = cos 2πα.
    ///
    /// Columns: k, kind, polynomial. With --format json the polynomial is the
    /// coefficient map {"j,r": "num/den"} of λ^j t^r.
    Poly(PolyArgs),
    /// Column G_{j,0}(z) of the resolvent with its decay fit.
    ///
    /// Columns: j, re, im, abs, c1, C1.
    Green(GreenArgs),
    /// Atoms of the normalised measure at λ = 1.
    ///
    /// Columns: alpha, energy, weight, raw_weight_sum, q_times_raw_sum.
    Atoms(AtomsArgs),
    /// Moments along a sequence of frequencies next to those of the limit.
    ///
    /// Columns: n, alpha, k, value, limit, difference.
    Converge(ConvergeArgs),
    /// Measure of Σ⁻ between two energies outside Σ⁺.
    ///
    /// Columns: alpha, lambda, lo, hi, measure.
    Gap(GapArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Frequency p/q.
    #[arg(long)]
    pub alpha: RationalFrequency,
    /// Coupling λ ≥ 0.
    #[arg(long)]
    pub lambda: f64,
    /// Phase for --which theta.
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = Which::Minus)]
    pub which: Which,
}

#[derive(Debug, Args)]
pub struct ButterflyArgs {
    /// Largest denominator.
    #[arg(long)]
    pub qmax: u64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = Which::Minus)]
    pub which: Which,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suite to run (repeatable); all suites when omitted.
    #[arg(long)]
    pub suite: Vec<String>,
    /// Seed for randomised checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MomentMethod {
    Poly,
    Traces,
    Oracle,
    All,
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    /// Frequency as p/q or a decimal (decimals skip the band oracle).
    #[arg(long)]
    pub alpha: Frequency,
    #[arg(long)]
    pub lambda: f64,
    /// Largest k; rows are emitted for k = 0 … k-max.
    #[arg(long, default_value_t = 3)]
    pub k_max: u32,
    #[arg(long, value_enum, default_value_t = MomentMethod::All)]
    pub method: MomentMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolyKind {
    /// P_{2k}.
    P,
    /// T_{2k}.
    T,
    /// P_{2k} / (4(1 − λ)).
    Normalized,
}

#[derive(Debug, Args)]
pub struct PolyArgs {
    /// Largest k; rows are emitted for k = 0 … k-max.
    #[arg(long, default_value_t = 2)]
    pub k_max: u32,
    #[arg(long, value_enum, default_value_t = PolyKind::P)]
    pub kind: PolyKind,
    /// Print λ-coefficients with (1+t) factors pulled out.
    #[arg(long)]
    pub factored: bool,
}

#[derive(Debug, Args)]
pub struct GreenArgs {
    /// Frequency as p/q or a decimal.
    #[arg(long)]
    pub alpha: Frequency,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    /// Real part of z.
    #[arg(long, allow_hyphen_values = true)]
    pub z_re: f64,
    /// Imaginary part of z.
    #[arg(long, allow_hyphen_values = true)]
    pub z_im: f64,
    /// Window radius W.
    #[arg(long, default_value_t = 64)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct AtomsArgs {
    #[arg(long)]
    pub alpha: RationalFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SequenceKind {
    /// α_n = 1/n.
    Reciprocal,
    /// Continued-fraction convergents of --target.
    Convergents,
    /// --alpha repeated.
    Constant,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long, value_enum, default_value_t = SequenceKind::Reciprocal)]
    pub sequence: SequenceKind,
    /// Number of terms.
    #[arg(long, default_value_t = 64)]
    pub n_max: u64,
    /// Target for --sequence convergents (default: golden mean conjugate).
    #[arg(long)]
    pub target: Option<f64>,
    /// Fraction for --sequence constant.
    #[arg(long)]
    pub alpha: Option<RationalFrequency>,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub k_max: u32,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[arg(long)]
    pub alpha: RationalFrequency,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: f64,
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Num(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_g(*x),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(i) => Value::from(*i),
            Cell::Num(x) => {
                let rounded: f64 = fmt_g(*x).parse().unwrap_or(*x);
                Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
            }
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

/// A header row and data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(headers: &[&'static str]) -> Self {
        Table {
            headers: headers.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// Serialises the table in the given format.
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => {
                let mut s = self.headers.join(",");
                s.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                s
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let mut obj = Map::new();
                        for (h, c) in self.headers.iter().zip(row) {
                            obj.insert((*h).to_string(), c.json());
                        }
                        Value::Object(obj)
                    })
                    .collect();
                let mut s = serde_json::to_string_pretty(&Value::Array(rows))
                    .expect("serialising plain values");
                s.push('\n');
                s
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AmoError::InvalidInput(format!("--lambda must be finite and ≥ 0, got {lambda}")));
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<Table> {
    check_lambda(a.lambda)?;
    let mut t = Table::new(&["alpha", "lambda", "which", "band", "lo", "hi", "lo_source", "hi_source"]);
    let alpha = a.alpha.to_string();
    match a.which {
        Which::Minus => {
            let bands = intersection_spectrum(&a.alpha, a.lambda)?;
            let mut sorted = bands.bands.clone();
            sorted.sort_by(|x, y| x.lo.total_cmp(&y.lo));
            for (i, b) in sorted.iter().enumerate() {
                t.push(vec![
                    alpha.as_str().into(),
                    a.lambda.into(),
                    "minus".into(),
                    (i + 1).into(),
                    b.lo.into(),
                    b.hi.into(),
                    b.lo_source.to_string().into(),
                    b.hi_source.to_string().into(),
                ]);
            }
        }
        Which::Plus | Which::Theta => {
            let (label, union) = if a.which == Which::Plus {
                ("plus", spectrum_union(&a.alpha, a.lambda)?)
            } else {
                ("theta", theta_spectrum(&a.alpha, a.lambda, Phase::new(a.theta))?)
            };
            for (i, &(lo, hi)) in union.intervals().iter().enumerate() {
                t.push(vec![
                    alpha.as_str().into(),
                    a.lambda.into(),
                    label.into(),
                    (i + 1).into(),
                    lo.into(),
                    hi.into(),
                    "-".into(),
                    "-".into(),
                ]);
            }
        }
    }
    Ok(t)
}

fn cmd_butterfly(a: &ButterflyArgs) -> Result<Table> {
    check_lambda(a.lambda)?;
    if a.qmax == 0 {
        return Err(AmoError::InvalidInput("--qmax must be at least 1".into()));
    }
    if a.which == Which::Theta {
        return Err(AmoError::InvalidInput("butterfly supports --which minus or plus".into()));
    }
    if a.qmax > crate::measures::MAX_ORACLE_Q {
        return Err(AmoError::InvalidInput(format!(
            "--qmax must be at most {}",
            crate::measures::MAX_ORACLE_Q
        )));
    }
    let fractions = RationalFrequency::enumerate(a.qmax);
    let per_alpha: Vec<Result<Vec<(f64, f64)>>> = fractions
        .par_iter()
        .map(|alpha| {
            Ok(match a.which {
                Which::Minus => intersection_spectrum(alpha, a.lambda)?.union().intervals().to_vec(),
                _ => spectrum_union(alpha, a.lambda)?.intervals().to_vec(),
            })
        })
        .collect();
    let mut t = Table::new(&["p", "q", "band", "lo", "hi", "measure"]);
    for (alpha, bands) in fractions.iter().zip(per_alpha) {
        let bands = bands?;
        let measure: f64 = bands.iter().map(|(lo, hi)| hi - lo).sum();
        for (i, (lo, hi)) in bands.into_iter().enumerate() {
            t.push(vec![
                alpha.p().into(),
                alpha.q().into(),
                (i + 1).into(),
                lo.into(),
                hi.into(),
                measure.into(),
            ]);
        }
    }
    Ok(t)
}

fn cmd_verify(a: &VerifyArgs) -> Result<(Table, Option<String>)> {
    let outcomes = run_suites(&a.suite, a.seed)?;
    let mut t = Table::new(&["suite", "check", "status", "detail"]);
    let mut first_failure = None;
    for o in &outcomes {
        if !o.passed && first_failure.is_none() {
            first_failure = Some(format!("{}: {} ({})", o.suite, o.name, o.detail));
        }
        t.push(vec![
            o.suite.into(),
            o.name.as_str().into(),
            if o.passed { "PASS" } else { "FAIL" }.into(),
            o.detail.as_str().into(),
        ]);
    }
    Ok((t, first_failure))
}

fn cmd_moment(a: &MomentArgs) -> Result<Table> {
    check_lambda(a.lambda)?;
    let mut t = Table::new(&["alpha", "lambda", "k", "value", "method"]);
    let alpha = a.alpha.to_string();
    for k in 0..=a.k_max {
        let mut push = |value: f64, method: &str| {
            t.push(vec![
                alpha.as_str().into(),
                a.lambda.into(),
                k.into(),
                value.into(),
                method.into(),
            ]);
        };
        if matches!(a.method, MomentMethod::Poly | MomentMethod::All) {
            push(evaluate_moment(k, a.alpha.value(), a.lambda)?, "poly");
        }
        if matches!(a.method, MomentMethod::Traces | MomentMethod::All) {
            push(moment_four_traces(a.alpha.value(), a.lambda, k as usize)?, "traces");
        }
        if matches!(a.method, MomentMethod::Oracle | MomentMethod::All) {
            match a.alpha.as_rational() {
                Some(r) => push(integrate_monomial(&r, a.lambda, 2 * k)?, "oracle"),
                None if a.method == MomentMethod::Oracle => {
                    return Err(AmoError::InvalidInput(
                        "the band oracle needs a rational --alpha p/q".into(),
                    ))
                }
                None => {}
            }
        }
    }
    Ok(t)
}

fn cmd_poly(a: &PolyArgs, format: OutputFormat) -> Result<Table> {
    let mut t = Table::new(&["k", "kind", "polynomial"]);
    for k in 0..=a.k_max {
        let (kind, p) = match a.kind {
            PolyKind::P => ("P", symbolic_moment(k)?),
            PolyKind::T => ("T", symbolic_t(k)?),
            PolyKind::Normalized => ("normalized", normalized_moment_polynomial(k)?),
        };
        let text = match format {
            OutputFormat::Json => p.to_json().to_string(),
            OutputFormat::Csv if a.factored => factored_display(&p),
            OutputFormat::Csv => p.to_string(),
        };
        t.push(vec![k.into(), kind.into(), text.into()]);
    }
    Ok(t)
}

fn cmd_green(a: &GreenArgs) -> Result<Table> {
    let z = Complex64::new(a.z_re, a.z_im);
    let g = resolvent(&a.alpha, a.lambda, a.theta, z, a.window)?;
    let fit = g.decay();
    let mut t = Table::new(&["j", "re", "im", "abs", "c1", "C1"]);
    let w = a.window as i64;
    for j in -w..=w {
        let v = g.get(j, 0);
        t.push(vec![
            j.into(),
            v.re.into(),
            v.im.into(),
            v.norm().into(),
            fit.rate.into(),
            fit.constant.into(),
        ]);
    }
    Ok(t)
}

fn cmd_atoms(a: &AtomsArgs) -> Result<Table> {
    let m = atomic_limit(&a.alpha)?;
    let mut t = Table::new(&["alpha", "energy", "weight", "raw_weight_sum", "q_times_raw_sum"]);
    let q = a.alpha.q() as f64;
    for &(e, w) in &m.atoms {
        t.push(vec![
            a.alpha.to_string().into(),
            e.into(),
            w.into(),
            m.raw_weight_sum.into(),
            (q * m.raw_weight_sum).into(),
        ]);
    }
    Ok(t)
}

fn cmd_converge(a: &ConvergeArgs) -> Result<Table> {
    check_lambda(a.lambda)?;
    let spec = match a.sequence {
        SequenceKind::Reciprocal => SequenceSpec::Reciprocal { n_max: a.n_max },
        SequenceKind::Convergents => SequenceSpec::Convergents {
            target: a.target.unwrap_or((5f64.sqrt() - 1.0) / 2.0),
            count: a.n_max as usize,
        },
        SequenceKind::Constant => SequenceSpec::Constant {
            alpha: a.alpha.ok_or_else(|| {
                AmoError::InvalidInput("--sequence constant needs --alpha p/q".into())
            })?,
            count: a.n_max as usize,
        },
    };
    let rows = convergence_experiment(&spec, a.lambda, a.k_max)?;
    let mut t = Table::new(&["n", "alpha", "k", "value", "limit", "difference"]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.alpha.to_string().into(),
            r.k.into(),
            r.value.into(),
            r.limit.into(),
            r.difference().into(),
        ]);
    }
    Ok(t)
}

fn cmd_gap(a: &GapArgs) -> Result<Table> {
    check_lambda(a.lambda)?;
    let m = gap_measure(&a.alpha, a.lambda, a.lo, a.hi)?;
    let mut t = Table::new(&["alpha", "lambda", "lo", "hi", "measure"]);
    t.push(vec![
        a.alpha.to_string().into(),
        a.lambda.into(),
        a.lo.into(),
        a.hi.into(),
        m.into(),
    ]);
    Ok(t)
}

fn write_output(cli: &Cli, body: &str) -> Result<()> {
    match &cli.output {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(body.as_bytes())?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
        {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    let mut failure = None;
    let table = match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Butterfly(a) => cmd_butterfly(a),
        Command::Verify(a) => cmd_verify(a).map(|(t, f)| {
            failure = f;
            t
        }),
        Command::Moment(a) => cmd_moment(a),
        Command::Poly(a) => cmd_poly(a, cli.format),
        Command::Green(a) => cmd_green(a),
        Command::Atoms(a) => cmd_atoms(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Gap(a) => cmd_gap(a),
    };
    let table = match table {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = write_output(cli, &table.render(cli.format)) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    if let Some(f) = failure {
        eprintln!("verification failed: {f}");
        return 1;
    }
    0
}

/// Parses arguments, initialises logging from `AMO_LOG` and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("AMO_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            code
        }
    }
}
