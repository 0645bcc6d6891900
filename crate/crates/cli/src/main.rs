use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use mtlab::blaschke::PoleSequence;
use mtlab::experiments::{
    contrast_sweep, lower_bound_sweep_on, ExperimentReport, NONTANGENTIAL_GRID,
};
use mtlab::fixtures;
use mtlab::poly::Poly;
use mtlab::series::{inner_product, mt_basis_on_grid, CircleFunction, CircleGrid, KernelKind};
use mtlab::unwinding::unwinding_series;
use mtlab::verify::{self, CheckResult};
use mtlab::MtError;

/// The summary goes to stdout when the data has its own `--output` file and
/// to stderr otherwise, so stdout never mixes the two.
static SUMMARY_ON_STDOUT: AtomicBool = AtomicBool::new(false);

macro_rules! note_raw {
    ($($arg:tt)*) => {
        if SUMMARY_ON_STDOUT.load(Ordering::Relaxed) {
            print!($($arg)*);
        } else {
            eprint!($($arg)*);
        }
    };
}

macro_rules! note {
    ($($arg:tt)*) => {{
        note_raw!($($arg)*);
        note_raw!("\n");
    }};
}

#[derive(Parser, Debug)]
#[command(name = "mtlab", version, about = "Malmquist-Takenaka series and phase-unwinding laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Counterexample,
    Nontangential,
}

#[derive(clap::Args, Debug)]
struct OutputArgs {
    /// Output file; written atomically. Without it the result goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MT coefficients of a sampled function and the reconstruction error per N.
    Decompose {
        /// CircleFunction CSV (index,x,re,im).
        input: PathBuf,
        /// Pole file (CSV re,im), inline list "re,im;re,im", or fourier:N.
        #[arg(long)]
        poles: String,
        /// Number of basis functions; defaults to the pole count.
        #[arg(long)]
        depth: Option<usize>,
        /// Expected grid size of the input.
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Unwinding series of a polynomial (CSV re,im per coefficient, ascending degree).
    Unwind {
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        /// Grid of the sup-norm error table.
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Linearized maximal-operator experiments.
    NormSweep {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Comma-separated radii (counterexample mode).
        #[arg(long, value_delimiter = ',')]
        r_list: Vec<f64>,
        /// Comma-separated pole counts (nontangential mode).
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        counts: Vec<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Numerical checks against the frozen fixtures.
    Verify {
        #[arg(long, conflicts_with = "only")]
        all: bool,
        /// Check names, comma separated or repeated.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Rerun the reference measurements and print fixture values.
    Calibrate,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

const EXIT_CHECK: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_BOUNDARY: u8 = 4;
const EXIT_RESOLUTION: u8 = 5;

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn output(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: format!("cannot write output: {e}"),
        }
    }
}

impl From<MtError> for Failure {
    fn from(e: MtError) -> Self {
        let code = match e {
            MtError::OutsideDisc { .. }
            | MtError::Index { .. }
            | MtError::Shape(_)
            | MtError::Argument(_)
            | MtError::Precondition(_)
            | MtError::Format(_) => EXIT_USAGE,
            MtError::Singular { .. } | MtError::NonConvergence { .. } => EXIT_NUMERIC,
            MtError::BoundaryRoot { .. } => EXIT_BOUNDARY,
            MtError::Resolution { .. } => EXIT_RESOLUTION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_pairs(path: &Path) -> CliResult<Vec<Complex64>> {
    let file = File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        if line == 0 && record.get(0) == Some("re") {
            continue;
        }
        out.push(parse_pair(record.get(0), record.get(1), record.len()).map_err(|m| {
            Failure::usage(format!("{} record {}: {m}", path.display(), line + 1))
        })?);
    }
    Ok(out)
}

fn parse_pair(re: Option<&str>, im: Option<&str>, fields: usize) -> Result<Complex64, String> {
    if fields != 2 {
        return Err(format!("expected \"re,im\", found {fields} fields"));
    }
    let parse = |s: Option<&str>| {
        let s = s.unwrap_or("").trim();
        s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
    };
    Ok(Complex64::new(parse(re)?, parse(im)?))
}

fn parse_poles(arg: &str) -> CliResult<PoleSequence> {
    let values = if let Some(count) = arg.strip_prefix("fourier:") {
        let n = count
            .parse::<usize>()
            .map_err(|_| Failure::usage(format!("bad pole count in {arg:?}")))?;
        return Ok(PoleSequence::fourier(n));
    } else if Path::new(arg).is_file() {
        read_pairs(Path::new(arg))?
    } else {
        arg.split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|item| {
                let parts: Vec<&str> = item.split(',').collect();
                parse_pair(parts.first().copied(), parts.get(1).copied(), parts.len())
                    .map_err(|m| Failure::usage(format!("pole {item:?}: {m}")))
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(Failure::usage("empty pole list"));
    }
    Ok(PoleSequence::from_complex(&values)?)
}

fn grid(n: usize) -> CliResult<CircleGrid> {
    CircleGrid::new(n).map_err(|e| Failure::usage(e.to_string()))
}

/// Writes through a temporary file in the target directory, then renames.
fn emit(output: Option<&Path>, body: &[u8]) -> CliResult<()> {
    let Some(path) = output else {
        std::io::stdout().write_all(body).map_err(Failure::output)?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Failure::output)?;
    tmp.write_all(body).map_err(Failure::output)?;
    tmp.persist(path).map_err(Failure::output)?;
    Ok(())
}

fn csv_bytes<S: Serialize>(rows: &[S]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(Failure::output)?;
    }
    w.into_inner().map_err(Failure::output)
}

fn json_bytes<S: Serialize + ?Sized>(value: &S) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(Failure::output)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
struct CoefficientRow {
    n: usize,
    re: f64,
    im: f64,
    /// Errors of the partial sum through index `n`.
    l2_error: f64,
    sup_error: f64,
}

fn cmd_decompose(
    input: &Path,
    poles: &str,
    depth: Option<usize>,
    expected_grid: Option<usize>,
    out: &OutputArgs,
) -> CliResult<()> {
    let poles = parse_poles(poles)?;
    let file = File::open(input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let f = CircleFunction::read_csv(BufReader::new(file))?;
    if let Some(n) = expected_grid {
        if f.len() != n {
            return Err(Failure::usage(format!("input has {} samples, --grid says {n}", f.len())));
        }
    }
    let count = depth.unwrap_or(poles.len());
    if count == 0 || count > poles.len() {
        return Err(Failure::usage(format!(
            "depth {count} must lie in 1..={} (the pole count)",
            poles.len()
        )));
    }
    let basis = mt_basis_on_grid(&poles, count, f.grid())?;
    let mut residual = f.clone();
    let mut rows = Vec::with_capacity(count);
    for (n, phi) in basis.iter().enumerate() {
        let c = inner_product(&f, phi)?;
        residual = residual.sub(&phi.scaled(c))?;
        rows.push(CoefficientRow {
            n,
            re: c.re,
            im: c.im,
            l2_error: inner_product(&residual, &residual)?.re.max(0.0).sqrt(),
            sup_error: residual.sup_norm(),
        });
    }
    let body = match out.format {
        Format::Csv => csv_bytes(&rows)?,
        Format::Json => json_bytes(&rows)?,
    };
    emit(out.output.as_deref(), &body)?;
    let last = rows.last().expect("count >= 1");
    note!(
        "{} coefficients on {} samples; L2 error {:.3e}, sup error {:.3e}",
        rows.len(),
        f.len(),
        last.l2_error,
        last.sup_error
    );
    Ok(())
}

#[derive(Serialize)]
struct UnwindErrorRow {
    terms: usize,
    mt_cut: usize,
    sup_error: f64,
}

fn cmd_unwind(input: &Path, depth: usize, grid_size: usize, out: &OutputArgs) -> CliResult<()> {
    let coefficients = read_pairs(input)?;
    let f = Poly::new(coefficients);
    if f.is_zero() {
        return Err(Failure::usage("the zero polynomial has no unwinding series"));
    }
    let grid = grid(grid_size)?;
    let dec = unwinding_series(&f, depth)?;
    let table: Vec<UnwindErrorRow> = dec
        .error_table(&f, grid)
        .into_iter()
        .map(|(k, e)| UnwindErrorRow {
            terms: k,
            mt_cut: dec.cumulative_cut(k),
            sup_error: e,
        })
        .collect();
    let body = match out.format {
        Format::Json => {
            let mut s = dec.to_json()?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => csv_bytes(&table)?,
    };
    emit(out.output.as_deref(), &body)?;
    note!("degree {}, {} unwinding steps, {} terms", f.degree(), dec.steps, dec.terms.len());
    for row in &table {
        note!("  K = {:>2}  cut {:>3}  sup error {:.3e}", row.terms, row.mt_cut, row.sup_error);
    }
    Ok(())
}

fn report_bytes(report: &ExperimentReport, format: Format) -> CliResult<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            Ok(buf)
        }
        Format::Json => {
            let mut s = report.to_json()?;
            s.push('\n');
            Ok(s.into_bytes())
        }
    }
}

fn print_rows(report: &ExperimentReport) {
    note!("{:>12} {:>8} {:>12} {:>8} {:>8}", "1-r", "M", "ratio_sq", "n_grid", "verdict");
    for r in &report.rows {
        note!(
            "{:>12.4e} {:>8.4} {:>12.4} {:>8} {:>8}",
            r.one_minus_r, r.m, r.ratio_sq, r.n_grid, r.verdict
        );
    }
}

fn cmd_norm_sweep(
    mode: Mode,
    r_list: &[f64],
    counts: &[usize],
    grid_size: Option<usize>,
    seed: u64,
    out: &OutputArgs,
) -> CliResult<bool> {
    let report = match mode {
        Mode::Counterexample => {
            if r_list.is_empty() {
                return Err(Failure::usage("--r-list is required and must be nonempty"));
            }
            let g = grid_size.map(grid).transpose()?;
            let report = lower_bound_sweep_on(r_list, KernelKind::Cosecant, fixtures::LOWER_BOUND_BAND, g)?;
            print_rows(&report);
            match report.slope_through_origin() {
                Some(s) => note!("slope of ratio_sq against M: {s:.4}"),
                None => note!("slope of ratio_sq against M: undefined"),
            }
            report
        }
        Mode::Nontangential => {
            if counts.is_empty() {
                return Err(Failure::usage("--counts must be nonempty"));
            }
            let g = grid(grid_size.unwrap_or(NONTANGENTIAL_GRID))?;
            let sweep = contrast_sweep(counts, seed, g)?;
            print_rows(&sweep.nontangential);
            note!("nontangential norm spread {:.4}", sweep.spread);
            if !sweep.compact.rows.is_empty() {
                note!("circular configurations with the same counts:");
                print_rows(&sweep.compact);
                note!("circular norm growth {:.4}", sweep.compact_growth);
            }
            sweep.nontangential
        }
    };
    emit(out.output.as_deref(), &report_bytes(&report, out.format)?)?;
    Ok(report.all_pass())
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    measured_constant: f64,
    bound_used: f64,
    samples: usize,
    verdict: String,
}

fn cmd_verify(all: bool, only: &[String], seed: u64, output: Option<&Path>, format: Format) -> CliResult<bool> {
    let names: Vec<&str> = if all || only.is_empty() {
        verify::CHECK_NAMES.to_vec()
    } else {
        only.iter().map(String::as_str).collect()
    };
    if let Some(bad) = names.iter().find(|n| !verify::CHECK_NAMES.contains(n)) {
        return Err(Failure::usage(format!(
            "unknown check {bad:?}; known checks: {}",
            verify::CHECK_NAMES.join(", ")
        )));
    }
    let results: Vec<CheckResult> = verify::run_named(&names, seed).map_err(|e| Failure {
        code: EXIT_NUMERIC,
        message: e.to_string(),
    })?;
    let body = match format {
        Format::Json => json_bytes(&results)?,
        Format::Csv => csv_bytes(
            &results
                .iter()
                .map(|r| CheckRow {
                    name: &r.name,
                    measured_constant: r.measured_constant,
                    bound_used: r.bound_used,
                    samples: r.samples,
                    verdict: r.verdict.to_string(),
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(output, &body)?;
    note_raw!("{}", verify::format_table(&results));
    Ok(results.iter().all(CheckResult::passed))
}

fn cmd_calibrate() -> CliResult<()> {
    let c = verify::calibrate()?;
    print!("{}", c.frozen());
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(value) = std::env::var("MTLAB_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("MTLAB_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<bool> {
    configure_threads()?;
    let has_output = match &cli.command {
        Command::Decompose { out, .. } | Command::Unwind { out, .. } | Command::NormSweep { out, .. } => {
            out.output.is_some()
        }
        Command::Verify { output, .. } => output.is_some(),
        Command::Calibrate => true,
    };
    SUMMARY_ON_STDOUT.store(has_output, Ordering::Relaxed);
    match cli.command {
        Command::Decompose { input, poles, depth, grid, out } => {
            cmd_decompose(&input, &poles, depth, grid, &out).map(|_| true)
        }
        Command::Unwind { input, depth, grid, out } => cmd_unwind(&input, depth, grid, &out).map(|_| true),
        Command::NormSweep { mode, r_list, counts, grid, seed, out } => {
            cmd_norm_sweep(mode, &r_list, &counts, grid, seed, &out)
        }
        Command::Verify { all, only, seed, output, format } => cmd_verify(all, &only, seed, output.as_deref(), format),
        Command::Calibrate => cmd_calibrate().map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(f) => {
            eprintln!("mtlab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
