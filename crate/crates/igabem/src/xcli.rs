//! Command line front end and CSV output.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::adapt::{adaptive_loop, LevelRecord, LoopConfig, PrecondChoice, Problem};
use crate::assembly::QuadratureSpec;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "level",
    "N",
    "kappa",
    "eta",
    "cond_diag",
    "cond_mlas",
    "iters_diag",
    "iters_mlas",
    "apply_ns",
    "cond_method",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    Diag,
    Mlas,
    Both,
    None,
}

impl From<PrecondArg> for PrecondChoice {
    fn from(p: PrecondArg) -> Self {
        match p {
            PrecondArg::Diag => PrecondChoice::Diag,
            PrecondArg::Mlas => PrecondChoice::Mlas,
            PrecondArg::Both => PrecondChoice::Both,
            PrecondArg::None => PrecondChoice::None,
        }
    }
}

/// Adaptive IGABEM runs with multilevel preconditioning.
#[derive(Debug, Parser)]
#[command(name = "igabem", version)]
pub struct Args {
    /// hyper-pacman, weak-pacman, hyper-slit or weak-slit.
    #[arg(long, required_unless_present = "list")]
    pub problem: Option<String>,
    /// Dörfler parameter.
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub theta: f64,
    /// Stop once the number of knots reaches this value.
    #[arg(long, default_value_t = 2000)]
    pub max_dofs: usize,
    #[arg(long, value_enum, default_value_t = PrecondArg::Both)]
    pub precond: PrecondArg,
    /// PCG tolerance on the relative preconditioned residual.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Seed for the random vectors of the estimates and timings.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gauss order of the regular and logarithmic rules.
    #[arg(long, default_value_t = 16)]
    pub quad_order: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// List the problems and exit.
    #[arg(long)]
    pub list: bool,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn opt_int<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV fields of a record.
pub fn record_fields(problem: Problem, r: &LevelRecord) -> Vec<String> {
    vec![
        problem.name().to_string(),
        r.level.to_string(),
        r.n.to_string(),
        real(r.kappa),
        real(r.eta),
        opt_real(r.cond_diag),
        opt_real(r.cond_mlas),
        opt_int(r.iters_diag),
        opt_int(r.iters_mlas),
        opt_real(r.apply_ns),
        r.cond_method.name().to_string(),
    ]
}

/// Writes the header and the records.
pub fn write_csv<W: Write>(w: W, problem: Problem, records: &[LevelRecord]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    wr.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        wr.write_record(record_fields(problem, r)).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub problem: String,
    pub level: usize,
    pub n: usize,
    pub kappa: f64,
    pub eta: f64,
    pub cond_diag: Option<f64>,
    pub cond_mlas: Option<f64>,
    pub iters_diag: Option<usize>,
    pub iters_mlas: Option<usize>,
    pub apply_ns: Option<f64>,
    pub cond_method: String,
}

/// Reads a file written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let bad = |m: String| Error::Invalid(format!("csv: {m}"));
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad("unexpected header".into()));
    }
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.parse().map_err(|_| Error::Invalid(format!("csv: bad number {s:?}")))
    }
    fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push(CsvRow {
            problem: f(0).to_string(),
            level: num(f(1))?,
            n: num(f(2))?,
            kappa: num(f(3))?,
            eta: num(f(4))?,
            cond_diag: opt(f(5))?,
            cond_mlas: opt(f(6))?,
            iters_diag: opt(f(7))?,
            iters_mlas: opt(f(8))?,
            apply_ns: opt(f(9))?,
            cond_method: f(10).to_string(),
        });
    }
    Ok(out)
}

/// Checks the arguments and turns them into a run configuration.
pub fn config(args: &Args) -> Result<(Problem, LoopConfig)> {
    let name = args.problem.as_deref().unwrap_or("");
    let problem = Problem::from_name(name).ok_or_else(|| {
        Error::Usage(format!(
            "unknown problem {name:?}; expected one of {}",
            Problem::ALL.map(|p| p.name()).join(", ")
        ))
    })?;
    if !(args.theta > 0.0 && args.theta <= 1.0) {
        return Err(Error::Usage("theta must satisfy 0<theta<=1".into()));
    }
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(Error::Usage("tol must satisfy 0<tol<1".into()));
    }
    if args.quad_order < 2 {
        return Err(Error::Usage("quad-order must be at least 2".into()));
    }
    if args.max_dofs == 0 {
        return Err(Error::Usage("max-dofs must be positive".into()));
    }
    let cfg = LoopConfig {
        theta: args.theta,
        max_dofs: args.max_dofs,
        precond: args.precond.into(),
        tol: args.tol,
        seed: args.seed,
        quad: QuadratureSpec::with_order(args.quad_order),
        ..LoopConfig::default()
    };
    Ok((problem, cfg))
}

/// Runs the command line program; returns the process exit code.
pub fn run(args: Args) -> i32 {
    if args.list {
        for p in Problem::ALL {
            println!("{}", p.name());
        }
        return 0;
    }
    let (problem, cfg) = match config(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let run = adaptive_loop(problem, &cfg, |r| {
        eprintln!(
            "level {:3}  N {:6}  eta {:.3e}  cond diag {}  mlas {}",
            r.level,
            r.n,
            r.eta,
            r.cond_diag.map_or("-".into(), |c| format!("{c:.3e}")),
            r.cond_mlas.map_or("-".into(), |c| format!("{c:.3e}")),
        );
    });
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if run.converged_early {
        eprintln!("estimator vanished; stopping early");
    }
    let res = match &args.out {
        Some(p) => std::fs::File::create(p)
            .map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))
            .and_then(|f| write_csv(std::io::BufWriter::new(f), problem, &run.records)),
        None => write_csv(std::io::stdout().lock(), problem, &run.records),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
