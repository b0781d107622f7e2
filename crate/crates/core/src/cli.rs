//! Command-line front end.
//!
//! Every sampling command requires `--seed`; there is no ambient entropy.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::arith::{load_parameter_set, ParamError, ParameterSet};
use crate::datapath::{self, Algorithm, RunError, SamplerTables};
use crate::ntt::{NttError, NttPlan, Polynomial};
use crate::rlwe::{Hooks, Rlwe, RlweError};
use crate::rng::BitSource;
use crate::sampler_ky::{self, KyError, ProbabilityMatrix};
use crate::sampler_zig::{self, ZigError, ZigguratTable, DEFAULT_M};
use crate::stats::{self, EmpiricalHistogram, StatsError, TargetDistribution};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Ntt(#[from] NttError),
    #[error(transparent)]
    Ky(#[from] KyError),
    #[error(transparent)]
    Zig(#[from] ZigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Rlwe(#[from] RlweError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgArg {
    Ky,
    Zig,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Ky => Algorithm::Ky,
            AlgArg::Zig => Algorithm::Zig,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Integrated,
    Standalone,
}

#[derive(Debug, Parser)]
#[command(name = "integral-sampler", version, about = "Discrete Gaussian samplers on a shared NTT datapath")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build sampler tables (`.kypm` for ky, JSON for zig).
    GenTables {
        #[arg(long, value_enum)]
        alg: AlgArg,
        /// Catalog name or parameter JSON file.
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples, one integer per line.
    Sample {
        #[arg(long, value_enum)]
        alg: AlgArg,
        #[arg(long, default_value = "LP")]
        params: String,
        /// Precomputed table; built from `--params` when absent.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Shards the count over seeds `seed + i`.
        #[arg(long, default_value_t = 1)]
        workers: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Merged stats of the drawn samples, as written by `validate`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Negacyclic product of two polynomials in text format.
    NttMul {
        #[arg(long)]
        params: String,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Key generation, encryption and decryption round trip.
    DemoRlwe {
        #[arg(long)]
        params: String,
        #[arg(long, value_enum)]
        sampler: AlgArg,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Directory for the key and ciphertext of the first trial.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a sample file with the target distribution.
    Validate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        params: String,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample on the emulated datapath and report resource use.
    Run {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_enum)]
        alg: AlgArg,
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrated and standalone resource reports side by side.
    Resources {
        #[arg(long, value_enum)]
        alg: AlgArg,
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn load_tables(alg: Algorithm, table: Option<&Path>, params: &ParameterSet, m: usize) -> Result<SamplerTables, CliError> {
    Ok(match (alg, table) {
        (Algorithm::Ky, Some(p)) => SamplerTables::Ky(ProbabilityMatrix::load(p)?),
        (Algorithm::Zig, Some(p)) => SamplerTables::Zig(ZigguratTable::load(p)?),
        (alg, None) => SamplerTables::build(alg, params, m)?,
    })
}

fn draw(tables: &SamplerTables, count: usize, seed: u64) -> Result<Vec<i64>, CliError> {
    let mut src = BitSource::new(seed);
    Ok(match tables {
        SamplerTables::Ky(pm) => sampler_ky::ky_sample_many(pm, &mut src, count)?,
        SamplerTables::Zig(t) => sampler_zig::zig_sample_many(t, &mut src, count)?,
    })
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenTables { alg, params, m, out, .. } => {
            let params = load_parameter_set(&params)?;
            match SamplerTables::build(alg.into(), &params, m)? {
                SamplerTables::Ky(pm) => pm.save(&out)?,
                SamplerTables::Zig(t) => t.save(&out)?,
            }
        }
        Command::Sample {
            alg,
            params,
            table,
            m,
            count,
            seed,
            workers,
            out,
            report,
        } => {
            if workers == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            let params = load_parameter_set(&params)?;
            let tables = load_tables(alg.into(), table.as_deref(), &params, m)?;
            let mut hist = EmpiricalHistogram::new(tables.max_value());
            let mut text = String::new();
            for w in 0..workers {
                let share = count / workers as usize + usize::from((w as usize) < count % workers as usize);
                let samples = draw(&tables, share, seed.wrapping_add(w))?;
                for &v in &samples {
                    hist.add(v)?;
                }
                text.push_str(&stats::format_samples(&samples));
            }
            emit(out.as_deref(), &text)?;
            if let Some(path) = report {
                let target = TargetDistribution::new(&params.gauss);
                emit(Some(&path), &pretty(&stats::validate(&hist, &target)?))?;
            }
        }
        Command::NttMul { params, a, b, out, .. } => {
            let params = load_parameter_set(&params)?;
            let plan = NttPlan::new(&params.ring);
            let c = plan.poly_mul(&Polynomial::read(&a)?, &Polynomial::read(&b)?)?;
            emit(out.as_deref(), &c.to_text())?;
        }
        Command::DemoRlwe {
            params,
            sampler,
            seed,
            trials,
            out,
        } => {
            let params = load_parameter_set(&params)?;
            let name = params.name.clone();
            let tables = SamplerTables::build(sampler.into(), &params, DEFAULT_M)?;
            let rlwe = Rlwe::new(params, tables);
            let mut src = BitSource::new(seed);
            let mut ok = 0;
            for t in 0..trials {
                let (pair, s, e) = rlwe.make_rlwe_sample(&mut src, Hooks::NONE)?;
                let consistent = pair.b.sub(&rlwe.plan.poly_mul(&pair.a, &s)?) == e;
                let m = rlwe.random_message(&mut src);
                let ct = rlwe.encrypt(&pair, &m, &mut src, Hooks::NONE)?;
                let dec = rlwe.decrypt(&s, &ct)?;
                let good = consistent && dec == m;
                ok += usize::from(good);
                println!(
                    "trial {t}: keygen {} round trip {}",
                    if consistent { "ok" } else { "MISMATCH" },
                    if dec == m { "ok" } else { "FAILED" }
                );
                if t == 0 {
                    if let Some(dir) = &out {
                        fs::create_dir_all(dir).map_err(io_err(dir))?;
                        pair.a.write(&dir.join("pk_a.txt"))?;
                        pair.b.write(&dir.join("pk_b.txt"))?;
                        s.write(&dir.join("sk.txt"))?;
                        ct.c1.write(&dir.join("ct_c1.txt"))?;
                        ct.c2.write(&dir.join("ct_c2.txt"))?;
                    }
                }
            }
            println!("{name}: {ok}/{trials} round trips succeeded");
        }
        Command::Validate { samples, params, report, .. } => {
            let params = load_parameter_set(&params)?;
            let values = stats::read_samples(&samples)?;
            let hist = EmpiricalHistogram::from_samples(&values, params.gauss.max_value)?;
            let target = TargetDistribution::new(&params.gauss);
            emit(report.as_deref(), &pretty(&stats::validate(&hist, &target)?))?;
        }
        Command::Run {
            mode,
            alg,
            params,
            m,
            count,
            seed,
            report,
            out,
        } => {
            let params = load_parameter_set(&params)?;
            let tables = SamplerTables::build(alg.into(), &params, m)?;
            let (samples, rep) = match mode {
                Mode::Integrated => datapath::run_integrated_with(&tables, &params.ring, count, seed)?,
                Mode::Standalone => datapath::run_standalone_with(&tables, count, seed)?,
            };
            if let Some(path) = out {
                emit(Some(&path), &stats::format_samples(&samples))?;
            }
            emit(report.as_deref(), &format!("{}\n", rep.to_json()))?;
        }
        Command::Resources {
            alg,
            params,
            m,
            count,
            seed,
            out,
        } => {
            let params = load_parameter_set(&params)?;
            let tables = SamplerTables::build(alg.into(), &params, m)?;
            let (a, integrated) = datapath::run_integrated_with(&tables, &params.ring, count, seed)?;
            let (b, standalone) = datapath::run_standalone_with(&tables, count, seed)?;
            let v = json!({
                "integrated": integrated,
                "standalone": standalone,
                "bit_exact": a == b,
            });
            emit(out.as_deref(), &pretty(&v))?;
        }
    }
    Ok(())
}

/// Parse `argv` (program name first) and run the command; returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
