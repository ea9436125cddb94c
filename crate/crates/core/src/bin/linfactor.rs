use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use linfactor::fixtures::{self, Example3Params};
use linfactor::generative::{self, Distribution};
use linfactor::io::{self as lio, MomentFile, RecordSource, ReturnsFile, RunConfig};
use linfactor::{Error, Tolerance};

const EXIT_DATA: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "linfactor", version, about = "Diagnostics for conditional linear factor models")]
struct Cli {
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, global = true, env = "LINFACTOR_TOL_RANK", default_value_t = linfactor::linalg::DEFAULT_REL_RANK_TOL)]
    tol_rank: f64,
    /// Relative residual below which an equality is accepted.
    #[arg(long, global = true, env = "LINFACTOR_TOL_RESIDUAL", default_value_t = linfactor::linalg::DEFAULT_ABS_RESIDUAL_TOL)]
    tol_residual: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Abort on the first invalid date.
    #[arg(long, global = true)]
    strict: bool,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every condition check on a moment file (`-` or nothing reads stdin).
    Diagnose {
        file: Option<PathBuf>,
        /// Seed for the sample-path orthogonality draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draws per date for the sample-path check.
        #[arg(long, default_value_t = 16)]
        sample_draws: usize,
    },
    /// Emit a built-in instance as a moment file.
    Fixture {
        #[command(subcommand)]
        which: FixtureKind,
    },
    /// Simulate returns from a generative record.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        dates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "gaussian")]
        distribution: String,
    },
    /// Check the GLS-type factor guarantees on a generative spec or on random specs.
    #[command(name = "verify-prop7")]
    VerifyProp7 {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
enum FixtureKind {
    /// The three-asset counterexample.
    Example3 {
        /// Set b2 = b1 and derive b3 so that the factors span the MVE portfolio.
        #[arg(long)]
        continuation: bool,
        /// a1,a2,a3,b1,b2,b3,rho
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        params: Option<Vec<f64>>,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn read_input(file: &Option<PathBuf>) -> Result<String, Failure> {
    match file {
        Some(p) if p.as_os_str() != "-" => Ok(fs::read_to_string(p)?),
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn example3_params(continuation: bool, params: &Option<Vec<f64>>) -> Result<Example3Params, Failure> {
    if let Some(v) = params.as_ref().filter(|v| v.len() != 7) {
        return Err(Failure::Usage(format!("--params takes 7 comma-separated values, got {}", v.len())));
    }
    match (continuation, params) {
        (false, None) => Ok(Example3Params::BASE),
        (false, Some(v)) => Ok(Example3Params::from_slice(v)?),
        (true, None) => Ok(Example3Params::continuation_default()),
        (true, Some(v)) => {
            let given = Example3Params::from_slice(v)?;
            if given.b2 != given.b1 {
                return Err(Failure::Usage(format!(
                    "--continuation needs b2 = b1, got b1 = {} and b2 = {}",
                    given.b1, given.b2
                )));
            }
            let p = Example3Params::continuation(given.a1, given.a2, given.a3, given.b1, given.rho)?;
            if (p.b3 - given.b3).abs() > 1e-12 * p.b3.abs().max(1.0) {
                return Err(Failure::Usage(format!(
                    "--continuation determines b3 = {}, got {}",
                    p.b3, given.b3
                )));
            }
            Ok(p)
        }
    }
}

fn single_generative_spec(path: &PathBuf, tol: &Tolerance) -> Result<(String, generative::GenerativeSpec), Failure> {
    let file = MomentFile::read(path)?;
    let mut gens = file
        .records
        .iter()
        .filter(|r| matches!(r.source, RecordSource::Generative { .. }));
    match (gens.next(), gens.next()) {
        (Some(r), None) => Ok((r.label.clone(), r.generative_spec(tol)?.expect("generative record"))),
        (None, _) => Err(Failure::Data(format!("{}: no generative record", path.display()))),
        (Some(_), Some(_)) => Err(Failure::Data(format!("{}: more than one generative record", path.display()))),
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let tol = Tolerance::new(cli.tol_rank, cli.tol_residual).map_err(|e| Failure::Usage(e.to_string()))?;
    match &cli.command {
        Command::Diagnose { file, seed, sample_draws } => {
            let text = read_input(file)?;
            let moments = MomentFile::parse(&text)?;
            let config = RunConfig {
                tol,
                seed: *seed,
                sample_draws: *sample_draws,
                strict: cli.strict,
            };
            let output = lio::run_diagnostics_on_file(&moments, &config)?;
            let rendered = match cli.format {
                Format::Json => output.to_json(),
                Format::Text => lio::render_text(&output),
            };
            emit(cli, &rendered)?;
            Ok(if output.has_violation() {
                EXIT_VIOLATION
            } else if output.has_error() {
                EXIT_DATA
            } else {
                0
            })
        }
        Command::Fixture {
            which: FixtureKind::Example3 { continuation, params },
        } => {
            let p = example3_params(*continuation, params)?;
            emit(cli, &fixtures::example3_moment_file(&p, &tol)?.serialize())?;
            Ok(0)
        }
        Command::Generate {
            spec,
            dates,
            seed,
            distribution,
        } => {
            let distribution: Distribution = distribution.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let (label, spec) = single_generative_spec(spec, &tol)?;
            let samples = generative::simulate_panel(&spec, *dates, *seed, distribution, &tol)?;
            let rendered = match cli.format {
                Format::Text => ReturnsFile {
                    seed: *seed,
                    n: spec.n(),
                    samples,
                }
                .serialize(),
                Format::Json => {
                    let rows: Vec<Vec<f64>> = samples.iter().map(|x| x.as_vector().iter().copied().collect()).collect();
                    let value = serde_json::json!({
                        "schema_version": lio::SCHEMA_VERSION,
                        "spec": label,
                        "seed": seed,
                        "distribution": distribution,
                        "n": spec.n(),
                        "samples": rows,
                    });
                    let mut s = serde_json::to_string_pretty(&value).expect("serializable");
                    s.push('\n');
                    s
                }
            };
            emit(cli, &rendered)?;
            Ok(0)
        }
        Command::VerifyProp7 { spec, trials, seed } => {
            let (passes, rendered) = match spec {
                Some(path) => {
                    let (label, spec) = single_generative_spec(path, &tol)?;
                    let report = generative::verify_prop7(&spec, &tol)?;
                    let rendered = match cli.format {
                        Format::Json => {
                            let value = serde_json::json!({
                                "schema_version": lio::SCHEMA_VERSION,
                                "spec": label,
                                "passes": report.passes(),
                                "checks": report.checks,
                            });
                            serde_json::to_string_pretty(&value).expect("serializable") + "\n"
                        }
                        Format::Text => {
                            let mut s = format!("{label}: {}\n", if report.passes() { "all checks pass" } else { "FAILURES" });
                            for c in &report.checks {
                                s += &format!("  {:<5} {:.3e}  {}\n", if c.holds { "ok" } else { "FAIL" }, c.residual, c.name);
                            }
                            s
                        }
                    };
                    (report.passes(), rendered)
                }
                None => {
                    let summary = generative::gls_type_campaign(*trials, *seed, &tol)?;
                    let passes = summary.passed == summary.trials;
                    let rendered = match cli.format {
                        Format::Json => {
                            let value = serde_json::json!({
                                "schema_version": lio::SCHEMA_VERSION,
                                "rel_rank_tol": tol.rel_rank_tol(),
                                "abs_residual_tol": tol.abs_residual_tol(),
                                "summary": summary,
                            });
                            serde_json::to_string_pretty(&value).expect("serializable") + "\n"
                        }
                        Format::Text => {
                            let mut s = format!("{}/{} pass (seed {})\n", summary.passed, summary.trials, summary.seed);
                            for (k, names) in &summary.failures {
                                s += &format!("  trial {k}: {}\n", names.join(", "));
                            }
                            s
                        }
                    };
                    (passes, rendered)
                }
            };
            emit(cli, &rendered)?;
            Ok(if passes { 0 } else { EXIT_VIOLATION })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
