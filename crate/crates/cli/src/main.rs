mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use funnelkit::batch::{par_map, run_batch_jobs};
use funnelkit::builtin;
use funnelkit::diagnostics::diagnose;
use funnelkit::{design, parse_scenario, DesignRequest, Error, FunnelParams, Mat, Scenario, SimResult};

/// Validation failures, unreadable or malformed input.
const EXIT_INVALID: u8 = 1;
/// A run left its funnels or could not be integrated.
const EXIT_ABORT: u8 = 2;
/// Unknown subcommand or flag.
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "funnelkit", version, about = "Funnel pre-compensator design, simulation and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design and validate pre-compensator parameters.
    Design(DesignArgs),
    /// Run scenario files and write result.csv and report.json.
    Simulate {
        /// Scenario files; several are run concurrently.
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Output directory; one subdirectory per file when several are given.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for several files.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run a built-in scenario.
    Example {
        #[arg(value_enum)]
        which: Builtin,
        /// Pole location for the pre-compensator study; repeat for a sweep.
        #[arg(long, num_args = 1..)]
        s0: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario file and check the stability-proof quantities.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    /// Cascade approximating a Gaussian bump, open loop.
    Precompensator,
    /// Two-output plant under funnel control.
    Tracking,
}

#[derive(Debug, clap::Args)]
struct DesignArgs {
    /// Relative degree.
    #[arg(long)]
    r: usize,
    /// Output dimension.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Root of `(s + s0)^r`.
    #[arg(long)]
    s0: f64,
    #[arg(long, default_value_t = 1.5)]
    rho: f64,
    /// Controller gain guess: a scalar, rows like `2,0;0,2`, or JSON.
    #[arg(long = "gamma-tilde", allow_hyphen_values = true)]
    gamma_tilde: Option<String>,
    /// Plant high-gain matrix, same syntax; enables the gain checks.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Lyapunov right-hand side `Q` (r x r), same syntax.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    /// Funnel `1/(c_amp·e^{−c_rate·t} + c_inf)`.
    #[arg(long, default_value_t = 1.0)]
    c_amp: f64,
    #[arg(long, default_value_t = 2.0)]
    c_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    c_inf: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::GainSingularity { .. }
            | Error::ControllerDomain { .. }
            | Error::StepUnderflow { .. }
            | Error::StepLimit { .. } => EXIT_ABORT,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Design(args) => cmd_design(&args),
        Command::Simulate { configs, out, jobs } => cmd_simulate(&configs, out.as_deref(), jobs),
        Command::Example { which, s0, out } => cmd_example(which, &s0, &out),
        Command::Diagnose { config, out } => cmd_diagnose(&config, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse_matrix(text: &str, n: usize) -> Result<Mat, Failure> {
    let text = text.trim();
    let mat = if text.starts_with('[') {
        serde_json::from_str::<Mat>(text).map_err(|e| Failure::invalid(format!("matrix `{text}`: {e}")))?
    } else {
        let rows = text
            .split(';')
            .map(|row| {
                row.split([',', ' '])
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::invalid(format!("matrix `{text}`: {e}")))?;
        if rows.len() == 1 && rows[0].len() == 1 {
            return Ok(Mat::scalar(n, rows[0][0]));
        }
        Mat::from_rows(&rows)?
    };
    if mat.rows() != n || mat.cols() != n {
        return Err(Failure::invalid(format!("matrix `{text}` must be {n}x{n}")));
    }
    Ok(mat)
}

fn cmd_design(args: &DesignArgs) -> CmdResult {
    let funnel = FunnelParams::exp_boundary(args.c_amp, args.c_rate, args.c_inf);
    let gamma_tilde = match &args.gamma_tilde {
        Some(s) => parse_matrix(s, args.m)?,
        None => Mat::identity(args.m),
    };
    let mut req = DesignRequest::new(args.r, args.m, args.s0, args.rho, gamma_tilde, funnel);
    if let Some(g) = &args.gamma {
        req = req.with_gamma(parse_matrix(g, args.m)?);
    }
    if let Some(q) = &args.q {
        req = req.with_q(parse_matrix(q, args.r)?);
    }
    match design(&req) {
        Ok((params, report)) => {
            if args.json {
                println!("{}", output::design_json(&params, &report));
            } else {
                print!("{}", output::design_text(&params, &report));
            }
            Ok(())
        }
        Err(Error::DesignRejected(report)) => {
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("validation:\n{report}");
            }
            Err(Failure::invalid("design rejected"))
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes one run and maps an aborted run to its exit code.
fn finish(sc: &Scenario, res: &SimResult, dir: &Path) -> CmdResult {
    output::write_run(sc, res, dir).map_err(Failure::from)?;
    println!("{}", output::summary_line(res, dir));
    match &res.abort {
        Some(e) => Err(Failure {
            code: EXIT_ABORT,
            message: format!("run aborted: {e}"),
        }),
        None => Ok(()),
    }
}

/// Runs scenarios, writes each, and reports the worst exit code.
fn run_and_write(scenarios: &[(Scenario, PathBuf)], jobs: usize) -> CmdResult {
    let list: Vec<Scenario> = scenarios.iter().map(|(s, _)| s.clone()).collect();
    let results = run_batch_jobs(&list, jobs)?;
    let mut worst: Option<Failure> = None;
    for ((sc, dir), res) in scenarios.iter().zip(results) {
        let outcome = match res {
            Ok(res) => finish(sc, &res, dir),
            Err(e) => Err(Failure::from(e)),
        };
        if let Err(f) = outcome {
            eprintln!("error: {}: {}", sc.name, f.message);
            if worst.as_ref().is_none_or(|w| f.code > w.code) {
                worst = Some(f);
            }
        }
    }
    match worst {
        Some(f) => Err(Failure {
            code: f.code,
            message: "one or more runs failed".into(),
        }),
        None => Ok(()),
    }
}

fn out_dir_for(flag: Option<&Path>, file: Option<PathBuf>, config: &Path, several: bool) -> Result<PathBuf, Failure> {
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match (flag, file) {
        (Some(dir), _) if several => Ok(dir.join(stem)),
        (Some(dir), _) => Ok(dir.to_path_buf()),
        (None, Some(dir)) => Ok(dir),
        (None, None) => Err(Failure::invalid(format!(
            "{}: no output directory; pass --out or set out_dir",
            config.display()
        ))),
    }
}

fn cmd_simulate(configs: &[PathBuf], out: Option<&Path>, jobs: usize) -> CmdResult {
    if jobs == 0 {
        return Err(Failure::invalid("--jobs must be at least 1"));
    }
    let several = configs.len() > 1;
    let loaded = par_map(configs, |path| parse_scenario(path));
    let mut scenarios = Vec::with_capacity(configs.len());
    for (path, l) in configs.iter().zip(loaded) {
        let l = l.map_err(|e| match e {
            Error::DesignRejected(report) => Failure::invalid(format!("{}: design rejected\n{report}", path.display())),
            other => Failure::from(other),
        })?;
        let dir = out_dir_for(out, l.out_dir, path, several)?;
        scenarios.push((l.scenario, dir));
    }
    run_and_write(&scenarios, jobs)
}

fn cmd_example(which: Builtin, s0: &[f64], out: &Path) -> CmdResult {
    let scenarios = match which {
        Builtin::Tracking => {
            if !s0.is_empty() {
                return Err(Failure::invalid("--s0 applies to the precompensator example only"));
            }
            vec![(builtin::tracking_scenario()?, out.to_path_buf())]
        }
        Builtin::Precompensator => {
            let values = if s0.is_empty() { vec![5.0] } else { s0.to_vec() };
            values
                .iter()
                .map(|&s| {
                    let sc = builtin::precompensator_scenario(s)?;
                    let dir = if values.len() > 1 { out.join(format!("s0-{s}")) } else { out.to_path_buf() };
                    Ok((sc, dir))
                })
                .collect::<Result<Vec<_>, Error>>()?
        }
    };
    let jobs = scenarios.len().max(1);
    run_and_write(&scenarios, jobs)
}

fn cmd_diagnose(config: &Path, out: Option<&Path>) -> CmdResult {
    let loaded = parse_scenario(config)?;
    let dir = out_dir_for(out, loaded.out_dir, config, false)?;
    let sc = loaded.scenario;
    let res = funnelkit::run(&sc)?;
    let (report, coords) = diagnose(&sc, &res)?;
    output::write_diagnostics(&report, &coords, &dir)?;
    println!("{}", output::diagnostics_line(&report));
    finish(&sc, &res, &dir)
}
