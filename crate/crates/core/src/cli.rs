//! The `qlyap` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::control::{ControllerRegistry, FeedbackController};
use crate::definition::{parse_definition, Definition};
use crate::ensemble::{run_ensemble, supermartingale_test, EnsembleConfig, EnsembleSummary, SupermartingaleResult, MIN_SUPERMARTINGALE_TRIALS};
use crate::error::{QlyapError, Result};
use crate::sse::{simulate_trajectory, TrajectoryRecord};
use crate::structure::{check_assumptions, escape_matrix, lambda_sweep, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Caps rayon parallelism for ensemble commands.
pub const THREADS_ENV: &str = "QLYAP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "qlyap", version, about = "Lyapunov feedback for continuously measured quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Registered controller name (lyapunov, open-loop, reversed-lyapunov).
    #[arg(long)]
    controller: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the standing assumptions on target and Hamiltonians.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        run: RunOverrides,
        /// Append re_j, im_j amplitude columns.
        #[arg(long)]
        amplitudes: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a seeded ensemble and the supermartingale gate.
    Ensemble {
        file: PathBuf,
        #[command(flatten)]
        run: RunOverrides,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Sweep the shift parameters of the closed-loop zero set.
    InvariantSet {
        file: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Escape matrix over the target's orthogonal complement.
    Escape { file: PathBuf },
    /// Everything above, written into a directory.
    Report {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunOverrides,
        #[arg(long)]
        trials: Option<usize>,
    },
}

enum Outcome {
    Ok,
    AssumptionsFail,
    GateFail,
}

#[derive(Serialize)]
struct EnsembleOutput<'a> {
    controller: &'a str,
    summary: &'a EnsembleSummary,
    /// `None` below the minimum ensemble size.
    supermartingale: Option<SupermartingaleResult>,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let mut buf = Vec::new();
    let result = with_thread_cap(|| dispatch(cli.command, &mut buf));
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_VALIDATION;
    }
    match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::AssumptionsFail) => EXIT_VALIDATION,
        Ok(Outcome::GateFail) => EXIT_GATE,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    match cap.filter(|n| *n > 0) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn apply_overrides(def: &mut Definition, run: &RunOverrides, trials: Option<usize>) -> Result<()> {
    let p = &mut def.params;
    if let Some(s) = run.seed {
        p.seed = s;
    }
    if let Some(dt) = run.dt {
        p.dt = dt;
    }
    if let Some(t) = run.t_final {
        p.t_final = t;
    }
    if let Some(c) = &run.controller {
        p.controller = c.clone();
    }
    if let Some(n) = trials {
        p.trials = n;
    }
    // re-run field validation on the edited parameters
    *def = def.to_file().validate()?;
    Ok(())
}

fn build_controller(def: &Definition) -> Result<Box<dyn FeedbackController>> {
    ControllerRegistry::with_builtins().build(&def.params.controller, &def.controller_config())
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn to_file_or(out: &mut dyn Write, path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with columns `t, V, fidelity, X_mean, u_1..u_m` and optionally
/// `re_1, im_1, .., re_n, im_n`. Control cells of the last row are empty.
pub fn write_trajectory_csv(rec: &TrajectoryRecord, num_controls: usize, amplitudes: bool, w: &mut dyn Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let n = rec.states.first().map_or(0, |s| s.dim());
    let mut header: Vec<String> = ["t", "V", "fidelity", "X_mean"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=num_controls).map(|k| format!("u_{k}")));
    if amplitudes {
        for j in 1..=n {
            header.push(format!("re_{j}"));
            header.push(format!("im_{j}"));
        }
    }
    csv.write_record(&header)?;
    for i in 0..rec.times.len() {
        let mut row = vec![
            fmt_float(rec.times[i]),
            fmt_float(rec.lyapunov[i]),
            fmt_float(rec.fidelity[i]),
            fmt_float(rec.observable_mean[i]),
        ];
        match rec.controls_applied.get(i) {
            Some(u) => row.extend(u.iter().map(|x| fmt_float(*x))),
            None => row.extend(std::iter::repeat_n(String::new(), num_controls)),
        }
        if amplitudes {
            for z in rec.states[i].amplitudes().iter() {
                row.push(fmt_float(z.re));
                row.push(fmt_float(z.im));
            }
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

fn simulate(def: &Definition) -> Result<TrajectoryRecord> {
    let controller = build_controller(def)?;
    let p = &def.params;
    simulate_trajectory(&def.model, controller.as_ref(), &p.psi0, p.dt, p.t_final, p.seed)
}

fn ensemble(def: &Definition) -> Result<(EnsembleSummary, Option<SupermartingaleResult>)> {
    let controller = build_controller(def)?;
    let p = &def.params;
    let cfg = EnsembleConfig::new(p.dt, p.t_final, p.trials, p.seed)
        .with_r_list(p.r_list.clone())
        .with_record_points(p.record_points);
    let summary = run_ensemble(&def.model, controller.as_ref(), &p.psi0, &cfg)?;
    let gate = if summary.completed >= MIN_SUPERMARTINGALE_TRIALS {
        Some(supermartingale_test(&summary)?)
    } else {
        None
    };
    Ok((summary, gate))
}

fn gate_outcome(gate: &Option<SupermartingaleResult>) -> Outcome {
    match gate {
        Some(g) if !g.passes => Outcome::GateFail,
        _ => Outcome::Ok,
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<Outcome> {
    match command {
        Command::Check { file, tol } => {
            let def = parse_definition(&file)?;
            let report = check_assumptions(&def.model, tol)?;
            write_json(out, &report)?;
            Ok(if report.all_hold() {
                Outcome::Ok
            } else {
                Outcome::AssumptionsFail
            })
        }
        Command::Simulate {
            file,
            run,
            amplitudes,
            output,
        } => {
            let mut def = parse_definition(&file)?;
            apply_overrides(&mut def, &run, None)?;
            let rec = simulate(&def)?;
            let m = def.model.num_controls();
            to_file_or(out, output.as_deref(), |w| write_trajectory_csv(&rec, m, amplitudes, w))?;
            Ok(Outcome::Ok)
        }
        Command::Ensemble {
            file,
            run,
            trials,
            output,
        } => {
            let mut def = parse_definition(&file)?;
            apply_overrides(&mut def, &run, trials)?;
            let (summary, gate) = ensemble(&def)?;
            let outcome = gate_outcome(&gate);
            let doc = EnsembleOutput {
                controller: &def.params.controller,
                summary: &summary,
                supermartingale: gate,
            };
            to_file_or(out, output.as_deref(), |w| write_json(w, &doc))?;
            Ok(outcome)
        }
        Command::InvariantSet { file, grid_points, tol } => {
            let def = parse_definition(&file)?;
            write_json(out, &lambda_sweep(&def.model, grid_points, tol)?)?;
            Ok(Outcome::Ok)
        }
        Command::Escape { file } => {
            let def = parse_definition(&file)?;
            write_json(out, &escape_matrix(&def.model)?)?;
            Ok(Outcome::Ok)
        }
        Command::Report { file, out: dir, run, trials } => {
            let mut def = parse_definition(&file)?;
            apply_overrides(&mut def, &run, trials)?;
            std::fs::create_dir_all(&dir)?;
            let save = |name: &str, f: &dyn Fn(&mut dyn Write) -> Result<()>| -> Result<()> {
                let mut w = BufWriter::new(File::create(dir.join(name))?);
                f(&mut w)?;
                w.flush()?;
                Ok(())
            };
            let report = check_assumptions(&def.model, DEFAULT_TOL)?;
            save("check.json", &|w| write_json(w, &report))?;
            let rec = simulate(&def)?;
            let m = def.model.num_controls();
            save("trajectory.csv", &|w| write_trajectory_csv(&rec, m, false, w))?;
            let (summary, gate) = ensemble(&def)?;
            let doc = EnsembleOutput {
                controller: &def.params.controller,
                summary: &summary,
                supermartingale: gate.clone(),
            };
            save("ensemble.json", &|w| write_json(w, &doc))?;
            let sweep = lambda_sweep(&def.model, 50, DEFAULT_TOL)?;
            save("invariant_set.json", &|w| write_json(w, &sweep))?;
            match escape_matrix(&def.model) {
                Ok(e) => save("escape.json", &|w| write_json(w, &e))?,
                Err(e @ QlyapError::AssumptionFailed { .. }) => {
                    let msg = serde_json::json!({ "error": e.to_string() });
                    save("escape.json", &|w| write_json(w, &msg))?
                }
                Err(e) => return Err(e),
            }
            writeln!(out, "{}", dir.display())?;
            Ok(match gate_outcome(&gate) {
                Outcome::Ok if !report.all_hold() => Outcome::AssumptionsFail,
                other => other,
            })
        }
    }
}
