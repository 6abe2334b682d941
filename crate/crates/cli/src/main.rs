//! Command-line driver: run scenarios, verify and plot their trajectories,
//! and sweep a scenario parameter.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

use geoplast::error::{Error, SolverError};
use geoplast::evolution::run_evolution;
use geoplast::io::{emit_plots, parse_scenario, read_trajectory, write_scenario, TrajectoryWriter};
use geoplast::scenario::{Problem, Scenario, ScenarioFile};
use geoplast::verify::{verify_trajectory, VerifyOptions};

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "geoplast", version, about = "Quasistatic Drucker-Prager plasticity with gradient damage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Override the number of time steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the solver seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify a trajectory written by `run`.
    Verify {
        dir: PathBuf,
        /// Competitors sampled per snapshot in the stability check.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario once per value of a parameter.
    Sweep {
        scenario: PathBuf,
        /// Dotted path into the scenario document, e.g. `material.k`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; each is parsed as JSON.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write SVG plots of a trajectory written by `run`.
    Plot { dir: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Solver(_) => EXIT_SOLVER,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("GEOPLAST_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Failure {
        code: EXIT_VALIDATION,
        message: format!("GEOPLAST_THREADS: expected a positive integer, got '{v}'"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            code: EXIT_VALIDATION,
            message: format!("GEOPLAST_THREADS: {e}"),
        })
}

fn run_scenario(scenario: Scenario, out: &Path) -> CliResult<()> {
    let problem = Problem::new(scenario).map_err(Error::from)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_scenario(&problem.scenario, out.join("scenario.json"))?;
    let mut writer = TrajectoryWriter::create(out)?;
    let mut write_error = None;
    let result = run_evolution(&problem, |s| {
        writer.push(s).map_err(|e| {
            write_error = Some(e);
            SolverError::NonFinite {
                context: "trajectory output",
            }
        })
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    match result {
        Ok(traj) => {
            writer.finish(&traj)?;
            Ok(())
        }
        Err(failure) => {
            writer.finish(&failure.partial)?;
            Err(Error::Solver(failure.error).into())
        }
    }
}

fn run(scenario: &Path, out: &Path, steps: Option<usize>, seed: Option<u64>) -> CliResult<()> {
    let mut sc = parse_scenario(scenario)?;
    if let Some(n) = steps {
        if n == 0 {
            return Err(Failure {
                code: EXIT_VALIDATION,
                message: "--steps: must be positive".into(),
            });
        }
        sc.time_steps = n;
    }
    if let Some(s) = seed {
        sc.solver.seed = s;
    }
    run_scenario(sc, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn load_run(dir: &Path) -> CliResult<(Problem, geoplast::evolution::Trajectory)> {
    let sc = parse_scenario(dir.join("scenario.json"))?;
    let problem = Problem::new(sc).map_err(Error::from)?;
    let traj = read_trajectory(dir)?;
    Ok((problem, traj))
}

fn verify(dir: &Path, samples: usize, seed: u64) -> CliResult<()> {
    let (problem, traj) = load_run(dir)?;
    let report = verify_trajectory(&problem, &traj, VerifyOptions { n_samples: samples, seed });
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|source| Error::Json {
        path: json_path.clone(),
        source,
    })?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    let text = report.to_text();
    let txt_path = dir.join("report.txt");
    std::fs::write(&txt_path, &text).map_err(|e| Error::io(&txt_path, e))?;
    print!("{text}");
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        })
    }
}

fn plot(dir: &Path) -> CliResult<()> {
    let (problem, traj) = load_run(dir)?;
    for f in emit_plots(&problem, &traj, dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Replaces the value at a dotted path, creating missing objects on the way.
fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("--param {path}: '{}' is not an object", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(format!("--param: empty path '{path}'"))
}

fn sweep(scenario: &Path, param: &str, values: &[String], out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(scenario).map_err(|e| Error::io(scenario, e))?;
    let base: Value = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: scenario.to_path_buf(),
        source,
    })?;
    let mut jobs = Vec::new();
    for raw in values {
        let raw = raw.trim();
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = base.clone();
        set_path(&mut doc, param, value).map_err(|message| Failure {
            code: EXIT_VALIDATION,
            message,
        })?;
        let file: ScenarioFile = serde_json::from_value(doc).map_err(|e| Failure {
            code: EXIT_VALIDATION,
            message: format!("{param}={raw}: {e}"),
        })?;
        let sc = file.validate().map_err(|e| Failure {
            code: EXIT_VALIDATION,
            message: format!("{param}={raw}: {e}"),
        })?;
        jobs.push((out.join(format!("{param}={raw}")), sc));
    }
    let results: Vec<(PathBuf, CliResult<()>)> = jobs
        .into_par_iter()
        .map(|(dir, sc)| {
            let r = run_scenario(sc, &dir);
            (dir, r)
        })
        .collect();
    let mut worst: Option<Failure> = None;
    for (dir, r) in results {
        match r {
            Ok(()) => println!("wrote {}", dir.display()),
            Err(f) => {
                eprintln!("{}: {}", dir.display(), f.message);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(f) => Err(Failure {
            code: f.code,
            message: "some sweep runs failed".into(),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Run {
            scenario,
            out,
            steps,
            seed,
        } => run(scenario, out, *steps, *seed),
        Command::Verify { dir, samples, seed } => verify(dir, *samples, *seed),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
        } => sweep(scenario, param, values, out),
        Command::Plot { dir } => plot(dir),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_paths_replace_and_create() {
        let mut doc = serde_json::json!({"material": {"k": 1.0}});
        set_path(&mut doc, "material.k", serde_json::json!(2.5)).unwrap();
        set_path(&mut doc, "solver.seed", serde_json::json!(7)).unwrap();
        assert_eq!(doc["material"]["k"], 2.5);
        assert_eq!(doc["solver"]["seed"], 7);
        assert!(set_path(&mut doc, "material.k.x", serde_json::json!(1)).is_err());
    }
}
