//! `gcond`: conditional laws of Normal vectors from JSON files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gcond::checks::{self, CheckConfig, Suite};
use gcond::conditioning::SUPPORT_REL_TOL;
use gcond::io::{
    to_rows, DecompositionJson, GaussianJson, LawJson, ModelFile, PartialOutJson, TransformFile, VectorFile,
};
use gcond::regression::{partial_out, partial_out_identity_check, reorder_roles};
use gcond::{condition, decompose, Error, Gaussian, RankTol};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gcond", version, about = "Exact conditional laws of Normal vectors given linear maps")]
struct Cli {
    /// Rank cutoff scale: eigenvalues at or below scale * n * max|l| * eps count as zero.
    /// Overrides `rank_tol_scale` in the model file. [default: 100]
    #[arg(long, global = true)]
    rank_tol_scale: Option<f64>,

    /// Seed for `sample` and `check`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output format; csv applies to `sample` only.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Law of Y given TY = obs; prints {"mean", "cov"}.
    Condition {
        model: PathBuf,
        transform: PathBuf,
        /// Observed value of TY (length = rows of T).
        #[arg(required_unless_present = "law_only")]
        obs: Option<PathBuf>,
        /// Print {"mean_base", "gain", "cov"} instead of evaluating.
        #[arg(long)]
        law_only: bool,
        /// Exit 4 unless obs - T mu lies in the range of T D T^T.
        #[arg(long)]
        strict_support: bool,
        /// Relative tolerance for --strict-support.
        #[arg(long, default_value_t = SUPPORT_REL_TOL)]
        support_tol: f64,
    },
    /// Split Y into M Y, independent of TY, and an affine function of TY.
    Decompose { model: PathBuf, transform: PathBuf },
    /// Draw rows from the model.
    Sample {
        model: PathBuf,
        #[arg(long)]
        count: usize,
    },
    /// Regression coefficient of Y on X given the remaining coordinates Z.
    PartialOut {
        model: PathBuf,
        /// Full realization w; adds the identity check to the output.
        obs: Option<PathBuf>,
        /// Overrides `x_index` in the model file. [default: 0]
        #[arg(long)]
        x_index: Option<usize>,
        /// Overrides `y_index` in the model file. [default: 1]
        #[arg(long)]
        y_index: Option<usize>,
    },
    /// Run a randomized property suite; exit 1 if any property fails.
    Check {
        #[arg(value_parser = Suite::NAMES)]
        suite: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Dim { .. } => 3,
            Error::InconsistentObservation { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(String, bool), Failure>;

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::parse(format!("{what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{what} file {}: {e}", path.display())))
}

fn load_model(path: &Path, scale: Option<f64>) -> Result<(ModelFile, Gaussian), Failure> {
    let file: ModelFile = read_json(path, "model")?;
    let g = file.to_gaussian(scale).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("model file {}: {}", path.display(), f.message);
        f
    })?;
    Ok((file, g))
}

fn json(value: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("plain data serializes");
    out.push('\n');
    out
}

fn require_json(format: Format, command: &str) -> Result<(), Failure> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(Failure::parse(format!("--format csv is only available for sample, not {command}"))),
    }
}

fn run(cli: Cli) -> Outcome {
    let scale = cli.rank_tol_scale;
    match cli.command {
        Command::Condition {
            model,
            transform,
            obs,
            law_only,
            strict_support,
            support_tol,
        } => {
            require_json(cli.format, "condition")?;
            let (_, g) = load_model(&model, scale)?;
            let t = read_json::<TransformFile>(&transform, "transform")?.to_map(g.dim())?;
            let law = condition(&g, &t)?;
            if law_only {
                return Ok((json(&LawJson::from(&law)), true));
            }
            let obs = obs.expect("clap requires obs without --law-only");
            let y = read_json::<VectorFile>(&obs, "observation")?.to_vector("observation")?;
            let post = if strict_support {
                law.evaluate_observation_checked(&y, support_tol)?
            } else {
                law.evaluate_observation(&y)?
            };
            Ok((json(&GaussianJson::from(&post)), true))
        }
        Command::Decompose { model, transform } => {
            require_json(cli.format, "decompose")?;
            let (_, g) = load_model(&model, scale)?;
            let t = read_json::<TransformFile>(&transform, "transform")?.to_map(g.dim())?;
            Ok((json(&DecompositionJson::from(&decompose(&g, &t)?)), true))
        }
        Command::Sample { model, count } => {
            let (_, g) = load_model(&model, scale)?;
            let rows = g.sample(count, cli.seed)?;
            let text = match cli.format {
                Format::Json => json(&to_rows(&rows)),
                Format::Csv => {
                    let mut out = String::new();
                    for r in rows.row_iter() {
                        let fields: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                        writeln!(out, "{}", fields.join(",")).expect("writing to a String");
                    }
                    out
                }
            };
            Ok((text, true))
        }
        Command::PartialOut {
            model,
            obs,
            x_index,
            y_index,
        } => {
            require_json(cli.format, "partial-out")?;
            let (file, g) = load_model(&model, scale)?;
            let x = x_index.or(file.x_index).unwrap_or(0);
            let y = y_index.or(file.y_index).unwrap_or(1);
            let (reordered, order) = reorder_roles(&g, x, y)?;
            let result = partial_out(&reordered)?;
            let identity = match obs {
                Some(path) => {
                    let w = read_json::<VectorFile>(&path, "realization")?.to_vector("realization")?;
                    if w.len() != g.dim() {
                        return Err(Error::Dim {
                            context: "realization length vs model dimension",
                            expected: g.dim(),
                            found: w.len(),
                        }
                        .into());
                    }
                    let w = DVector::from_iterator(w.len(), order.iter().map(|&i| w[i]));
                    Some(partial_out_identity_check(&reordered, &w)?)
                }
                None => None,
            };
            let out = PartialOutJson {
                x_index: x,
                y_index: y,
                order,
                result,
                identity,
            };
            Ok((json(&out), true))
        }
        Command::Check { suite, trials } => {
            require_json(cli.format, "check")?;
            let suite: Suite = suite.parse()?;
            let rank_tol = match scale {
                Some(s) => RankTol::new(s)?,
                None => RankTol::default(),
            };
            let report = checks::run(
                suite,
                CheckConfig {
                    trials,
                    seed: cli.seed,
                    rank_tol,
                },
            );
            for p in &report.properties {
                eprintln!(
                    "{} {}.{}: {} cases, worst {:.3e} (allowed {:.3e})",
                    if p.passed { "PASS" } else { "FAIL" },
                    p.suite,
                    p.name,
                    p.cases,
                    p.worst_residual,
                    p.worst_allowed
                );
            }
            Ok((json(&report), report.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((text, passed)) => {
            print!("{text}");
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
