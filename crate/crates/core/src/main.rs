//! Command-line front end for the generalized lasso toolkit.
//!
//! Exit codes: `0` success; `1` the computation succeeded and reported a
//! finding (non-unique solution, position violation, nonexistent minimizer);
//! `2` usage or input error; `3` numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use genlasso::certify::{
    certify_uniqueness, dgp_check_exhaustive, CertifyOptions, DgpOptions, UniquenessVerdict,
};
use genlasso::cli;
use genlasso::experiments::{
    local_stability_probe, monte_carlo_uniqueness, subspace_invariance_probe, InvarianceOptions,
    StabilityOptions, TrialConfig,
};
use genlasso::linalg::NumericTolerances;
use genlasso::solver_glm::{
    existence_check, solve_glm, ExistenceVerdict, GlmProblem, GlmSolveOptions, LossFamily,
};
use genlasso::solver_sq::{
    center_problem, scale_problem, solve, standardize_problem, ProblemInstance, SolveOptions,
};
use genlasso::{Error, Result};

#[derive(Parser)]
#[command(
    name = "genlasso",
    version,
    about = "Generalized lasso solving, uniqueness certification, and diagnostics"
)]
struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that produces a JSON report.
#[derive(Args)]
struct CommonArgs {
    /// Numeric tolerances as `rank_tol,residual_tol,sign_tol`.
    #[arg(long, value_name = "R,R,S", global = false)]
    tolerances: Option<String>,
    /// Seed for all randomized components (deterministic when omitted).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn tols(&self) -> Result<NumericTolerances> {
        match &self.tolerances {
            Some(t) => cli::parse_tolerances(t),
            None => Ok(NumericTolerances::default()),
        }
    }
}

/// Instance inputs shared by the solve/certify-style subcommands.
#[derive(Args)]
struct InstanceArgs {
    /// Design matrix file ("rows cols" header, then one line per row).
    #[arg(long = "X", value_name = "FILE")]
    x: PathBuf,
    /// Response vector file (a one-row or one-column matrix).
    #[arg(long = "y", value_name = "FILE")]
    y: PathBuf,
    /// Penalty matrix: a file path, or a named builder among
    /// `identity`, `diff:k`, `graph`, `gtf:k`, `ktf:N,d,k`.
    #[arg(long = "D", value_name = "FILE|NAME")]
    d: String,
    /// Penalty weight; must be nonnegative.
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Graph description for the `graph`/`gtf` builders:
    /// JSON `{"nodes": n, "edges": [[i, j], ...]}`.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
}

impl InstanceArgs {
    fn load(&self) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidInput(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        let x = cli::read_matrix(&self.x)?;
        let y = cli::read_vector(&self.y)?;
        let graph = self.graph.as_deref().map(cli::read_graph_spec).transpose()?;
        let d = cli::resolve_penalty(&self.d, x.ncols(), graph.as_ref())?;
        Ok((x, y, d))
    }
}

fn parse_loss(name: &str) -> Result<LossFamily> {
    match name {
        "squared" => Ok(LossFamily::Squared),
        "logistic" => Ok(LossFamily::Logistic),
        "poisson" => Ok(LossFamily::Poisson),
        other => Err(Error::InvalidInput(format!(
            "unknown loss `{other}` (expected squared, logistic, or poisson)"
        ))),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the quadratic problem and report the primal/dual pair.
    Solve {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Center the design (columns to mean zero) before solving.
        #[arg(long, group = "preprocess")]
        center: bool,
        /// Scale the design (columns to unit norm) before solving.
        #[arg(long, group = "preprocess")]
        scale: bool,
        /// Center, then scale the centered columns, before solving.
        #[arg(long, group = "preprocess")]
        standardize: bool,
        /// Cap on solver iterations.
        #[arg(long, value_name = "N")]
        max_iterations: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve the logistic or Poisson problem.
    SolveGlm {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Loss family: logistic or poisson (squared is also accepted).
        #[arg(long)]
        loss: String,
        /// Declare divergence when the fitted predictor's max-norm exceeds
        /// this bound.
        #[arg(long = "max-fit-norm", value_name = "F")]
        max_fit_norm: Option<f64>,
        /// Cap on solver iterations.
        #[arg(long, value_name = "N")]
        max_iterations: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Certify uniqueness of the minimizer (exit 1 when non-unique).
    Certify {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Loss family (default squared).
        #[arg(long, default_value = "squared")]
        loss: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check the design for span/affine degeneracies relative to the
    /// penalty (exit 1 when a violation is found).
    DgpCheck {
        /// Design matrix file.
        #[arg(long = "X", value_name = "FILE")]
        x: PathBuf,
        /// Penalty matrix: file path or named builder.
        #[arg(long = "D", value_name = "FILE|NAME")]
        d: String,
        /// Graph description for the `graph`/`gtf` builders.
        #[arg(long, value_name = "FILE")]
        graph: Option<PathBuf>,
        /// Membership-test budget before switching to seeded subsampling.
        #[arg(long, value_name = "N", default_value_t = 2_000_000)]
        cap: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Decide whether the criterion attains its minimum (exit 1 when it
    /// does not).
    ExistCheck {
        /// Loss family: squared, logistic, or poisson.
        #[arg(long)]
        loss: String,
        /// Design matrix file.
        #[arg(long = "X", value_name = "FILE")]
        x: PathBuf,
        /// Response vector file.
        #[arg(long = "y", value_name = "FILE")]
        y: PathBuf,
        /// Penalty matrix (required when lambda > 0).
        #[arg(long = "D", value_name = "FILE|NAME")]
        d: Option<String>,
        /// Penalty weight; must be nonnegative.
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Graph description for the `graph`/`gtf` builders.
        #[arg(long, value_name = "FILE")]
        graph: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a Monte Carlo uniqueness study from a JSON trial config
    /// (exit 1 when any trial is non-unique).
    McUnique {
        /// Trial configuration JSON (n, p, penalty, loss, lambda, trials,
        /// seed, perturbation_eps, ensemble).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Write the JSON summary here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Probe how stable the boundary/active pattern is under response
    /// perturbations.
    Stability {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Loss family (default squared).
        #[arg(long, default_value = "squared")]
        loss: String,
        /// Initial perturbation radius.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Number of random perturbation directions.
        #[arg(long, default_value_t = 20)]
        directions: usize,
        /// Geometric halvings of eps attempted before giving up.
        #[arg(long, default_value_t = 10, value_name = "N")]
        max_shrinks: usize,
        /// Previously saved solve result JSON; its boundary/active sets are
        /// cross-checked against the fresh baseline solve.
        #[arg(long, value_name = "FILE")]
        result: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Probe invariance of X·null(D_-B) across harvested boundary sets.
    Invariance {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Loss family (default squared).
        #[arg(long, default_value = "squared")]
        loss: String,
        /// Jittered re-solves and dual-vertex samples, each.
        #[arg(long, default_value_t = 12)]
        runs: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Solve {
            inst,
            center,
            scale,
            standardize,
            max_iterations,
            common,
        } => {
            let (x, y, d) = inst.load()?;
            let mut problem = ProblemInstance::new(y, x, d, inst.lambda)?;
            if center {
                problem = center_problem(&problem)?;
            } else if scale {
                problem = scale_problem(&problem)?;
            } else if standardize {
                problem = standardize_problem(&problem)?;
            }
            let mut opts = SolveOptions {
                tols: common.tols()?,
                init_seed: common.seed,
                ..SolveOptions::default()
            };
            if let Some(mi) = max_iterations {
                opts.max_iterations = mi;
            }
            let res = solve(&problem, &opts)?;
            cli::emit_json(
                &cli::solve_result_value(&res, inst.lambda),
                common.out.as_deref(),
            )?;
            Ok(0)
        }
        Command::SolveGlm {
            inst,
            loss,
            max_fit_norm,
            max_iterations,
            common,
        } => {
            let family = parse_loss(&loss)?;
            let (x, y, d) = inst.load()?;
            let problem = GlmProblem::new(y, x, d, inst.lambda, family)?;
            let mut opts = GlmSolveOptions {
                tols: common.tols()?,
                init_seed: common.seed,
                ..GlmSolveOptions::default()
            };
            if let Some(b) = max_fit_norm {
                opts.divergence_bound = b;
            }
            if let Some(mi) = max_iterations {
                opts.max_iterations = mi;
            }
            let res = solve_glm(&problem, &opts)?;
            cli::emit_json(
                &cli::glm_result_value(&res, family.name(), inst.lambda),
                common.out.as_deref(),
            )?;
            Ok(0)
        }
        Command::Certify { inst, loss, common } => {
            let family = parse_loss(&loss)?;
            let (x, y, d) = inst.load()?;
            let problem = GlmProblem::new(y, x, d, inst.lambda, family)?;
            let opts = CertifyOptions {
                tols: common.tols()?,
                solve_seed: common.seed,
            };
            let report = certify_uniqueness(&problem, &opts)?;
            let verdict = report.certificate.verdict;
            cli::emit_json(&cli::certify_report_value(&report), common.out.as_deref())?;
            Ok(if verdict == UniquenessVerdict::NonUnique {
                1
            } else {
                0
            })
        }
        Command::DgpCheck {
            x,
            d,
            graph,
            cap,
            common,
        } => {
            let x = cli::read_matrix(&x)?;
            let graph = graph.as_deref().map(cli::read_graph_spec).transpose()?;
            let d = cli::resolve_penalty(&d, x.ncols(), graph.as_ref())?;
            let opts = DgpOptions {
                tols: common.tols()?,
                cap,
                seed: common.seed.unwrap_or(0),
            };
            let report = dgp_check_exhaustive(&x, &d, &opts)?;
            let in_position = report.in_position;
            cli::emit_json(&cli::dgp_report_value(&report), common.out.as_deref())?;
            Ok(if in_position { 0 } else { 1 })
        }
        Command::ExistCheck {
            loss,
            x,
            y,
            d,
            lambda,
            graph,
            common,
        } => {
            if lambda < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "lambda must be nonnegative, got {lambda}"
                )));
            }
            let family = parse_loss(&loss)?;
            let x = cli::read_matrix(&x)?;
            let y = cli::read_vector(&y)?;
            let graph = graph.as_deref().map(cli::read_graph_spec).transpose()?;
            let d = match &d {
                Some(spec) => Some(cli::resolve_penalty(spec, x.ncols(), graph.as_ref())?),
                None => None,
            };
            if lambda > 0.0 && d.is_none() {
                return Err(Error::InvalidInput(
                    "existence check with lambda > 0 needs --D".into(),
                ));
            }
            let report = existence_check(&x, &y, d.as_ref(), lambda, family)?;
            let verdict = report.verdict.clone();
            cli::emit_json(
                &cli::existence_report_value(&report),
                common.out.as_deref(),
            )?;
            Ok(if verdict == ExistenceVerdict::Violated {
                1
            } else {
                0
            })
        }
        Command::McUnique { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Parse(format!("cannot read {}: {e}", config.display())))?;
            let cfg: TrialConfig = serde_json::from_str(&text)?;
            let summary = monte_carlo_uniqueness(&cfg)?;
            let found = summary.model.non_unique > 0
                || summary.surrogate.is_some_and(|s| s.non_unique > 0);
            let value = serde_json::to_value(&summary)?;
            cli::emit_json(&value, out.as_deref())?;
            Ok(if found { 1 } else { 0 })
        }
        Command::Stability {
            inst,
            loss,
            eps,
            directions,
            max_shrinks,
            result,
            common,
        } => {
            let family = parse_loss(&loss)?;
            let (x, y, d) = inst.load()?;
            let problem = GlmProblem::new(y, x, d, inst.lambda, family)?;
            let tols = common.tols()?;
            let opts = StabilityOptions {
                eps,
                directions,
                seed: common.seed.unwrap_or(0),
                tols,
                max_shrinks,
            };
            let report = local_stability_probe(&problem, &opts)?;
            let mut value = serde_json::to_value(&report)?;
            if let Some(path) = &result {
                let note = cross_check_result_file(path, &problem, &tols)?;
                if let Some(notes) = value
                    .as_object_mut()
                    .and_then(|o| o.get_mut("notes"))
                    .and_then(Value::as_array_mut)
                {
                    notes.push(Value::String(note));
                }
            }
            cli::emit_json(&value, common.out.as_deref())?;
            Ok(0)
        }
        Command::Invariance {
            inst,
            loss,
            runs,
            common,
        } => {
            let family = parse_loss(&loss)?;
            let (x, y, d) = inst.load()?;
            let problem = GlmProblem::new(y, x, d, inst.lambda, family)?;
            let opts = InvarianceOptions {
                runs,
                seed: common.seed.unwrap_or(0),
                tols: common.tols()?,
            };
            let report = subspace_invariance_probe(&problem, &opts)?;
            let value = serde_json::to_value(&report)?;
            cli::emit_json(&value, common.out.as_deref())?;
            Ok(0)
        }
    }
}

/// Compares the boundary/active sets recorded in a saved solve-result JSON
/// against a fresh solve of the same instance.
fn cross_check_result_file(
    path: &std::path::Path,
    problem: &GlmProblem,
    tols: &NumericTolerances,
) -> Result<String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let saved: Value = serde_json::from_str(&text)?;
    let read_set = |key: &str| -> Option<Vec<usize>> {
        saved.get(key)?.as_array().map(|a| {
            a.iter()
                .filter_map(|v| v.as_u64().map(|u| u as usize))
                .collect()
        })
    };
    let (saved_b, saved_a) = match (read_set("boundary_set"), read_set("active_set")) {
        (Some(b), Some(a)) => (b, a),
        _ => {
            return Ok(format!(
                "baseline cross-check skipped: {} lacks boundary_set/active_set",
                path.display()
            ))
        }
    };
    let (fresh_b, fresh_a) = if problem.loss == LossFamily::Squared {
        let sq = ProblemInstance::new(
            problem.y.clone(),
            problem.x.clone(),
            problem.d.clone(),
            problem.lambda,
        )?;
        let res = solve(
            &sq,
            &SolveOptions {
                tols: *tols,
                ..SolveOptions::default()
            },
        )?;
        (res.boundary_set, res.active_set)
    } else {
        let res = solve_glm(
            problem,
            &GlmSolveOptions {
                tols: *tols,
                ..GlmSolveOptions::default()
            },
        )?;
        (res.boundary_set, res.active_set)
    };
    Ok(if saved_b == fresh_b && saved_a == fresh_a {
        "baseline cross-check: saved boundary/active sets match the fresh solve".to_string()
    } else {
        format!(
            "baseline cross-check: saved sets (B = {saved_b:?}, A = {saved_a:?}) differ from \
             the fresh solve (B = {fresh_b:?}, A = {fresh_a:?})"
        )
    })
}

fn main() -> ExitCode {
    let args = CliArgs::parse();
    match run(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
