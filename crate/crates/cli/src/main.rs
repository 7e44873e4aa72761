use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use circpack::fss::{self, FssConfig};
use circpack::generator::{self, Shape};
use circpack::io::{write_atomic, InstanceFile, SolutionFile};
use circpack::nlp::NlpConfig;
use circpack::oracle::{self, OracleConfig};
use circpack::{geometry, normalize_instance, svg, Instance, ModeFlags, ObjectiveMode};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_STRUCTURAL: u8 = 2;
const TIME_SCALE_ENV: &str = "CIRCPACK_TIME_SCALE";

#[derive(Parser)]
#[command(name = "circpack", version, about = "Pack rectangles or squares into a circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance.
    Generate(GenerateArgs),
    /// Run the heuristic on an instance.
    Solve(SolveArgs),
    /// Check a solution file against an instance.
    Verify(VerifyArgs),
    /// Enumerate subsets of a small instance as a reference.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Count,
    Area,
    Value,
}

impl From<Objective> for ObjectiveMode {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Count => ObjectiveMode::Count,
            Objective::Area => ObjectiveMode::Area,
            Objective::Value => ObjectiveMode::Value,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Rect,
    Square,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    n: usize,
    /// Circle area as a fraction of the total rectangle area.
    #[arg(short, long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, value_enum, default_value = "rect")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long, value_enum, default_value = "count")]
    objective: Objective,
    /// Allow 90 degree rotation.
    #[arg(long, conflicts_with = "squares")]
    rotate: bool,
    /// Treat the instance as squares (count objective gets ordering cuts).
    #[arg(long)]
    squares: bool,
}

impl ModeArgs {
    fn flags(&self) -> ModeFlags {
        ModeFlags::new(self.objective.into())
            .rotate(self.rotate)
            .squares(self.squares)
    }
}

#[derive(Args)]
struct NlpArgs {
    /// Constraint violation accepted as feasible.
    #[arg(long, default_value_t = NlpConfig::default().feas_tol)]
    feas_tol: f64,
    /// Projected-gradient tolerance of the inner solver.
    #[arg(long, default_value_t = NlpConfig::default().optimality_tol)]
    optimality_tol: f64,
    #[arg(long, default_value_t = NlpConfig::default().initial_penalty)]
    initial_penalty: f64,
    #[arg(long, default_value_t = NlpConfig::default().penalty_growth)]
    penalty_growth: f64,
    #[arg(long, default_value_t = NlpConfig::default().max_penalty)]
    max_penalty: f64,
    #[arg(long, default_value_t = NlpConfig::default().max_outer)]
    max_outer: usize,
    #[arg(long, default_value_t = NlpConfig::default().max_inner)]
    max_inner: usize,
    #[arg(long, default_value_t = NlpConfig::default().memory)]
    lbfgs_memory: usize,
}

impl NlpArgs {
    fn config(&self) -> NlpConfig {
        NlpConfig {
            feas_tol: self.feas_tol,
            optimality_tol: self.optimality_tol,
            initial_penalty: self.initial_penalty,
            penalty_growth: self.penalty_growth,
            max_penalty: self.max_penalty,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            memory: self.lbfgs_memory,
            time_limit: None,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long, default_value_t = FssConfig::default().replications)]
    replications: usize,
    /// Multiplies the 10·n second limit per solve. Overridden by
    /// CIRCPACK_TIME_SCALE.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Also write the solution JSON here (it always goes to stdout).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Round α without structural repair.
    #[arg(long = "paper-strict-rounding")]
    strict_rounding: bool,
    /// Ignore wall-clock limits and omit timings, for reproducible output.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = FssConfig::default().relaxation_starts)]
    relaxation_starts: usize,
    #[arg(long, default_value_t = FssConfig::default().feasibility_starts)]
    feasibility_starts: usize,
    #[command(flatten)]
    nlp: NlpArgs,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
    #[arg(long, default_value_t = geometry::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Defaults to the mode recorded in the solution file.
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    #[arg(long, conflicts_with = "squares")]
    rotate: bool,
    #[arg(long)]
    squares: bool,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long, default_value_t = oracle::DEFAULT_MAX_N)]
    max_n: usize,
    #[arg(long, default_value_t = oracle::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure that maps to a non-zero exit code.
struct Failure {
    code: u8,
    msg: String,
}

fn structural(msg: impl ToString) -> Failure {
    Failure {
        code: EXIT_STRUCTURAL,
        msg: msg.to_string(),
    }
}

fn load(path: &Path, flags: ModeFlags) -> Result<Instance, Failure> {
    let file = InstanceFile::read(path).map_err(|e| structural(format!("{}: {e}", path.display())))?;
    normalize_instance(&file.rects, file.radius, flags).map_err(|e| structural(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    write_atomic(path, contents).map_err(|e| structural(format!("{}: {e}", path.display())))
}

fn generate(a: GenerateArgs) -> Result<u8, Failure> {
    if a.n == 0 || !(a.fraction > 0.0) {
        return Err(structural("need n >= 1 and a positive fraction"));
    }
    let shape = match a.shape {
        ShapeArg::Rect => Shape::Rect,
        ShapeArg::Square => Shape::Square,
    };
    let text = generator::generate(a.n, a.fraction, shape, a.seed).render();
    match a.output {
        Some(p) => write(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn solve(a: SolveArgs) -> Result<u8, Failure> {
    let inst = load(&a.instance, a.mode.flags())?;
    let time_scale = match std::env::var(TIME_SCALE_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| structural(format!("{TIME_SCALE_ENV}={v} is not a number")))?,
        Err(_) => a.time_scale,
    };
    let cfg = FssConfig {
        replications: a.replications,
        time_scale,
        seed: a.seed,
        strict_rounding: a.strict_rounding,
        deterministic: a.deterministic,
        relaxation_starts: a.relaxation_starts,
        feasibility_starts: a.feasibility_starts,
        nlp: a.nlp.config(),
        ..FssConfig::default()
    };
    let report = fss::run(&inst, &cfg).map_err(structural)?;
    let out = SolutionFile::from_report(&inst, &cfg, &report);
    let text = out.to_json();
    if let Some(p) = &a.json {
        write(p, &text)?;
    }
    if let Some(p) = &a.svg {
        write(p, &svg::render(&inst, &report.best))?;
    }
    print!("{text}");
    Ok(if report.best.verified { 0 } else { EXIT_INFEASIBLE })
}

fn verify(a: VerifyArgs) -> Result<u8, Failure> {
    let sol = SolutionFile::read(&a.solution).map_err(|e| structural(format!("{}: {e}", a.solution.display())))?;
    let recorded = |key: &str| sol.solver_config.get(key).and_then(|v| v.as_bool()).unwrap_or(false);
    let flags = ModeFlags::new(a.objective.map_or(sol.objective_mode, Into::into))
        .rotate(a.rotate || recorded("rotate"))
        .squares(a.squares || recorded("squares"));
    let inst = load(&a.instance, flags)?;
    let report = geometry::verify_placements(&inst, &sol.placements, a.tol).map_err(structural)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes"));
    if report.is_feasible() {
        Ok(0)
    } else {
        eprintln!("infeasible: {} violation(s) above {}", report.violation_count(), a.tol);
        Ok(EXIT_INFEASIBLE)
    }
}

fn run_oracle(a: OracleArgs) -> Result<u8, Failure> {
    let inst = load(&a.instance, a.mode.flags())?;
    let cfg = OracleConfig {
        max_n: a.max_n,
        restarts: a.restarts,
        seed: a.seed,
        ..OracleConfig::default()
    };
    let report = oracle::oracle(&inst, &cfg).map_err(structural)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes"));
    eprintln!("status {}: subsets not placed were not found, not proven infeasible", report.status);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
