//! Formulation space search over the relaxed-integrality parameter δ.
//!
//! Each replication seeds the incumbent with a greedy construction, then
//! repeatedly solves the continuous relaxation P*(δ), rounds α, looks for a
//! placement of the rounded set and halves δ, until δ is small enough or
//! the incumbent stops improving.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::formulation::{build_problem, FormulationError, PackingModel, ProblemMode};
use crate::geometry;
use crate::model::{Incumbent, Instance, PackingSolution};
use crate::nlp::{multistart, solve_feasibility, NlpConfig, SolveStatus};

/// Tolerance every accepted incumbent is verified at.
pub const ACCEPT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FssConfig {
    pub delta0: f64,
    pub gamma: f64,
    pub delta_min: f64,
    /// Consecutive non-improving iterations before a replication stops.
    pub stall_limit: usize,
    pub replications: usize,
    /// Multiplies the `10·n` second limit per solve.
    pub time_scale: f64,
    pub seed: u64,
    /// Round α without repairing exclusion, area or prefix violations.
    pub strict_rounding: bool,
    /// Ignore wall-clock limits so results depend only on the seed.
    pub deterministic: bool,
    /// Multistart size for each P* solve.
    pub relaxation_starts: usize,
    /// Multistart size for each feasibility solve.
    pub feasibility_starts: usize,
    pub nlp: NlpConfig,
}

impl Default for FssConfig {
    fn default() -> Self {
        Self {
            delta0: 0.05,
            gamma: 0.5,
            delta_min: 1e-5,
            stall_limit: 3,
            replications: 5,
            time_scale: 1.0,
            seed: 0,
            strict_rounding: false,
            deterministic: false,
            relaxation_starts: 20,
            feasibility_starts: 20,
            nlp: NlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FssError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
}

impl FssConfig {
    pub fn validate(&self) -> Result<(), FssError> {
        let bad = |msg: &str| Err(FssError::Config(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.delta_min > 0.0 && self.delta0 > self.delta_min) {
            return bad("need delta0 > delta_min > 0");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad("time scale must be positive");
        }
        if self.relaxation_starts == 0 || self.feasibility_starts == 0 {
            return bad("multistart sizes must be at least 1");
        }
        Ok(())
    }

    /// δ after `k` reductions, computed directly so it never drifts.
    pub fn delta_at(&self, k: usize) -> f64 {
        self.delta0 * self.gamma.powi(k as i32)
    }

    /// Seconds allowed per solve: `10·n·scale`, with `n` the expanded
    /// rectangle count. `None` in deterministic mode.
    pub fn solve_time_limit(&self, n: usize) -> Option<f64> {
        (!self.deterministic).then(|| 10.0 * n.max(1) as f64 * self.time_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FeasOutcome {
    /// P* gave no feasible point, so nothing was rounded.
    Skipped,
    Verified { value: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub replication: usize,
    pub iteration: usize,
    pub delta: f64,
    pub relaxation_status: SolveStatus,
    pub relaxation_feasible: bool,
    pub relaxation_objective: f64,
    /// Rounded set as expanded 1-based ids.
    pub rounded: Vec<usize>,
    pub feasibility: FeasOutcome,
    pub incumbent_value: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FssState {
    pub iteration: usize,
    pub delta: f64,
    pub incumbent: Incumbent,
    pub stall: usize,
    pub log: Vec<LogEntry>,
    /// Whether this replication strictly improved the incoming incumbent.
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Offer {
    Improved,
    Tied,
    Rejected,
}

impl FssState {
    fn new(cfg: &FssConfig, incumbent: Incumbent) -> Self {
        Self {
            iteration: 0,
            delta: cfg.delta0,
            incumbent,
            stall: 0,
            log: Vec::new(),
            improved: false,
        }
    }

    /// Accepts a strictly better solution, or an equally good one with a
    /// different set. Empty packings are never accepted.
    fn offer(&mut self, model: &PackingModel, packed: BTreeSet<usize>, sol: PackingSolution) -> Offer {
        if packed.is_empty() {
            return Offer::Rejected;
        }
        let report = match geometry::verify_solution(&model.original, &sol, ACCEPT_TOLERANCE) {
            Ok(r) if r.is_feasible() => r,
            _ => return Offer::Rejected,
        };
        let value = report.objective_value;
        let offer = if value > self.incumbent.z_best {
            Offer::Improved
        } else if value == self.incumbent.z_best && packed != self.incumbent.packed {
            Offer::Tied
        } else {
            return Offer::Rejected;
        };
        assert!(
            self.incumbent.is_empty() || packed != self.incumbent.packed,
            "accepted incumbent repeats the excluded set"
        );
        assert!(value >= self.incumbent.z_best);
        let sol = PackingSolution {
            objective_value: value,
            verified: true,
            max_violation: report.max_violation,
            ..sol
        };
        self.incumbent = Incumbent::from_solution(packed, sol);
        if offer == Offer::Improved {
            self.improved = true;
        }
        offer
    }
}

/// Expanded 1-based ids of a solution's placements.
fn packed_ids(model: &PackingModel, sol: &PackingSolution) -> BTreeSet<usize> {
    sol.placements
        .iter()
        .filter_map(|p| model.index_of(p))
        .map(|i| i + 1)
        .collect()
}

fn timed(cfg: &FssConfig, model: &PackingModel) -> NlpConfig {
    NlpConfig {
        time_limit: cfg.solve_time_limit(model.len()),
        ..cfg.nlp.clone()
    }
}

/// Greedy stand-in for the exact attempt on P: rectangles in descending
/// `V/(LW)` order (ties: larger V, then lower index) are added one at a
/// time, each addition kept only if a feasible placement is found.
pub fn solve_p_initial<R: Rng + ?Sized>(model: &PackingModel, cfg: &FssConfig, rng: &mut R) -> Incumbent {
    let m = model.len();
    let mut order: Vec<usize> = (0..m).collect();
    let density = |i: usize| {
        let r = model.rect(i);
        r.value / r.area()
    };
    order.sort_by(|&a, &b| {
        density(b)
            .total_cmp(&density(a))
            .then(model.rect(b).value.total_cmp(&model.rect(a).value))
            .then(a.cmp(&b))
    });

    let nlp = timed(cfg, model);
    let deadline = nlp
        .time_limit
        .map(|s| Instant::now() + Duration::from_secs_f64(s));
    let fixed = model.fixed_zero();
    let mut chosen = vec![false; m];
    let mut current: Option<PackingSolution> = None;

    for i in order {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
        if fixed[i] || model.partner(i).is_some_and(|p| chosen[p]) {
            continue;
        }
        chosen[i] = true;
        let warm = current.as_ref().and_then(|sol| {
            let alpha = chosen.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
            let prob = build_problem(model, ProblemMode::Feasibility { alpha }, &Incumbent::none()).ok()?;
            let mut pos: Vec<(usize, f64, f64)> = sol
                .placements
                .iter()
                .filter_map(|p| model.index_of(p).map(|k| (k, p.x, p.y)))
                .collect();
            let start = crate::nlp::random_start(&prob, rng);
            let lay = &prob.layout;
            pos.push((i, start[lay.x(i)], start[lay.y(i)]));
            Some(prob.point_from_positions(&pos))
        });
        match solve_feasibility(model, &chosen, &nlp, cfg.feasibility_starts, rng, warm.as_deref()) {
            Ok(sol) => current = Some(sol),
            Err(_) => chosen[i] = false,
        }
    }

    match current {
        Some(sol) => {
            let packed = packed_ids(model, &sol);
            Incumbent::from_solution(packed, sol)
        }
        None => Incumbent::none(),
    }
}

/// Rounds α to the nearest integer (0.5 goes up). Unless `strict`, the set
/// is then repaired: exclusion pairs keep the larger α (ties keep the
/// original orientation), incompatible pairs and area-cut overflow drop
/// the smallest α, and in square count mode only the leading run of
/// chosen squares survives.
pub fn round_alphas(model: &PackingModel, alpha: &[f64], strict: bool) -> Vec<bool> {
    let mut chosen: Vec<bool> = alpha.iter().map(|&a| a >= 0.5).collect();
    if strict {
        return chosen;
    }
    let fixed = model.fixed_zero();
    for (c, f) in chosen.iter_mut().zip(&fixed) {
        if *f {
            *c = false;
        }
    }
    // smaller α first; ties drop the later index
    let weaker = |i: usize, j: usize| {
        if alpha[j] < alpha[i] || (alpha[j] == alpha[i] && j > i) {
            j
        } else {
            i
        }
    };
    for &(i, j) in &model.exclusions {
        if chosen[i] && chosen[j] {
            chosen[weaker(i, j)] = false;
        }
    }
    for &(i, j) in model.layout().pairs() {
        if chosen[i] && chosen[j] && model.incompatible(i, j) {
            chosen[weaker(i, j)] = false;
        }
    }
    let cap = model.expanded.container_area();
    let mut area: f64 = (0..chosen.len())
        .filter(|&i| chosen[i])
        .map(|i| model.rect(i).area())
        .sum();
    while area > cap {
        let drop = (0..chosen.len())
            .filter(|&i| chosen[i])
            .reduce(weaker)
            .expect("positive area means something is chosen");
        chosen[drop] = false;
        area -= model.rect(drop).area();
    }
    if model.square_count_mode() {
        if let Some(gap) = chosen.iter().position(|&c| !c) {
            chosen[gap..].fill(false);
        }
    }
    chosen
}

/// One pass of the search starting from `incumbent_in`.
pub fn run_replication<R: Rng + ?Sized>(
    model: &PackingModel,
    cfg: &FssConfig,
    rng: &mut R,
    incumbent_in: Incumbent,
    replication: usize,
) -> Result<FssState, FssError> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut state = FssState::new(cfg, incumbent_in);
    if model.is_empty() {
        return Ok(state);
    }

    let greedy = solve_p_initial(model, cfg, rng);
    if let Some(sol) = greedy.solution {
        state.offer(model, greedy.packed, sol);
    }

    let nlp = timed(cfg, model);
    let mut warm: Option<Vec<f64>> = None;
    let mut reductions = 0;
    loop {
        state.iteration += 1;
        state.delta = cfg.delta_at(reductions);
        let prob = build_problem(model, ProblemMode::Relaxed { delta: state.delta }, &state.incumbent)?;
        let res = multistart(&prob, cfg.relaxation_starts, rng, &nlp, warm.as_deref());
        let feasible = res.is_feasible(nlp.feas_tol);

        let mut rounded = Vec::new();
        let mut outcome = FeasOutcome::Skipped;
        let mut offer = Offer::Rejected;
        if feasible {
            let chosen = round_alphas(model, prob.alphas(&res.point), cfg.strict_rounding);
            rounded = (0..chosen.len()).filter(|&i| chosen[i]).map(|i| i + 1).collect();
            match solve_feasibility(model, &chosen, &nlp, cfg.feasibility_starts, rng, Some(&res.point)) {
                Ok(sol) => {
                    outcome = FeasOutcome::Verified {
                        value: sol.objective_value,
                    };
                    let packed = packed_ids(model, &sol);
                    offer = state.offer(model, packed, sol);
                }
                Err(e) => {
                    outcome = FeasOutcome::Failed { reason: e.to_string() };
                }
            }
        }
        if offer == Offer::Improved {
            state.stall = 0;
        } else {
            state.stall += 1;
        }
        state.log.push(LogEntry {
            replication,
            iteration: state.iteration,
            delta: state.delta,
            relaxation_status: res.status,
            relaxation_feasible: feasible,
            relaxation_objective: res.objective,
            rounded,
            feasibility: outcome,
            incumbent_value: state.incumbent.z_best,
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        warm = Some(res.point);

        if state.delta <= cfg.delta_min || state.stall >= cfg.stall_limit {
            break;
        }
        reductions += 1;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub best: PackingSolution,
    /// 1-based replication that first reached the final best value; `None`
    /// when nothing was packed.
    pub replication_found: Option<usize>,
    pub total_time_s: f64,
    /// How the initial incumbent of each replication is obtained.
    pub initial_method: &'static str,
    pub log: Vec<LogEntry>,
}

/// Runs `cfg.replications` replications in sequence, each on its own rng
/// stream, carrying the incumbent forward.
pub fn run(inst: &Instance, cfg: &FssConfig) -> Result<SolverReport, FssError> {
    cfg.validate()?;
    let clock = Instant::now();
    let model = PackingModel::new(inst);
    let mut incumbent = Incumbent::none();
    let mut found = None;
    let mut log = Vec::new();
    for rep in 1..=cfg.replications {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rep as u64);
        let state = run_replication(&model, cfg, &mut rng, incumbent, rep)?;
        if state.improved {
            found = Some(rep);
        }
        incumbent = state.incumbent;
        log.extend(state.log);
    }
    let best = incumbent.solution.unwrap_or_else(PackingSolution::empty);
    if best.placements.is_empty() {
        found = None;
    }
    Ok(SolverReport {
        best,
        replication_found: found,
        total_time_s: clock.elapsed().as_secs_f64(),
        initial_method: "greedy",
        log,
    })
}
