//! Local solver for the problems built by [`crate::formulation`].
//!
//! An augmented-Lagrangian outer loop handles the inequality constraints;
//! each subproblem is minimized over the variable box by [`lbfgs`]. A
//! multistart wrapper and the fixed-subset feasibility solve sit on top.

pub mod lbfgs;

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::formulation::{build_problem, FormulationError, PackingModel, ProblemFunctions, ProblemMode};
use crate::geometry;
use crate::model::{Incumbent, PackingSolution};

use lbfgs::{minimize_box, BoxOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpConfig {
    /// Largest constraint violation accepted as feasible.
    pub feas_tol: f64,
    /// Projected-gradient tolerance for each subproblem.
    pub optimality_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
    /// Wall-clock limit in seconds for one solve (or one multistart).
    pub time_limit: Option<f64>,
}

impl Default for NlpConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            optimality_tol: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            max_outer: 50,
            max_inner: 400,
            memory: 8,
            time_limit: None,
        }
    }
}

impl NlpConfig {
    fn deadline_from(&self, now: Instant) -> Option<Instant> {
        self.time_limit.map(|s| now + Duration::from_secs_f64(s.max(0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    TimeLimit,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub point: Vec<f64>,
    /// Objective in the maximization sense.
    pub objective: f64,
    pub max_constraint_violation: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub status: SolveStatus,
    /// Violation at the end of each outer iteration.
    pub violation_history: Vec<f64>,
    /// Index of the start this came from (multistart only).
    pub start_index: usize,
}

impl LocalResult {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_constraint_violation <= tol
    }
}

/// Neumaier-compensated running sum. The penalty terms can be large and
/// nearly cancel between nearby points, which plain summation blurs.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `-f(v) + Σ_k (ρ/2)·max(0, λ_k/ρ - g_k)² - λ_k²/(2ρ)`, the function each
/// subproblem minimizes. Writes its gradient into `grad`.
pub fn augmented_lagrangian(
    prob: &ProblemFunctions,
    v: &[f64],
    lambda: &[f64],
    rho: f64,
    grad: &mut [f64],
) -> f64 {
    prob.objective_gradient(v, grad);
    for g in grad.iter_mut() {
        *g = -*g;
    }
    let mut value = CompensatedSum::default();
    value.add(-prob.objective(v));
    for (k, &lam) in lambda.iter().enumerate() {
        let g = prob.constraint_value(k, v);
        let shifted = lam - rho * g;
        if shifted > 0.0 {
            value.add((shifted * shifted - lam * lam) / (2.0 * rho));
            prob.add_constraint_gradient(k, v, -shifted, grad);
        } else {
            value.add(-lam * lam / (2.0 * rho));
        }
    }
    value.value()
}

/// Runs the augmented-Lagrangian method from `start`.
pub fn solve_local(prob: &ProblemFunctions, start: &[f64], cfg: &NlpConfig) -> LocalResult {
    let now = Instant::now();
    solve_local_until(prob, start, cfg, cfg.deadline_from(now))
}

fn solve_local_until(
    prob: &ProblemFunctions,
    start: &[f64],
    cfg: &NlpConfig,
    deadline: Option<Instant>,
) -> LocalResult {
    let clock = Instant::now();
    let m = prob.constraints.len();
    let mut x = start.to_vec();
    prob.project(&mut x);
    let mut lambda = vec![0.0; m];
    let mut rho = cfg.initial_penalty;
    let opts = BoxOptions {
        max_iter: cfg.max_inner,
        pg_tol: cfg.optimality_tol,
        memory: cfg.memory,
    };

    let mut best_x = x.clone();
    let mut best_f = prob.objective(&x);
    let mut best_viol = prob.max_violation(&x);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut status = SolveStatus::Stalled;
    let mut prev_viol = f64::INFINITY;
    let mut flat_rounds = 0;

    let better = |f: f64, viol: f64, best_f: f64, best_viol: f64| {
        let (feas, best_feas) = (viol <= cfg.feas_tol, best_viol <= cfg.feas_tol);
        match (feas, best_feas) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => f > best_f,
            (false, false) => viol < best_viol,
        }
    };

    if prob.is_feasibility() && best_viol <= cfg.feas_tol {
        return LocalResult {
            point: x,
            objective: best_f,
            max_constraint_violation: best_viol,
            iterations: 0,
            wall_time: clock.elapsed().as_secs_f64(),
            status: SolveStatus::Converged,
            violation_history: vec![best_viol],
            start_index: 0,
        };
    }

    for _outer in 0..cfg.max_outer {
        let inner = minimize_box(
            |v, g| augmented_lagrangian(prob, v, &lambda, rho, g),
            &x,
            &prob.lower,
            &prob.upper,
            &opts,
            deadline,
        );
        iterations += inner.iterations;
        if inner.non_finite || !inner.x.iter().all(|v| v.is_finite()) {
            status = SolveStatus::Stalled;
            break;
        }
        x = inner.x;
        let viol = prob.max_violation(&x);
        let f = prob.objective(&x);
        history.push(viol);
        if better(f, viol, best_f, best_viol) {
            best_x.clone_from(&x);
            best_f = f;
            best_viol = viol;
        }

        let feasible = viol <= cfg.feas_tol;
        if feasible && prob.is_feasibility() {
            status = SolveStatus::Converged;
            break;
        }

        // first-order multiplier update
        let mut max_change = 0.0f64;
        let mut max_lambda = 0.0f64;
        for (k, lam) in lambda.iter_mut().enumerate() {
            let g = prob.constraint_value(k, &x);
            let next = (*lam - rho * g).max(0.0);
            max_change = max_change.max((next - *lam).abs());
            *lam = next;
            max_lambda = max_lambda.max(next);
        }

        if feasible && inner.converged && max_change <= cfg.optimality_tol.sqrt() * (1.0 + max_lambda) {
            status = SolveStatus::Converged;
            break;
        }
        if inner.timed_out || deadline.is_some_and(|t| Instant::now() >= t) {
            status = SolveStatus::TimeLimit;
            break;
        }

        if !feasible && viol > 0.25 * prev_viol {
            if rho >= cfg.max_penalty {
                flat_rounds += 1;
            }
            rho = (rho * cfg.penalty_growth).min(cfg.max_penalty);
        }
        if viol < 0.99 * prev_viol {
            flat_rounds = 0;
        } else if !feasible {
            flat_rounds += 1;
        }
        if flat_rounds >= 6 {
            status = SolveStatus::Stalled;
            break;
        }
        prev_viol = prev_viol.min(viol);
    }

    if status == SolveStatus::Converged && best_viol > cfg.feas_tol {
        status = SolveStatus::Stalled;
    }

    LocalResult {
        point: best_x,
        objective: best_f,
        max_constraint_violation: best_viol,
        iterations,
        wall_time: clock.elapsed().as_secs_f64(),
        status,
        violation_history: history,
        start_index: 0,
    }
}

/// A start drawn uniformly from the variable box: positions inside each
/// rectangle's box, α in `[0, 1]` unless fixed, β in `[0, 1]`.
pub fn random_start<R: Rng + ?Sized>(prob: &ProblemFunctions, rng: &mut R) -> Vec<f64> {
    prob.lower
        .iter()
        .zip(&prob.upper)
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

/// Feasible beats infeasible; then higher objective; then lower
/// violation; ties keep the earlier start.
fn dominates(a: &LocalResult, b: &LocalResult, tol: f64) -> bool {
    match (a.is_feasible(tol), b.is_feasible(tol)) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => {
            a.objective > b.objective
                || (a.objective == b.objective && a.start_index < b.start_index)
        }
        (false, false) => {
            a.max_constraint_violation < b.max_constraint_violation
                || (a.max_constraint_violation == b.max_constraint_violation
                    && a.start_index < b.start_index)
        }
    }
}

/// Runs `k` local solves and keeps the best. The first start is `warm`
/// when given; the rest are drawn by [`random_start`]. Starts are drawn in
/// order, so a larger `k` with the same rng extends the same start set.
///
/// For the feasibility problem the objective is constant, so the first
/// feasible result is already best and the remaining starts are skipped.
pub fn multistart<R: Rng + ?Sized>(
    prob: &ProblemFunctions,
    k: usize,
    rng: &mut R,
    cfg: &NlpConfig,
    warm: Option<&[f64]>,
) -> LocalResult {
    let stop_on_feasible = prob.is_feasibility();
    run_starts(prob, k, rng, cfg, warm, |r| {
        stop_on_feasible && r.is_feasible(cfg.feas_tol)
    })
}

fn run_starts<R, F>(
    prob: &ProblemFunctions,
    k: usize,
    rng: &mut R,
    cfg: &NlpConfig,
    warm: Option<&[f64]>,
    mut stop: F,
) -> LocalResult
where
    R: Rng + ?Sized,
    F: FnMut(&LocalResult) -> bool,
{
    let k = k.max(1);
    let deadline = cfg.deadline_from(Instant::now());
    let mut best: Option<LocalResult> = None;
    for index in 0..k {
        let start = match (index, warm) {
            (0, Some(w)) => w.to_vec(),
            _ => random_start(prob, rng),
        };
        let mut r = solve_local_until(prob, &start, cfg, deadline);
        r.start_index = index;
        let done = stop(&r);
        let timed_out = r.status == SolveStatus::TimeLimit;
        if best.as_ref().is_none_or(|b| dominates(&r, b, cfg.feas_tol)) {
            best = Some(r);
        }
        if done || timed_out || deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
    }
    best.expect("k >= 1")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityFailure {
    #[error("chosen vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("rectangle index {0} cannot fit in the container")]
    Unpackable(usize),
    #[error("rectangles {0} and {1} are the same rectangle in two orientations")]
    Exclusion(usize, usize),
    #[error("rectangles {0} and {1} cannot both fit")]
    IncompatiblePair(usize, usize),
    #[error("chosen area {area} exceeds the container area {capacity}")]
    AreaCut { area: f64, capacity: f64 },
    #[error("no feasible placement found (best violation {best_violation:e})")]
    NotFound { best_violation: f64 },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
}

/// Looks for positions of the chosen rectangles (indices into the expanded
/// list) that satisfy containment and non-overlap, verifying any candidate
/// with the exact geometric checks.
///
/// The local solves aim at a tenth of `cfg.feas_tol`; acceptance is the
/// verifier at `cfg.feas_tol`.
pub fn solve_feasibility<R: Rng + ?Sized>(
    model: &PackingModel,
    chosen: &[bool],
    cfg: &NlpConfig,
    restarts: usize,
    rng: &mut R,
    warm: Option<&[f64]>,
) -> Result<PackingSolution, FeasibilityFailure> {
    let m = model.len();
    if chosen.len() != m {
        return Err(FeasibilityFailure::Length {
            got: chosen.len(),
            expected: m,
        });
    }
    let picked: Vec<usize> = (0..m).filter(|&i| chosen[i]).collect();
    if picked.is_empty() {
        return Ok(PackingSolution::empty());
    }
    for &i in &picked {
        if !model.bounds[i].packable() {
            return Err(FeasibilityFailure::Unpackable(i));
        }
    }
    for &(i, j) in &model.exclusions {
        if chosen[i] && chosen[j] {
            return Err(FeasibilityFailure::Exclusion(i, j));
        }
    }
    let area: f64 = picked.iter().map(|&i| model.rect(i).area()).sum();
    let capacity = model.expanded.container_area();
    if area > capacity {
        return Err(FeasibilityFailure::AreaCut { area, capacity });
    }
    for (a, &i) in picked.iter().enumerate() {
        for &j in &picked[a + 1..] {
            if model.incompatible(i, j) {
                return Err(FeasibilityFailure::IncompatiblePair(i, j));
            }
        }
    }

    let alpha: Vec<f64> = chosen.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    let prob = build_problem(model, ProblemMode::Feasibility { alpha }, &Incumbent::none())?;
    let local_cfg = NlpConfig {
        feas_tol: 0.1 * cfg.feas_tol,
        ..cfg.clone()
    };
    let warm = warm.map(|w| {
        let mut v = w.to_vec();
        prob.project(&mut v);
        v
    });

    let mut found: Option<PackingSolution> = None;
    let best = run_starts(&prob, restarts, rng, &local_cfg, warm.as_deref(), |r| {
        if r.max_constraint_violation > cfg.feas_tol {
            return false;
        }
        let lay = &prob.layout;
        let placements = picked
            .iter()
            .map(|&i| model.placement(i, r.point[lay.x(i)], r.point[lay.y(i)]))
            .collect();
        match geometry::certify(&model.original, placements, cfg.feas_tol) {
            Ok(sol) if sol.verified => {
                found = Some(sol);
                true
            }
            _ => false,
        }
    });
    found.ok_or(FeasibilityFailure::NotFound {
        best_violation: best.max_constraint_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::formulation::{build_problem, ProblemMode};
    use crate::model::{normalize_instance, ModeFlags, ObjectiveMode, RawRect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(raw: &[RawRect], r: f64) -> PackingModel {
        PackingModel::new(
            &normalize_instance(raw, r, ModeFlags::new(ObjectiveMode::Count)).unwrap(),
        )
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn single_rect_feasible_at_origin() {
        let m = model(&[RawRect::new(1.0, 2.0)], 2.0);
        let p = build_problem(
            &m,
            ProblemMode::Feasibility { alpha: vec![1.0] },
            &Incumbent::none(),
        )
        .unwrap();
        let r = solve_local(&p, &vec![0.0; p.dim()], &NlpConfig::default());
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.max_constraint_violation, 0.0);
    }

    #[test]
    fn infeasible_pair_is_not_declared_feasible() {
        let m = model(&[RawRect::new(1.0, 1.0), RawRect::new(1.0, 1.0)], 0.9);
        assert!(m.incompatible(0, 1));
        let p = build_problem(
            &m,
            ProblemMode::Feasibility {
                alpha: vec![1.0, 1.0],
            },
            &Incumbent::none(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = multistart(&p, 3, &mut rng, &NlpConfig::default(), None);
        assert_ne!(r.status, SolveStatus::Converged);
        assert!(r.max_constraint_violation > 1e-6);
    }

    #[test]
    fn relaxed_two_rect_instance_packs_both() {
        // 1 x 1 and 1 x 1.5 side by side fit in R = 1.5 (brute-force check below)
        let raw = [RawRect::new(1.0, 1.0), RawRect::new(1.0, 1.5)];
        let m = model(&raw, 1.5);
        let fits = {
            let mut ok = false;
            let steps = 60;
            'outer: for a in 0..=steps {
                for b in 0..=steps {
                    let x0 = -1.5 + 3.0 * a as f64 / steps as f64;
                    let x1 = -1.5 + 3.0 * b as f64 / steps as f64;
                    let ps = [
                        crate::model::Placement::new(1, x0, 0.0),
                        crate::model::Placement::new(2, x1, 0.0),
                    ];
                    if geometry::verify_placements(&m.original, &ps, 0.0)
                        .unwrap()
                        .is_feasible()
                    {
                        ok = true;
                        break 'outer;
                    }
                }
            }
            ok
        };
        assert!(fits);

        let p = build_problem(&m, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = multistart(&p, 5, &mut rng, &NlpConfig::default(), None);
        assert!(r.is_feasible(1e-6), "{r:?}");
        let a = p.alphas(&r.point);
        let s: f64 = a.iter().map(|a| a * (1.0 - a)).sum();
        assert!(s <= 0.05 + 1e-6);
        assert!(r.objective >= 2.0 - 0.05 - 1e-6, "{}", r.objective);
    }

    #[test]
    fn multistart_k1_is_solve_local() {
        let m = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let p = build_problem(&m, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let cfg = NlpConfig {
            max_outer: 5,
            ..NlpConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = random_start(&p, &mut rng.clone());
        let a = multistart(&p, 1, &mut rng, &cfg, None);
        let b = solve_local(&p, &start, &cfg);
        assert_eq!(a.point, b.point);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn multistart_is_monotone_in_k() {
        let m = model(
            &[RawRect::new(1.0, 1.0), RawRect::new(1.2, 0.8), RawRect::new(0.9, 1.3)],
            1.3,
        );
        let p = build_problem(&m, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let cfg = NlpConfig::default();
        let key = |r: &LocalResult| (r.is_feasible(cfg.feas_tol), r.objective);
        let mut prev: Option<(bool, f64)> = None;
        for k in 1..=4 {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let r = multistart(&p, k, &mut rng, &cfg, None);
            let cur = key(&r);
            if let Some(prev) = prev {
                assert!(cur.0 >= prev.0);
                if cur.0 == prev.0 && cur.0 {
                    assert!(cur.1 >= prev.1);
                }
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn feasibility_examples() {
        let inst = fixtures::reference(ObjectiveMode::Count, false);
        let m = PackingModel::new(&inst);
        let cfg = NlpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        let empty = solve_feasibility(&m, &[false; 10], &cfg, 5, &mut rng, None).unwrap();
        assert!(empty.placements.is_empty() && empty.verified);
        assert_eq!(empty.objective_value, 0.0);

        let mut only10 = [false; 10];
        only10[9] = true;
        let half_diag = 0.5 * (3.79f64.powi(2) + 4.79f64.powi(2)).sqrt();
        assert!(half_diag < 4.18);
        let s = solve_feasibility(&m, &only10, &cfg, 5, &mut rng, None).unwrap();
        assert!(s.verified);
        assert_eq!(s.placements.len(), 1);

        let mut first7 = [false; 10];
        first7[..7].fill(true);
        let s = solve_feasibility(&m, &first7, &cfg, 40, &mut rng, None).unwrap();
        assert!(s.verified);
        assert_eq!(s.objective_value, 7.0);

        let all = [true; 10];
        assert!(matches!(
            solve_feasibility(&m, &all, &cfg, 5, &mut rng, None),
            Err(FeasibilityFailure::AreaCut { .. })
        ));
    }

    #[test]
    fn two_unit_squares_at_contact_radius() {
        let m = model(&[RawRect::new(1.0, 1.0), RawRect::new(1.0, 1.0)], 1.25f64.sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = solve_feasibility(&m, &[true, true], &NlpConfig::default(), 20, &mut rng, None)
            .unwrap();
        assert!(s.verified);
    }

    #[test]
    fn violation_decreases_after_penalty_growth_on_convex_problem() {
        // a single rectangle pushed towards a corner by the objective is
        // convex in position; the violation sequence must settle
        let m = model(&[RawRect::new(1.0, 1.0)], 1.0);
        let p = build_problem(&m, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let r = solve_local(&p, &vec![1.0; p.dim()], &NlpConfig::default());
        assert!(r.is_feasible(1e-6));
        let h = &r.violation_history;
        let last = *h.last().unwrap();
        assert!(last <= h.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn deterministic_for_same_start() {
        let m = PackingModel::new(&fixtures::reference(ObjectiveMode::Area, false));
        let p = build_problem(&m, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let start = random_start(&p, &mut rng);
        let cfg = NlpConfig {
            max_outer: 8,
            ..NlpConfig::default()
        };
        let a = solve_local(&p, &start, &cfg);
        let b = solve_local(&p, &start, &cfg);
        let bits = |r: &LocalResult| r.point.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
