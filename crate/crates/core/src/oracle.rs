//! Reference solver for small instances: every admissible subset, best
//! value first, each tried with a heavy multistart placement search.
//!
//! A subset that is not placed is only unfound, not proven infeasible, so
//! the result is a lower bound that is usually tight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::formulation::PackingModel;
use crate::model::{Instance, PackingSolution};
use crate::nlp::{solve_feasibility, NlpConfig};

pub const DEFAULT_MAX_N: usize = 8;
pub const DEFAULT_RESTARTS: usize = 200;
pub const STATUS: &str = "heuristic-complete";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{n} rectangles after rotation expansion exceeds the limit of {max_n}")]
    TooLarge { n: usize, max_n: usize },
    #[error("at least 200 restarts are required, got {0}")]
    TooFewRestarts(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub value: f64,
    pub solution: PackingSolution,
    pub status: &'static str,
    pub subsets_admissible: usize,
    pub subsets_tried: usize,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub max_n: usize,
    pub restarts: usize,
    pub seed: u64,
    pub nlp: NlpConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_n: DEFAULT_MAX_N,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            nlp: NlpConfig::default(),
        }
    }
}

/// Subsets (as bit masks over the expanded list) that pass the exclusion,
/// pair-incompatibility and area tests, plus the prefix rule for squares,
/// ordered by total value descending (ties: smaller mask first).
pub fn admissible_subsets(model: &PackingModel) -> Vec<(u32, f64)> {
    let m = model.len();
    let cap = model.expanded.container_area();
    let fixed = model.fixed_zero();
    let prefix_only = model.square_count_mode();
    let mut out = Vec::new();
    'mask: for mask in 1u32..(1 << m) {
        let has = |i: usize| mask & (1 << i) != 0;
        if prefix_only && (mask + 1) & mask != 0 {
            continue;
        }
        let mut area = 0.0;
        let mut value = 0.0;
        for i in (0..m).filter(|&i| has(i)) {
            if fixed[i] && !prefix_only {
                continue 'mask;
            }
            if !model.bounds[i].packable() {
                continue 'mask;
            }
            area += model.rect(i).area();
            value += model.rect(i).value;
            for j in (i + 1..m).filter(|&j| has(j)) {
                if model.incompatible(i, j) {
                    continue 'mask;
                }
            }
        }
        if area > cap || model.exclusions.iter().any(|&(i, j)| has(i) && has(j)) {
            continue;
        }
        out.push((mask, value));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

pub fn oracle(inst: &Instance, cfg: &OracleConfig) -> Result<OracleReport, OracleError> {
    let model = PackingModel::new(inst);
    let m = model.len();
    if m > cfg.max_n {
        return Err(OracleError::TooLarge { n: m, max_n: cfg.max_n });
    }
    if cfg.restarts < DEFAULT_RESTARTS {
        return Err(OracleError::TooFewRestarts(cfg.restarts));
    }
    let subsets = admissible_subsets(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tried = 0;
    let mut best = PackingSolution::empty();
    for &(mask, _) in &subsets {
        tried += 1;
        let chosen: Vec<bool> = (0..m).map(|i| mask & (1 << i) != 0).collect();
        if let Ok(sol) = solve_feasibility(&model, &chosen, &cfg.nlp, cfg.restarts, &mut rng, None) {
            if sol.verified {
                best = sol;
                break;
            }
        }
    }
    Ok(OracleReport {
        value: best.objective_value,
        solution: best,
        status: STATUS,
        subsets_admissible: subsets.len(),
        subsets_tried: tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use crate::model::{normalize_instance, ModeFlags, ObjectiveMode, RawRect};

    fn inst(raw: &[RawRect], r: f64, flags: ModeFlags) -> Instance {
        normalize_instance(raw, r, flags).unwrap()
    }

    #[test]
    fn one_fitting_rectangle() {
        let i = inst(&[RawRect::with_value(1.0, 2.0, 3.5)], 2.0, ModeFlags::new(ObjectiveMode::Value));
        let r = oracle(&i, &OracleConfig::default()).unwrap();
        assert_eq!(r.value, 3.5);
        assert_eq!(r.status, "heuristic-complete");
    }

    #[test]
    fn two_unit_squares_at_contact_radius() {
        // side by side at (±0.5, 0): outer corners at distance √(1 + 0.25)
        let i = inst(&[RawRect::new(1.0, 1.0); 2], 1.25f64.sqrt(), ModeFlags::new(ObjectiveMode::Count));
        let r = oracle(&i, &OracleConfig::default()).unwrap();
        assert_eq!(r.value, 2.0);
        assert!(geometry::verify_solution(&i, &r.solution, 1e-6).unwrap().is_feasible());
    }

    #[test]
    fn incompatible_pair_gives_one() {
        // side sums 2 > 2R = 1.8
        let i = inst(&[RawRect::new(1.0, 1.0); 2], 0.9, ModeFlags::new(ObjectiveMode::Count));
        let m = PackingModel::new(&i);
        assert!(m.incompatible(0, 1));
        assert!(admissible_subsets(&m).iter().all(|&(mask, _)| mask != 0b11));
        assert_eq!(oracle(&i, &OracleConfig::default()).unwrap().value, 1.0);
    }

    #[test]
    fn refuses_large_and_weak_configs() {
        let raw = vec![RawRect::new(1.0, 2.0); 5];
        let i = inst(&raw, 3.0, ModeFlags::new(ObjectiveMode::Count).rotate(true));
        assert!(matches!(
            oracle(&i, &OracleConfig::default()),
            Err(OracleError::TooLarge { n: 10, max_n: 8 })
        ));
        let small = inst(&raw[..1], 3.0, ModeFlags::new(ObjectiveMode::Count));
        let weak = OracleConfig {
            restarts: 10,
            ..OracleConfig::default()
        };
        assert!(oracle(&small, &weak).is_err());
    }

    #[test]
    fn subsets_sorted_and_pruned() {
        let i = inst(
            &[RawRect::new(1.0, 1.0), RawRect::new(2.0, 1.0), RawRect::new(1.5, 1.5)],
            1.3,
            ModeFlags::new(ObjectiveMode::Area),
        );
        let m = PackingModel::new(&i);
        let s = admissible_subsets(&m);
        assert!(s.windows(2).all(|w| w[0].1 >= w[1].1));
        let cap = i.container_area();
        for &(mask, v) in &s {
            let area: f64 = (0..3).filter(|k| mask & (1 << k) != 0).map(|k| m.rect(k).area()).sum();
            assert!(area <= cap);
            assert_eq!(area, v);
        }
    }

    #[test]
    fn square_subsets_are_prefixes() {
        let i = inst(
            &[RawRect::new(1.0, 1.0), RawRect::new(1.2, 1.2), RawRect::new(1.4, 1.4)],
            3.0,
            ModeFlags::new(ObjectiveMode::Count).squares(true),
        );
        let masks: Vec<u32> = admissible_subsets(&PackingModel::new(&i)).iter().map(|s| s.0).collect();
        assert_eq!(masks, vec![0b111, 0b011, 0b001]);
    }
}
