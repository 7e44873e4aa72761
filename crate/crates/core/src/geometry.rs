//! Geometric feasibility checks for axis-aligned rectangles in a circle
//! centred at the origin.
//!
//! Everything here works on squared distances; [`coordinate_bound`] is the
//! only place a square root is taken.

use serde::Serialize;
use thiserror::Error;

use crate::model::{Instance, ObjectiveMode, PackingSolution, Placement, Rectangle};

/// Residual tolerance used when none is given.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Largest |centre coordinate| along an axis for a rectangle with side
/// `along` on that axis and side `across` perpendicular to it.
///
/// Returns `None` when `across > 2R`: the orientation cannot fit at all.
/// A negative value means the rectangle is too long along the axis.
pub fn coordinate_bound(along: f64, across: f64, radius: f64) -> Option<f64> {
    let half = 0.5 * across;
    if half > radius {
        return None;
    }
    Some((radius * radius - half * half).sqrt() - 0.5 * along)
}

/// Largest amount by which a corner's squared distance exceeds `R²`, with
/// the corner index (`0..4`, sign pattern `(-,-), (-,+), (+,-), (+,+)`).
pub fn corner_excess(x: f64, y: f64, length: f64, width: f64, radius: f64) -> (usize, f64) {
    let r2 = radius * radius;
    let mut worst = (0, f64::NEG_INFINITY);
    for (k, (sx, sy)) in CORNER_SIGNS.iter().enumerate() {
        let cx = x + sx * 0.5 * length;
        let cy = y + sy * 0.5 * width;
        let excess = cx * cx + cy * cy - r2;
        if excess > worst.1 {
            worst = (k, excess);
        }
    }
    worst
}

pub(crate) const CORNER_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];

pub fn corners_inside(p: &Placement, rect: &Rectangle, radius: f64, tol: f64) -> bool {
    let (l, w) = p.extents(rect);
    corner_excess(p.x, p.y, l, w, radius).1 <= tol
}

/// `max{|dx| - (Li+Lj)/2, |dy| - (Wi+Wj)/2}`; non-negative iff disjoint
/// interiors.
pub fn separation_gap(
    xi: f64,
    yi: f64,
    (li, wi): (f64, f64),
    xj: f64,
    yj: f64,
    (lj, wj): (f64, f64),
) -> f64 {
    let gx = (xi - xj).abs() - 0.5 * (li + lj);
    let gy = (yi - yj).abs() - 0.5 * (wi + wj);
    gx.max(gy)
}

/// Touching edges or corners count as separated.
pub fn separated(
    pi: &Placement,
    ri: &Rectangle,
    pj: &Placement,
    rj: &Rectangle,
    tol: f64,
) -> bool {
    separation_gap(pi.x, pi.y, pi.extents(ri), pj.x, pj.y, pj.extents(rj)) >= -tol
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentViolation {
    pub rect_id: usize,
    pub rotated: bool,
    pub corner: usize,
    /// Squared corner distance minus `R²`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapViolation {
    /// Positions in the placement list.
    pub pair: (usize, usize),
    pub ids: (usize, usize),
    pub depth: f64,
}

/// A rectangle used more than once (including original plus rotated copy).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionViolation {
    pub rect_id: usize,
    pub uses: usize,
}

/// In square/count mode, a packed square whose predecessor is not packed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixViolation {
    pub rect_id: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FeasibilityReport {
    pub containment_violations: Vec<ContainmentViolation>,
    pub overlap_violations: Vec<OverlapViolation>,
    pub exclusion_violations: Vec<ExclusionViolation>,
    pub prefix_violations: Vec<PrefixViolation>,
    pub max_violation: f64,
    pub objective_value: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.containment_violations.is_empty()
            && self.overlap_violations.is_empty()
            && self.exclusion_violations.is_empty()
            && self.prefix_violations.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.containment_violations.len()
            + self.overlap_violations.len()
            + self.exclusion_violations.len()
            + self.prefix_violations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("placement {index} references unknown rectangle id {id}")]
    UnknownId { index: usize, id: usize },
    #[error("placement {index} rotates rectangle {id} but rotation is not allowed")]
    RotationNotAllowed { index: usize, id: usize },
    #[error("placement {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

/// Checks every constraint of the packing model for the given placements.
/// Violations above `tol` are listed; `max_violation` is the largest excess
/// over all constraints regardless of `tol`.
pub fn verify_placements(
    inst: &Instance,
    placements: &[Placement],
    tol: f64,
) -> Result<FeasibilityReport, StructuralError> {
    let mut rects = Vec::with_capacity(placements.len());
    for (index, p) in placements.iter().enumerate() {
        let rect = inst.rect(p.rect_id).ok_or(StructuralError::UnknownId {
            index,
            id: p.rect_id,
        })?;
        if p.rotated && !inst.rotation_allowed {
            return Err(StructuralError::RotationNotAllowed {
                index,
                id: p.rect_id,
            });
        }
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(StructuralError::NonFinite { index });
        }
        rects.push(rect);
    }

    let mut report = FeasibilityReport {
        objective_value: PackingSolution::value_in(inst, placements),
        ..Default::default()
    };
    let mut worst = 0.0f64;

    for (p, rect) in placements.iter().zip(&rects) {
        let (l, w) = p.extents(rect);
        let (corner, excess) = corner_excess(p.x, p.y, l, w, inst.radius);
        worst = worst.max(excess);
        if excess > tol {
            report.containment_violations.push(ContainmentViolation {
                rect_id: p.rect_id,
                rotated: p.rotated,
                corner,
                excess,
            });
        }
    }

    for i in 0..placements.len() {
        for j in i + 1..placements.len() {
            let (pi, pj) = (&placements[i], &placements[j]);
            let gap = separation_gap(
                pi.x,
                pi.y,
                pi.extents(rects[i]),
                pj.x,
                pj.y,
                pj.extents(rects[j]),
            );
            worst = worst.max(-gap);
            if -gap > tol {
                report.overlap_violations.push(OverlapViolation {
                    pair: (i, j),
                    ids: (pi.rect_id, pj.rect_id),
                    depth: -gap,
                });
            }
        }
    }

    let mut uses = vec![0usize; inst.len() + 1];
    for p in placements {
        uses[p.rect_id] += 1;
    }
    for (id, &n) in uses.iter().enumerate().skip(1) {
        if n > 1 {
            worst = worst.max((n - 1) as f64);
            report.exclusion_violations.push(ExclusionViolation { rect_id: id, uses: n });
        }
    }

    if inst.square_mode && inst.objective == ObjectiveMode::Count {
        for id in 2..=inst.len() {
            if uses[id] > 0 && uses[id - 1] == 0 {
                worst = worst.max(1.0);
                report.prefix_violations.push(PrefixViolation { rect_id: id });
            }
        }
    }

    report.max_violation = worst.max(0.0);
    Ok(report)
}

pub fn verify_solution(
    inst: &Instance,
    sol: &PackingSolution,
    tol: f64,
) -> Result<FeasibilityReport, StructuralError> {
    verify_placements(inst, &sol.placements, tol)
}

/// Runs the verifier and packages the outcome as a solution.
pub fn certify(
    inst: &Instance,
    placements: Vec<Placement>,
    tol: f64,
) -> Result<PackingSolution, StructuralError> {
    let report = verify_placements(inst, &placements, tol)?;
    Ok(PackingSolution {
        objective_value: report.objective_value,
        verified: report.is_feasible(),
        max_violation: report.max_violation,
        placements,
    })
}
