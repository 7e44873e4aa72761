//! The packing model as a nonlinear program.
//!
//! Three problems are built from one variable layout:
//!
//! * `P`: the mixed-integer model, α binary (enforced by the caller).
//! * `P*`: α continuous in `[0, 1]` with `Σ α(1-α) ≤ δ`.
//! * `Feas`: α fixed, positions free, constant objective.
//!
//! Variables are laid out as `[α_0..α_m, x_0..x_m, y_0..y_m, β_0..β_|Q|]`
//! where `m` is the number of rectangles after rotation expansion and `Q`
//! lists every pair `(i, j)` with `i < j`. Every constraint is normalized
//! to `g(v) ≥ 0`. Indices are 0-based throughout this module.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{coordinate_bound, separation_gap, CORNER_SIGNS};
use crate::model::{Incumbent, Instance, ObjectiveMode, Placement, Rectangle};

/// `|t|` is replaced by `sqrt(t² + ε)` in differentiable builds.
pub const DEFAULT_ABS_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("rotation expansion needs an instance that allows rotation")]
    RotationNotAllowed,
    #[error("rotation expansion is not defined for square mode")]
    SquareMode,
    #[error("square cuts apply only to square mode with the count objective")]
    SquareCutsNotApplicable,
    #[error("relaxed integrality needs δ > 0, got {0}")]
    NonPositiveDelta(f64),
    #[error("fixed α vector has length {got}, expected {expected}")]
    AlphaLength { got: usize, expected: usize },
    #[error("α for rectangle index {0} must be 0 or 1")]
    AlphaNotBinary(usize),
    #[error("rectangle index {0} is fixed packed but cannot fit in the container")]
    FixedUnpackable(usize),
}

/// Duplicates every non-square rectangle with its sides swapped.
///
/// Returns the expanded instance (copies appended after the originals, ids
/// continuing from `n + 1`) and the `(original, copy)` index pairs that may
/// not both be packed.
pub fn expand_rotations(
    inst: &Instance,
) -> Result<(Instance, Vec<(usize, usize)>), FormulationError> {
    if inst.square_mode {
        return Err(FormulationError::SquareMode);
    }
    if !inst.rotation_allowed {
        return Err(FormulationError::RotationNotAllowed);
    }
    let mut rects = inst.rectangles.clone();
    let mut exclusions = Vec::new();
    for (i, r) in inst.rectangles.iter().enumerate() {
        if r.is_square() {
            continue;
        }
        let j = rects.len();
        rects.push(Rectangle {
            id: j + 1,
            length: r.width,
            width: r.length,
            value: r.value,
            rotated_copy_of: Some(r.id),
        });
        exclusions.push((i, j));
    }
    let expanded = Instance {
        rectangles: rects,
        ..inst.clone()
    };
    Ok((expanded, exclusions))
}

/// Closed-form centre bounds for one rectangle; `None` if the orientation
/// cannot fit across the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectBounds {
    pub bx: Option<f64>,
    pub by: Option<f64>,
}

impl RectBounds {
    pub fn packable(&self) -> bool {
        matches!((self.bx, self.by), (Some(bx), Some(by)) if bx >= 0.0 && by >= 0.0)
    }

    /// Half-widths of the centre box, zero when unpackable.
    pub fn box_half(&self) -> (f64, f64) {
        if self.packable() {
            (self.bx.unwrap_or(0.0), self.by.unwrap_or(0.0))
        } else {
            (0.0, 0.0)
        }
    }
}

/// Everything about an instance the problem builders need: the expanded
/// rectangle list, rotation exclusions and coordinate bounds.
#[derive(Debug, Clone)]
pub struct PackingModel {
    /// The normalized input.
    pub original: Instance,
    /// Rotation-expanded when rotation is allowed, otherwise the input.
    pub expanded: Instance,
    pub exclusions: Vec<(usize, usize)>,
    pub bounds: Vec<RectBounds>,
}

impl PackingModel {
    pub fn new(inst: &Instance) -> Self {
        let (expanded, exclusions) = if inst.rotation_allowed && !inst.square_mode {
            expand_rotations(inst).expect("flags checked")
        } else {
            (inst.clone(), Vec::new())
        };
        let r = inst.radius;
        let bounds = expanded
            .rectangles
            .iter()
            .map(|rect| RectBounds {
                bx: coordinate_bound(rect.length, rect.width, r),
                by: coordinate_bound(rect.width, rect.length, r),
            })
            .collect();
        Self {
            original: inst.clone(),
            expanded,
            exclusions,
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.expanded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expanded.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.expanded.radius
    }

    pub fn rect(&self, index: usize) -> &Rectangle {
        &self.expanded.rectangles[index]
    }

    pub fn square_count_mode(&self) -> bool {
        self.expanded.square_mode && self.expanded.objective == ObjectiveMode::Count
    }

    pub fn layout(&self) -> VariableLayout {
        VariableLayout::new(self.len())
    }

    /// The user-facing placement of expanded rectangle `index`.
    pub fn placement(&self, index: usize, x: f64, y: f64) -> Placement {
        let rect = self.rect(index);
        Placement {
            rect_id: rect.original_id(),
            x,
            y,
            rotated: rect.rotated_copy_of.is_some(),
        }
    }

    /// Inverse of [`PackingModel::placement`].
    pub fn index_of(&self, p: &Placement) -> Option<usize> {
        self.expanded.rectangles.iter().position(|r| {
            r.original_id() == p.rect_id && r.rotated_copy_of.is_some() == p.rotated
        })
    }

    /// Exclusion partner of `index`, if any.
    pub fn partner(&self, index: usize) -> Option<usize> {
        self.exclusions.iter().find_map(|&(i, j)| {
            if i == index {
                Some(j)
            } else if j == index {
                Some(i)
            } else {
                None
            }
        })
    }

    /// Whether two rectangles can never be packed together.
    pub fn incompatible(&self, i: usize, j: usize) -> bool {
        let (a, b) = (self.rect(i), self.rect(j));
        (a.length + b.length).min(a.width + b.width) > 2.0 * self.radius()
    }

    /// Rectangles whose α is forced to zero: unpackable ones, and in square
    /// count mode every square failing the prefix-area test.
    pub fn fixed_zero(&self) -> Vec<bool> {
        let mut fixed: Vec<bool> = self.bounds.iter().map(|b| !b.packable()).collect();
        if self.square_count_mode() {
            let cap = self.expanded.container_area();
            let mut prefix = 0.0;
            for (k, r) in self.expanded.rectangles.iter().enumerate() {
                prefix += r.length * r.length;
                if prefix > cap {
                    fixed[k] = true;
                }
            }
        }
        fixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    rects: usize,
    pairs: Vec<(usize, usize)>,
}

impl VariableLayout {
    pub fn new(rects: usize) -> Self {
        let pairs = (0..rects)
            .flat_map(|i| (i + 1..rects).map(move |j| (i, j)))
            .collect();
        Self { rects, pairs }
    }

    pub fn rects(&self) -> usize {
        self.rects
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        3 * self.rects + self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alpha(&self, i: usize) -> usize {
        i
    }

    pub fn x(&self, i: usize) -> usize {
        self.rects + i
    }

    pub fn y(&self, i: usize) -> usize {
        2 * self.rects + i
    }

    pub fn beta(&self, pair: usize) -> usize {
        3 * self.rects + pair
    }

    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // pairs before row i: sum_{k<i} (m-1-k)
        i * (2 * self.rects - i - 1) / 2 + (j - i - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapForm {
    /// `α_iα_j max{gap_x, gap_y} ≥ 0`, reference only (not differentiable).
    Max,
    /// `α_iα_j [β gap_x + (1-β) gap_y] ≥ 0`.
    Beta,
    /// `α_j [β gap_x + (1-β) gap_y] ≥ 0`, valid under the square ordering.
    SquareBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    Rotation,
    Incompatible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `α_i B - v ≥ 0` (upper) or `α_i B + v ≥ 0` (lower).
    CoordinateBound {
        rect: usize,
        axis: Axis,
        upper: bool,
        bound: f64,
    },
    /// `α R² + (1-α)(L²+W²)/4 - (x ± L/2)² - (y ± W/2)² ≥ 0`.
    Corner { rect: usize, corner: usize },
    Overlap {
        pair: usize,
        i: usize,
        j: usize,
        form: OverlapForm,
    },
    /// `δ - Σ α(1-α) ≥ 0`.
    RelaxedIntegrality { delta: f64 },
    /// `1 - α_i - α_j ≥ 0`.
    PairExclusion {
        i: usize,
        j: usize,
        reason: ExclusionReason,
    },
    /// `πR² - Σ α L W ≥ 0`.
    AreaCut,
    /// `Σ α V - Z_best ≥ 0`.
    IncumbentBound { z_best: f64 },
    /// `Σ_{i∉F} α_i + Σ_{i∈F} (1-α_i) - 1 ≥ 0`.
    SolutionExclusion { packed: Vec<bool> },
    /// `α_{rect-1} - α_rect ≥ 0`.
    Ordering { rect: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintClass {
    CoordinateBound,
    Corner,
    Overlap,
    RelaxedIntegrality,
    RotationExclusion,
    PairIncompatibility,
    AreaCut,
    IncumbentBound,
    SolutionExclusion,
    Ordering,
}

impl Constraint {
    pub fn class(&self) -> ConstraintClass {
        match self {
            Constraint::CoordinateBound { .. } => ConstraintClass::CoordinateBound,
            Constraint::Corner { .. } => ConstraintClass::Corner,
            Constraint::Overlap { .. } => ConstraintClass::Overlap,
            Constraint::RelaxedIntegrality { .. } => ConstraintClass::RelaxedIntegrality,
            Constraint::PairExclusion {
                reason: ExclusionReason::Rotation,
                ..
            } => ConstraintClass::RotationExclusion,
            Constraint::PairExclusion {
                reason: ExclusionReason::Incompatible,
                ..
            } => ConstraintClass::PairIncompatibility,
            Constraint::AreaCut => ConstraintClass::AreaCut,
            Constraint::IncumbentBound { .. } => ConstraintClass::IncumbentBound,
            Constraint::SolutionExclusion { .. } => ConstraintClass::SolutionExclusion,
            Constraint::Ordering { .. } => ConstraintClass::Ordering,
        }
    }
}

pub fn containment_bound_constraints(model: &PackingModel) -> Vec<Constraint> {
    let mut out = Vec::with_capacity(4 * model.len());
    for (rect, b) in model.bounds.iter().enumerate() {
        let (bx, by) = (b.bx.unwrap_or(0.0), b.by.unwrap_or(0.0));
        for (axis, bound) in [(Axis::X, bx), (Axis::Y, by)] {
            for upper in [true, false] {
                out.push(Constraint::CoordinateBound {
                    rect,
                    axis,
                    upper,
                    bound,
                });
            }
        }
    }
    out
}

pub fn corner_constraints(model: &PackingModel) -> Vec<Constraint> {
    (0..model.len())
        .flat_map(|rect| (0..4).map(move |corner| Constraint::Corner { rect, corner }))
        .collect()
}

pub fn overlap_constraints(
    model: &PackingModel,
    form: OverlapForm,
) -> Result<Vec<Constraint>, FormulationError> {
    if form == OverlapForm::SquareBeta && !model.expanded.square_mode {
        return Err(FormulationError::SquareCutsNotApplicable);
    }
    Ok(model
        .layout()
        .pairs()
        .iter()
        .enumerate()
        .map(|(pair, &(i, j))| Constraint::Overlap { pair, i, j, form })
        .collect())
}

/// Ordering constraints plus the indices whose α the prefix-area test
/// fixes to zero.
pub fn square_cuts(model: &PackingModel) -> Result<(Vec<Constraint>, Vec<usize>), FormulationError> {
    if !model.square_count_mode() {
        return Err(FormulationError::SquareCutsNotApplicable);
    }
    let ordering = (1..model.len()).map(|rect| Constraint::Ordering { rect }).collect();
    let cap = model.expanded.container_area();
    let mut prefix = 0.0;
    let mut fixed = Vec::new();
    for (k, r) in model.expanded.rectangles.iter().enumerate() {
        prefix += r.length * r.length;
        if prefix > cap {
            fixed.push(k);
        }
    }
    Ok((ordering, fixed))
}

/// Pair incompatibility, area, incumbent-bound and solution-exclusion cuts.
/// The last two are omitted while there is no incumbent.
pub fn generic_cuts(model: &PackingModel, incumbent: &Incumbent) -> Vec<Constraint> {
    let mut out = Vec::new();
    for &(i, j) in model.layout().pairs() {
        if model.incompatible(i, j) {
            out.push(Constraint::PairExclusion {
                i,
                j,
                reason: ExclusionReason::Incompatible,
            });
        }
    }
    out.push(Constraint::AreaCut);
    if !incumbent.is_empty() {
        out.push(Constraint::IncumbentBound {
            z_best: incumbent.z_best,
        });
        let mut packed = vec![false; model.len()];
        for &id in &incumbent.packed {
            if let Some(slot) = id.checked_sub(1).and_then(|k| packed.get_mut(k)) {
                *slot = true;
            }
        }
        out.push(Constraint::SolutionExclusion { packed });
    }
    out
}

pub fn relaxed_integrality(delta: f64) -> Result<Constraint, FormulationError> {
    if !(delta > 0.0) {
        return Err(FormulationError::NonPositiveDelta(delta));
    }
    Ok(Constraint::RelaxedIntegrality { delta })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemMode {
    /// α binary, enforced combinatorially by the caller.
    Integral,
    /// Continuous relaxation with the given δ.
    Relaxed { delta: f64 },
    /// α fixed to the given 0/1 vector.
    Feasibility { alpha: Vec<f64> },
}

#[derive(Debug, Clone, Copy)]
struct RectData {
    length: f64,
    width: f64,
    value: f64,
    /// (L² + W²) / 4
    half_diag2: f64,
}

/// An evaluable optimization problem: maximize [`objective`] subject to
/// every constraint `g_k(v) ≥ 0` and the variable box.
///
/// [`objective`]: ProblemFunctions::objective
#[derive(Debug, Clone)]
pub struct ProblemFunctions {
    pub mode: ProblemMode,
    pub layout: VariableLayout,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eps_abs: f64,
    radius: f64,
    rects: Vec<RectData>,
}

/// Assembles P, P* or the fixed-α feasibility problem.
pub fn build_problem(
    model: &PackingModel,
    mode: ProblemMode,
    incumbent: &Incumbent,
) -> Result<ProblemFunctions, FormulationError> {
    let layout = model.layout();
    let m = model.len();
    let mut fixed_zero = model.fixed_zero();
    let mut constraints = containment_bound_constraints(model);
    constraints.extend(corner_constraints(model));

    let fixed_alpha = match &mode {
        ProblemMode::Feasibility { alpha } => {
            if alpha.len() != m {
                return Err(FormulationError::AlphaLength {
                    got: alpha.len(),
                    expected: m,
                });
            }
            for (k, &a) in alpha.iter().enumerate() {
                if a != 0.0 && a != 1.0 {
                    return Err(FormulationError::AlphaNotBinary(k));
                }
                if a == 1.0 && !model.bounds[k].packable() {
                    return Err(FormulationError::FixedUnpackable(k));
                }
            }
            Some(alpha.clone())
        }
        ProblemMode::Relaxed { delta } => {
            relaxed_integrality(*delta)?;
            None
        }
        ProblemMode::Integral => None,
    };

    if fixed_alpha.is_some() {
        // with α constant every cut is constant; only geometry remains
        constraints.extend(overlap_constraints(model, OverlapForm::Beta)?);
    } else {
        let form = if model.square_count_mode() {
            OverlapForm::SquareBeta
        } else {
            OverlapForm::Beta
        };
        constraints.extend(overlap_constraints(model, form)?);
        if let ProblemMode::Relaxed { delta } = mode {
            constraints.push(relaxed_integrality(delta)?);
        }
        for &(i, j) in &model.exclusions {
            constraints.push(Constraint::PairExclusion {
                i,
                j,
                reason: ExclusionReason::Rotation,
            });
        }
        if model.square_count_mode() {
            let (ordering, fixed) = square_cuts(model)?;
            constraints.extend(ordering);
            for k in fixed {
                fixed_zero[k] = true;
            }
        }
        constraints.extend(generic_cuts(model, incumbent));
    }

    let n = layout.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..m {
        let (hx, hy) = model.bounds[i].box_half();
        let (alo, ahi) = match &fixed_alpha {
            Some(a) => (a[i], a[i]),
            None if fixed_zero[i] => (0.0, 0.0),
            None => (0.0, 1.0),
        };
        let packs = ahi > 0.0;
        lower[layout.alpha(i)] = alo;
        upper[layout.alpha(i)] = ahi;
        let (hx, hy) = if packs { (hx, hy) } else { (0.0, 0.0) };
        lower[layout.x(i)] = -hx;
        upper[layout.x(i)] = hx;
        lower[layout.y(i)] = -hy;
        upper[layout.y(i)] = hy;
    }
    for p in 0..layout.pairs().len() {
        upper[layout.beta(p)] = 1.0;
    }

    let rects = model
        .expanded
        .rectangles
        .iter()
        .map(|r| RectData {
            length: r.length,
            width: r.width,
            value: r.value,
            half_diag2: 0.25 * (r.length * r.length + r.width * r.width),
        })
        .collect();

    Ok(ProblemFunctions {
        mode,
        layout,
        constraints,
        lower,
        upper,
        eps_abs: DEFAULT_ABS_SMOOTHING,
        radius: model.radius(),
        rects,
    })
}

impl ProblemFunctions {
    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn is_feasibility(&self) -> bool {
        matches!(self.mode, ProblemMode::Feasibility { .. })
    }

    pub fn count(&self, class: ConstraintClass) -> usize {
        self.constraints.iter().filter(|c| c.class() == class).count()
    }

    /// Clamps `v` into the variable box in place.
    pub fn project(&self, v: &mut [f64]) {
        for ((x, lo), hi) in v.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Value being maximized: `Σ α V`, or 0 for the feasibility problem.
    pub fn objective(&self, v: &[f64]) -> f64 {
        if self.is_feasibility() {
            return 0.0;
        }
        self.rects
            .iter()
            .enumerate()
            .map(|(i, r)| v[self.layout.alpha(i)] * r.value)
            .sum()
    }

    pub fn objective_gradient(&self, _v: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        if self.is_feasibility() {
            return;
        }
        for (i, r) in self.rects.iter().enumerate() {
            grad[self.layout.alpha(i)] = r.value;
        }
    }

    fn smooth_abs(&self, t: f64) -> (f64, f64) {
        let s = (t * t + self.eps_abs).sqrt();
        (s, t / s)
    }

    pub fn constraint_value(&self, k: usize, v: &[f64]) -> f64 {
        let lay = &self.layout;
        match &self.constraints[k] {
            Constraint::CoordinateBound {
                rect,
                axis,
                upper,
                bound,
            } => {
                let a = v[lay.alpha(*rect)];
                let c = match axis {
                    Axis::X => v[lay.x(*rect)],
                    Axis::Y => v[lay.y(*rect)],
                };
                if *upper {
                    a * bound - c
                } else {
                    a * bound + c
                }
            }
            Constraint::Corner { rect, corner } => {
                let r = &self.rects[*rect];
                let (sx, sy) = CORNER_SIGNS[*corner];
                let a = v[lay.alpha(*rect)];
                let cx = v[lay.x(*rect)] + sx * 0.5 * r.length;
                let cy = v[lay.y(*rect)] + sy * 0.5 * r.width;
                a * self.radius * self.radius + (1.0 - a) * r.half_diag2 - cx * cx - cy * cy
            }
            Constraint::Overlap { pair, i, j, form } => {
                let (ri, rj) = (&self.rects[*i], &self.rects[*j]);
                let (ai, aj) = (v[lay.alpha(*i)], v[lay.alpha(*j)]);
                let dx = v[lay.x(*i)] - v[lay.x(*j)];
                let dy = v[lay.y(*i)] - v[lay.y(*j)];
                match form {
                    OverlapForm::Max => {
                        ai * aj
                            * separation_gap(
                                v[lay.x(*i)],
                                v[lay.y(*i)],
                                (ri.length, ri.width),
                                v[lay.x(*j)],
                                v[lay.y(*j)],
                                (rj.length, rj.width),
                            )
                    }
                    OverlapForm::Beta | OverlapForm::SquareBeta => {
                        let b = v[lay.beta(*pair)];
                        let gx = self.smooth_abs(dx).0 - 0.5 * (ri.length + rj.length);
                        let gy = self.smooth_abs(dy).0 - 0.5 * (ri.width + rj.width);
                        let h = b * gx + (1.0 - b) * gy;
                        let mult = if *form == OverlapForm::Beta { ai * aj } else { aj };
                        mult * h
                    }
                }
            }
            Constraint::RelaxedIntegrality { delta } => {
                let s: f64 = (0..lay.rects())
                    .map(|i| {
                        let a = v[lay.alpha(i)];
                        a * (1.0 - a)
                    })
                    .sum();
                delta - s
            }
            Constraint::PairExclusion { i, j, .. } => 1.0 - v[lay.alpha(*i)] - v[lay.alpha(*j)],
            Constraint::AreaCut => {
                let used: f64 = self
                    .rects
                    .iter()
                    .enumerate()
                    .map(|(i, r)| v[lay.alpha(i)] * r.length * r.width)
                    .sum();
                PI * self.radius * self.radius - used
            }
            Constraint::IncumbentBound { z_best } => {
                let z: f64 = self
                    .rects
                    .iter()
                    .enumerate()
                    .map(|(i, r)| v[lay.alpha(i)] * r.value)
                    .sum();
                z - z_best
            }
            Constraint::SolutionExclusion { packed } => {
                let d: f64 = packed
                    .iter()
                    .enumerate()
                    .map(|(i, &inside)| {
                        let a = v[lay.alpha(i)];
                        if inside {
                            1.0 - a
                        } else {
                            a
                        }
                    })
                    .sum();
                d - 1.0
            }
            Constraint::Ordering { rect } => v[lay.alpha(rect - 1)] - v[lay.alpha(*rect)],
        }
    }

    /// Adds `scale · ∇g_k(v)` into `grad`.
    pub fn add_constraint_gradient(&self, k: usize, v: &[f64], scale: f64, grad: &mut [f64]) {
        let lay = &self.layout;
        match &self.constraints[k] {
            Constraint::CoordinateBound {
                rect,
                axis,
                upper,
                bound,
            } => {
                grad[lay.alpha(*rect)] += scale * bound;
                let c = match axis {
                    Axis::X => lay.x(*rect),
                    Axis::Y => lay.y(*rect),
                };
                grad[c] += if *upper { -scale } else { scale };
            }
            Constraint::Corner { rect, corner } => {
                let r = &self.rects[*rect];
                let (sx, sy) = CORNER_SIGNS[*corner];
                let cx = v[lay.x(*rect)] + sx * 0.5 * r.length;
                let cy = v[lay.y(*rect)] + sy * 0.5 * r.width;
                grad[lay.alpha(*rect)] += scale * (self.radius * self.radius - r.half_diag2);
                grad[lay.x(*rect)] -= scale * 2.0 * cx;
                grad[lay.y(*rect)] -= scale * 2.0 * cy;
            }
            Constraint::Overlap { pair, i, j, form } => {
                let (ri, rj) = (&self.rects[*i], &self.rects[*j]);
                let (ai, aj) = (v[lay.alpha(*i)], v[lay.alpha(*j)]);
                let dx = v[lay.x(*i)] - v[lay.x(*j)];
                let dy = v[lay.y(*i)] - v[lay.y(*j)];
                match form {
                    OverlapForm::Max => {
                        let gx = dx.abs() - 0.5 * (ri.length + rj.length);
                        let gy = dy.abs() - 0.5 * (ri.width + rj.width);
                        let h = gx.max(gy);
                        grad[lay.alpha(*i)] += scale * aj * h;
                        grad[lay.alpha(*j)] += scale * ai * h;
                        let m = scale * ai * aj;
                        if gx >= gy {
                            grad[lay.x(*i)] += m * dx.signum();
                            grad[lay.x(*j)] -= m * dx.signum();
                        } else {
                            grad[lay.y(*i)] += m * dy.signum();
                            grad[lay.y(*j)] -= m * dy.signum();
                        }
                    }
                    OverlapForm::Beta | OverlapForm::SquareBeta => {
                        let b = v[lay.beta(*pair)];
                        let (sx, dsx) = self.smooth_abs(dx);
                        let (sy, dsy) = self.smooth_abs(dy);
                        let gx = sx - 0.5 * (ri.length + rj.length);
                        let gy = sy - 0.5 * (ri.width + rj.width);
                        let h = b * gx + (1.0 - b) * gy;
                        let mult = if *form == OverlapForm::Beta {
                            grad[lay.alpha(*i)] += scale * aj * h;
                            grad[lay.alpha(*j)] += scale * ai * h;
                            ai * aj
                        } else {
                            grad[lay.alpha(*j)] += scale * h;
                            aj
                        };
                        let m = scale * mult;
                        grad[lay.beta(*pair)] += m * (gx - gy);
                        grad[lay.x(*i)] += m * b * dsx;
                        grad[lay.x(*j)] -= m * b * dsx;
                        grad[lay.y(*i)] += m * (1.0 - b) * dsy;
                        grad[lay.y(*j)] -= m * (1.0 - b) * dsy;
                    }
                }
            }
            Constraint::RelaxedIntegrality { .. } => {
                for i in 0..lay.rects() {
                    let a = v[lay.alpha(i)];
                    grad[lay.alpha(i)] -= scale * (1.0 - 2.0 * a);
                }
            }
            Constraint::PairExclusion { i, j, .. } => {
                grad[lay.alpha(*i)] -= scale;
                grad[lay.alpha(*j)] -= scale;
            }
            Constraint::AreaCut => {
                for (i, r) in self.rects.iter().enumerate() {
                    grad[lay.alpha(i)] -= scale * r.length * r.width;
                }
            }
            Constraint::IncumbentBound { .. } => {
                for (i, r) in self.rects.iter().enumerate() {
                    grad[lay.alpha(i)] += scale * r.value;
                }
            }
            Constraint::SolutionExclusion { packed } => {
                for (i, &inside) in packed.iter().enumerate() {
                    grad[lay.alpha(i)] += if inside { -scale } else { scale };
                }
            }
            Constraint::Ordering { rect } => {
                grad[lay.alpha(rect - 1)] += scale;
                grad[lay.alpha(*rect)] -= scale;
            }
        }
    }

    pub fn constraint_gradient(&self, k: usize, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_constraint_gradient(k, v, 1.0, &mut g);
        g
    }

    pub fn constraint_values(&self, v: &[f64]) -> Vec<f64> {
        (0..self.constraints.len())
            .map(|k| self.constraint_value(k, v))
            .collect()
    }

    /// Largest constraint or box violation at `v`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let cons = (0..self.constraints.len())
            .map(|k| -self.constraint_value(k, v))
            .fold(0.0, f64::max);
        let boxes = v
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| (lo - x).max(x - hi))
            .fold(0.0, f64::max);
        cons.max(boxes)
    }

    /// `Σ max(0, -g_k)²`, the quantity minimized to find a feasible point.
    pub fn violation_objective(&self, v: &[f64]) -> f64 {
        (0..self.constraints.len())
            .map(|k| {
                let g = self.constraint_value(k, v);
                if g < 0.0 {
                    g * g
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn violation_gradient(&self, v: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for k in 0..self.constraints.len() {
            let g = self.constraint_value(k, v);
            if g < 0.0 {
                self.add_constraint_gradient(k, v, 2.0 * g, grad);
            }
        }
    }

    /// Builds a full variable vector from packed rectangle positions: α = 1
    /// for the given indices, every other rectangle at the origin, β set to
    /// whichever axis separates each pair better.
    pub fn point_from_positions(&self, packed: &[(usize, f64, f64)]) -> Vec<f64> {
        let lay = &self.layout;
        let mut v = vec![0.0; self.dim()];
        for &(i, x, y) in packed {
            v[lay.alpha(i)] = 1.0;
            v[lay.x(i)] = x;
            v[lay.y(i)] = y;
        }
        self.fill_betas(&mut v);
        self.project(&mut v);
        v
    }

    /// Sets every β to 1 when the x-gap of its pair is at least the y-gap,
    /// else 0.
    pub fn fill_betas(&self, v: &mut [f64]) {
        let lay = &self.layout;
        for (p, &(i, j)) in lay.pairs().iter().enumerate() {
            let (ri, rj) = (&self.rects[i], &self.rects[j]);
            let gx = (v[lay.x(i)] - v[lay.x(j)]).abs() - 0.5 * (ri.length + rj.length);
            let gy = (v[lay.y(i)] - v[lay.y(j)]).abs() - 0.5 * (ri.width + rj.width);
            v[lay.beta(p)] = if gx >= gy { 1.0 } else { 0.0 };
        }
    }

    pub fn alphas<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[..self.layout.rects()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{normalize_instance, ModeFlags, RawRect};
    use std::collections::BTreeSet;

    fn model_of(raw: &[RawRect], r: f64, flags: ModeFlags) -> PackingModel {
        PackingModel::new(&normalize_instance(raw, r, flags).unwrap())
    }

    #[test]
    fn expand_reference() {
        let inst = fixtures::reference(ObjectiveMode::Count, true);
        let (exp, excl) = expand_rotations(&inst).unwrap();
        assert_eq!(exp.len(), 20);
        assert_eq!(excl.len(), 10);
        let copy = &exp.rectangles[10];
        assert_eq!((copy.length, copy.width), (1.61, 1.10));
        assert_eq!(copy.value, inst.rectangles[0].value);
        assert_eq!(copy.rotated_copy_of, Some(1));
        for &(i, j) in &excl {
            let (a, b) = (&exp.rectangles[i], &exp.rectangles[j]);
            assert_eq!((a.length, a.width, a.value), (b.width, b.length, b.value));
        }
    }

    #[test]
    fn expand_skips_squares_and_rejects_square_mode() {
        let flags = ModeFlags::new(ObjectiveMode::Count).rotate(true);
        let inst = normalize_instance(&[RawRect::new(2.0, 2.0)], 3.0, flags).unwrap();
        let (exp, excl) = expand_rotations(&inst).unwrap();
        assert_eq!(exp, inst);
        assert!(excl.is_empty());

        let sq = normalize_instance(
            &[RawRect::new(2.0, 2.0)],
            3.0,
            ModeFlags::new(ObjectiveMode::Count).squares(true),
        )
        .unwrap();
        assert_eq!(expand_rotations(&sq), Err(FormulationError::SquareMode));
        let plain = fixtures::reference(ObjectiveMode::Count, false);
        assert_eq!(expand_rotations(&plain), Err(FormulationError::RotationNotAllowed));
    }

    #[test]
    fn pair_index_matches_enumeration() {
        let lay = VariableLayout::new(7);
        for (p, &(i, j)) in lay.pairs().iter().enumerate() {
            assert_eq!(lay.pair_index(i, j), p);
            assert_eq!(lay.pair_index(j, i), p);
        }
    }

    #[test]
    fn constraint_counts_n10() {
        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let p = build_problem(&model, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        assert_eq!(p.count(ConstraintClass::Overlap), 45);
        assert_eq!(p.count(ConstraintClass::Corner), 40);
        assert_eq!(p.count(ConstraintClass::CoordinateBound), 40);
        assert_eq!(p.count(ConstraintClass::RelaxedIntegrality), 1);
        assert_eq!(p.count(ConstraintClass::AreaCut), 1);
        assert_eq!(p.count(ConstraintClass::IncumbentBound), 0);

        let rot = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, true));
        let p = build_problem(&rot, ProblemMode::Integral, &Incumbent::none()).unwrap();
        assert_eq!(p.count(ConstraintClass::Overlap), 20 * 19 / 2);
        assert_eq!(p.count(ConstraintClass::RotationExclusion), 10);
        assert_eq!(p.count(ConstraintClass::RelaxedIntegrality), 0);
    }

    #[test]
    fn coordinate_bounds_and_boxes() {
        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let bx = model.bounds[0].bx.unwrap();
        assert!((bx - ((4.18f64.powi(2) - 1.61f64.powi(2) / 4.0).sqrt() - 0.55)).abs() < 1e-15);
        let p = build_problem(&model, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let lay = &p.layout;
        let mut v = vec![0.0; p.dim()];
        // α = 0 forces x = y = 0
        v[lay.x(0)] = 1e-3;
        let bounds: Vec<usize> = (0..p.constraints.len())
            .filter(|&k| {
                matches!(p.constraints[k], Constraint::CoordinateBound { rect: 0, .. })
            })
            .collect();
        assert!(bounds.iter().any(|&k| p.constraint_value(k, &v) < 0.0));
        v[lay.x(0)] = 0.0;
        assert!(bounds.iter().all(|&k| p.constraint_value(k, &v) >= 0.0));
        // α = 1: box equals ±(Bx, By)
        v[lay.alpha(0)] = 1.0;
        v[lay.x(0)] = bx;
        v[lay.y(0)] = model.bounds[0].by.unwrap();
        assert!(bounds.iter().all(|&k| p.constraint_value(k, &v).abs() < 1e-12
            || p.constraint_value(k, &v) > 0.0));
        v[lay.x(0)] = bx + 1e-6;
        assert!(bounds.iter().any(|&k| p.constraint_value(k, &v) < 0.0));
    }

    fn corner_rows(p: &ProblemFunctions, rect: usize) -> Vec<usize> {
        (0..p.constraints.len())
            .filter(|&k| matches!(p.constraints[k], Constraint::Corner { rect: r, .. } if r == rect))
            .collect()
    }

    #[test]
    fn corner_constraint_examples() {
        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let p = build_problem(&model, ProblemMode::Integral, &Incumbent::none()).unwrap();
        let mut v = vec![0.0; p.dim()];
        for i in 0..10 {
            for k in corner_rows(&p, i) {
                assert!(p.constraint_value(k, &v).abs() < 1e-12);
            }
        }
        // rect 2 (2.20 x 1.08) at origin, packed
        v[p.layout.alpha(1)] = 1.0;
        let expected = 4.18f64 * 4.18 - (2.2f64 * 2.2 / 4.0 + 1.08 * 1.08 / 4.0);
        assert!((expected - 15.9708).abs() < 1e-9);
        for k in corner_rows(&p, 1) {
            assert!((p.constraint_value(k, &v) - expected).abs() < 1e-12);
        }

        let unit = model_of(&[RawRect::new(1.0, 1.0)], 2.0, ModeFlags::new(ObjectiveMode::Count));
        let p = build_problem(&unit, ProblemMode::Integral, &Incumbent::none()).unwrap();
        let mut v = vec![0.0; p.dim()];
        v[0] = 1.0;
        v[p.layout.x(0)] = 2.0;
        assert!(corner_rows(&p, 0).iter().any(|&k| p.constraint_value(k, &v) < 0.0));
    }

    #[test]
    fn overlap_examples() {
        let raw = [RawRect::new(1.0, 1.0), RawRect::new(1.0, 1.0)];
        let model = model_of(&raw, 3.0, ModeFlags::new(ObjectiveMode::Count));
        let mut p = build_problem(&model, ProblemMode::Integral, &Incumbent::none()).unwrap();
        p.eps_abs = 0.0;
        let k = p
            .constraints
            .iter()
            .position(|c| c.class() == ConstraintClass::Overlap)
            .unwrap();
        let lay = p.layout.clone();
        let mut v = vec![0.0; p.dim()];
        v[lay.x(0)] = 0.3;
        v[lay.y(1)] = -0.2;
        v[lay.alpha(1)] = 1.0;
        // α_0 = 0: vanishes
        assert_eq!(p.constraint_value(k, &v), 0.0);
        v[lay.alpha(0)] = 1.0;
        v[lay.x(0)] = 0.0;
        v[lay.y(1)] = 0.0;
        v[lay.x(1)] = 1.0;
        v[lay.beta(0)] = 1.0;
        assert_eq!(p.constraint_value(k, &v), 0.0);

        assert_eq!(
            overlap_constraints(&model, OverlapForm::SquareBeta),
            Err(FormulationError::SquareCutsNotApplicable)
        );
    }

    #[test]
    fn square_cut_examples() {
        let sq = |sides: &[f64], r: f64| {
            let raw: Vec<_> = sides.iter().map(|&s| RawRect::new(s, s)).collect();
            model_of(&raw, r, ModeFlags::new(ObjectiveMode::Count).squares(true))
        };
        let (ordering, fixed) = square_cuts(&sq(&[1.0, 1.0, 1.0], 1.0)).unwrap();
        assert_eq!(ordering.len(), 2);
        assert!(fixed.is_empty());
        let (_, fixed) = square_cuts(&sq(&[1.0, 2.0], 1.0)).unwrap();
        assert_eq!(fixed, vec![1]);

        let m = sq(&[1.0, 1.0, 1.0], 1.0);
        let p = build_problem(&m, ProblemMode::Integral, &Incumbent::none()).unwrap();
        let ords: Vec<usize> = (0..p.constraints.len())
            .filter(|&k| p.constraints[k].class() == ConstraintClass::Ordering)
            .collect();
        let mut v = vec![0.0; p.dim()];
        v[1] = 1.0;
        assert!(ords.iter().any(|&k| p.constraint_value(k, &v) < 0.0));
        v[0] = 1.0;
        assert!(ords.iter().all(|&k| p.constraint_value(k, &v) >= 0.0));

        let rects = model_of(&[RawRect::new(1.0, 2.0)], 3.0, ModeFlags::new(ObjectiveMode::Count));
        assert!(square_cuts(&rects).is_err());
        let area_sq = model_of(
            &[RawRect::new(1.0, 1.0)],
            3.0,
            ModeFlags::new(ObjectiveMode::Area).squares(true),
        );
        assert!(square_cuts(&area_sq).is_err());
    }

    #[test]
    fn generic_cut_examples() {
        let raw = [RawRect::new(5.0, 5.0), RawRect::new(5.0, 5.0)];
        let model = model_of(&raw, 4.18, ModeFlags::new(ObjectiveMode::Count));
        let cuts = generic_cuts(&model, &Incumbent::none());
        assert!(cuts.contains(&Constraint::PairExclusion {
            i: 0,
            j: 1,
            reason: ExclusionReason::Incompatible
        }));
        assert_eq!(cuts.len(), 2);

        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Area, false));
        let total: f64 = fixtures::REFERENCE_DIMS.iter().map(|(l, w)| l * w).sum();
        assert!((total - 82.1409).abs() < 1e-9);
        assert!(total > model.expanded.container_area());
        let p = build_problem(&model, ProblemMode::Integral, &Incumbent::none()).unwrap();
        let k = p
            .constraints
            .iter()
            .position(|c| *c == Constraint::AreaCut)
            .unwrap();
        let all = vec![1.0; p.dim()];
        assert!(p.constraint_value(k, &all) < 0.0);

        let inc = Incumbent {
            z_best: 3.0,
            packed: BTreeSet::from([1, 2]),
            solution: Some(Default::default()),
        };
        let cuts = generic_cuts(&model, &inc);
        assert!(cuts.iter().any(|c| c.class() == ConstraintClass::IncumbentBound));
        assert!(cuts.iter().any(|c| c.class() == ConstraintClass::SolutionExclusion));
    }

    #[test]
    fn relaxed_integrality_examples() {
        assert!(relaxed_integrality(0.0).is_err());
        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let p = build_problem(&model, ProblemMode::Relaxed { delta: 0.05 }, &Incumbent::none())
            .unwrap();
        let k = p
            .constraints
            .iter()
            .position(|c| c.class() == ConstraintClass::RelaxedIntegrality)
            .unwrap();
        let mut v = vec![0.0; p.dim()];
        for (i, a) in v[..10].iter_mut().enumerate() {
            *a = (i % 2) as f64;
        }
        assert!((p.constraint_value(k, &v) - 0.05).abs() < 1e-15);
        v[..10].fill(0.5);
        assert!((p.constraint_value(k, &v) - (0.05 - 2.5)).abs() < 1e-12);
        v[..10].fill(0.0);
        v[3] = 0.95;
        assert!((p.constraint_value(k, &v) - (0.05 - 0.0475)).abs() < 1e-12);
        assert!(p.constraint_value(k, &v) >= 0.0);
    }

    #[test]
    fn feasibility_build_fixes_alpha() {
        let model = PackingModel::new(&fixtures::reference(ObjectiveMode::Count, false));
        let mut alpha = vec![0.0; 10];
        let p = build_problem(
            &model,
            ProblemMode::Feasibility {
                alpha: alpha.clone(),
            },
            &Incumbent::none(),
        )
        .unwrap();
        assert!(p.lower.iter().zip(&p.upper).take(30).all(|(a, b)| a == b));
        let v = vec![0.0; p.dim()];
        assert!(p.max_violation(&v) < 1e-12);
        assert_eq!(p.objective(&v), 0.0);
        alpha[0] = 0.5;
        assert!(build_problem(&model, ProblemMode::Feasibility { alpha }, &Incumbent::none())
            .is_err());
    }

    #[test]
    fn layout_points_satisfy_integral_model() {
        for known in &fixtures::LAYOUTS {
            let model = PackingModel::new(&known.instance());
            let p = build_problem(&model, ProblemMode::Integral, &Incumbent::none()).unwrap();
            let packed: Vec<_> = known
                .placements()
                .iter()
                .map(|pl| (model.index_of(pl).unwrap(), pl.x, pl.y))
                .collect();
            let mut p0 = p.clone();
            p0.eps_abs = 0.0;
            let v = p0.point_from_positions(&packed);
            assert!(p0.max_violation(&v) < 1e-9, "{}", known.name);
            assert!((p0.objective(&v) - known.value).abs() < 1e-9);
        }
    }
}
