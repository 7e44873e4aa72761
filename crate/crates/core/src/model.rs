//! Problem and solution data shared by every other module.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What a packed rectangle is worth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// Every rectangle is worth 1.
    Count,
    /// A rectangle is worth its area.
    Area,
    /// Values supplied with the input.
    Value,
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectiveMode::Count => "count",
            ObjectiveMode::Area => "area",
            ObjectiveMode::Value => "value",
        };
        f.write_str(s)
    }
}

/// An axis-aligned rectangle: `length` along x, `width` along y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    /// 1-based position in the (possibly rotation-expanded) list.
    pub id: usize,
    pub length: f64,
    pub width: f64,
    pub value: f64,
    /// Set on copies generated by rotation expansion; names the original.
    pub rotated_copy_of: Option<usize>,
}

impl Rectangle {
    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn is_square(&self) -> bool {
        self.length == self.width
    }

    /// The id a user sees: rotated copies report their original.
    pub fn original_id(&self) -> usize {
        self.rotated_copy_of.unwrap_or(self.id)
    }
}

/// A rectangle as read from input, before ordering and valuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRect {
    pub length: f64,
    pub width: f64,
    pub value: Option<f64>,
}

impl RawRect {
    pub fn new(length: f64, width: f64) -> Self {
        Self {
            length,
            width,
            value: None,
        }
    }

    pub fn with_value(length: f64, width: f64, value: f64) -> Self {
        Self {
            length,
            width,
            value: Some(value),
        }
    }
}

/// Flags controlling how an instance is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeFlags {
    pub objective: ObjectiveMode,
    pub rotation_allowed: bool,
    pub square_mode: bool,
}

impl ModeFlags {
    pub fn new(objective: ObjectiveMode) -> Self {
        Self {
            objective,
            rotation_allowed: false,
            square_mode: false,
        }
    }

    pub fn rotate(mut self, on: bool) -> Self {
        self.rotation_allowed = on;
        self
    }

    pub fn squares(mut self, on: bool) -> Self {
        self.square_mode = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("container radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("rectangle {index} has non-positive or non-finite dimension ({length} x {width})")]
    BadDimension {
        index: usize,
        length: f64,
        width: f64,
    },
    #[error("rectangle {index} has a non-finite value")]
    BadValue { index: usize },
    #[error("rectangle {index} has no value but the objective mode is `value`")]
    MissingValue { index: usize },
    #[error("square mode requires equal sides, rectangle {index} is {length} x {width}")]
    NotSquare {
        index: usize,
        length: f64,
        width: f64,
    },
    #[error("rotation is meaningless in square mode")]
    RotationWithSquares,
}

/// A normalized packing instance. Rectangles are ordered by nondecreasing
/// area and carry explicit values whatever the objective mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub radius: f64,
    pub rectangles: Vec<Rectangle>,
    pub objective: ObjectiveMode,
    pub rotation_allowed: bool,
    pub square_mode: bool,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    pub fn rect(&self, id: usize) -> Option<&Rectangle> {
        id.checked_sub(1).and_then(|i| self.rectangles.get(i))
    }

    pub fn container_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn flags(&self) -> ModeFlags {
        ModeFlags {
            objective: self.objective,
            rotation_allowed: self.rotation_allowed,
            square_mode: self.square_mode,
        }
    }

    /// Raw view of the rectangles; values are kept only in value mode.
    pub fn raw(&self) -> Vec<RawRect> {
        self.rectangles
            .iter()
            .map(|r| RawRect {
                length: r.length,
                width: r.width,
                value: (self.objective == ObjectiveMode::Value).then_some(r.value),
            })
            .collect()
    }
}

/// Validates the input, stably sorts by area, assigns ids `1..=n` and fills
/// in values according to the objective mode.
pub fn normalize_instance(
    raw: &[RawRect],
    radius: f64,
    flags: ModeFlags,
) -> Result<Instance, InstanceError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(InstanceError::BadRadius(radius));
    }
    if flags.square_mode && flags.rotation_allowed {
        return Err(InstanceError::RotationWithSquares);
    }
    for (k, r) in raw.iter().enumerate() {
        let index = k + 1;
        let ok = |d: f64| d.is_finite() && d > 0.0;
        if !ok(r.length) || !ok(r.width) {
            return Err(InstanceError::BadDimension {
                index,
                length: r.length,
                width: r.width,
            });
        }
        if let Some(v) = r.value {
            if !v.is_finite() {
                return Err(InstanceError::BadValue { index });
            }
        }
        if flags.objective == ObjectiveMode::Value && r.value.is_none() {
            return Err(InstanceError::MissingValue { index });
        }
        if flags.square_mode && r.length != r.width {
            return Err(InstanceError::NotSquare {
                index,
                length: r.length,
                width: r.width,
            });
        }
    }

    let mut order: Vec<usize> = (0..raw.len()).collect();
    // sort_by is stable: equal areas keep input order
    order.sort_by(|&a, &b| {
        let aa = raw[a].length * raw[a].width;
        let ab = raw[b].length * raw[b].width;
        aa.total_cmp(&ab)
    });

    let rectangles = order
        .into_iter()
        .enumerate()
        .map(|(k, src)| {
            let r = raw[src];
            let value = match flags.objective {
                ObjectiveMode::Count => 1.0,
                ObjectiveMode::Area => r.length * r.width,
                ObjectiveMode::Value => r.value.unwrap_or(0.0),
            };
            Rectangle {
                id: k + 1,
                length: r.length,
                width: r.width,
                value,
                rotated_copy_of: None,
            }
        })
        .collect();

    Ok(Instance {
        radius,
        rectangles,
        objective: flags.objective,
        rotation_allowed: flags.rotation_allowed,
        square_mode: flags.square_mode,
    })
}

/// Centre position of a packed rectangle. `rect_id` always names an
/// original rectangle; `rotated` means its sides are swapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    #[serde(rename = "id")]
    pub rect_id: usize,
    pub x: f64,
    pub y: f64,
    pub rotated: bool,
}

impl Placement {
    pub fn new(rect_id: usize, x: f64, y: f64) -> Self {
        Self {
            rect_id,
            x,
            y,
            rotated: false,
        }
    }

    pub fn rotated(rect_id: usize, x: f64, y: f64) -> Self {
        Self {
            rect_id,
            x,
            y,
            rotated: true,
        }
    }

    /// (x-extent, y-extent) of `rect` in this orientation.
    pub fn extents(&self, rect: &Rectangle) -> (f64, f64) {
        if self.rotated {
            (rect.width, rect.length)
        } else {
            (rect.length, rect.width)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PackingSolution {
    pub placements: Vec<Placement>,
    pub objective_value: f64,
    pub verified: bool,
    pub max_violation: f64,
}

impl PackingSolution {
    pub fn empty() -> Self {
        Self {
            placements: Vec::new(),
            objective_value: 0.0,
            verified: true,
            max_violation: 0.0,
        }
    }

    /// Sum of values over the placements, looked up in `inst`.
    /// Unknown ids contribute nothing.
    pub fn value_in(inst: &Instance, placements: &[Placement]) -> f64 {
        placements
            .iter()
            .filter_map(|p| inst.rect(p.rect_id))
            .map(|r| r.value)
            .sum()
    }
}

/// Best verified packing seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub z_best: f64,
    /// Packed ids over the rotation-expanded list.
    pub packed: BTreeSet<usize>,
    pub solution: Option<PackingSolution>,
}

impl Default for Incumbent {
    fn default() -> Self {
        Self::none()
    }
}

impl Incumbent {
    pub fn none() -> Self {
        Self {
            z_best: f64::NEG_INFINITY,
            packed: BTreeSet::new(),
            solution: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.solution.is_none()
    }

    pub fn from_solution(packed: BTreeSet<usize>, solution: PackingSolution) -> Self {
        Self {
            z_best: solution.objective_value,
            packed,
            solution: Some(solution),
        }
    }
}
