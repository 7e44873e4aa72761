//! Packing unequal rectangles and squares into a fixed circular container.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: instances, placements and solutions.
//! * [`geometry`]: exact containment and overlap checks.
//! * [`formulation`]: the packing model as evaluable nonlinear programs.
//! * [`nlp`]: an augmented-Lagrangian local solver with multistart.
//! * [`fss`]: the formulation space search driver.
//! * [`io`], [`generator`], [`oracle`], [`svg`]: file formats, instance
//!   generation, a small-instance reference solver and rendering.

pub mod fixtures;
pub mod formulation;
pub mod fss;
pub mod generator;
pub mod geometry;
pub mod io;
pub mod model;
pub mod nlp;
pub mod oracle;
pub mod svg;

pub use model::{
    normalize_instance, Incumbent, Instance, ModeFlags, ObjectiveMode, PackingSolution, Placement,
    RawRect, Rectangle,
};
