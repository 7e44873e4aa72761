//! Reference data: the ten-rectangle instance with container radius 4.18
//! and four known packings of it.
//!
//! The packings were transcribed from drawings made at a container radius
//! of 4.0; [`LayoutRect::placement`] rescales them to the true radius.

use crate::model::{
    normalize_instance, Instance, ModeFlags, ObjectiveMode, Placement, RawRect,
};

pub const REFERENCE_RADIUS: f64 = 4.18;

/// Radius the drawings were made at.
pub const DRAWING_RADIUS: f64 = 4.0;

/// (length, width) pairs, already in ascending area order.
pub const REFERENCE_DIMS: [(f64, f64); 10] = [
    (1.10, 1.61),
    (2.20, 1.08),
    (1.68, 1.46),
    (1.82, 2.61),
    (2.70, 2.57),
    (3.21, 2.21),
    (2.99, 3.51),
    (3.68, 3.42),
    (4.62, 3.36),
    (3.79, 4.79),
];

pub fn reference_raw() -> Vec<RawRect> {
    REFERENCE_DIMS.iter().map(|&(l, w)| RawRect::new(l, w)).collect()
}

pub fn reference(objective: ObjectiveMode, rotate: bool) -> Instance {
    normalize_instance(
        &reference_raw(),
        REFERENCE_RADIUS,
        ModeFlags::new(objective).rotate(rotate),
    )
    .expect("reference instance is valid")
}

/// One drawn rectangle, corner coordinates in drawing units.
#[derive(Debug, Clone, Copy)]
pub struct LayoutRect {
    pub id: usize,
    pub rotated: bool,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl LayoutRect {
    pub fn placement(&self) -> Placement {
        let s = REFERENCE_RADIUS / DRAWING_RADIUS;
        Placement {
            rect_id: self.id,
            x: 0.5 * (self.left + self.right) * s,
            y: 0.5 * (self.top + self.bottom) * s,
            rotated: self.rotated,
        }
    }
}

/// A known packing with its stated objective value.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub name: &'static str,
    pub objective: ObjectiveMode,
    pub rotate: bool,
    pub value: f64,
    pub rects: &'static [LayoutRect],
}

impl Layout {
    pub fn instance(&self) -> Instance {
        reference(self.objective, self.rotate)
    }

    pub fn placements(&self) -> Vec<Placement> {
        self.rects.iter().map(LayoutRect::placement).collect()
    }
}

pub const LAYOUTS: [Layout; 4] = [
    Layout {
        name: "count, fixed orientation",
        objective: ObjectiveMode::Count,
        rotate: false,
        value: 7.0,
        rects: LAYOUT_COUNT,
    },
    Layout {
        name: "area, fixed orientation",
        objective: ObjectiveMode::Area,
        rotate: false,
        value: 37.6878,
        rects: LAYOUT_AREA,
    },
    Layout {
        name: "count, rotation allowed",
        objective: ObjectiveMode::Count,
        rotate: true,
        value: 7.0,
        rects: LAYOUT_COUNT_ROTATED,
    },
    Layout {
        name: "area, rotation allowed",
        objective: ObjectiveMode::Area,
        rotate: true,
        value: 37.9687,
        rects: LAYOUT_AREA_ROTATED,
    },
];

pub const LAYOUT_COUNT: &[LayoutRect] = &[
    LayoutRect { id: 1, rotated: false, left: 1.9932421266, right: 3.0458737055, top: 2.5819847248, bottom: 1.0413148683 },
    LayoutRect { id: 2, rotated: false, left: -1.3708925903, right: 0.7343705676, top: -2.7238255537, bottom: -3.7573183766 },
    LayoutRect { id: 3, rotated: false, left: -3.3536964542, right: -1.7460409518, top: 0.5177975242, bottom: -0.8793316624 },
    LayoutRect { id: 4, rotated: false, left: 0.2142232266, right: 1.9558500209, top: 3.4840098845, bottom: 0.9864022290 },
    LayoutRect { id: 5, rotated: false, left: 1.1232391583, right: 3.7069712157, top: 0.9598781146, bottom: -1.4994520290 },
    LayoutRect { id: 6, rotated: false, left: -2.8739925679, right: 0.1977777670, top: 2.7765491539, bottom: 0.6617166180 },
    LayoutRect { id: 7, rotated: false, left: -1.7417140510, right: 1.1195299681, top: 0.6371167752, bottom: -2.7217348994 },
];

pub const LAYOUT_AREA: &[LayoutRect] = &[
    LayoutRect { id: 2, rotated: false, left: -3.8119666423, right: -1.7067034844, top: 1.2119448296, bottom: 0.1784520066 },
    LayoutRect { id: 3, rotated: false, left: 1.8149071928, right: 3.4225626952, top: 2.0702592042, bottom: 0.6731300176 },
    LayoutRect { id: 4, rotated: false, left: 1.8179796510, right: 3.5596064452, top: 0.6730196307, bottom: -1.8245880248 },
    LayoutRect { id: 8, rotated: false, left: -1.7066640310, right: 1.8148670695, top: 3.5266392263, bottom: 0.2539119536 },
    LayoutRect { id: 9, rotated: false, left: -2.6031074615, right: 1.8179451701, top: 0.1782446930, bottom: -3.0370663117 },
];

pub const LAYOUT_COUNT_ROTATED: &[LayoutRect] = &[
    LayoutRect { id: 1, rotated: false, left: 1.8712887942, right: 2.9239203731, top: -1.1835039534, bottom: -2.7241738098 },
    LayoutRect { id: 3, rotated: false, left: -2.6235913891, right: -1.0159358867, top: -1.6145026574, bottom: -3.0116318440 },
    LayoutRect { id: 5, rotated: false, left: -3.6064450445, right: -1.0227129871, top: 0.8593985441, bottom: -1.5999315994 },
    LayoutRect { id: 6, rotated: false, left: -2.6445929091, right: 0.4271774259, top: 2.9919662931, bottom: 0.8771337572 },
    LayoutRect { id: 7, rotated: false, left: -0.9992337899, right: 1.8620102292, top: 0.5050789081, bottom: -2.8537727665 },
    LayoutRect { id: 2, rotated: true, left: 2.0597582061, right: 3.0932510290, top: 0.9321285414, bottom: -1.1731346165 },
    LayoutRect { id: 4, rotated: true, left: 0.4470410778, right: 2.9446487333, top: 2.6948539495, bottom: 0.9532271552 },
];

pub const LAYOUT_AREA_ROTATED: &[LayoutRect] = &[
    LayoutRect { id: 2, rotated: false, left: -1.6459982931, right: 0.4592648648, top: 3.6374193994, bottom: 2.6039265764 },
    LayoutRect { id: 6, rotated: false, left: -2.8395332087, right: 0.2322371262, top: -0.7018428058, bottom: -2.8166753417 },
    LayoutRect { id: 8, rotated: false, left: -3.0626262509, right: 0.4589048496, top: 2.5729737923, bottom: -0.6997534805 },
    LayoutRect { id: 1, rotated: true, left: -0.5635507165, right: 0.9771191400, top: -2.8242854782, bottom: -3.8769170572 },
    LayoutRect { id: 3, rotated: true, left: 0.6431945584, right: 2.0403237450, top: 3.4222022955, bottom: 1.8145467931 },
    LayoutRect { id: 4, rotated: true, left: 0.4079414892, right: 2.9055491447, top: -0.9825721177, bottom: -2.7241989119 },
    LayoutRect { id: 5, rotated: true, left: 1.0480184995, right: 3.5073486430, top: 1.7564082241, bottom: -0.8273238333 },
];

