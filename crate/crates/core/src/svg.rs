//! SVG drawings of packings.

use std::fmt::Write as _;

use crate::model::{Instance, PackingSolution};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 12.0;

/// Affine map from model coordinates (y up, origin at the circle centre)
/// to SVG user units (y down). The same scale is used on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgMap {
    pub scale: f64,
    pub centre: f64,
}

impl SvgMap {
    pub fn for_radius(radius: f64) -> Self {
        Self {
            scale: (0.5 * SIZE - MARGIN) / radius,
            centre: 0.5 * SIZE,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.centre + self.scale * x, self.centre - self.scale * y)
    }
}

/// Draws the container, every placement and its id (with an `r` suffix for
/// rotated placements). Unknown ids are skipped.
pub fn render(inst: &Instance, sol: &PackingSolution) -> String {
    let map = SvgMap::for_radius(inst.radius);
    let mut s = String::new();
    let w = |s: &mut String, args: std::fmt::Arguments| s.write_fmt(args).expect("writing to a String");
    w(
        &mut s,
        format_args!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
        ),
    );
    w(
        &mut s,
        format_args!(
            "  <circle cx=\"{c}\" cy=\"{c}\" r=\"{r:.3}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            c = map.centre,
            r = map.scale * inst.radius
        ),
    );
    for p in &sol.placements {
        let Some(rect) = inst.rect(p.rect_id) else {
            continue;
        };
        let (l, h) = p.extents(rect);
        let (x0, y0) = map.apply(p.x - 0.5 * l, p.y + 0.5 * h);
        let (cx, cy) = map.apply(p.x, p.y);
        let label = if p.rotated {
            format!("{}r", p.rect_id)
        } else {
            p.rect_id.to_string()
        };
        w(
            &mut s,
            format_args!(
                "  <rect x=\"{x0:.3}\" y=\"{y0:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"#dde6f0\" stroke=\"black\"/>\n",
                map.scale * l,
                map.scale * h
            ),
        );
        w(
            &mut s,
            format_args!(
                "  <text x=\"{cx:.3}\" y=\"{cy:.3}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" dominant-baseline=\"central\">{label}</text>\n"
            ),
        );
    }
    s.push_str("</svg>\n");
    s
}
