//! Random instances: sides drawn uniformly from `[1, 5]` at two decimals,
//! radius chosen so the circle covers a given fraction of the total area.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::InstanceFile;
use crate::model::RawRect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Square,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Side drawn from the grid `1.00, 1.01, …, 5.00`.
fn side<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(100u32..=500) as f64 / 100.0
}

/// `R = √(f·ΣLW/π)` rounded to two decimals.
pub fn radius_for(rects: &[RawRect], fraction: f64) -> f64 {
    let total: f64 = rects.iter().map(|r| r.length * r.width).sum();
    round2((fraction * total / std::f64::consts::PI).sqrt())
}

/// Same `(n, fraction, shape, seed)` always gives the same instance.
pub fn generate(n: usize, fraction: f64, shape: Shape, seed: u64) -> InstanceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rects: Vec<RawRect> = (0..n)
        .map(|_| {
            let l = side(&mut rng);
            let w = match shape {
                Shape::Rect => side(&mut rng),
                Shape::Square => l,
            };
            RawRect::new(l, w)
        })
        .collect();
    InstanceFile {
        radius: radius_for(&rects, fraction),
        rects,
    }
}
