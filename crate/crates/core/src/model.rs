//! Procedural target geometry.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::icp::SurfaceModel;
use crate::scalar::{lit, Real};

/// Fixed seed so that a given `(size, points)` always yields the same model.
const MODEL_SEED: u64 = 0x5a7e_111e;

/// Shapes understood by [`build_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Box bus with an off-centre mast and a dish on one side.
    Satellite,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "satellite" => Ok(Shape::Satellite),
            other => Err(Error::InvalidConfig(format!("unknown model shape '{other}'"))),
        }
    }
}

struct Part {
    area: f64,
    sample: fn(&mut ChaCha8Rng) -> Vector3<f64>,
}

const BUS: [f64; 3] = [0.8, 0.6, 0.5];
const MAST_AT: [f64; 2] = [0.22, 0.12];
const MAST_RADIUS: f64 = 0.035;
const MAST_LENGTH: f64 = 0.45;
const DISH_RADIUS: f64 = 0.24;
const DISH_DEPTH: f64 = 0.07;
const DISH_CENTER: [f64; 3] = [-0.15, 0.42, 0.08];

fn bus_surface(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let [a, b, c] = BUS;
    let faces = [b * c, b * c, a * c, a * c, a * b, a * b];
    let total: f64 = faces.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut face = 0;
    while pick >= faces[face] {
        pick -= faces[face];
        face += 1;
    }
    let u: f64 = rng.random_range(-0.5..0.5);
    let v: f64 = rng.random_range(-0.5..0.5);
    let sign = if face % 2 == 0 { 0.5 } else { -0.5 };
    match face / 2 {
        0 => Vector3::new(sign * a, u * b, v * c),
        1 => Vector3::new(u * a, sign * b, v * c),
        _ => Vector3::new(u * a, v * b, sign * c),
    }
}

fn mast_surface(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let th = rng.random_range(0.0..std::f64::consts::TAU);
    let z = BUS[2] / 2.0 + rng.random_range(0.0..MAST_LENGTH);
    Vector3::new(MAST_AT[0] + MAST_RADIUS * th.cos(), MAST_AT[1] + MAST_RADIUS * th.sin(), z)
}

/// Paraboloid cap opening towards +y, sampled uniformly in the aperture.
fn dish_surface(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let r = DISH_RADIUS * rng.random_range(0.0f64..1.0).sqrt();
    let th = rng.random_range(0.0..std::f64::consts::TAU);
    let depth = DISH_DEPTH * (r / DISH_RADIUS).powi(2);
    Vector3::new(
        DISH_CENTER[0] + r * th.cos(),
        DISH_CENTER[1] - DISH_DEPTH + depth,
        DISH_CENTER[2] + r * th.sin(),
    )
}

fn parts() -> [Part; 3] {
    let [a, b, c] = BUS;
    [
        Part {
            area: 2.0 * (a * b + b * c + a * c),
            sample: bus_surface,
        },
        Part {
            area: std::f64::consts::TAU * MAST_RADIUS * MAST_LENGTH,
            sample: mast_surface,
        },
        Part {
            area: std::f64::consts::PI * DISH_RADIUS * DISH_RADIUS,
            sample: dish_surface,
        },
    ]
}

/// Surface points of a procedural shape, spread in proportion to area
/// and scaled by `size` (a size of 1 gives a body about 1 m across).
pub fn model_points<T: Real>(shape: Shape, size: T, count: usize) -> Result<Vec<Vector3<T>>> {
    if count < 3 {
        return Err(Error::InvalidConfig(format!("model needs at least 3 points, got {count}")));
    }
    if !(size > T::zero()) {
        return Err(Error::InvalidConfig("model size must be positive".into()));
    }
    let Shape::Satellite = shape;
    let parts = parts();
    let total: f64 = parts.iter().map(|p| p.area).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(MODEL_SEED);
    let mut out = Vec::with_capacity(count);
    let mut assigned = 0;
    for (k, part) in parts.iter().enumerate() {
        let n = if k + 1 == parts.len() {
            count - assigned
        } else {
            ((part.area / total) * count as f64).round() as usize
        };
        assigned += n;
        for _ in 0..n {
            out.push((part.sample)(&mut rng).map(lit::<T>) * size);
        }
    }
    Ok(out)
}

pub fn build_model<T: Real>(shape: Shape, size: T, count: usize) -> Result<SurfaceModel<T>> {
    SurfaceModel::new(model_points(shape, size, count)?)
}
