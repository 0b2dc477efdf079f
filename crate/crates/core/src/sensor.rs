//! Synthetic range scanner: partial-view, noisy samples of the surface
//! model at the true pose, and blackout windows.

use nalgebra::Vector3;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::icp::{PointCloud, Pose, SurfaceModel};
use crate::scalar::{lit, to_f64, Real};

/// A timestamped scan in the sensor frame. Invalid frames carry no points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame<T: Real> {
    pub cloud: PointCloud<T>,
    pub time: T,
    pub valid: bool,
    /// Model index each scan point was drawn from.
    pub sources: Vec<usize>,
}

impl<T: Real> ScanFrame<T> {
    pub fn invalid(time: T) -> Self {
        Self {
            cloud: PointCloud::empty(),
            time,
            valid: false,
            sources: Vec::new(),
        }
    }
}

/// Sorted, non-overlapping blackout windows `[start, end)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultSchedule<T: Real> {
    windows: Vec<(T, T)>,
}

impl<T: Real> FaultSchedule<T> {
    pub fn new(windows: Vec<(T, T)>) -> Result<Self> {
        for (i, &(a, b)) in windows.iter().enumerate() {
            if !(a < b) {
                return Err(Error::InvalidSchedule(format!(
                    "window {i} has start {} not before end {}",
                    to_f64(a),
                    to_f64(b)
                )));
            }
            if i > 0 && a < windows[i - 1].1 {
                return Err(Error::InvalidSchedule(format!(
                    "window {i} overlaps or precedes window {}",
                    i - 1
                )));
            }
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[(T, T)] {
        &self.windows
    }

    pub fn is_blacked_out(&self, t: T) -> bool {
        self.windows.iter().any(|&(a, b)| a <= t && t < b)
    }
}

/// Draws `m` distinct model points facing the sensor, places them at
/// `true_pose` and adds isotropic Gaussian noise of `sigma` per axis.
///
/// A model point faces the sensor when its outward direction from the
/// model centroid, rotated into the sensor frame, has a negative dot
/// product with `view_dir`. If fewer than `m` points face the sensor the
/// whole model is eligible.
pub fn sample_scan<T: Real>(
    model: &SurfaceModel<T>,
    true_pose: &Pose<T>,
    m: usize,
    sigma: T,
    seed: u64,
    view_dir: &Vector3<T>,
    time: T,
) -> Result<ScanFrame<T>> {
    if model.len() < 3 {
        return Err(Error::DegenerateCorrespondences(model.len()));
    }
    if m < 3 {
        return Err(Error::InvalidConfig(format!("scan needs at least 3 points, got {m}")));
    }
    if !(sigma >= T::zero()) {
        return Err(Error::InvalidConfig("scan noise must be non-negative".into()));
    }
    let rot = true_pose.rotation.to_rotation();
    let c = model.centroid();
    let facing: Vec<usize> = model
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| (rot * (*p - c)).dot(view_dir) < T::zero())
        .map(|(i, _)| i)
        .collect();
    let pool: Vec<usize> = if facing.len() >= m {
        facing
    } else {
        (0..model.len()).collect()
    };
    let take = m.min(pool.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources: Vec<usize> = index::sample(&mut rng, pool.len(), take)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    sources.sort_unstable();
    let normal = Normal::new(0.0, to_f64(sigma)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let points = sources
        .iter()
        .map(|&i| {
            let noise = Vector3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
            true_pose.transform_point(&model.points()[i]) + noise.map(lit::<T>)
        })
        .collect();
    Ok(ScanFrame {
        cloud: PointCloud::new(points)?,
        time,
        valid: true,
        sources,
    })
}

/// Invalidates `frame` if `t` falls inside a blackout window.
pub fn apply_faults<T: Real>(t: T, frame: ScanFrame<T>, sched: &FaultSchedule<T>) -> ScanFrame<T> {
    if sched.is_blacked_out(t) {
        ScanFrame::invalid(frame.time)
    } else {
        frame
    }
}
