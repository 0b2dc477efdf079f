//! Point-to-point ICP registration against a surface model.
//!
//! The scan `U` lives in the sensor frame; the model `M` in the target's
//! reference frame. A registration pose `{A, r}` maps scan points into the
//! model frame, `v ≈ A·u + r`, and each iteration pairs every transformed
//! scan point with its nearest model point before solving the
//! corresponding absolute-orientation problem in closed form.

mod eigen;
mod kdtree;

pub use eigen::{jacobi_sym4, max_eigenvector_sym4, DominantEigen, SymEigen4};
pub use kdtree::{nearest_linear, KdTree};

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;
use crate::scalar::{lit, Real};

/// Ordered set of 3-D points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<T: Real> {
    points: Vec<Vector3<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vector3<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::Ply("non-finite coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<T> {
        centroid(&self.points)
    }

    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
        }
    }

    pub fn into_points(self) -> Vec<Vector3<T>> {
        self.points
    }
}

fn centroid<T: Real>(points: &[Vector3<T>]) -> Vector3<T> {
    let m: T = lit(points.len() as f64);
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / m
}

/// Model point set with its nearest-point index.
#[derive(Debug, Clone)]
pub struct SurfaceModel<T: Real> {
    tree: KdTree<T>,
    centroid: Vector3<T>,
    radius: T,
}

impl<T: Real> SurfaceModel<T> {
    pub fn new(points: Vec<Vector3<T>>) -> Result<Self> {
        let cloud = PointCloud::new(points)?;
        let c = cloud.centroid();
        let radius = cloud
            .points()
            .iter()
            .map(|p| (p - c).norm())
            .fold(T::zero(), |a, b| a.max(b));
        Ok(Self {
            tree: KdTree::build(cloud.points()),
            centroid: c,
            radius,
        })
    }

    pub fn points(&self) -> &[Vector3<T>] {
        self.tree.points()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn centroid(&self) -> Vector3<T> {
        self.centroid
    }

    /// Largest distance of a model point from the model centroid.
    pub fn characteristic_radius(&self) -> T {
        self.radius
    }

    pub fn nearest(&self, query: &Vector3<T>) -> (usize, T) {
        self.tree.nearest(query).expect("model is non-empty")
    }
}

/// Rigid transform `x ↦ A(q)·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn transform_point(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.to_rotation() * x + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.circledast(&other.rotation),
            translation: self.rotation.to_rotation() * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.conjugate();
        Self {
            rotation: inv,
            translation: -(inv.to_rotation() * self.translation),
        }
    }

    /// Geodesic rotation angle and translation distance to `other`.
    pub fn error_to(&self, other: &Self) -> (T, T) {
        (
            self.rotation.angle_to(&other.rotation),
            (self.translation - other.translation).norm(),
        )
    }
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

/// For each scan point, the model point nearest to `A0·u + r0`.
pub fn nearest_correspondences<T: Real>(
    scan: &PointCloud<T>,
    model: &SurfaceModel<T>,
    pose: &Pose<T>,
) -> Result<PointCloud<T>> {
    if scan.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let a = pose.rotation.to_rotation();
    let pts = scan
        .points()
        .iter()
        .map(|u| model.points()[model.nearest(&(a * u + pose.translation)).0])
        .collect();
    Ok(PointCloud { points: pts })
}

/// Cross-covariance `S = (1/m)·Σ v uᵀ − v̄ ūᵀ` with the two centroids.
pub fn cross_covariance<T: Real>(
    v: &PointCloud<T>,
    u: &PointCloud<T>,
) -> Result<(Matrix3<T>, Vector3<T>, Vector3<T>)> {
    if v.len() != u.len() {
        return Err(Error::SizeMismatch(v.len(), u.len()));
    }
    if u.len() < 3 {
        return Err(Error::DegenerateCorrespondences(u.len()));
    }
    let m: T = lit(u.len() as f64);
    let vbar = v.centroid();
    let ubar = u.centroid();
    let sum = v
        .points()
        .iter()
        .zip(u.points())
        .fold(Matrix3::zeros(), |acc, (vi, ui)| acc + vi * ui.transpose());
    Ok((sum / m - vbar * ubar.transpose(), vbar, ubar))
}

/// Symmetric 4×4 matrix whose dominant eigenvector solves the rotation
/// part of the alignment. Row/column 0 pairs with the scalar part.
pub fn alignment_matrix<T: Real>(s: &Matrix3<T>) -> Matrix4<T> {
    let g = |i: usize, j: usize| s[(i - 1, j - 1)];
    let mut w = Matrix4::zeros();
    w[(0, 0)] = g(1, 1) + g(2, 2) + g(3, 3);
    w[(1, 0)] = g(2, 3) - g(3, 2);
    w[(1, 1)] = g(1, 1) - g(2, 2) - g(3, 3);
    w[(2, 0)] = g(3, 1) - g(1, 3);
    w[(2, 1)] = g(2, 1) + g(1, 2);
    w[(2, 2)] = -g(1, 1) + g(2, 2) - g(3, 3);
    w[(3, 0)] = g(1, 2) - g(2, 1);
    w[(3, 1)] = g(3, 1) + g(1, 3);
    w[(3, 2)] = g(2, 3) + g(3, 2);
    w[(3, 3)] = -g(1, 1) - g(2, 2) + g(3, 3);
    for i in 0..4 {
        for j in (i + 1)..4 {
            w[(i, j)] = w[(j, i)];
        }
    }
    w
}

/// Closed-form least-squares rigid alignment of corresponded sets.
#[derive(Debug, Clone, Copy)]
pub struct Alignment<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
    /// Mean squared distance `(1/m)·Σ‖A·u + r − v‖²` at the solution.
    pub residual: T,
}

impl<T: Real> Alignment<T> {
    pub fn pose(&self) -> Pose<T> {
        Pose::new(self.rotation, self.translation)
    }
}

/// Finds `{A, r}` minimizing `(1/m)·Σ‖A·u_i + r − v_i‖²`.
pub fn horn_align<T: Real>(u: &PointCloud<T>, v: &PointCloud<T>) -> Result<Alignment<T>> {
    let (s, vbar, ubar) = cross_covariance(v, u)?;
    let w = alignment_matrix(&s);
    let dom = max_eigenvector_sym4(&w)?;
    let gap = (dom.lambda_max - dom.lambda_second) / dom.lambda_max.abs().max(T::one());
    if gap < lit(1e-9) {
        return Err(Error::AlignmentAmbiguous);
    }
    // With S built as cov(V, U) the eigenvector is the conjugate of the
    // u → v rotation in this module's quaternion convention.
    let xi = dom.vector;
    let rotation = UnitQuaternion::new(Vector3::new(-xi[1], -xi[2], -xi[3]), xi[0]);
    let a = rotation.to_rotation();
    let translation = vbar - a * ubar;
    let m: T = lit(u.len() as f64);
    let residual = u
        .points()
        .iter()
        .zip(v.points())
        .fold(T::zero(), |acc, (ui, vi)| acc + (a * ui + translation - vi).norm_squared())
        / m;
    Ok(Alignment {
        rotation,
        translation,
        residual,
    })
}

/// Termination settings for [`icp_register`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOptions<T: Real> {
    /// Residual threshold (m²).
    pub d_min: T,
    pub max_iter: usize,
}

impl<T: Real> IcpOptions<T> {
    /// `d_min = σ²` for per-axis scan noise `σ`, 50 iterations.
    ///
    /// Nearest-neighbour residuals of a well-registered noisy scan settle
    /// near `1.3σ²`, so this threshold is rarely met and registration
    /// usually spends its full iteration budget. A looser `(2σ)²` would be
    /// met from a seed that is still a few degrees off.
    pub fn for_noise(sigma: T) -> Self {
        Self {
            d_min: sigma * sigma,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult<T: Real> {
    pub pose: Pose<T>,
    /// Mean squared distance after the last alignment (m²).
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// `√residual / characteristic radius`.
    pub fit_normalized: T,
    /// Residual after each iteration.
    pub history: Vec<T>,
}

/// Iterates correspondence search and closed-form alignment from `pose0`
/// until the residual reaches `d_min` or `max_iter` iterations have run.
/// Running out of iterations is reported through `converged = false`.
pub fn icp_register<T: Real>(
    scan: &PointCloud<T>,
    model: &SurfaceModel<T>,
    pose0: &Pose<T>,
    opts: &IcpOptions<T>,
) -> Result<IcpResult<T>> {
    if scan.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let max_iter = opts.max_iter.max(1);
    let mut pose = *pose0;
    let mut history = Vec::with_capacity(max_iter);
    let mut converged = false;
    for _ in 0..max_iter {
        let moved = scan.transformed(&pose);
        let v = nearest_correspondences(&moved, model, &Pose::identity())?;
        let step = horn_align(&moved, &v)?;
        pose = step.pose().compose(&pose);
        history.push(step.residual);
        if step.residual <= opts.d_min {
            converged = true;
            break;
        }
    }
    let residual = *history.last().expect("at least one iteration");
    Ok(IcpResult {
        pose,
        residual,
        iterations: history.len(),
        converged,
        fit_normalized: residual.max(T::zero()).sqrt() / model.characteristic_radius(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v / v.norm();
            }
        }
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let axis = random_unit(rng);
        let angle = rng.random_range(-3.0..3.0);
        let t = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        Pose::new(UnitQuaternion::from_axis_angle(&axis, angle), t)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, m: usize) -> PointCloud<f64> {
        PointCloud::new((0..m).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect())
            .unwrap()
    }

    fn grid_model() -> SurfaceModel<f64> {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..6 {
                for k in 0..4 {
                    pts.push(Vector3::new(i as f64 * 0.1, j as f64 * 0.13, k as f64 * 0.17 + 0.01 * (i * j) as f64));
                }
            }
        }
        SurfaceModel::new(pts).unwrap()
    }

    fn cost(u: &PointCloud<f64>, v: &PointCloud<f64>, p: &Pose<f64>) -> f64 {
        u.points()
            .iter()
            .zip(v.points())
            .map(|(a, b)| (p.transform_point(a) - b).norm_squared())
            .sum::<f64>()
            / u.len() as f64
    }

    #[test]
    fn single_model_point_corresponds_to_itself() {
        let model = grid_model();
        let p = model.points()[17];
        let u = PointCloud::new(vec![p]).unwrap();
        let v = nearest_correspondences(&u, &model, &Pose::identity()).unwrap();
        assert_eq!(v.points()[0], p);
    }

    #[test]
    fn slightly_shifted_points_find_originals() {
        let model = grid_model();
        let eps = Vector3::new(1e-3, 0.0, 0.0);
        let u = PointCloud::new(model.points().iter().map(|p| p + eps).collect()).unwrap();
        let v = nearest_correspondences(&u, &model, &Pose::identity()).unwrap();
        assert_eq!(v.points(), model.points());
    }

    #[test]
    fn correspondences_match_linear_scan_under_random_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = grid_model();
        let u = random_cloud(&mut rng, 200);
        let pose = random_pose(&mut rng);
        let v = nearest_correspondences(&u, &model, &pose).unwrap();
        for (ui, vi) in u.points().iter().zip(v.points()) {
            let (idx, _) = nearest_linear(model.points(), &pose.transform_point(ui)).unwrap();
            assert_eq!(*vi, model.points()[idx]);
        }
    }

    #[test]
    fn cross_covariance_of_repeated_point_is_zero() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let u = PointCloud::new(vec![p; 3]).unwrap();
        let (s, _, _) = cross_covariance(&u, &u).unwrap();
        assert!(s.norm() < 1e-15);
    }

    #[test]
    fn cross_covariance_of_basis_triple() {
        let u = PointCloud::new(vec![Vector3::x(), Vector3::y(), Vector3::z()]).unwrap();
        let (s, vbar, ubar) = cross_covariance(&u, &u).unwrap();
        let expected = Matrix3::identity() / 3.0 - ubar * ubar.transpose();
        assert!((s - expected).norm() < 1e-15);
        assert_eq!(vbar, ubar);
    }

    #[test]
    fn cross_covariance_errors() {
        let a = PointCloud::<f64>::new(vec![Vector3::x(), Vector3::y()]).unwrap();
        let b = PointCloud::new(vec![Vector3::x(), Vector3::y(), Vector3::z()]).unwrap();
        assert_eq!(cross_covariance(&a, &b), Err(Error::SizeMismatch(2, 3)));
        assert_eq!(cross_covariance(&a, &a), Err(Error::DegenerateCorrespondences(2)));
    }

    #[test]
    fn cross_covariance_matches_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_cloud(&mut rng, 40);
            let v = random_cloud(&mut rng, 40);
            let (s, vbar, ubar) = cross_covariance(&v, &u).unwrap();
            let mut reference = Matrix3::zeros();
            for (vi, ui) in v.points().iter().zip(u.points()) {
                reference += (vi - vbar) * (ui - ubar).transpose();
            }
            reference /= 40.0;
            assert!((s - reference).norm() < 1e-12);
        }
    }

    #[test]
    fn identical_sets_align_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_cloud(&mut rng, 30);
        let a = horn_align(&u, &u).unwrap();
        assert!(a.rotation.angle_to(&UnitQuaternion::identity()) < 1e-12);
        assert!(a.translation.norm() < 1e-12);
        assert!(a.residual < 1e-24);
    }

    #[test]
    fn recovers_random_rigid_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u = random_cloud(&mut rng, 50);
            let truth = random_pose(&mut rng);
            let v = u.transformed(&truth);
            let a = horn_align(&u, &v).unwrap();
            let (rot, trans) = a.pose().error_to(&truth);
            assert!(rot < 1e-9, "rotation error {rot}");
            assert!(trans < 1e-9, "translation error {trans}");
            assert!(a.residual < 1e-18);
        }
    }

    #[test]
    fn noisy_alignment_is_a_local_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let u = random_cloud(&mut rng, 100);
        let truth = random_pose(&mut rng);
        let v = PointCloud::new(
            u.transformed(&truth)
                .points()
                .iter()
                .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
                .collect(),
        )
        .unwrap();
        let a = horn_align(&u, &v).unwrap();
        let best = cost(&u, &v, &a.pose());
        assert!((best - a.residual).abs() < 1e-15);
        let deg = 0.1f64.to_radians();
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            for sign in [-1.0, 1.0] {
                let dq = UnitQuaternion::from_axis_angle(&axis, sign * deg);
                let rotated = Pose::new(dq, Vector3::zeros()).compose(&a.pose());
                assert!(cost(&u, &v, &rotated) >= best);
                let shifted = Pose::new(a.rotation, a.translation + axis * sign * 1e-3);
                assert!(cost(&u, &v, &shifted) >= best);
            }
        }
        for _ in 0..1000 {
            let dq = UnitQuaternion::from_axis_angle(&random_unit(&mut rng), rng.random_range(-0.01..0.01));
            let dt = Vector3::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
            let p = Pose::new(dq, dt).compose(&a.pose());
            assert!(cost(&u, &v, &p) >= best - 1e-15);
        }
    }

    #[test]
    fn collinear_points_are_ambiguous() {
        let u = PointCloud::new((0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        assert_eq!(horn_align(&u, &u).unwrap_err(), Error::AlignmentAmbiguous);
    }

    #[test]
    fn icp_from_truth_converges_immediately() {
        let model = grid_model();
        let truth = Pose::new(UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.4), Vector3::new(0.3, -0.2, 2.0));
        // the scan is the model seen through the inverse registration pose
        let scan = PointCloud::new(model.points().to_vec()).unwrap().transformed(&truth.inverse());
        let r = icp_register(&scan, &model, &truth, &IcpOptions { d_min: 1e-20, max_iter: 10 }).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!(r.residual < 1e-18);
    }

    #[test]
    fn icp_empty_scan_is_rejected() {
        let model = grid_model();
        let r = icp_register(&PointCloud::empty(), &model, &Pose::identity(), &IcpOptions::for_noise(0.01));
        assert_eq!(r.unwrap_err(), Error::EmptyCloud);
    }

    #[test]
    fn pose_compose_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let x = Vector3::new(0.3, -1.0, 2.0);
        let ab = a.compose(&b);
        assert!((ab.transform_point(&x) - a.transform_point(&b.transform_point(&x))).norm() < 1e-12);
        let id = a.compose(&a.inverse());
        assert!(id.rotation.angle_to(&UnitQuaternion::identity()) < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }

    #[test]
    fn single_precision_alignment() {
        let u = PointCloud::<f32>::new(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.5, 0.3, 0.1),
        ])
        .unwrap();
        let truth = Pose::new(UnitQuaternion::from_axis_angle(&Vector3::new(0.2, 1.0, 0.1), 0.8), Vector3::new(1.0, 2.0, 3.0));
        let a = horn_align(&u, &u.transformed(&truth)).unwrap();
        let (rot, trans) = a.pose().error_to(&truth);
        assert!(rot < 1e-3 && trans < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn uniform_scaling_keeps_rotation(seed in 0u64..1000, scale in 0.1f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_cloud(&mut rng, 20);
            let truth = random_pose(&mut rng);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let v: Vec<_> = u.transformed(&truth).points().iter()
                .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng))).collect();
            let v = PointCloud::new(v).unwrap();
            let a = horn_align(&u, &v).unwrap();
            let us = PointCloud::new(u.points().iter().map(|p| p * scale).collect()).unwrap();
            let vs = PointCloud::new(v.points().iter().map(|p| p * scale).collect()).unwrap();
            let b = horn_align(&us, &vs).unwrap();
            prop_assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
            prop_assert!((a.translation * scale - b.translation).norm() < 1e-9 * scale.max(1.0));
        }
    }
}
