//! Cyclic Jacobi eigen-decomposition for 4×4 symmetric matrices.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (unsorted) and the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen4<T: Real> {
    pub values: Vector4<T>,
    pub vectors: Matrix4<T>,
}

fn off_diagonal_norm<T: Real>(a: &Matrix4<T>) -> T {
    let mut s = T::zero();
    for p in 0..4 {
        for q in 0..4 {
            if p != q {
                s += a[(p, q)] * a[(p, q)];
            }
        }
    }
    s.sqrt()
}

pub(crate) fn check_symmetric<T: Real>(w: &Matrix4<T>) -> Result<()> {
    let asym = (w - w.transpose()).amax();
    if !(asym <= lit::<T>(1e-9) * w.amax().max(T::one())) {
        return Err(Error::NotSymmetric(to_f64(asym)));
    }
    Ok(())
}

/// Full eigen-decomposition by cyclic Jacobi rotations. Sweeps stop once
/// the off-diagonal Frobenius norm drops below `1e-13·max(1, ‖W‖_F)`
/// (or the scalar type's resolution, whichever is coarser).
pub fn jacobi_sym4<T: Real>(w: &Matrix4<T>) -> Result<SymEigen4<T>> {
    check_symmetric(w)?;
    let mut a = (w + w.transpose()) * lit::<T>(0.5);
    let mut v = Matrix4::<T>::identity();
    let scale = a.norm().max(T::one());
    let tol = lit::<T>(1e-13).max(T::default_epsilon() * lit(8.0)) * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < tol {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq * lit(2.0));
                let t = theta.signum_or_one()
                    / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let mut j = Matrix4::<T>::identity();
                j[(p, p)] = c;
                j[(q, q)] = c;
                j[(p, q)] = s;
                j[(q, p)] = -s;
                a = j.transpose() * a * j;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                v *= j;
            }
        }
    }
    Ok(SymEigen4 {
        values: a.diagonal(),
        vectors: v,
    })
}

trait SignumOrOne {
    fn signum_or_one(self) -> Self;
}

impl<T: Real> SignumOrOne for T {
    fn signum_or_one(self) -> Self {
        if self < T::zero() {
            -T::one()
        } else {
            T::one()
        }
    }
}

/// Largest eigenvalue of a symmetric 4×4 matrix, its unit eigenvector and
/// the runner-up eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct DominantEigen<T: Real> {
    pub lambda_max: T,
    pub vector: Vector4<T>,
    pub lambda_second: T,
}

pub fn max_eigenvector_sym4<T: Real>(w: &Matrix4<T>) -> Result<DominantEigen<T>> {
    let eig = jacobi_sym4(w)?;
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&i, &j| {
        eig.values[j]
            .partial_cmp(&eig.values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vector = eig.vectors.column(idx[0]).into_owned();
    Ok(DominantEigen {
        lambda_max: eig.values[idx[0]],
        vector: vector / vector.norm(),
        lambda_second: eig.values[idx[1]],
    })
}
