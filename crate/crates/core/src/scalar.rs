//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::DMatrix;
use num_traits as nt;

/// Real floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Special functions that have no generic
/// implementation (incomplete gamma, erfc) are evaluated in `f64` and
/// converted back; the dense symmetric eigensolver is delegated to nalgebra
/// per concrete type.
pub trait Real:
    nt::Float
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + nt::NumAssign
    + nalgebra::Scalar
    + Copy
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// Converts a count or index.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as nt::ToPrimitive>::to_f64(&self).expect("finite scalar")
    }

    /// Eigen-decomposition of a symmetric matrix: unsorted eigenvalues and
    /// the matching eigenvectors as columns. `None` if the iteration fails.
    fn symmetric_eigen(m: DMatrix<Self>) -> Option<(Vec<Self>, DMatrix<Self>)>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn symmetric_eigen(m: DMatrix<Self>) -> Option<(Vec<Self>, DMatrix<Self>)> {
                let eig = nalgebra::SymmetricEigen::try_new(m, <$t>::EPSILON, 0)?;
                Some((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
