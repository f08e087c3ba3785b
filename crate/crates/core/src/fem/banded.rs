//! Banded direct solvers.
//!
//! Beam meshes are numbered column by column, so the half-bandwidth is set
//! by the node count of two adjacent columns and stays small. A banded
//! Cholesky factorization (real SPD) and a banded LU with partial pivoting
//! (complex symmetric harmonic systems) are all the direct solvers needed.

use std::fmt::Debug;

use num_complex::Complex;
use num_traits::{NumAssign, One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scalars the banded LU can pivot on.
pub trait BandScalar: Copy + NumAssign + Zero + One + Send + Sync + Debug {
    fn magnitude(self) -> f64;
}

impl<T: Real> BandScalar for T {
    fn magnitude(self) -> f64 {
        self.as_f64().abs()
    }
}

impl<T: Real> BandScalar for Complex<T> {
    fn magnitude(self) -> f64 {
        self.re.as_f64().hypot(self.im.as_f64())
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += *x * *y;
    }
    s
}

/// Symmetric band matrix storing the lower triangle row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym<T> {
    n: usize,
    kd: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSym<T> {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![T::zero(); n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.kd, "({i},{j}) outside the band");
        i * (self.kd + 1) + self.kd + j - i
    }

    /// Entry `(i, j)` of the full symmetric matrix (zero outside the band).
    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.kd {
            T::zero()
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Adds `v` at `(i, j)` when `j ≤ i`; upper-triangle contributions are
    /// ignored so that full element matrices can be scattered directly.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: T) {
        if j <= i {
            let k = self.idx(i, j);
            self.data[k] += v;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky<T>> {
        let kd = self.kd;
        let mut l = self.data.clone();
        let tol = T::lit(1e-13) * self.max_abs();
        for i in 0..self.n {
            let lo = i.saturating_sub(kd);
            for j in lo..=i {
                // Rows are contiguous, so this is a dot product of slices.
                let w = kd + 1;
                let (ri, rj) = (i * w + kd - i, j * w + kd - j);
                let dot = dot(&l[ri + lo..ri + j], &l[rj + lo..rj + j]);
                let s = l[ri + j] - dot;
                if i == j {
                    if !(s > tol) {
                        return Err(Error::Solver(format!(
                            "stiffness matrix is not positive definite at equation {i} (pivot {s}); \
                             the structure is probably missing constraints"
                        )));
                    }
                    l[self.idx(i, i)] = s.sqrt();
                } else {
                    l[self.idx(i, j)] = s / l[self.idx(j, j)];
                }
            }
        }
        Ok(BandedCholesky {
            factor: BandedSym { n: self.n, kd, data: l },
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    factor: BandedSym<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let f = &self.factor;
        let n = f.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(f.kd);
            let row = i * (f.kd + 1) + f.kd - i;
            let dot = dot(&f.data[row + lo..row + i], &x[lo..i]);
            x[i] = (x[i] - dot) / f.data[row + i];
        }
        for i in (0..n).rev() {
            x[i] /= f.data[f.idx(i, i)];
            let xi = x[i];
            let lo = i.saturating_sub(f.kd);
            for k in lo..i {
                x[k] -= f.data[f.idx(i, k)] * xi;
            }
        }
        x
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals, stored
/// column-major with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedGeneral<F> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<F>,
}

impl<F: BandScalar> BandedGeneral<F> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![F::zero(); n * ld],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.kl + self.ku >= j && j + self.kl >= i);
        j * self.ld + self.kl + self.ku + i - j
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        if i > j + self.kl || j > i + self.ku {
            F::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        assert!(i <= j + self.kl && j <= i + self.ku, "({i},{j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.n];
        for (j, xj) in x.iter().enumerate() {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.data[self.idx(i, j)] * *xj;
            }
        }
        y
    }

    /// LU factorization with partial pivoting.
    pub fn lu(mut self) -> Result<BandedLu<F>> {
        let n = self.n;
        let span = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.magnitude()));
        for j in 0..n {
            let last = (j + self.kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.idx(j, j)].magnitude();
            for i in (j + 1)..=last {
                let m = self.data[self.idx(i, j)].magnitude();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if !(best > 1e-300_f64.max(1e-15 * scale)) {
                return Err(Error::Solver(format!(
                    "system matrix is singular at equation {j}; an undamped resonance may have been hit exactly \
                     (use a loss factor > 0)"
                )));
            }
            piv[j] = p;
            let cmax = (j + span).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(j, j)];
            for i in (j + 1)..=last {
                let k = self.idx(i, j);
                let l = self.data[k] / pivot;
                self.data[k] = l;
                if l == F::zero() {
                    continue;
                }
                for c in (j + 1)..=cmax {
                    let src = self.data[self.idx(j, c)];
                    let dst = self.idx(i, c);
                    self.data[dst] -= l * src;
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<F> {
    lu: BandedGeneral<F>,
    piv: Vec<usize>,
}

impl<F: BandScalar> BandedLu<F> {
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let a = &self.lu;
        let n = a.n;
        let span = a.kl + a.ku;
        let mut x = b.to_vec();
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let xj = x[j];
            let last = (j + a.kl).min(n - 1);
            for i in (j + 1)..=last {
                x[i] -= a.data[a.idx(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            let cmax = (j + span).min(n - 1);
            let mut s = x[j];
            for c in (j + 1)..=cmax {
                s -= a.data[a.idx(j, c)] * x[c];
            }
            x[j] = s / a.data[a.idx(j, j)];
        }
        x
    }
}
