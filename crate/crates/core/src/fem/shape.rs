//! Tensor-product Lagrange shape functions on the reference square [−1, 1]².
//!
//! Local node `k = b·(p + 1) + a` sits at `(ξ_a, η_b)` with equispaced
//! `ξ_a = −1 + 2a/p`, so order 1 is the corner sequence
//! (−1,−1), (1,−1), (−1,1), (1,1).

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_ORDER: usize = 5;

/// Values and reference-coordinate gradients of the `(p+1)²` basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeValues<T> {
    pub n: Vec<T>,
    pub dn_dxi: Vec<T>,
    pub dn_deta: Vec<T>,
}

pub fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::Config(format!("element order must lie in 1..={MAX_ORDER}, got {order}")))
    }
}

/// Equispaced 1D Lagrange nodes on [−1, 1].
pub fn lagrange_nodes<T: Real>(order: usize) -> Vec<T> {
    let p = T::from_usize_lossy(order);
    (0..=order)
        .map(|a| -T::one() + T::lit(2.0) * T::from_usize_lossy(a) / p)
        .collect()
}

/// 1D basis values and derivatives at `x`.
fn lagrange_1d<T: Real>(nodes: &[T], x: T) -> (Vec<T>, Vec<T>) {
    let m = nodes.len();
    let mut val = vec![T::zero(); m];
    let mut der = vec![T::zero(); m];
    for a in 0..m {
        let mut denom = T::one();
        for (c, xc) in nodes.iter().enumerate() {
            if c != a {
                denom *= nodes[a] - *xc;
            }
        }
        let mut prod = T::one();
        for (c, xc) in nodes.iter().enumerate() {
            if c != a {
                prod *= x - *xc;
            }
        }
        // Derivative by the product rule, avoiding division by (x − x_c).
        let mut d = T::zero();
        for skip in 0..m {
            if skip == a {
                continue;
            }
            let mut term = T::one();
            for (c, xc) in nodes.iter().enumerate() {
                if c != a && c != skip {
                    term *= x - *xc;
                }
            }
            d += term;
        }
        val[a] = prod / denom;
        der[a] = d / denom;
    }
    (val, der)
}

/// Basis values and gradients at reference point `(ξ, η)`.
pub fn shape_functions<T: Real>(order: usize, xi: T, eta: T) -> ShapeValues<T> {
    let nodes = lagrange_nodes::<T>(order);
    let (lx, dlx) = lagrange_1d(&nodes, xi);
    let (ly, dly) = lagrange_1d(&nodes, eta);
    let m = order + 1;
    let mut out = ShapeValues {
        n: Vec::with_capacity(m * m),
        dn_dxi: Vec::with_capacity(m * m),
        dn_deta: Vec::with_capacity(m * m),
    };
    for b in 0..m {
        for a in 0..m {
            out.n.push(lx[a] * ly[b]);
            out.dn_dxi.push(dlx[a] * ly[b]);
            out.dn_deta.push(lx[a] * dly[b]);
        }
    }
    out
}
