//! Plane-stress element kernels evaluated with full Gauss quadrature.

use crate::error::{Error, Result};
use crate::fem::mesh::Mesh;
use crate::fem::shape::shape_functions;
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// 3×3 matrix acting on `(σ_xx, σ_yy, σ_xy)` / `(ε_xx, ε_yy, γ_xy)`.
pub type Mat3<T> = [[T; 3]; 3];

/// Plane-stress elasticity matrix `E/(1−ν²) [[1,ν,0],[ν,1,0],[0,0,(1−ν)/2]]`.
pub fn plane_stress_matrix<T: Real>(young: T, poisson: T) -> Mat3<T> {
    let c = young / (T::one() - poisson * poisson);
    let z = T::zero();
    [
        [c, c * poisson, z],
        [c * poisson, c, z],
        [z, z, c * (T::one() - poisson) * T::lit(0.5)],
    ]
}

/// Per-integration-point data of one element.
#[derive(Debug, Clone)]
pub struct GaussPoint<T> {
    /// Shape function values.
    pub n: Vec<T>,
    /// Physical gradients ∂N/∂x, ∂N/∂y.
    pub dn_dx: Vec<T>,
    pub dn_dy: Vec<T>,
    /// Quadrature weight × det J × thickness.
    pub dv: T,
}

/// Integration data for one element, `(order+1)²` Gauss points ordered
/// with the ξ index fastest.
#[derive(Debug, Clone)]
pub struct ElementGeometry<T> {
    pub order: usize,
    pub points: Vec<GaussPoint<T>>,
}

/// Reference Gauss points and weights of the full `(p+1)²` rule.
pub fn reference_rule<T: Real>(order: usize) -> Vec<([T; 2], T)> {
    let (g, w) = gauss_legendre::<T>(order + 1);
    let mut out = Vec::with_capacity(g.len() * g.len());
    for (eta, we) in g.iter().zip(&w) {
        for (xi, wx) in g.iter().zip(&w) {
            out.push(([*xi, *eta], *wx * *we));
        }
    }
    out
}

impl<T: Real> ElementGeometry<T> {
    pub fn new(mesh: &Mesh<T>, element: usize, thickness: T) -> Result<Self> {
        let order = mesh.order();
        let conn = mesh.element_nodes(element);
        let coords = mesh.coords();
        let mut points = Vec::new();
        for (r, w) in reference_rule::<T>(order) {
            let s = shape_functions(order, r[0], r[1]);
            // J = [[x_ξ, y_ξ], [x_η, y_η]]
            let (mut x_xi, mut y_xi, mut x_eta, mut y_eta) = (T::zero(), T::zero(), T::zero(), T::zero());
            for (k, &node) in conn.iter().enumerate() {
                let c = coords[node];
                x_xi += s.dn_dxi[k] * c[0];
                y_xi += s.dn_dxi[k] * c[1];
                x_eta += s.dn_deta[k] * c[0];
                y_eta += s.dn_deta[k] * c[1];
            }
            let det = x_xi * y_eta - y_xi * x_eta;
            if !(det > T::zero()) {
                return Err(Error::Mesh(format!(
                    "element {element} has non-positive Jacobian determinant {det}"
                )));
            }
            let inv = T::one() / det;
            let dn_dx = s
                .dn_dxi
                .iter()
                .zip(&s.dn_deta)
                .map(|(a, b)| (y_eta * *a - y_xi * *b) * inv)
                .collect();
            let dn_dy = s
                .dn_dxi
                .iter()
                .zip(&s.dn_deta)
                .map(|(a, b)| (-x_eta * *a + x_xi * *b) * inv)
                .collect();
            points.push(GaussPoint {
                n: s.n,
                dn_dx,
                dn_dy,
                dv: w * det * thickness,
            });
        }
        Ok(Self { order, points })
    }

    pub fn nodes(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    pub fn dofs(&self) -> usize {
        2 * self.nodes()
    }

    /// Adds `scale · Bᵀ D B · dV` at Gauss point `g` into the row-major
    /// element matrix `k`.
    pub fn add_point_stiffness(&self, g: usize, d: &Mat3<T>, scale: T, k: &mut [T]) {
        let gp = &self.points[g];
        let nd = self.dofs();
        let f = scale * gp.dv;
        for j in 0..self.nodes() {
            let (bx, by) = (gp.dn_dx[j], gp.dn_dy[j]);
            // D·B_j, columns for u_x and u_y.
            let dbx = [d[0][0] * bx + d[0][2] * by, d[1][0] * bx + d[1][2] * by, d[2][0] * bx + d[2][2] * by];
            let dby = [d[0][1] * by + d[0][2] * bx, d[1][1] * by + d[1][2] * bx, d[2][1] * by + d[2][2] * bx];
            for i in 0..self.nodes() {
                let (ax, ay) = (gp.dn_dx[i], gp.dn_dy[i]);
                // B_iᵀ = [[ax, 0, ay], [0, ay, ax]]
                let r0 = 2 * i * nd;
                let r1 = (2 * i + 1) * nd;
                k[r0 + 2 * j] += f * (ax * dbx[0] + ay * dbx[2]);
                k[r0 + 2 * j + 1] += f * (ax * dby[0] + ay * dby[2]);
                k[r1 + 2 * j] += f * (ay * dbx[1] + ax * dbx[2]);
                k[r1 + 2 * j + 1] += f * (ay * dby[1] + ax * dby[2]);
            }
        }
    }

    /// Strain `B u_e` at Gauss point `g` from element displacements.
    pub fn strain(&self, g: usize, ue: &[T]) -> [T; 3] {
        let gp = &self.points[g];
        let mut e = [T::zero(); 3];
        for i in 0..self.nodes() {
            let (ux, uy) = (ue[2 * i], ue[2 * i + 1]);
            e[0] += gp.dn_dx[i] * ux;
            e[1] += gp.dn_dy[i] * uy;
            e[2] += gp.dn_dy[i] * ux + gp.dn_dx[i] * uy;
        }
        e
    }

    /// Adds `Bᵀ σ dV` at Gauss point `g` into the element force vector.
    pub fn add_internal_force(&self, g: usize, stress: &[T; 3], q: &mut [T]) {
        let gp = &self.points[g];
        for i in 0..self.nodes() {
            q[2 * i] += (gp.dn_dx[i] * stress[0] + gp.dn_dy[i] * stress[2]) * gp.dv;
            q[2 * i + 1] += (gp.dn_dy[i] * stress[1] + gp.dn_dx[i] * stress[2]) * gp.dv;
        }
    }
}

/// Element stiffness `Σ_g B_gᵀ D(E_g) B_g dV_g` with one Young's modulus
/// per Gauss point.
pub fn element_stiffness<T: Real>(geom: &ElementGeometry<T>, young: &[T], poisson: T) -> Result<Vec<T>> {
    if young.len() != geom.points.len() {
        return Err(Error::Domain(format!(
            "{} Young's moduli given for {} integration points",
            young.len(),
            geom.points.len()
        )));
    }
    let nd = geom.dofs();
    let mut k = vec![T::zero(); nd * nd];
    for (g, e) in young.iter().enumerate() {
        geom.add_point_stiffness(g, &plane_stress_matrix(*e, poisson), T::one(), &mut k);
    }
    Ok(k)
}

/// Consistent mass matrix `∫ Nᵀ ρ N dΩ`.
pub fn element_mass<T: Real>(geom: &ElementGeometry<T>, density: T) -> Vec<T> {
    let nd = geom.dofs();
    let mut m = vec![T::zero(); nd * nd];
    for gp in &geom.points {
        let f = density * gp.dv;
        for i in 0..geom.nodes() {
            for j in 0..geom.nodes() {
                let v = f * gp.n[i] * gp.n[j];
                m[2 * i * nd + 2 * j] += v;
                m[(2 * i + 1) * nd + 2 * j + 1] += v;
            }
        }
    }
    m
}

/// Row-sum lumped mass (diagonal), same total as the consistent matrix.
pub fn lumped_mass<T: Real>(consistent: &[T], dofs: usize) -> Vec<T> {
    (0..dofs)
        .map(|i| consistent[i * dofs..(i + 1) * dofs].iter().copied().sum())
        .collect()
}
