//! Global assembly, constraint elimination and the static/harmonic solves.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fem::banded::{BandedCholesky, BandedGeneral, BandedSym};
use crate::fem::element::{plane_stress_matrix, ElementGeometry};
use crate::fem::mesh::{Mesh, RefinementKind};
use crate::scalar::Real;

/// How a random field is mapped onto the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRule {
    /// One value per element, taken at its centroid.
    Midpoint,
    /// One value per Gauss point.
    IntegrationPoint,
}

impl FieldRule {
    /// Midpoint for h-hierarchies, integration points for p-hierarchies.
    pub fn for_refinement(kind: RefinementKind) -> Self {
        match kind {
            RefinementKind::H => Self::Midpoint,
            RefinementKind::P => Self::IntegrationPoint,
        }
    }
}

/// Young's modulus of one sample on a given mesh (Pa).
#[derive(Debug, Clone, PartialEq)]
pub enum YoungField<T> {
    Uniform(T),
    PerElement(Vec<T>),
    /// Element-major, Gauss points in element rule order.
    PerIntegrationPoint(Vec<T>),
}

/// Material description of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSample<T> {
    pub young: YoungField<T>,
    pub poisson: T,
    /// Mass density ρ (kg/m³).
    pub density: T,
}

impl<T: Real> MaterialSample<T> {
    pub fn uniform(young: T, poisson: T, density: T) -> Self {
        Self {
            young: YoungField::Uniform(young),
            poisson,
            density,
        }
    }
}

/// A mesh together with its integration data and equation numbering.
///
/// Building one costs a pass over all elements; afterwards every sample
/// on that level reuses it.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    mesh: Mesh<T>,
    thickness: T,
    geometry: GeometryStore<T>,
    /// Equation number of each dof, `None` when constrained.
    eq_of_dof: Vec<Option<usize>>,
    n_eq: usize,
    half_bandwidth: usize,
}

#[derive(Debug, Clone)]
enum GeometryStore<T> {
    Shared(ElementGeometry<T>),
    PerElement(Vec<ElementGeometry<T>>),
}

impl<T: Real> Discretization<T> {
    pub fn new(mesh: Mesh<T>, thickness: T) -> Result<Self> {
        if !(thickness > T::zero()) {
            return Err(Error::Mesh(format!("thickness must be positive, got {thickness}")));
        }
        let geometry = if mesh.is_uniform() {
            GeometryStore::Shared(ElementGeometry::new(&mesh, 0, thickness)?)
        } else {
            GeometryStore::PerElement(
                (0..mesh.element_count())
                    .map(|e| ElementGeometry::new(&mesh, e, thickness))
                    .collect::<Result<_>>()?,
            )
        };
        let mut fixed = vec![false; mesh.dof_count()];
        for &n in mesh.fixed_nodes() {
            fixed[2 * n] = true;
            fixed[2 * n + 1] = true;
        }
        Self::with_fixed_dofs(mesh, thickness, geometry, fixed)
    }

    /// Like [`Discretization::new`] but constraining individual dofs
    /// (`true` = fixed) instead of whole nodes.
    pub fn with_dof_constraints(mesh: Mesh<T>, thickness: T, fixed: Vec<bool>) -> Result<Self> {
        let disc = Self::new(mesh, thickness)?;
        if fixed.len() != disc.mesh.dof_count() {
            return Err(Error::Mesh("constraint mask length differs from dof count".into()));
        }
        Self::with_fixed_dofs(disc.mesh, thickness, disc.geometry, fixed)
    }

    fn with_fixed_dofs(mesh: Mesh<T>, thickness: T, geometry: GeometryStore<T>, fixed: Vec<bool>) -> Result<Self> {
        let mut eq_of_dof = vec![None; mesh.dof_count()];
        let mut n_eq = 0;
        for (d, f) in fixed.iter().enumerate() {
            if !f {
                eq_of_dof[d] = Some(n_eq);
                n_eq += 1;
            }
        }
        if n_eq == 0 {
            return Err(Error::Mesh("every degree of freedom is constrained".into()));
        }
        let mut half_bandwidth = 0;
        for e in 0..mesh.element_count() {
            let eqs: Vec<usize> = mesh
                .element_nodes(e)
                .iter()
                .flat_map(|n| [2 * n, 2 * n + 1])
                .filter_map(|d| eq_of_dof[d])
                .collect();
            if let (Some(lo), Some(hi)) = (eqs.iter().min(), eqs.iter().max()) {
                half_bandwidth = half_bandwidth.max(hi - lo);
            }
        }
        Ok(Self {
            mesh,
            thickness,
            geometry,
            eq_of_dof,
            n_eq,
            half_bandwidth,
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn thickness(&self) -> T {
        self.thickness
    }

    pub fn equations(&self) -> usize {
        self.n_eq
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub fn eq_of_dof(&self, dof: usize) -> Option<usize> {
        self.eq_of_dof[dof]
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry<T> {
        match &self.geometry {
            GeometryStore::Shared(g) => g,
            GeometryStore::PerElement(v) => &v[e],
        }
    }

    pub fn points_per_element(&self) -> usize {
        (self.mesh.order() + 1).pow(2)
    }

    /// Global coordinates of every Gauss point, element-major.
    pub fn integration_points(&self) -> Vec<[T; 2]> {
        let coords = self.mesh.coords();
        let mut out = Vec::with_capacity(self.mesh.element_count() * self.points_per_element());
        for e in 0..self.mesh.element_count() {
            let conn = self.mesh.element_nodes(e);
            for gp in &self.geometry(e).points {
                let mut x = [T::zero(); 2];
                for (k, &n) in conn.iter().enumerate() {
                    x[0] += gp.n[k] * coords[n][0];
                    x[1] += gp.n[k] * coords[n][1];
                }
                out.push(x);
            }
        }
        out
    }

    /// Evaluation points of a field rule.
    pub fn field_points(&self, rule: FieldRule) -> Vec<[T; 2]> {
        match rule {
            FieldRule::Midpoint => self.mesh.element_centroids(),
            FieldRule::IntegrationPoint => self.integration_points(),
        }
    }

    /// Element dof indices (global, unconstrained numbering).
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        self.mesh
            .element_nodes(e)
            .iter()
            .flat_map(|n| [2 * n, 2 * n + 1])
            .collect()
    }

    pub(crate) fn young_at(&self, young: &YoungField<T>, e: usize, g: usize) -> Result<T> {
        let v = match young {
            YoungField::Uniform(v) => *v,
            YoungField::PerElement(v) => *v
                .get(e)
                .ok_or_else(|| Error::Domain(format!("{} element moduli for {} elements", v.len(), self.mesh.element_count())))?,
            YoungField::PerIntegrationPoint(v) => {
                let npe = self.points_per_element();
                if v.len() != npe * self.mesh.element_count() {
                    return Err(Error::Domain(format!(
                        "{} integration-point moduli for {} points",
                        v.len(),
                        npe * self.mesh.element_count()
                    )));
                }
                v[e * npe + g]
            }
        };
        if !(v > T::zero() && v.is_finite()) {
            return Err(Error::Domain(format!("Young's modulus must be positive, got {v} in element {e}")));
        }
        Ok(v)
    }

    /// Scatters a row-major element matrix into the constrained band matrix.
    pub fn scatter(&self, e: usize, ke: &[T], k: &mut BandedSym<T>) {
        let dofs = self.element_dofs(e);
        let nd = dofs.len();
        for (a, da) in dofs.iter().enumerate() {
            let Some(i) = self.eq_of_dof[*da] else { continue };
            for (b, db) in dofs.iter().enumerate() {
                let Some(j) = self.eq_of_dof[*db] else { continue };
                if j <= i {
                    k.add_lower(i, j, ke[a * nd + b]);
                }
            }
        }
    }

    /// Constrained global stiffness for one material sample.
    pub fn assemble_stiffness(&self, material: &MaterialSample<T>) -> Result<BandedSym<T>> {
        let mut k = BandedSym::zeros(self.n_eq, self.half_bandwidth);
        let npe = self.points_per_element();
        let nd = self.geometry(0).dofs();
        // With congruent elements and an element-wise constant modulus the
        // element matrix is a scaled copy of one unit-modulus template.
        let template = match (&self.geometry, &material.young) {
            (GeometryStore::Shared(g), YoungField::Uniform(_) | YoungField::PerElement(_)) => {
                let mut t = vec![T::zero(); nd * nd];
                let d = plane_stress_matrix(T::one(), material.poisson);
                for gp in 0..npe {
                    g.add_point_stiffness(gp, &d, T::one(), &mut t);
                }
                Some(t)
            }
            _ => None,
        };
        let mut ke = vec![T::zero(); nd * nd];
        for e in 0..self.mesh.element_count() {
            match &template {
                Some(t) => {
                    let s = self.young_at(&material.young, e, 0)?;
                    for (dst, src) in ke.iter_mut().zip(t) {
                        *dst = *src * s;
                    }
                }
                None => {
                    ke.iter_mut().for_each(|v| *v = T::zero());
                    let geom = self.geometry(e);
                    let d1 = plane_stress_matrix(T::one(), material.poisson);
                    for gp in 0..npe {
                        let s = self.young_at(&material.young, e, gp)?;
                        geom.add_point_stiffness(gp, &d1, s, &mut ke);
                    }
                }
            }
            self.scatter(e, &ke, &mut k);
        }
        Ok(k)
    }

    /// Constrained consistent mass matrix.
    pub fn assemble_mass(&self, density: T) -> BandedSym<T> {
        let mut m = BandedSym::zeros(self.n_eq, self.half_bandwidth);
        for e in 0..self.mesh.element_count() {
            let me = crate::fem::element::element_mass(self.geometry(e), density);
            self.scatter(e, &me, &mut m);
        }
        m
    }

    /// Load vector in global dof numbering: `total` N split equally over the
    /// loaded nodes, acting in −y.
    pub fn load_vector(&self, total: T) -> Vec<T> {
        let mut f = vec![T::zero(); self.mesh.dof_count()];
        let nodes = self.mesh.load_nodes();
        if nodes.is_empty() {
            return f;
        }
        let share = total / T::from_usize_lossy(nodes.len());
        for &n in nodes {
            f[2 * n + 1] -= share;
        }
        f
    }

    /// Restricts a global vector to the free equations.
    pub fn restrict(&self, global: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_eq];
        for (d, v) in global.iter().enumerate() {
            if let Some(i) = self.eq_of_dof[d] {
                out[i] = *v;
            }
        }
        out
    }

    /// Expands free-equation values to all dofs (constrained dofs = 0).
    pub fn expand<F: Copy + num_traits::Zero>(&self, reduced: &[F]) -> Vec<F> {
        self.eq_of_dof
            .iter()
            .map(|e| e.map_or(F::zero(), |i| reduced[i]))
            .collect()
    }

    /// Assembles `K` and the load for a static solve.
    pub fn assemble_and_constrain(&self, material: &MaterialSample<T>, total_load: T) -> Result<StaticSystem<T>> {
        Ok(StaticSystem {
            stiffness: self.assemble_stiffness(material)?,
            load: self.restrict(&self.load_vector(total_load)),
        })
    }
}

/// Constrained linear system `K u = f`.
#[derive(Debug, Clone)]
pub struct StaticSystem<T> {
    pub stiffness: BandedSym<T>,
    pub load: Vec<T>,
}

/// Solution of a static solve, in the free-equation numbering.
#[derive(Debug, Clone)]
pub struct StaticSolution<T> {
    pub displacement: Vec<T>,
    /// `‖K u − f‖ / ‖f‖` (zero for a zero load).
    pub relative_residual: T,
}

pub fn relative_residual<T: Real>(k: &BandedSym<T>, u: &[T], f: &[T]) -> T {
    let r = k.matvec(u);
    let num = r.iter().zip(f).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt();
    let den = f.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if den == T::zero() {
        num
    } else {
        num / den
    }
}

/// Solves the static system with a banded Cholesky factorization.
pub fn solve_static<T: Real>(system: &StaticSystem<T>) -> Result<StaticSolution<T>> {
    let chol: BandedCholesky<T> = system.stiffness.cholesky()?;
    let mut u = chol.solve(&system.load);
    let mut res = relative_residual(&system.stiffness, &u, &system.load);
    // One step of iterative refinement keeps the residual well below the
    // contract on the finest meshes.
    if res > T::lit(1e-12) {
        let r: Vec<T> = system
            .stiffness
            .matvec(&u)
            .iter()
            .zip(&system.load)
            .map(|(a, b)| *b - *a)
            .collect();
        let du = chol.solve(&r);
        for (a, b) in u.iter_mut().zip(du) {
            *a += b;
        }
        res = relative_residual(&system.stiffness, &u, &system.load);
    }
    Ok(StaticSolution {
        displacement: u,
        relative_residual: res,
    })
}

/// Frequency and hysteretic loss factor of a harmonic solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HarmonicParams<T> {
    /// Excitation frequency f (Hz).
    pub frequency: T,
    /// Loss factor η.
    pub loss_factor: T,
}

/// Solves `(K(1 + iη) − (2πf)² M) u = f` by banded LU.
pub fn solve_dynamic<T: Real>(
    stiffness: &BandedSym<T>,
    mass: &BandedSym<T>,
    load: &[T],
    hp: &HarmonicParams<T>,
) -> Result<Vec<Complex<T>>> {
    if !(hp.frequency >= T::zero() && hp.loss_factor >= T::zero()) {
        return Err(Error::Domain("frequency and loss factor must be nonnegative".into()));
    }
    let n = stiffness.dim();
    let kd = stiffness.half_bandwidth().max(mass.half_bandwidth());
    let omega = T::lit(2.0) * T::PI() * hp.frequency;
    let w2 = omega * omega;
    let mut a = BandedGeneral::<Complex<T>>::zeros(n, kd, kd);
    for i in 0..n {
        for j in i.saturating_sub(kd)..=(i + kd).min(n - 1) {
            let k = stiffness.get(i, j);
            let m = mass.get(i, j);
            a.set(i, j, Complex::new(k - w2 * m, k * hp.loss_factor));
        }
    }
    let rhs: Vec<Complex<T>> = load.iter().map(|v| Complex::new(*v, T::zero())).collect();
    let lu = a.clone().lu()?;
    let u = lu.solve(&rhs);
    let res = a.matvec(&u);
    let num: T = res.iter().zip(&rhs).map(|(x, y)| (*x - *y).norm_sqr()).sum::<T>().sqrt();
    let den: T = rhs.iter().map(|y| y.norm_sqr()).sum::<T>().sqrt();
    if den > T::zero() && num / den > T::lit(1e-6) {
        return Err(Error::Solver(format!(
            "harmonic solve at {} Hz is ill-conditioned (relative residual {})",
            hp.frequency,
            num / den
        )));
    }
    Ok(u)
}

/// Shortest Euler–Bernoulli bending wavelength at `f_max`:
/// `λ_min = √(2π/f_max) · (EI/(ρA))^{1/4}`.
pub fn min_wavelength<T: Real>(young: T, second_moment: T, area: T, density: T, f_max: T) -> T {
    (T::lit(2.0) * T::PI() / f_max).sqrt() * (young * second_moment / (density * area)).sqrt().sqrt()
}

/// Elements per shortest wavelength required on the coarsest mesh.
pub const MIN_ELEMENTS_PER_WAVELENGTH: f64 = 6.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{BeamGeometry, LevelSpec, Support};

    fn beam_disc(kind: RefinementKind, level: usize, support: Support) -> Discretization<f64> {
        let geo = BeamGeometry {
            length: 2.5,
            height: 0.25,
            thickness: 1.0,
        };
        let lvl = LevelSpec::new(kind, level, (40, 4)).unwrap();
        Discretization::new(Mesh::beam(&lvl, &geo, support).unwrap(), geo.thickness).unwrap()
    }

    #[test]
    fn load_sums_to_total_on_every_level() {
        for kind in [RefinementKind::H, RefinementKind::P] {
            for level in 0..3 {
                let d = beam_disc(kind, level, Support::ClampedClamped);
                let f = d.load_vector(1.0e7);
                let sum: f64 = f.iter().sum();
                assert!((sum + 1.0e7).abs() < 1e-6, "{kind:?} {level}: {sum}");
                let reduced: f64 = d.restrict(&f).iter().sum();
                assert!((reduced + 1.0e7).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_load_zero_displacement() {
        let d = beam_disc(RefinementKind::H, 0, Support::ClampedClamped);
        let sys = d.assemble_and_constrain(&MaterialSample::uniform(3e10, 0.15, 2500.0), 0.0).unwrap();
        let sol = solve_static(&sys).unwrap();
        assert!(sol.displacement.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unconstrained_structure_is_rejected() {
        let geo = BeamGeometry {
            length: 2.5,
            height: 0.25,
            thickness: 1.0,
        };
        let lvl = LevelSpec::new(RefinementKind::H, 0, (40, 4)).unwrap();
        let mesh = Mesh::beam(&lvl, &geo, Support::Cantilever).unwrap();
        let free = mesh.clone().with_boundary(vec![], mesh.load_nodes().to_vec(), mesh.qoi_node());
        let d = Discretization::new(free, 1.0).unwrap();
        let sys = d.assemble_and_constrain(&MaterialSample::uniform(3e10, 0.15, 2500.0), 1.0).unwrap();
        assert!(matches!(solve_static(&sys), Err(Error::Solver(_))));
    }

    #[test]
    fn bad_young_is_rejected() {
        let d = beam_disc(RefinementKind::H, 0, Support::ClampedClamped);
        let bad = MaterialSample {
            young: YoungField::PerElement(vec![1.0; 3]),
            poisson: 0.15,
            density: 1.0,
        };
        assert!(d.assemble_stiffness(&bad).is_err());
        let neg = MaterialSample::uniform(-1.0, 0.15, 1.0);
        assert!(d.assemble_stiffness(&neg).is_err());
    }

    #[test]
    fn wavelength_formula() {
        let i = 0.25f64.powi(3) / 12.0;
        let lam = min_wavelength(3.0e10, i, 0.25, 2500.0, 400.0);
        let expected = (2.0 * std::f64::consts::PI / 400.0).sqrt() * (3.0e10 * i / (2500.0 * 0.25)).powf(0.25);
        assert!((lam - expected).abs() < 1e-12 * expected);
        assert!(lam / 0.0625 >= MIN_ELEMENTS_PER_WAVELENGTH);
        let quarter = min_wavelength(3.0e10, i, 0.25, 2500.0, 1600.0);
        assert!((lam / quarter - 2.0).abs() < 1e-12);
        let stiff = min_wavelength(4.0 * 3.0e10, i, 0.25, 2500.0, 400.0);
        assert!((stiff / lam - 2f64.sqrt()).abs() < 1e-12);
    }
}
