//! Plane-stress von Mises plasticity with linear isotropic hardening.
//!
//! The return map works in the rotated stress coordinates
//! `a1 = (σxx+σyy)/√2`, `a2 = (σyy−σxx)/√2`, `a3 = σxy`, in which both the
//! plane-stress elasticity matrix and the projection `P` are diagonal, so the
//! backward-Euler update reduces to one scalar equation in `Δλ`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::{relative_residual, Discretization, YoungField};
use crate::fem::banded::BandedSym;
use crate::fem::element::{plane_stress_matrix, Mat3};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElastoplasticParams<T> {
    /// σ_y (Pa).
    pub yield_strength: T,
    /// H (Pa).
    pub hardening_modulus: T,
    pub poisson: T,
    /// Final total load (N).
    pub max_load: T,
    /// Load increment Δf (N).
    pub load_step: T,
    /// Converged when ‖r‖ ≤ residual_factor · ‖Δf‖.
    pub residual_factor: T,
    pub max_newton_iterations: usize,
    pub max_return_iterations: usize,
}

impl<T: Real> ElastoplasticParams<T> {
    /// Steel defaults with `H = E_mean / 100`.
    pub fn steel(young_mean: T) -> Self {
        Self {
            yield_strength: T::lit(240e6),
            hardening_modulus: young_mean / T::lit(100.0),
            poisson: T::lit(0.25),
            max_load: T::lit(13.5e3),
            load_step: T::lit(135.0),
            residual_factor: T::lit(1e-4),
            max_newton_iterations: 30,
            max_return_iterations: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.yield_strength > T::zero()) {
            errs.push(format!("yield strength must be positive, got {}", self.yield_strength));
        }
        if !(self.hardening_modulus >= T::zero()) {
            errs.push(format!("hardening modulus must be nonnegative, got {}", self.hardening_modulus));
        }
        if !(self.poisson > -T::one() && self.poisson < T::lit(0.5)) {
            errs.push(format!("Poisson ratio must lie in (-1, 0.5), got {}", self.poisson));
        }
        if !(self.load_step > T::zero()) {
            errs.push(format!("load step must be positive, got {}", self.load_step));
        }
        if !(self.max_load >= T::zero()) {
            errs.push(format!("maximum load must be nonnegative, got {}", self.max_load));
        }
        if !(self.residual_factor > T::zero()) {
            errs.push("residual factor must be positive".into());
        }
        if self.max_newton_iterations == 0 || self.max_return_iterations == 0 {
            errs.push("iteration limits must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Load levels `0, Δf, 2Δf, …, f_max` (the last step may be shorter).
    pub fn schedule(&self) -> Vec<T> {
        let mut out = vec![T::zero()];
        let n = (self.max_load / self.load_step).ceil().to_usize().unwrap_or(0);
        for k in 1..=n {
            let f = (self.load_step * T::from_usize_lossy(k)).min(self.max_load);
            if f > *out.last().unwrap() {
                out.push(f);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlasticState<T> {
    /// (σxx, σyy, σxy) in Pa.
    pub stress: [T; 3],
    /// Equivalent plastic strain κ.
    pub eq_plastic_strain: T,
    pub yielded: bool,
}

/// von Mises equivalent stress of a plane-stress state.
pub fn von_mises<T: Real>(s: &[T; 3]) -> T {
    (s[0] * s[0] - s[0] * s[1] + s[1] * s[1] + T::lit(3.0) * s[2] * s[2]).max(T::zero()).sqrt()
}

/// `P σ` with `P = (1/3)[[2,−1,0],[−1,2,0],[0,0,6]]`.
fn project<T: Real>(s: &[T; 3]) -> [T; 3] {
    let third = T::one() / T::lit(3.0);
    [
        third * (T::lit(2.0) * s[0] - s[1]),
        third * (T::lit(2.0) * s[1] - s[0]),
        T::lit(2.0) * s[2],
    ]
}

fn dot3<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn matvec3<T: Real>(m: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

fn inverse3<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapResult<T> {
    pub stress: [T; 3],
    pub tangent: Mat3<T>,
    pub state: PlasticState<T>,
    /// Plastic multiplier Δλ (zero on the elastic branch).
    pub plastic_multiplier: T,
}

/// Backward-Euler return map for one strain increment from a converged state.
pub fn return_map<T: Real>(
    strain_increment: &[T; 3],
    state: &PlasticState<T>,
    young: T,
    params: &ElastoplasticParams<T>,
) -> Result<ReturnMapResult<T>> {
    let nu = params.poisson;
    let h = params.hardening_modulus;
    let sy = params.yield_strength;
    let d = plane_stress_matrix(young, nu);
    let de = matvec3(&d, strain_increment);
    let trial = [state.stress[0] + de[0], state.stress[1] + de[1], state.stress[2] + de[2]];
    let y_n = sy + h * state.eq_plastic_strain;
    if von_mises(&trial) <= y_n {
        return Ok(ReturnMapResult {
            stress: trial,
            tangent: d,
            state: PlasticState {
                stress: trial,
                eq_plastic_strain: state.eq_plastic_strain,
                yielded: state.yielded,
            },
            plastic_multiplier: T::zero(),
        });
    }

    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let rt2 = two.sqrt();
    let g = young / (two * (T::one() + nu));
    let e1 = young / (three * (T::one() - nu));
    let a1 = (trial[0] + trial[1]) / rt2;
    let a2 = (trial[1] - trial[0]) / rt2;
    let a3 = trial[2];
    let p1 = a1 * a1 / T::lit(6.0);
    let p2 = a2 * a2 / two + a3 * a3;
    let two_over_rt3 = two / three.sqrt();

    // F(Δλ) = φ² − Y(κ)²/3 with φ² = ½σᵀPσ; F(0) > 0 and F decreases.
    let eval = |dl: T| -> (T, T) {
        let q1 = T::one() + e1 * dl;
        let q2 = T::one() + two * g * dl;
        let phi2 = p1 / (q1 * q1) + p2 / (q2 * q2);
        let dphi2 = -two * e1 * p1 / (q1 * q1 * q1) - T::lit(4.0) * g * p2 / (q2 * q2 * q2);
        let phi = phi2.sqrt();
        let kappa = state.eq_plastic_strain + dl * two_over_rt3 * phi;
        let dkappa = two_over_rt3 * (phi + dl * dphi2 / (two * phi));
        let y = sy + h * kappa;
        (phi2 - y * y / three, dphi2 - two / three * y * h * dkappa)
    };

    let scale = y_n * y_n;
    let tol = T::lit(1e-14) * scale;
    let (mut lo, mut hi) = (T::zero(), T::zero());
    let mut step = (von_mises(&trial) - y_n) / (three * g + h);
    loop {
        hi = hi + step;
        if eval(hi).0 < T::zero() {
            break;
        }
        lo = hi;
        step = step * two;
        if !hi.is_finite() {
            return Err(Error::ReturnMap {
                iterations: 0,
                residual: eval(lo).0.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let mut dl = lo;
    let mut converged = false;
    let mut last = T::infinity();
    for _ in 0..params.max_return_iterations {
        let (f, df) = eval(dl);
        last = f;
        if f.abs() <= tol {
            converged = true;
            break;
        }
        if f > T::zero() {
            lo = dl;
        } else {
            hi = dl;
        }
        let mut next = dl - f / df;
        if !(next > lo && next < hi) {
            next = (lo + hi) / two;
        }
        if (hi - lo) <= T::epsilon() * hi {
            dl = next;
            converged = true;
            break;
        }
        dl = next;
    }
    if !converged {
        return Err(Error::ReturnMap {
            iterations: params.max_return_iterations,
            residual: (last / scale).to_f64().unwrap_or(f64::NAN),
        });
    }

    let q1 = T::one() + e1 * dl;
    let q2 = T::one() + two * g * dl;
    let (b1, b2, b3) = (a1 / q1, a2 / q2, a3 / q2);
    let stress = [(b1 - b2) / rt2, (b1 + b2) / rt2, b3];
    let n = project(&stress);
    let s = (two / three * dot3(&stress, &n)).sqrt();
    let kappa = state.eq_plastic_strain + dl * s;
    let y = sy + h * kappa;

    // Ξ = (D⁻¹ + ΔλP)⁻¹
    let mut xi_inv = inverse3(&d);
    let third = T::one() / three;
    let p = [
        [two * third, -third, T::zero()],
        [-third, two * third, T::zero()],
        [T::zero(), T::zero(), two],
    ];
    for i in 0..3 {
        for j in 0..3 {
            xi_inv[i][j] += dl * p[i][j];
        }
    }
    let xi = inverse3(&xi_inv);
    let xn = matvec3(&xi, &n);
    let b = two / three * y * h * s;
    let c = T::one() - T::lit(4.0) / T::lit(9.0) * y * h * dl / s;
    let denom = c * dot3(&n, &xn) + b;
    let mut tangent = xi;
    for i in 0..3 {
        for j in 0..3 {
            tangent[i][j] -= c * xn[i] * xn[j] / denom;
        }
    }
    // Symmetrize away roundoff.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = (tangent[i][j] + tangent[j][i]) / two;
            tangent[i][j] = m;
            tangent[j][i] = m;
        }
    }
    Ok(ReturnMapResult {
        stress,
        tangent,
        state: PlasticState {
            stress,
            eq_plastic_strain: kappa,
            yielded: true,
        },
        plastic_multiplier: dl,
    })
}

/// Force–deflection history of one incremental solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPath<T> {
    /// (total load N, monitored displacement m), starting at (0, 0).
    pub points: Vec<(T, T)>,
    /// Newton iterations used per step.
    pub iterations: Vec<usize>,
    /// Gauss points that have yielded at the end of the path.
    pub yielded_points: usize,
    /// Largest `|f|/σ_y` over Gauss points that flowed in a step, or
    /// `max(f, 0)/σ_y` elsewhere, across all converged steps.
    pub max_yield_violation: T,
}

impl<T: Real> LoadPath<T> {
    pub fn final_deflection(&self) -> T {
        self.points.last().map_or(T::zero(), |p| p.1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["load", "deflection"])?;
        for (f, u) in &self.points {
            w.write_record([f.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Problem description for [`incremental_solve`].
pub struct IncrementalProblem<'a, T> {
    pub discretization: &'a Discretization<T>,
    pub young: &'a YoungField<T>,
    /// Load pattern in global dof numbering for a unit total load.
    pub load_pattern: &'a [T],
    /// Global dof whose displacement is recorded.
    pub monitor_dof: usize,
}

/// Incremental-iterative full Newton solve over the load schedule.
pub fn incremental_solve<T: Real>(problem: &IncrementalProblem<'_, T>, params: &ElastoplasticParams<T>) -> Result<LoadPath<T>> {
    params.validate()?;
    let disc = problem.discretization;
    let mesh = disc.mesh();
    if problem.load_pattern.len() != mesh.dof_count() {
        return Err(Error::Domain("load pattern length differs from dof count".into()));
    }
    let ne = mesh.element_count();
    let npe = disc.points_per_element();
    let young: Vec<T> = (0..ne * npe)
        .map(|k| disc.young_at(problem.young, k / npe, k % npe))
        .collect::<Result<_>>()?;
    let pattern = disc.restrict(problem.load_pattern);

    let mut states = vec![PlasticState::<T>::default(); ne * npe];
    let mut u = vec![T::zero(); mesh.dof_count()];
    let schedule = params.schedule();
    let mut path = LoadPath {
        points: vec![(T::zero(), T::zero())],
        iterations: Vec::with_capacity(schedule.len()),
        yielded_points: 0,
        max_yield_violation: T::zero(),
    };

    for (step, pair) in schedule.windows(2).enumerate() {
        let (f_prev, f_next) = (pair[0], pair[1]);
        let df_norm = pattern.iter().map(|v| *v * *v).sum::<T>().sqrt() * (f_next - f_prev).abs();
        let target = df_norm * params.residual_factor;
        let u_start = u.clone();
        let mut trial_states = states.clone();
        let mut converged = false;
        let mut res_norm;
        let mut iters = 0;
        loop {
            let (k, q) = element_loop(disc, &young, &states, &u, &u_start, &mut trial_states, params)?;
            let r: Vec<T> = pattern.iter().zip(&q).map(|(p, qi)| *p * f_next - *qi).collect();
            res_norm = r.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if res_norm <= target {
                converged = true;
                break;
            }
            if iters == params.max_newton_iterations {
                break;
            }
            let du = k.cholesky()?.solve(&r);
            debug_assert!(relative_residual(&k, &du, &r) < T::lit(1e-6));
            for (d, v) in u.iter_mut().enumerate() {
                if let Some(i) = disc.eq_of_dof(d) {
                    *v += du[i];
                }
            }
            iters += 1;
        }
        if !converged {
            return Err(Error::LoadStep {
                step: step + 1,
                load: f_next.to_f64().unwrap_or(f64::NAN),
                iterations: iters,
                residual: res_norm.to_f64().unwrap_or(f64::NAN),
                target: target.to_f64().unwrap_or(f64::NAN),
            });
        }
        for (old, new) in states.iter().zip(&trial_states) {
            let f = von_mises(&new.stress) - params.yield_strength - params.hardening_modulus * new.eq_plastic_strain;
            let v = if new.eq_plastic_strain > old.eq_plastic_strain { f.abs() } else { f.max(T::zero()) };
            path.max_yield_violation = path.max_yield_violation.max(v / params.yield_strength);
        }
        states = trial_states;
        path.points.push((f_next, u[problem.monitor_dof]));
        path.iterations.push(iters);
    }
    path.yielded_points = states.iter().filter(|s| s.yielded).count();
    Ok(path)
}

/// Tangent stiffness and internal force at displacement `u`, integrating
/// every Gauss point from its converged state at the start of the step.
fn element_loop<T: Real>(
    disc: &Discretization<T>,
    young: &[T],
    converged: &[PlasticState<T>],
    u: &[T],
    u_start: &[T],
    trial: &mut [PlasticState<T>],
    params: &ElastoplasticParams<T>,
) -> Result<(BandedSym<T>, Vec<T>)> {
    let mesh = disc.mesh();
    let npe = disc.points_per_element();
    let mut k = BandedSym::zeros(disc.equations(), disc.half_bandwidth());
    let mut q = vec![T::zero(); disc.equations()];
    for e in 0..mesh.element_count() {
        let geom = disc.geometry(e);
        let dofs = disc.element_dofs(e);
        let nd = dofs.len();
        let due: Vec<T> = dofs.iter().map(|d| u[*d] - u_start[*d]).collect();
        let mut ke = vec![T::zero(); nd * nd];
        let mut qe = vec![T::zero(); nd];
        for g in 0..npe {
            let idx = e * npe + g;
            let de = geom.strain(g, &due);
            let rm = return_map(&de, &converged[idx], young[idx], params)?;
            geom.add_point_stiffness(g, &rm.tangent, T::one(), &mut ke);
            geom.add_internal_force(g, &rm.stress, &mut qe);
            trial[idx] = rm.state;
        }
        disc.scatter(e, &ke, &mut k);
        for (a, d) in dofs.iter().enumerate() {
            if let Some(i) = disc.eq_of_dof(*d) {
                q[i] += qe[a];
            }
        }
    }
    Ok((k, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ElastoplasticParams<f64> {
        ElastoplasticParams::steel(2.0e11)
    }

    #[test]
    fn elastic_branch_returns_d() {
        let p = params();
        let r = return_map(&[1e-5, 0.0, 0.0], &PlasticState::default(), 2.0e11, &p).unwrap();
        let d = plane_stress_matrix(2.0e11, 0.25);
        assert_eq!(r.tangent, d);
        assert_eq!(r.stress, matvec3(&d, &[1e-5, 0.0, 0.0]));
        assert_eq!(r.plastic_multiplier, 0.0);
    }

    #[test]
    fn plastic_branch_is_consistent() {
        let p = params();
        for de in [[3e-3, 0.0, 0.0], [2e-3, -1e-3, 4e-3], [-1e-3, -2.5e-3, 1e-3], [0.0, 0.0, 5e-3]] {
            let r = return_map(&de, &PlasticState::default(), 2.0e11, &p).unwrap();
            let y = p.yield_strength + p.hardening_modulus * r.state.eq_plastic_strain;
            assert!((von_mises(&r.stress) - y).abs() <= 1e-8 * p.yield_strength);
            assert!(r.plastic_multiplier > 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(r.tangent[i][j], r.tangent[j][i]);
                }
            }
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let p = params();
        let start = PlasticState {
            stress: [150e6, 40e6, 30e6],
            eq_plastic_strain: 1e-3,
            yielded: true,
        };
        let de = [1.5e-3, -2e-4, 6e-4];
        let r = return_map(&de, &start, 2.0e11, &p).unwrap();
        assert!(r.plastic_multiplier > 0.0);
        let h = 1e-8;
        let norm = r.tangent.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..3 {
            let mut up = de;
            let mut dn = de;
            up[j] += h;
            dn[j] -= h;
            let su = return_map(&up, &start, 2.0e11, &p).unwrap().stress;
            let sd = return_map(&dn, &start, 2.0e11, &p).unwrap().stress;
            for i in 0..3 {
                let fd = (su[i] - sd[i]) / (2.0 * h);
                assert!((fd - r.tangent[i][j]).abs() < 1e-4 * norm, "({i},{j}) fd {fd} vs {}", r.tangent[i][j]);
            }
        }
    }

    #[test]
    fn perfect_plasticity_stays_on_surface() {
        let mut p = params();
        p.hardening_modulus = 0.0;
        let r = return_map(&[1e-2, 0.0, 0.0], &PlasticState::default(), 2.0e11, &p).unwrap();
        assert!((von_mises(&r.stress) - 240e6).abs() < 1e-8 * 240e6);
    }

    #[test]
    fn schedule_is_monotone_and_ends_at_max() {
        let s = params().schedule();
        assert_eq!(s.len(), 101);
        assert_eq!(s[0], 0.0);
        assert!((s[100] - 13.5e3).abs() < 1e-9);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        let mut p = params();
        p.load_step = 1000.0;
        let s = p.schedule();
        assert_eq!(*s.last().unwrap(), 13.5e3);
    }

    #[test]
    fn validation_lists_errors() {
        let mut p = params();
        p.yield_strength = -1.0;
        p.load_step = 0.0;
        match p.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
