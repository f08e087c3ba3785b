use mluq::fem::banded::BandedSym;
use mluq::fem::element::{element_mass, element_stiffness, lumped_mass, ElementGeometry};
use mluq::fem::shape::{shape_functions, MAX_ORDER};
use mluq::fem::{
    min_wavelength, solve_dynamic, solve_static, BeamGeometry, Discretization, HarmonicParams, LevelSpec,
    MaterialSample, Mesh, RefinementKind, Support,
};
use nalgebra::DMatrix;

const E: f64 = 3.0e10;
const NU: f64 = 0.15;
const RHO: f64 = 2500.0;

fn geometry() -> BeamGeometry<f64> {
    BeamGeometry {
        length: 2.5,
        height: 0.25,
        thickness: 1.0,
    }
}

fn beam(kind: RefinementKind, level: usize, support: Support) -> Discretization<f64> {
    let spec = LevelSpec::new(kind, level, (40, 4)).unwrap();
    Discretization::new(Mesh::beam(&spec, &geometry(), support).unwrap(), 1.0).unwrap()
}

fn dense(k: &BandedSym<f64>) -> DMatrix<f64> {
    let n = k.dim();
    DMatrix::from_fn(n, n, |i, j| k.get(i, j))
}

#[test]
fn shape_gradients_match_central_differences() {
    let h = 1e-6;
    for order in 1..=MAX_ORDER {
        for (xi, eta) in [(0.13, -0.41), (-0.77, 0.52), (0.0, 0.9)] {
            let s = shape_functions::<f64>(order, xi, eta);
            let px = shape_functions::<f64>(order, xi + h, eta);
            let mx = shape_functions::<f64>(order, xi - h, eta);
            let py = shape_functions::<f64>(order, xi, eta + h);
            let my = shape_functions::<f64>(order, xi, eta - h);
            for k in 0..s.n.len() {
                let fx = (px.n[k] - mx.n[k]) / (2.0 * h);
                let fy = (py.n[k] - my.n[k]) / (2.0 * h);
                assert!((fx - s.dn_dxi[k]).abs() < 1e-7, "order {order} node {k}");
                assert!((fy - s.dn_deta[k]).abs() < 1e-7, "order {order} node {k}");
            }
        }
    }
}

/// Bilinear unit-square stiffness for E = 1, ν = 0 by 2×2 Gauss quadrature,
/// written out independently of the library.
fn unit_square_oracle() -> DMatrix<f64> {
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    let g = 0.5 / 3f64.sqrt();
    let mut k = DMatrix::zeros(8, 8);
    for x in [0.5 - g, 0.5 + g] {
        for y in [0.5 - g, 0.5 + g] {
            // N_i = (1 − |x − x_i|)(1 − |y − y_i|) on the unit square.
            let mut b = DMatrix::zeros(3, 8);
            for (i, (xi, yi)) in corners.iter().enumerate() {
                let sx = if *xi == 0.0 { -1.0 } else { 1.0 };
                let sy = if *yi == 0.0 { -1.0 } else { 1.0 };
                let dx = sx * (1.0 - (y - yi).abs());
                let dy = sy * (1.0 - (x - xi).abs());
                b[(0, 2 * i)] = dx;
                b[(1, 2 * i + 1)] = dy;
                b[(2, 2 * i)] = dy;
                b[(2, 2 * i + 1)] = dx;
            }
            let d = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5]);
            k += b.transpose() * d * b * 0.25;
        }
    }
    k
}

#[test]
fn unit_square_element_matches_hand_quadrature() {
    let mesh = Mesh::<f64>::rectangle(1, 1, 1, 1.0, 1.0).unwrap();
    let geom = ElementGeometry::new(&mesh, 0, 1.0).unwrap();
    let k = element_stiffness(&geom, &[1.0; 4], 0.0).unwrap();
    let oracle = unit_square_oracle();
    for i in 0..8 {
        for j in 0..8 {
            assert!((k[i * 8 + j] - oracle[(i, j)]).abs() < 1e-14);
            assert_eq!(k[i * 8 + j], k[j * 8 + i]);
        }
    }
    let trace: f64 = (0..8).map(|i| k[i * 8 + i]).sum();
    assert!((trace - oracle.trace()).abs() < 1e-14);
}

#[test]
fn mass_row_sums_conserve_total() {
    for order in 1..=4 {
        let mesh = Mesh::<f64>::rectangle(1, 1, order, 0.3, 0.2).unwrap();
        let geom = ElementGeometry::new(&mesh, 0, 0.5).unwrap();
        let m = element_mass(&geom, RHO);
        let nd = geom.dofs();
        let lumped = lumped_mass(&m, nd);
        let total: f64 = lumped.iter().sum();
        // Each direction carries the full mass ρ·area·thickness.
        let expected = 2.0 * RHO * 0.3 * 0.2 * 0.5;
        assert!((total - expected).abs() / expected < 1e-12, "order {order}");
        assert!((m.iter().sum::<f64>() - expected).abs() / expected < 1e-12);
    }
}

#[test]
fn free_structure_has_three_rigid_modes() {
    for order in [1, 2, 3] {
        let mesh = Mesh::<f64>::rectangle(3, 2, order, 1.0, 0.4).unwrap();
        let n = mesh.dof_count();
        let disc = Discretization::with_dof_constraints(mesh, 1.0, vec![false; n]).unwrap();
        let k = dense(&disc.assemble_stiffness(&MaterialSample::uniform(E, NU, RHO)).unwrap());
        let eig = k.symmetric_eigen();
        let scale = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-10 * scale).count();
        assert_eq!(zeros, 3, "order {order}");
        assert!(eig.eigenvalues.iter().all(|v| *v > -1e-10 * scale));
    }
}

#[test]
fn constrained_stiffness_is_symmetric_and_positive_definite() {
    for kind in [RefinementKind::H, RefinementKind::P] {
        let disc = beam(kind, 1, Support::ClampedClamped);
        let young: Vec<f64> = (0..disc.mesh().element_count()).map(|e| E * (1.0 + 0.5 * ((e as f64) * 0.37).sin())).collect();
        let mat = MaterialSample {
            young: mluq::fem::YoungField::PerElement(young),
            poisson: NU,
            density: RHO,
        };
        let k = disc.assemble_stiffness(&mat).unwrap();
        let d = dense(&k);
        let asym = (&d - d.transpose()).abs().max();
        assert!(asym <= 1e-12 * d.abs().max());
        assert!(k.cholesky().is_ok());
    }
}

#[test]
fn load_sum_is_level_invariant() {
    for kind in [RefinementKind::H, RefinementKind::P] {
        for level in 0..4 {
            for support in [Support::ClampedClamped, Support::Cantilever] {
                let disc = beam(kind, level, support);
                let f = disc.load_vector(1e7);
                let fy: f64 = f.iter().skip(1).step_by(2).sum();
                let fx: f64 = f.iter().step_by(2).sum();
                assert!((fy + 1e7).abs() < 1e-6, "{kind:?} {level} {support:?}");
                assert_eq!(fx, 0.0);
            }
        }
    }
}

#[test]
fn paper_dof_counts() {
    let dofs = |kind, l| LevelSpec::new(kind, l, (40, 4)).unwrap().dof_count();
    assert_eq!(dofs(RefinementKind::H, 0), 410);
    assert_eq!(dofs(RefinementKind::H, 3), 21186);
    assert_eq!(dofs(RefinementKind::P, 3), 5474);
}

#[test]
fn clamped_deflection_near_beam_theory() {
    let disc = beam(RefinementKind::H, 2, Support::ClampedClamped);
    let sys = disc.assemble_and_constrain(&MaterialSample::uniform(E, NU, RHO), 1e7).unwrap();
    let sol = solve_static(&sys).unwrap();
    assert!(sol.relative_residual < 1e-10);
    let u = disc.expand(&sol.displacement);
    let w = u[2 * disc.mesh().qoi_node() + 1];
    let i = 0.25f64.powi(3) / 12.0;
    let eb = 1e7 * 2.5f64.powi(3) / (192.0 * E * i);
    assert!((eb - 0.0208).abs() < 1e-4);
    // Shear deformation makes the deep beam softer than Euler–Bernoulli.
    assert!(w < 0.0 && -w > eb && -w < 1.2 * eb, "w = {w}, EB = {eb}");
}

#[test]
fn potential_energy_decreases_under_refinement() {
    for kind in [RefinementKind::H, RefinementKind::P] {
        let mut last = f64::INFINITY;
        for level in 0..4 {
            let disc = beam(kind, level, Support::ClampedClamped);
            let sys = disc.assemble_and_constrain(&MaterialSample::uniform(E, NU, RHO), 1e7).unwrap();
            let u = solve_static(&sys).unwrap().displacement;
            let ku = sys.stiffness.matvec(&u);
            let energy = 0.5 * u.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>()
                - u.iter().zip(&sys.load).map(|(a, b)| a * b).sum::<f64>();
            assert!(energy <= last * (1.0 - 1e-12) || last.is_infinite(), "{kind:?} level {level}");
            last = energy;
        }
    }
}

#[test]
fn static_limit_of_harmonic_solve() {
    let disc = beam(RefinementKind::H, 0, Support::Cantilever);
    let mat = MaterialSample::uniform(E, NU, RHO);
    let sys = disc.assemble_and_constrain(&mat, 1e7).unwrap();
    let u = solve_static(&sys).unwrap().displacement;
    let m = disc.assemble_mass(RHO);
    let z = solve_dynamic(
        &sys.stiffness,
        &m,
        &sys.load,
        &HarmonicParams {
            frequency: 0.0,
            loss_factor: 0.0,
        },
    )
    .unwrap();
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in u.iter().zip(&z) {
        assert!((a - b.re).abs() < 1e-9 * scale);
        assert_eq!(b.im, 0.0);
    }
}

#[test]
fn single_dof_oscillator_peaks_at_natural_frequency() {
    // One element with only the top-right u_y free: a spring–mass system.
    let mesh = Mesh::<f64>::rectangle(1, 1, 1, 0.5, 0.5).unwrap();
    let mut fixed = vec![true; mesh.dof_count()];
    fixed[2 * 3 + 1] = false;
    let mesh = mesh.with_boundary(Vec::new(), vec![3], 3);
    let disc = Discretization::with_dof_constraints(mesh, 1.0, fixed).unwrap();
    let k = disc.assemble_stiffness(&MaterialSample::uniform(E, NU, RHO)).unwrap();
    let m = disc.assemble_mass(RHO);
    let f0 = (k.get(0, 0) / m.get(0, 0)).sqrt() / (2.0 * std::f64::consts::PI);
    let load = disc.restrict(&disc.load_vector(1.0));
    let mut best = (0.0, 0.0);
    for i in 0..4000 {
        let f = f0 * (0.5 + i as f64 / 4000.0);
        let u = solve_dynamic(
            &k,
            &m,
            &load,
            &HarmonicParams {
                frequency: f,
                loss_factor: 0.02,
            },
        )
        .unwrap();
        if u[0].norm() > best.1 {
            best = (f, u[0].norm());
        }
    }
    assert!((best.0 - f0).abs() / f0 < 1e-3, "peak {} vs {f0}", best.0);
    // Peak height of a hysteretically damped oscillator: 1/(η k).
    assert!((best.1 * 0.02 * k.get(0, 0) - 1.0).abs() < 1e-3);
}

#[test]
fn coarse_mesh_resolves_400_hz_wavelength() {
    let i = 0.25f64.powi(3) / 12.0;
    let lambda = min_wavelength(E, i, 0.25, RHO, 400.0);
    let expected = (2.0 * std::f64::consts::PI / 400.0f64).sqrt() * (E * i / (RHO * 0.25)).powf(0.25);
    assert!((lambda - expected).abs() < 1e-12);
    assert!(lambda / 0.0625 >= 6.0);
}
