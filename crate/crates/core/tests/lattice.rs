use mluq::estimators::lattice::{DEFAULT_CANDIDATES, DEFAULT_CBC_SEED, DEFAULT_LOG2_N};
use mluq::estimators::LatticeRule;

const SHIPPED: &str = include_str!("../data/lattice_z.txt");

#[test]
fn shipped_vector_regenerates_from_cbc() {
    let dim = SHIPPED.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count();
    assert_eq!(dim, 250);
    let rule = LatticeRule::cbc(dim, DEFAULT_LOG2_N, DEFAULT_CANDIDATES, DEFAULT_CBC_SEED);
    assert_eq!(rule.to_text(DEFAULT_LOG2_N, DEFAULT_CANDIDATES, DEFAULT_CBC_SEED), SHIPPED);
    assert_eq!(LatticeRule::default_for(dim).unwrap(), rule);
}

#[test]
fn worst_case_error_falls_with_more_points() {
    let rule = LatticeRule::default_for(8).unwrap();
    let e: Vec<f64> = (6..=14).step_by(2).map(|m| rule.worst_case_error_sq(m)).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    // Faster than the Monte Carlo rate N^{-1} for the squared error.
    assert!(e[0] / e[4] > 256.0, "{e:?}");
}
