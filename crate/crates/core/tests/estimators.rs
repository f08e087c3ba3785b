use mluq::distributions::normal_cdf;
use mluq::estimators::{
    lattice_point, mc_estimate, mlmc_run, mlqmc_run, next_qmc_size, optimal_samples, CoupledSampler, EstimatorOptions,
    LatticeRule, LevelPolicy, Method, ShiftSet, Termination,
};
use mluq::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `P_ℓ = X + 4^{−ℓ} Y` with `X = σ ω₀`, `Y = 1 + σ ω₁`, cost `4^ℓ`.
/// `E[P_ℓ] = 4^{−ℓ}`, `ΔP_ℓ = −3·4^{−ℓ} Y`.
struct Toy {
    sigma: f64,
    max_level: usize,
}

impl Toy {
    fn p(&self, level: usize, w: &[f64]) -> f64 {
        self.sigma * w[0] + 0.25f64.powi(level as i32) * (1.0 + self.sigma * w[1])
    }
}

impl CoupledSampler for Toy {
    fn dimension(&self) -> usize {
        2
    }
    fn max_level(&self) -> usize {
        self.max_level
    }
    fn cost(&self, level: usize, _coupled: bool) -> f64 {
        4f64.powi(level as i32)
    }
    fn sample(&self, level: usize, w: &[f64], coupled: bool) -> Result<(f64, f64)> {
        let coarse = if coupled && level > 0 { self.p(level - 1, w) } else { 0.0 };
        Ok((self.p(level, w), coarse))
    }
}

/// Ignores ω entirely.
struct Deterministic;

impl CoupledSampler for Deterministic {
    fn dimension(&self) -> usize {
        1
    }
    fn max_level(&self) -> usize {
        4
    }
    fn cost(&self, level: usize, _coupled: bool) -> f64 {
        1.0 + level as f64
    }
    fn sample(&self, level: usize, _w: &[f64], coupled: bool) -> Result<(f64, f64)> {
        let f = |l: usize| 2.0 - 0.5f64.powi(l as i32);
        Ok((f(level), if coupled && level > 0 { f(level - 1) } else { 0.0 }))
    }
}

/// `Φ(ω₀)`, uniform on (0, 1).
struct Uniform;

impl CoupledSampler for Uniform {
    fn dimension(&self) -> usize {
        1
    }
    fn max_level(&self) -> usize {
        0
    }
    fn cost(&self, _level: usize, _coupled: bool) -> f64 {
        1.0
    }
    fn sample(&self, _level: usize, w: &[f64], _coupled: bool) -> Result<(f64, f64)> {
        Ok((normal_cdf(w[0]), 0.0))
    }
}

fn options(eps: f64, seed: u64, levels: LevelPolicy) -> EstimatorOptions {
    EstimatorOptions::new(eps, seed, levels)
}

#[test]
fn uniform_mc_sample_size_matches_closed_form() {
    let est = mc_estimate(&Uniform, 0, &options(0.01, 3, LevelPolicy::Fixed(0))).unwrap();
    let target = 2.0 * (1.0 / 12.0) / 1e-4;
    let n = est.per_level[0].n_samples as f64;
    assert!((n - target).abs() / target < 0.2, "N = {n}, target {target}");
    assert!((est.value - 0.5).abs() < 0.03);
    assert_eq!(est.method, Method::Mc);
}

#[test]
fn allocation_matches_formula() {
    let n = optimal_samples(&[(1.0, 1.0), (0.01, 100.0)], 0.1).unwrap();
    assert_eq!(n[0], 100 * n[1]);
    let input: [(f64, f64); 4] = [(2.5, 1.0), (0.3, 4.0), (0.02, 16.0), (1e-3, 64.0)];
    let eps: f64 = 3e-3;
    let sum: f64 = input.iter().map(|(v, c)| (v * c).sqrt()).sum();
    let expect: Vec<u64> = input
        .iter()
        .map(|(v, c)| (2.0 / (eps * eps) * (v / c).sqrt() * sum).ceil() as u64)
        .collect();
    let got = optimal_samples(&input, eps).unwrap();
    assert_eq!(got, expect);
    let var: f64 = input.iter().zip(&got).map(|((v, _), n)| v / *n as f64).sum();
    assert!(var <= eps * eps / 2.0);
}

#[test]
fn mse_contract_on_gaussian_toy() {
    let toy = Toy {
        sigma: 0.05,
        max_level: 12,
    };
    let eps = 1e-3;
    let reps = 200;
    let mut sq = 0.0;
    let mut bounded = 0;
    for seed in 0..reps {
        let est = mlmc_run(&toy, &options(eps, 1000 + seed, LevelPolicy::Adaptive { max_level: 12 })).unwrap();
        assert_eq!(est.termination, Termination::Converged);
        sq += est.value.powi(2);
        if est.mse_bound() <= eps * eps {
            bounded += 1;
        }
    }
    let mse = sq / reps as f64;
    assert!(mse <= eps * eps, "empirical MSE {mse:e}");
    assert!(bounded as f64 >= 0.95 * reps as f64, "{bounded}/{reps} runs within the MSE bound");
}

#[test]
fn mlmc_is_unbiased_and_variance_formula_holds() {
    let toy = Toy {
        sigma: 0.5,
        max_level: 2,
    };
    let reps = 500;
    let (mut values, mut predicted) = (Vec::new(), 0.0);
    for seed in 0..reps {
        let est = mlmc_run(&toy, &options(2e-2, 77 + seed, LevelPolicy::Fixed(2))).unwrap();
        values.push(est.value);
        predicted += est.variance_of_estimator;
    }
    let n = reps as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let exact = 1.0 / 16.0;
    assert!((mean - exact).abs() < 3.0 * (var / n).sqrt(), "mean {mean}, exact {exact}");
    predicted /= n;
    assert!((var - predicted).abs() / predicted < 0.2, "empirical {var:e}, formula {predicted:e}");
}

#[test]
fn deterministic_function_telescopes_exactly() {
    for l in 0..=4 {
        let est = mlmc_run(&Deterministic, &options(1e-3, 1, LevelPolicy::Fixed(l))).unwrap();
        assert_eq!(est.value, 2.0 - 0.5f64.powi(l as i32));
        assert_eq!(est.variance_of_estimator, 0.0);
    }
    let q = mlqmc_run(&Deterministic, &LatticeRule::default_for(1).unwrap(), &options(1e-3, 1, LevelPolicy::Fixed(3)))
        .unwrap();
    assert_eq!(q.value, 1.875);
    assert!(q.per_level.iter().all(|l| l.n_samples == 2));
}

#[test]
fn single_level_mlmc_equals_mc() {
    let toy = Toy {
        sigma: 0.3,
        max_level: 3,
    };
    let o = options(1e-2, 9, LevelPolicy::Fixed(0));
    let a = mlmc_run(&toy, &o).unwrap();
    let b = mc_estimate(&toy, 0, &o).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.per_level[0].n_samples, b.per_level[0].n_samples);
    assert_eq!(a.variance_of_estimator.to_bits(), b.variance_of_estimator.to_bits());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let toy = Toy {
        sigma: 0.2,
        max_level: 6,
    };
    let rule = LatticeRule::default_for(2).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut o = options(2e-3, 5, LevelPolicy::Adaptive { max_level: 6 });
            o.chunk = 64;
            let m = mlmc_run(&toy, &o).unwrap();
            let q = mlqmc_run(&toy, &rule, &o).unwrap();
            let counts = |e: &mluq::estimators::MultilevelEstimate| e.per_level.iter().map(|l| l.n_samples).collect::<Vec<_>>();
            (m.value.to_bits(), counts(&m), q.value.to_bits(), counts(&q))
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(8));
}

#[test]
fn reported_cost_is_sum_of_evaluations() {
    let toy = Toy {
        sigma: 0.2,
        max_level: 5,
    };
    let o = options(5e-3, 2, LevelPolicy::Adaptive { max_level: 5 });
    for est in [
        mlmc_run(&toy, &o).unwrap(),
        mlqmc_run(&toy, &LatticeRule::default_for(2).unwrap(), &o).unwrap(),
    ] {
        let sum: f64 = est
            .per_level
            .iter()
            .map(|l| (l.n_samples * l.shifts() as u64) as f64 * 4f64.powi(l.level as i32))
            .sum();
        assert_eq!(est.total_cost(), sum);
    }
}

#[test]
fn shifted_lattice_beats_monte_carlo_rate_on_exponential() {
    let rule = LatticeRule::default_for(1).unwrap();
    let shifts = ShiftSet::random(32, 1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let exact = std::f64::consts::E - 1.0;
    let mut pts = Vec::new();
    for m in 4..=12 {
        let n = 1u64 << m;
        let mse: f64 = (0..shifts.len())
            .map(|i| {
                let q = (0..n).map(|k| lattice_point(&rule, k, shifts.shift(i))[0].exp()).sum::<f64>() / n as f64;
                (q - exact).powi(2)
            })
            .sum::<f64>()
            / shifts.len() as f64;
        pts.push(((n as f64).ln(), mse.sqrt().ln()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope < -0.8, "slope {slope}");
}

#[test]
fn lattice_hand_example() {
    let rule = LatticeRule::new(vec![1, 3]).unwrap();
    assert_eq!(lattice_point(&rule, 1, &[0.0, 0.0]), vec![0.5, 0.5]);
    assert_eq!(lattice_point(&rule, 0, &[0.0, 0.0]), vec![0.0, 0.0]);
    assert_eq!(lattice_point(&rule, 2, &[0.0, 0.0]), vec![0.25, 0.75]);
    // Pairwise differences mod 1 do not depend on the shift.
    let d = |s: &[f64]| {
        let (a, b) = (lattice_point(&rule, 5, s), lattice_point(&rule, 11, s));
        (0..2).map(|j| (a[j] - b[j]).rem_euclid(1.0)).collect::<Vec<_>>()
    };
    let (d0, d1) = (d(&[0.0, 0.0]), d(&[0.3125, 0.8125]));
    for j in 0..2 {
        assert!((d0[j] - d1[j]).abs() < 1e-12 || ((d0[j] - d1[j]).abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn qmc_growth_sequence_from_two() {
    let mut n = 2;
    let mut seq = vec![n];
    while seq.len() < 21 {
        n = next_qmc_size(n);
        seq.push(n);
    }
    assert_eq!(seq, [2, 3, 4, 5, 6, 8, 10, 12, 15, 18, 22, 27, 33, 40, 48, 58, 70, 84, 101, 122, 147]);
}

#[test]
fn constant_integrand_is_exact_after_first_round() {
    struct Constant;
    impl CoupledSampler for Constant {
        fn dimension(&self) -> usize {
            3
        }
        fn max_level(&self) -> usize {
            0
        }
        fn cost(&self, _: usize, _: bool) -> f64 {
            1.0
        }
        fn sample(&self, _: usize, _: &[f64], _: bool) -> Result<(f64, f64)> {
            Ok((4.25, 0.0))
        }
    }
    let o = options(1e-6, 1, LevelPolicy::Fixed(0));
    let q = mlqmc_run(&Constant, &LatticeRule::default_for(3).unwrap(), &o).unwrap();
    assert_eq!((q.value, q.variance_of_estimator, q.per_level[0].n_samples), (4.25, 0.0, 2));
    let m = mc_estimate(&Constant, 0, &o).unwrap();
    assert_eq!((m.value, m.variance_of_estimator, m.per_level[0].n_samples), (4.25, 0.0, 40));
}
