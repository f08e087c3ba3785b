use mluq::distributions::{gamma_cdf, gamma_inv_cdf, gamma_pdf, memoryless_transform, normal_cdf, normal_inv_cdf, GammaParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn concrete() -> GammaParams<f64> {
    GammaParams::new(7.1633, 4.1880e9).unwrap()
}

fn steel() -> GammaParams<f64> {
    GammaParams::new(934.2, 0.214e9).unwrap()
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Bisection for `F(x) = u` on a bracket.
fn bisect<F: Fn(f64) -> f64>(f: F, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn concrete_pdf_integrates_to_one() {
    let p = concrete();
    // The density is negligible beyond 2e11; split the range so the peak is resolved.
    let pdf = |x: f64| gamma_pdf(x, &p).unwrap();
    let total = simpson(pdf, 0.0, 1e11, 20_000) + simpson(pdf, 1e11, 1e12, 2_000);
    assert!((total - 1.0).abs() < 1e-6, "integral {total}");
}

#[test]
fn steel_median_matches_bisection() {
    let p = steel();
    let median = gamma_inv_cdf(0.5, &p).unwrap();
    assert!((gamma_cdf(median, &p).unwrap() - 0.5).abs() < 1e-10);
    let oracle = bisect(|x| gamma_cdf(x, &p).unwrap(), 0.5, 1.5e11, 2.5e11);
    assert!((median - oracle).abs() / oracle < 1e-9);
}

#[test]
fn normal_quantile_reference() {
    // 97.5% point of the standard normal to 15 digits.
    assert!((normal_inv_cdf(0.975f64).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
    assert!((normal_inv_cdf(1e-10f64).unwrap() + 6.361_340_902_404_056).abs() < 1e-7);
}

#[test]
fn normal_quantile_inverts_cdf_across_range() {
    let mut worst = 0.0f64;
    for k in 1..2000 {
        let u = k as f64 / 2000.0;
        let y = normal_inv_cdf(u).unwrap();
        worst = worst.max((normal_cdf(y) - u).abs());
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn memoryless_zero_maps_to_median_by_bisection() {
    for p in [concrete(), steel()] {
        let g0 = memoryless_transform(0.0, &p).unwrap();
        let hi = p.mean() * 3.0;
        let oracle = bisect(|x| gamma_cdf(x, &p).unwrap(), 0.5, 0.0, hi);
        assert!((g0 - oracle).abs() / oracle < 1e-9);
    }
}

#[test]
fn transformed_normals_have_gamma_mean() {
    let p = concrete();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += memoryless_transform(StandardNormal.sample(&mut rng), &p).unwrap();
    }
    let mean = sum / n as f64;
    let se = p.std_dev() / (n as f64).sqrt();
    assert!((mean - p.mean()).abs() < 3.0 * se, "mean {mean}, target {}", p.mean());
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn transformed_normals_pass_ks_test() {
    for (seed, p) in [(1u64, concrete()), (2, steel()), (3, GammaParams::new(0.7, 2.0).unwrap())] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| memoryless_transform(StandardNormal.sample(&mut rng), &p).unwrap())
            .collect();
        let d = ks_statistic(xs, |x| gamma_cdf(x, &p).unwrap());
        // Asymptotic critical value at significance 0.01.
        let crit = 1.6276 / (n as f64).sqrt();
        assert!(d < crit, "D = {d} >= {crit} for {p:?}");
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let p32 = GammaParams::<f32>::new(7.1633, 4.1880e9).unwrap();
    let p64 = concrete();
    for y in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        let a = memoryless_transform(y as f32, &p32).unwrap() as f64;
        let b = memoryless_transform(y, &p64).unwrap();
        assert!((a - b).abs() / b < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inverse_cdf_roundtrip(shape in 0.5f64..2000.0, log_scale in -3.0f64..10.0, u in 1e-6f64..(1.0 - 1e-6)) {
        let p = GammaParams::new(shape, 10f64.powf(log_scale)).unwrap();
        let x = gamma_inv_cdf(u, &p).unwrap();
        prop_assert!(x > 0.0 && x.is_finite());
        prop_assert!((gamma_cdf(x, &p).unwrap() - u).abs() < 1e-9);
    }

    #[test]
    fn memoryless_is_monotone(shape in 0.5f64..2000.0, a in -8.0f64..8.0, b in -8.0f64..8.0) {
        let p = GammaParams::new(shape, 1.0).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(memoryless_transform(lo, &p).unwrap() <= memoryless_transform(hi, &p).unwrap());
    }
}
