//! Gauss–Legendre rules on [−1, 1] and tensor products on rectangles.

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1],
/// nodes ascending.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (
        nodes.into_iter().map(T::lit).collect(),
        weights.into_iter().map(T::lit).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let pn = if n == 0 { 1.0 } else { p1 };
    let pnm1 = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
    (pn, d)
}

/// Tensor-product Gauss–Legendre rule on `[x0, x0+lx] × [y0, y0+ly]`.
///
/// Points are ordered with the x index outermost.
pub fn tensor_rule_rect<T: Real>(
    nx: usize,
    ny: usize,
    origin: [T; 2],
    extent: [T; 2],
) -> (Vec<[T; 2]>, Vec<T>) {
    let (gx, wx) = gauss_legendre::<T>(nx);
    let (gy, wy) = gauss_legendre::<T>(ny);
    let half = T::lit(0.5);
    let mut pts = Vec::with_capacity(nx * ny);
    let mut wts = Vec::with_capacity(nx * ny);
    for (xi, wxi) in gx.iter().zip(&wx) {
        for (eta, wyj) in gy.iter().zip(&wy) {
            pts.push([
                origin[0] + half * extent[0] * (*xi + T::one()),
                origin[1] + half * extent[1] * (*eta + T::one()),
            ]);
            wts.push(*wxi * *wyj * half * extent[0] * half * extent[1]);
        }
    }
    (pts, wts)
}
