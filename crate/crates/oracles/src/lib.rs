//! Slow, direct reference computations for tests. Nothing here shares code
//! with the implementations it checks.

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 30)
}

/// `e^{-z} I_n(z)` for integer `n >= 0` from `(1/π) ∫_0^π e^{z(cos θ - 1)} cos(nθ) dθ`.
///
/// The integrand is smooth and periodic, so the trapezoid rule converges
/// geometrically; its aliasing error is of order `I_{2N-n}(z) / I_n(z)`,
/// negligible once `2N - n` exceeds about `9 sqrt(z)`.
pub fn bessel_i_scaled(n: u32, z: f64) -> f64 {
    let g = |t: f64| (z * (t.cos() - 1.0)).exp() * (n as f64 * t).cos();
    let nodes = 16 + n as usize + (5.0 * z.sqrt()).ceil() as usize;
    let h = PI / nodes as f64;
    let inner: f64 = (1..nodes).map(|j| g(j as f64 * h)).sum();
    (0.5 * (g(0.0) + g(PI)) + inner) / nodes as f64
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Marcum `Q_m(a, b)` for integer `m >= 1` by direct integration of the
/// non-central chi density from `b` to infinity.
pub fn marcum_q_quadrature(m: u32, a: f64, b: f64) -> f64 {
    assert!(m >= 1);
    if b == 0.0 {
        return 1.0;
    }
    let density = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        if a == 0.0 {
            x.powi(2 * m as i32 - 1) * (-0.5 * x * x).exp() / (2f64.powi(m as i32 - 1) * factorial(m - 1))
        } else {
            let d = x - a;
            x * (x / a).powi(m as i32 - 1) * (-0.5 * d * d).exp() * bessel_i_scaled(m - 1, a * x)
        }
    };
    // outside a ±12 window around the peak the density is below e^{-70}
    let peak = a.max((2.0 * m as f64 - 1.0).sqrt());
    let upper = peak.max(b) + 12.0;
    let mut total = 0.0;
    let mut lo = b.max(peak - 12.0);
    while lo < upper {
        let hi = (lo + 1.0).min(upper);
        total += adaptive_simpson(&density, lo, hi, 1e-12);
        lo = hi;
    }
    total
}

/// Success-count distribution by summing over all `2^F` outcomes.
pub fn poisson_binomial_enumerate(p: &[f64]) -> Vec<f64> {
    let f = p.len();
    assert!(f <= 20);
    let mut out = vec![0.0; f + 1];
    for mask in 0u32..(1 << f) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        out[mask.count_ones() as usize] += prob;
    }
    out
}

/// `KL(N(m0, s0²) || N(m1, s1²))`.
pub fn gaussian_kl(m0: f64, s0: f64, m1: f64, s1: f64) -> f64 {
    (s1 / s0).ln() + (s0 * s0 + (m0 - m1).powi(2)) / (2.0 * s1 * s1) - 0.5
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = xs[i];
            xs[i] = x0 + h;
            let up = f(&xs);
            xs[i] = x0 - h;
            let down = f(&xs);
            xs[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over paired entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_gaussian() {
        assert!((adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        let g = adaptive_simpson(&|x: f64| (-x * x / 2.0).exp(), -10.0, 10.0, 1e-13);
        assert!((g - (2.0 * PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bessel_known_values() {
        // I_0(1) = 1.2660658777520082, I_1(2) = 1.5906368546373291
        assert!((bessel_i_scaled(0, 1.0) * 1f64.exp() - 1.2660658777520082).abs() < 1e-13);
        assert!((bessel_i_scaled(1, 2.0) * 2f64.exp() - 1.590_636_854_637_329).abs() < 1e-13);
        // large argument: e^{-z} I_0(z) ~ 1/sqrt(2πz) (1 + 1/(8z))
        let z = 2000.0;
        let approx = (1.0 + 1.0 / (8.0 * z)) / (2.0 * PI * z).sqrt();
        assert!((bessel_i_scaled(0, z) - approx).abs() < 1e-9);
    }

    #[test]
    fn marcum_closed_forms() {
        assert!((marcum_q_quadrature(1, 0.0, 2.0) - (-2f64).exp()).abs() < 1e-10);
        // Q_2(0, b) = e^{-b²/2} (1 + b²/2)
        assert!((marcum_q_quadrature(2, 0.0, 1.5) - (-1.125f64).exp() * 2.125).abs() < 1e-10);
        // Q_1(a, b) + Q_1(b, a) = 1 + e^{-(a²+b²)/2} I_0(ab)
        let (a, b) = (1.3, 2.1);
        let lhs = marcum_q_quadrature(1, a, b) + marcum_q_quadrature(1, b, a);
        let rhs = 1.0 + (-(a - b) * (a - b) / 2.0).exp() * bessel_i_scaled(0, a * b);
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn enumeration_and_kl() {
        assert_eq!(poisson_binomial_enumerate(&[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
        assert!((gaussian_kl(0.0, 1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        let d = central_diff(|x| x[0] * x[0] * x[1], &[2.0, 3.0], 1e-5);
        assert!(max_rel_err(&d, &[12.0, 4.0], 1e-8) < 1e-9);
    }
}
