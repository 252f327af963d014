//! Oracles shared by the integration tests.

#![allow(dead_code)]

pub fn double_well(tilt: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (x * x - 1.0).powi(2) + tilt * x
}

/// P(exit at `a` | start `x`) = int_x^b e^{2f/h} / int_a^b e^{2f/h}, by
/// composite Simpson with the integrand shifted by its maximum.
pub fn simpson_exit_left(f: &dyn Fn(f64) -> f64, a: f64, b: f64, x: f64, h: f64) -> f64 {
    let n = 400_000;
    let fmax = (0..=1000)
        .map(|i| f(a + (b - a) * i as f64 / 1000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let g = |y: f64| (2.0 * (f(y) - fmax) / h).exp();
    let simpson = |lo: f64, hi: f64| {
        let dx = (hi - lo) / n as f64;
        let mut acc = g(lo) + g(hi);
        for i in 1..n {
            acc += g(lo + i as f64 * dx) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * dx / 3.0
    };
    let left = simpson(a, x);
    let right = simpson(x, b);
    right / (left + right)
}
