//! Small numerical helpers shared by the solvers: binomial weights,
//! bracketed bisection and exactly rounded summation.

use crate::error::{Error, Result};

/// Binomial coefficient as a float. Exact for every `n` used here (n ≤ 1000).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// `C(n, k) p^k (1 - p)^(n - k)` for `k = 0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
        .collect()
}

/// Outcome of a bisection run.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub value: f64,
    pub bracket: (f64, f64),
}

/// Bisection for a function that is positive at `lo` and non-positive at `hi`.
///
/// Runs until the bracket stops shrinking in floating point (at most 200 halvings)
/// and returns whichever end has the smaller residual.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Root {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm > 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    let (x, value) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
    Root { x, value, bracket: (lo, hi) }
}

/// Grows `hi` by doubling from `start` until `f(hi) <= 0`.
///
/// Stops early once the function has dropped to -0.5 or below. Fails after
/// 200 doublings.
pub fn expand_upper<F: Fn(f64) -> f64>(f: &F, start: f64) -> Result<f64> {
    let mut hi = start;
    for _ in 0..200 {
        let v = f(hi);
        if v.is_nan() {
            return Err(Error::Numerical(format!("first-order condition is NaN at {hi}")));
        }
        if v <= 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::Numerical(format!(
        "no sign change found below {hi}; first-order condition stays positive"
    )))
}

/// Exactly rounded floating-point summation (Shewchuk's partials, as in
/// Python's `math.fsum`). The result is the correctly rounded value of the
/// exact real sum of the inputs, so it does not depend on input order.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0;
    for mut x in values {
        if !x.is_finite() {
            special += x;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if special != 0.0 || special.is_nan() {
        return special;
    }
    // Round the partials, largest first, with half-even correction.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
