//! Special functions used across the crate: factorials and binomials in log
//! space, generalized Laguerre polynomials, Hermite functions and Poisson
//! tails.

use std::f64::consts::PI;

/// Arguments below this use the exact integer path for binomials.
pub const EXACT_BINOMIAL_LIMIT: u64 = 60;

/// `ln(n!)`, summed directly for small `n` and via Stirling's series above.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 256 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64 + 1.0;
    // Stirling series for ln Γ(x), accurate to ~1e-16 relative at x > 256.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Exact `C(n, k)` for `n < EXACT_BINOMIAL_LIMIT`.
fn binomial_exact(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `C(n, k)` as a float. Returns 0 for `k > n`.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n < EXACT_BINOMIAL_LIMIT {
        binomial_exact(n, k) as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

/// `ln C(n, k)`; `-inf` for `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if n < EXACT_BINOMIAL_LIMIT {
        (binomial_exact(n, k) as f64).ln()
    } else {
        ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
    }
}

/// Generalized Laguerre polynomial `L_n^{(alpha)}(x)` by the three-term
/// recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// All of `L_0^{(alpha)}(x) ..= L_{n_max}^{(alpha)}(x)`.
pub fn laguerre_table(n_max: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(1.0 + alpha - x);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Normalized Hermite functions `⟨x|n⟩` for `n = 0..count`, with
/// `x̂ = (a + a†)/√2`.
pub fn hermite_functions(count: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if count == 1 {
        return out;
    }
    out.push(2f64.sqrt() * x * out[0]);
    for n in 1..count - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// `ln P(X = n)` for `X ~ Poisson(mean)`.
pub fn ln_poisson(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// `P(X >= dim)` for `X ~ Poisson(mean)`, summed directly over the tail so
/// small values do not cancel.
pub fn poisson_tail(mean: f64, dim: usize) -> f64 {
    if mean == 0.0 {
        return if dim == 0 { 1.0 } else { 0.0 };
    }
    let mut total = 0.0;
    let mut n = dim as u64;
    loop {
        let term = ln_poisson(n, mean).exp();
        total += term;
        // Past the mode the terms decrease geometrically.
        if (n as f64) > mean && term < 1e-18 * total.max(1e-300) {
            break;
        }
        if (n as f64) > mean && term == 0.0 {
            break;
        }
        n += 1;
        if n > dim as u64 + 100_000 {
            break;
        }
    }
    total.min(1.0)
}

/// Smallest dimension whose Poisson tail mass is below `tol`.
pub fn min_dim_for_poisson(mean: f64, tol: f64) -> usize {
    let mut dim = (mean.ceil() as usize).max(1);
    while poisson_tail(mean, dim) >= tol {
        dim += 1;
    }
    dim
}
