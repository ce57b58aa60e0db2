//! Composite quadrature on boxes, used for Boltzmann normalization and
//! Ulam cell weights. Simpson panels are doubled until the Richardson
//! estimate meets the requested relative tolerance.

/// Composite Simpson rule with `n` panels (`n` even).
fn simpson_1d(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    debug_assert!(n % 2 == 0);
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Integrates `f` over `[lo, hi]` to relative tolerance `rel_tol`.
pub fn integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    let mut n = 64;
    let mut coarse = simpson_1d(&f, lo, hi, n);
    loop {
        n *= 2;
        let fine = simpson_1d(&f, lo, hi, n);
        // Richardson error estimate for a 4th-order rule.
        let err = (fine - coarse).abs() / 15.0;
        let best = fine + (fine - coarse) / 15.0;
        if err <= rel_tol * best.abs().max(f64::MIN_POSITIVE) || n >= 1 << 22 {
            return best;
        }
        coarse = fine;
    }
}

/// Integrates `f` over the box `[lo0, hi0] x [lo1, hi1]` to relative
/// tolerance `rel_tol` with a tensor-product Simpson rule.
pub fn integrate_2d(
    f: impl Fn(f64, f64) -> f64,
    lo: [f64; 2],
    hi: [f64; 2],
    rel_tol: f64,
) -> f64 {
    let tensor = |n: usize| {
        let inner = |y: f64| simpson_1d(&|x| f(x, y), lo[0], hi[0], n);
        simpson_1d(&inner, lo[1], hi[1], n)
    };
    let mut n = 32;
    let mut coarse = tensor(n);
    loop {
        n *= 2;
        let fine = tensor(n);
        let err = (fine - coarse).abs() / 15.0;
        let best = fine + (fine - coarse) / 15.0;
        if err <= rel_tol * best.abs().max(f64::MIN_POSITIVE) || n >= 4096 {
            return best;
        }
        coarse = fine;
    }
}
