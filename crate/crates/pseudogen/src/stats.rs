//! Statistical validation helpers: histogram distances against reference
//! densities and a Kolmogorov-Smirnov uniformity test. Used by the
//! acceptance suite to compare empirical invariant measures with
//! quadrature references.

/// Uniform-bin histogram over `[lo, hi)`, normalized to a probability
/// vector. Out-of-range values are clamped into the end bins.
pub fn histogram(samples: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let mut total = 0.0;
    let width = (hi - lo) / bins as f64;
    for x in samples {
        let mut idx = ((x - lo) / width).floor() as isize;
        idx = idx.clamp(0, bins as isize - 1);
        counts[idx as usize] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        for c in counts.iter_mut() {
            *c /= total;
        }
    }
    counts
}

/// L¹ distance between a histogram (probability vector) and a density,
/// with the density mass per bin computed by midpoint quadrature on a
/// sub-grid.
pub fn l1_histogram_distance(
    hist: &[f64],
    lo: f64,
    hi: f64,
    density: impl Fn(f64) -> f64,
) -> f64 {
    let bins = hist.len();
    let width = (hi - lo) / bins as f64;
    let sub = 16;
    let mut dist = 0.0;
    for (b, &h) in hist.iter().enumerate() {
        let left = lo + b as f64 * width;
        let mut mass = 0.0;
        for s in 0..sub {
            let x = left + (s as f64 + 0.5) * width / sub as f64;
            mass += density(x);
        }
        mass *= width / sub as f64;
        dist += (h - mass).abs();
    }
    dist
}

/// Asymptotic Kolmogorov-Smirnov p-value for uniformity of `samples` on
/// `[lo, hi]`.
pub fn ks_uniform_pvalue(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let emp_hi = (i as f64 + 1.0) / n;
        let emp_lo = i as f64 / n;
        d = d.max((emp_hi - cdf).abs()).max((cdf - emp_lo).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    // Kolmogorov tail series.
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Sample mean and covariance (row-major `d*d`) of vector-valued data.
pub fn mean_and_covariance(data: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in data {
        for i in 0..dim {
            mean[i] += x[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = vec![0.0; dim * dim];
    for x in data {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= n - 1.0;
    }
    (mean, cov)
}

/// Least-squares fit of `y ≈ a * f(x) + b`; returns `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (a * x + b)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn histogram_of_uniform_is_flat() {
        let mut rng = crate::rng::stream(3, 0);
        let h = histogram((0..200_000).map(|_| rng.gen::<f64>()), 0.0, 1.0, 50);
        let dist = l1_histogram_distance(&h, 0.0, 1.0, |_| 1.0);
        assert!(dist < 0.02, "L1 distance {dist}");
    }

    #[test]
    fn ks_accepts_uniform_rejects_squared() {
        let mut rng = crate::rng::stream(4, 0);
        let mut u: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
        assert!(ks_uniform_pvalue(&mut u, 0.0, 1.0) > 0.001);
        let mut v: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>().powi(2)).collect();
        assert!(ks_uniform_pvalue(&mut v, 0.0, 1.0) < 1e-6);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.5).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert_relative_eq!(a, 3.0, epsilon = 1e-12);
        assert_relative_eq!(b, -1.5, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
    }
}
