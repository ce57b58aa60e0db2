//! Dense eigendecomposition of a general real matrix.
//!
//! Householder reduction to Hessenberg form followed by the implicit
//! double-shift QR iteration with accumulated transformations and
//! back-substitution for the eigenvectors, following the classic
//! EISPACK/JAMA formulation. A pure-Rust solver keeps spectral output
//! bit-identical across machines and thread counts, which the
//! reproducibility contract of this crate depends on.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues and eigenvectors of a real square matrix.
///
/// Complex conjugate pairs occupy consecutive slots `k, k+1` with
/// `im[k] = -im[k+1] > 0` ordering per QR deflation; the corresponding
/// eigenvectors are `vectors.column(k) ± i vectors.column(k+1)`.
pub struct RealEvd {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

const MAX_TOTAL_ITER: usize = 100_000;

impl RealEvd {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut h: Vec<f64> = a.as_slice().to_vec(); // nalgebra is column-major
        // Convert to row-major storage for the classic index arithmetic.
        let mut hm = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hm[i * n + j] = h[j * n + i];
            }
        }
        h = hm;
        let mut v = vec![0.0; n * n];
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];

        orthes(n, &mut h, &mut v);
        hqr2(n, &mut h, &mut v, &mut re, &mut im)?;

        let mut vectors = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                vectors[(i, j)] = v[i * n + j];
            }
        }
        Ok(RealEvd { re, im, vectors })
    }
}

/// Householder reduction of `h` to upper Hessenberg form, accumulating
/// the orthogonal transformation in `v`.
fn orthes(n: usize, h: &mut [f64], v: &mut [f64]) {
    if n == 0 {
        return;
    }
    let low = 0usize;
    let high = n - 1;
    let mut ort = vec![0.0; n];

    let mut m = low + 1;
    while m + 1 <= high {
        // m ranges over low+1 ..= high-1
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[i * n + (m - 1)].abs();
        }
        if scale != 0.0 {
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[i * n + (m - 1)] / scale;
                hh += ort[i] * ort[i];
            }
            let mut g = hh.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hh -= ort[m] * g;
            ort[m] -= g;

            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i] * h[i * n + j];
                }
                f /= hh;
                for i in m..=high {
                    h[i * n + j] -= f * ort[i];
                }
            }
            for i in 0..=high {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j] * h[i * n + j];
                }
                f /= hh;
                for j in m..=high {
                    h[i * n + j] -= f * ort[j];
                }
            }
            ort[m] *= scale;
            h[m * n + (m - 1)] = scale * g;
        }
        m += 1;
    }

    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut m = high;
    while m >= low + 1 {
        if m + 1 <= high && h[m * n + (m - 1)] != 0.0 {
            for i in (m + 1)..=high {
                ort[i] = h[i * n + (m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v[i * n + j];
                }
                // Double division avoids possible underflow.
                g = (g / ort[m]) / h[m * n + (m - 1)];
                for i in m..=high {
                    v[i * n + j] += g * ort[i];
                }
            }
        }
        if m == low + 1 {
            break;
        }
        m -= 1;
    }
}

/// Complex scalar division `(xr + i xi) / (yr + i yi)`.
fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// QR double-shift iteration on the Hessenberg matrix with eigenvector
/// back-substitution.
#[allow(clippy::needless_range_loop)]
fn hqr2(nn: usize, h: &mut [f64], v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    if nn == 0 {
        return Ok(());
    }
    let idx = |i: usize, j: usize| i * nn + j;
    let low: isize = 0;
    let high: isize = nn as isize - 1;
    let eps = 2.0_f64.powi(-52);
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut x, mut y, mut w);

    // Matrix 1-ish norm used in convergence tests.
    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[idx(i, j)].abs();
        }
    }

    let mut n: isize = nn as isize - 1;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    while n >= low {
        total_iter += 1;
        if total_iter > MAX_TOTAL_ITER {
            return Err(Error::Eigen {
                kind: "general".into(),
                lag: 0.0,
                detail: "QR iteration failed to converge".into(),
            });
        }
        // Look for a single small subdiagonal element.
        let mut l = n;
        while l > low {
            let lu = l as usize;
            s = h[idx(lu - 1, lu - 1)].abs() + h[idx(lu, lu)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[idx(lu, lu - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root found.
            let nu = n as usize;
            h[idx(nu, nu)] += exshift;
            d[nu] = h[idx(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots found.
            let nu = n as usize;
            w = h[idx(nu, nu - 1)] * h[idx(nu - 1, nu)];
            p = (h[idx(nu - 1, nu - 1)] - h[idx(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[idx(nu, nu)] += exshift;
            h[idx(nu - 1, nu - 1)] += exshift;
            x = h[idx(nu, nu)];
            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[idx(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (nu - 1)..nn {
                    z = h[idx(nu - 1, j)];
                    h[idx(nu - 1, j)] = q * z + p * h[idx(nu, j)];
                    h[idx(nu, j)] = q * h[idx(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[idx(i, nu - 1)];
                    h[idx(i, nu - 1)] = q * z + p * h[idx(i, nu)];
                    h[idx(i, nu)] = q * h[idx(i, nu)] - p * z;
                }
                for i in low as usize..=high as usize {
                    z = v[idx(i, nu - 1)];
                    v[idx(i, nu - 1)] = q * z + p * v[idx(i, nu)];
                    v[idx(i, nu)] = q * v[idx(i, nu)] - p * z;
                }
            } else {
                // Complex pair.
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // No convergence yet; form shift.
            let nu = n as usize;
            x = h[idx(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[idx(nu - 1, nu - 1)];
                w = h[idx(nu, nu - 1)] * h[idx(nu - 1, nu)];
            }

            // Original ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in low as usize..=nu {
                    h[idx(i, i)] -= x;
                }
                s = h[idx(nu, nu - 1)].abs() + h[idx(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }

            // MATLAB-style ad hoc shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low as usize..=nu {
                        h[idx(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;

            // Look for two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                let mu = m as usize;
                z = h[idx(mu, mu)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[idx(mu + 1, mu)] + h[idx(mu, mu + 1)];
                q = h[idx(mu + 1, mu + 1)] - z - r - s;
                r = h[idx(mu + 2, mu + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[idx(mu, mu - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[idx(mu - 1, mu - 1)].abs()
                                + z.abs()
                                + h[idx(mu + 1, mu + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                let iu = i as usize;
                h[idx(iu, iu - 2)] = 0.0;
                if i > m + 2 {
                    h[idx(iu, iu - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..n and columns m..n.
            let mut k = m;
            while k <= n - 1 {
                let ku = k as usize;
                let notlast = k != n - 1;
                if k != m {
                    p = h[idx(ku, ku - 1)];
                    q = h[idx(ku + 1, ku - 1)];
                    r = if notlast { h[idx(ku + 2, ku - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[idx(ku, ku - 1)] = -s * x;
                    } else if l != m {
                        h[idx(ku, ku - 1)] = -h[idx(ku, ku - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in ku..nn {
                        p = h[idx(ku, j)] + q * h[idx(ku + 1, j)];
                        if notlast {
                            p += r * h[idx(ku + 2, j)];
                            h[idx(ku + 2, j)] -= p * z;
                        }
                        h[idx(ku, j)] -= p * x;
                        h[idx(ku + 1, j)] -= p * y;
                    }

                    let upper = (n).min(k + 3) as usize;
                    for i in 0..=upper {
                        p = x * h[idx(i, ku)] + y * h[idx(i, ku + 1)];
                        if notlast {
                            p += z * h[idx(i, ku + 2)];
                            h[idx(i, ku + 2)] -= p * r;
                        }
                        h[idx(i, ku)] -= p;
                        h[idx(i, ku + 1)] -= p * q;
                    }

                    for i in low as usize..=high as usize {
                        p = x * v[idx(i, ku)] + y * v[idx(i, ku + 1)];
                        if notlast {
                            p += z * v[idx(i, ku + 2)];
                            v[idx(i, ku + 2)] -= p * r;
                        }
                        v[idx(i, ku)] -= p;
                        v[idx(i, ku + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    // Backsubstitute to find vectors of the upper triangular form.
    if norm == 0.0 {
        return Ok(());
    }
    let mut nb: isize = nn as isize - 1;
    while nb >= 0 {
        let nu = nb as usize;
        p = d[nu];
        q = e[nu];
        if q == 0.0 {
            // Real eigenvector.
            let mut l = nb;
            h[idx(nu, nu)] = 1.0;
            let mut i = nb - 1;
            while i >= 0 {
                let iu = i as usize;
                w = h[idx(iu, iu)] - p;
                r = 0.0;
                for j in l as usize..=nu {
                    r += h[idx(iu, j)] * h[idx(j, nu)];
                }
                if e[iu] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[iu] == 0.0 {
                        h[idx(iu, nu)] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        // Solve real 2x2 block.
                        x = h[idx(iu, iu + 1)];
                        y = h[idx(iu + 1, iu)];
                        q = (d[iu] - p) * (d[iu] - p) + e[iu] * e[iu];
                        let t = (x * s - z * r) / q;
                        h[idx(iu, nu)] = t;
                        h[idx(iu + 1, nu)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    // Overflow control.
                    let t = h[idx(iu, nu)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in iu..=nu {
                            h[idx(j, nu)] /= t;
                        }
                    }
                }
                i -= 1;
            }
        } else if q < 0.0 {
            // Complex eigenvector (stored in columns nu-1, nu).
            let mut l = nb - 1;
            if h[idx(nu, nu - 1)].abs() > h[idx(nu - 1, nu)].abs() {
                h[idx(nu - 1, nu - 1)] = q / h[idx(nu, nu - 1)];
                h[idx(nu - 1, nu)] = -(h[idx(nu, nu)] - p) / h[idx(nu, nu - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[idx(nu - 1, nu)], h[idx(nu - 1, nu - 1)] - p, q);
                h[idx(nu - 1, nu - 1)] = cr;
                h[idx(nu - 1, nu)] = ci;
            }
            h[idx(nu, nu - 1)] = 0.0;
            h[idx(nu, nu)] = 1.0;
            let mut i = nb - 2;
            while i >= 0 {
                let iu = i as usize;
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l as usize..=nu {
                    ra += h[idx(iu, j)] * h[idx(j, nu - 1)];
                    sa += h[idx(iu, j)] * h[idx(j, nu)];
                }
                w = h[idx(iu, iu)] - p;
                if e[iu] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[iu] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[idx(iu, nu - 1)] = cr;
                        h[idx(iu, nu)] = ci;
                    } else {
                        // Solve complex 2x2 block.
                        x = h[idx(iu, iu + 1)];
                        y = h[idx(iu + 1, iu)];
                        let mut vr = (d[iu] - p) * (d[iu] - p) + e[iu] * e[iu] - q * q;
                        let vi = (d[iu] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps
                                * norm
                                * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[idx(iu, nu - 1)] = cr;
                        h[idx(iu, nu)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[idx(iu + 1, nu - 1)] =
                                (-ra - w * h[idx(iu, nu - 1)] + q * h[idx(iu, nu)]) / x;
                            h[idx(iu + 1, nu)] =
                                (-sa - w * h[idx(iu, nu)] - q * h[idx(iu, nu - 1)]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[idx(iu, nu - 1)], -s - y * h[idx(iu, nu)], z, q);
                            h[idx(iu + 1, nu - 1)] = cr;
                            h[idx(iu + 1, nu)] = ci;
                        }
                    }
                    // Overflow control.
                    let t = h[idx(iu, nu - 1)].abs().max(h[idx(iu, nu)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in iu..=nu {
                            h[idx(j, nu - 1)] /= t;
                            h[idx(j, nu)] /= t;
                        }
                    }
                }
                i -= 1;
            }
        }
        nb -= 1;
    }

    // Multiply by the accumulated transformation to get eigenvectors of
    // the original matrix.
    let mut j: isize = nn as isize - 1;
    while j >= low {
        let ju = j as usize;
        for i in low as usize..=high as usize {
            let mut zz = 0.0;
            for k in low as usize..=(ju.min(high as usize)) {
                zz += v[idx(i, k)] * h[idx(k, ju)];
            }
            v[idx(i, ju)] = zz;
        }
        j -= 1;
    }

    Ok(())
}
