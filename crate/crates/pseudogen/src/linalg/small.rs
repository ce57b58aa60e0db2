//! Allocation-free helpers for small dense matrices stored row-major in
//! flat slices. Used in SDE hot loops where per-step nalgebra temporaries
//! would dominate the cost.

/// In-place Cholesky factorization `a = L Lᵀ`; on success the lower
/// triangle of `a` holds `L`. Returns `false` if `a` is not positive
/// definite.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return false;
        }
        let l_jj = diag.sqrt();
        a[j * d + j] = l_jj;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l_jj;
        }
    }
    // Zero the strict upper triangle so `a` is exactly L.
    for i in 0..d {
        for j in (i + 1)..d {
            a[i * d + j] = 0.0;
        }
    }
    true
}

/// Solves `L x = b` in place (forward substitution, `L` lower triangular).
pub fn solve_lower(l: &[f64], b: &mut [f64], d: usize) {
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * d + k] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solves `Lᵀ x = b` in place (back substitution).
pub fn solve_lower_transpose(l: &[f64], b: &mut [f64], d: usize) {
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in (i + 1)..d {
            v -= l[k * d + i] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solves `L Lᵀ x = b` in place given the Cholesky factor `L`.
pub fn solve_cholesky(l: &[f64], b: &mut [f64], d: usize) {
    solve_lower(l, b, d);
    solve_lower_transpose(l, b, d);
}

/// `out = a · x` for a row-major `d x d` matrix.
pub fn matvec(a: &[f64], x: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        out[i] = row.iter().zip(x).map(|(aij, xj)| aij * xj).sum();
    }
}

/// Determinant via an unpivoted LU on a copy; adequate for the small SPD
/// matrices it is used on.
pub fn determinant(a: &[f64], d: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for k in 0..d {
        let piv = m[k * d + k];
        if piv == 0.0 {
            return 0.0;
        }
        det *= piv;
        for i in (k + 1)..d {
            let f = m[i * d + k] / piv;
            for j in k..d {
                m[i * d + j] -= f * m[k * d + j];
            }
        }
    }
    det
}
