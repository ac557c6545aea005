//! Small dense helpers: Gauss-Jordan inversion, square solves and rank.

/// Inverts the row-major `n x n` matrix `a`, or returns `None` when a pivot
/// falls below `tol` times the largest entry.
pub fn invert(a: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let w = 2 * n;
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        aug[i * w..i * w + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        aug[i * w + n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| aug[r * w + col].abs().total_cmp(&aug[s * w + col].abs()))?;
        if aug[piv * w + col].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for c in 0..w {
                aug.swap(piv * w + c, col * w + c);
            }
        }
        let p = aug[col * w + col];
        for c in 0..w {
            aug[col * w + c] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[r * w + col];
            if f != 0.0 {
                for c in 0..w {
                    aug[r * w + c] -= f * aug[col * w + c];
                }
            }
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n..(i + 1) * n].copy_from_slice(&aug[i * w + n..(i + 1) * w]);
    }
    Some(inv)
}

/// Solves `a x = b` for square row-major `a` with partial pivoting.
pub fn solve(a: &[f64], b: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))?;
        if m[piv * n + col].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(piv * n + c, col * n + c);
            }
            rhs.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for c in col..n {
                    m[r * n + c] -= f * m[col * n + c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r * n + c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r * n + r];
    }
    Some(x)
}

/// Numerical rank of the row-major `rows x cols` matrix.
pub fn rank(a: &[f64], rows: usize, cols: usize, tol: f64) -> usize {
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let piv = (r..rows)
            .max_by(|&x, &y| m[x * cols + col].abs().total_cmp(&m[y * cols + col].abs()))
            .unwrap();
        if m[piv * cols + col].abs() <= tol * scale {
            continue;
        }
        if piv != r {
            for c in 0..cols {
                m.swap(piv * cols + c, r * cols + c);
            }
        }
        for x in r + 1..rows {
            let f = m[x * cols + col] / m[r * cols + col];
            if f != 0.0 {
                for c in col..cols {
                    m[x * cols + c] -= f * m[r * cols + c];
                }
            }
        }
        r += 1;
    }
    r
}
