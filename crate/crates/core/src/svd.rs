//! One-sided Jacobi SVD for small dense matrices.
//!
//! Columns of a working copy of `A` are rotated pairwise until they are
//! mutually orthogonal; the column norms are then the singular values and
//! the accumulated rotations form `V`. Left singular vectors belonging to
//! (numerically) zero singular values are completed to an orthonormal set,
//! so `U` always has orthonormal columns.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(s) V^T` of a row-major `rows x cols` matrix with
/// `rows >= cols`. Returns `(u, s, v)` with `u` row-major `rows x cols`, `s`
/// unsorted and `v` row-major `cols x cols`. `None` if the sweeps do not converge.
fn jacobi_tall(a: &[f64], rows: usize, cols: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    // column-major working copies make the pairwise rotations contiguous
    let mut u: Vec<f64> = (0..cols).flat_map(|j| (0..rows).map(move |i| a[i * cols + j])).collect();
    let mut v = vec![0.0; cols * cols];
    for j in 0..cols {
        v[j * cols + j] = 1.0;
    }
    let eps = f64::EPSILON;
    // a pair counts as orthogonal once its cosine is below sqrt(rows) eps;
    // demanding plain eps can stall with rounding noise rotating back and forth
    let orth_tol = eps * math::sqrt(rows as f64);
    let fro2: f64 = u.iter().map(|x| x * x).sum();
    // pairs this small relative to the whole matrix cannot change it at working precision
    let negligible = eps * eps * fro2;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let up = &u[p * rows..(p + 1) * rows];
                    let uq = &u[q * rows..(q + 1) * rows];
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for (x, y) in up.iter().zip(uq) {
                        al += x * x;
                        be += y * y;
                        ga += x * y;
                    }
                    (al, be, ga)
                };
                if gamma.abs() <= orth_tol * math::sqrt(alpha * beta) || gamma.abs() <= negligible {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + math::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + math::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut u, rows, p, q, c, s);
                rotate(&mut v, cols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let s: Vec<f64> = (0..cols).map(|j| math::l2(&u[j * rows..(j + 1) * rows])).collect();
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let tiny = s_max * eps * rows.max(cols) as f64;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for j in 0..cols {
        let col = &u[j * rows..(j + 1) * rows];
        if s[j] > tiny && s[j] > 0.0 {
            basis.push(col.iter().map(|x| x / s[j]).collect());
        } else {
            missing.push(j);
            basis.push(Vec::new());
        }
    }
    for &j in &missing {
        let filled: Vec<&Vec<f64>> = basis.iter().filter(|b| !b.is_empty()).collect();
        let col = orthogonal_complement_vector(&filled, rows);
        basis[j] = col;
    }
    let mut u_out = vec![0.0; rows * cols];
    for (j, col) in basis.iter().enumerate() {
        for i in 0..rows {
            u_out[i * cols + j] = col[i];
        }
    }
    // v is column-major: column j holds the j-th right singular vector
    let mut v_out = vec![0.0; cols * cols];
    for j in 0..cols {
        for i in 0..cols {
            v_out[i * cols + j] = v[j * cols + i];
        }
    }
    let s = s.iter().zip(0..).map(|(&sv, j)| if missing.contains(&j) { 0.0 } else { sv }).collect();
    Some((u_out, s, v_out))
}

fn rotate(m: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = m.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    let cq = &mut tail[..len];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every vector in `cols` (which must number fewer than `dim`).
pub(crate) fn orthogonal_complement_vector(cols: &[&Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in cols {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q.iter()).for_each(|(x, qv)| *x -= dot * qv);
            }
        }
        let norm = math::l2(&v);
        if best.as_ref().is_none_or(|(b, _)| norm > *b) {
            best = Some((norm, v));
        }
    }
    let (norm, mut v) = best.expect("dim > 0");
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Thin SVD of a row-major `rows x cols` matrix, `p = min(rows, cols)`:
/// `u` is `rows x p`, `vt` is `p x cols` (both row-major), `s` descending.
pub(crate) fn thin_svd(a: &[f64], rows: usize, cols: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let p = rows.min(cols);
    if p == 0 {
        return Some((Vec::new(), Vec::new(), Vec::new()));
    }
    let (u, s, vt) = if rows >= cols {
        let (u, s, v) = jacobi_tall(a, rows, cols)?;
        // vt = v^T
        let mut vt = vec![0.0; p * cols];
        for i in 0..cols {
            for j in 0..p {
                vt[j * cols + i] = v[i * p + j];
            }
        }
        (u, s, vt)
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let mut at = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                at[j * rows + i] = a[i * cols + j];
            }
        }
        let (u2, s, v2) = jacobi_tall(&at, cols, rows)?;
        // u = v2 (rows x rows = rows x p), vt = u2^T (p x cols)
        let mut vt = vec![0.0; p * cols];
        for i in 0..cols {
            for j in 0..p {
                vt[j * cols + i] = u2[i * p + j];
            }
        }
        (v2, s, vt)
    };
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let mut u_out = vec![0.0; rows * p];
    let mut vt_out = vec![0.0; p * cols];
    let mut s_out = vec![0.0; p];
    for (dst, &src) in order.iter().enumerate() {
        s_out[dst] = s[src];
        for i in 0..rows {
            u_out[i * p + dst] = u[i * p + src];
        }
        vt_out[dst * cols..(dst + 1) * cols].copy_from_slice(&vt[src * cols..(src + 1) * cols]);
    }
    Some((u_out, s_out, vt_out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &[f64], rows: usize, cols: usize) {
        let (u, s, vt) = thin_svd(a, rows, cols).unwrap();
        let p = rows.min(cols);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..rows {
            for j in 0..cols {
                let rec: f64 = (0..p).map(|k| u[i * p + k] * s[k] * vt[k * cols + j]).sum();
                assert!((rec - a[i * cols + j]).abs() < 1e-12, "{rows}x{cols} ({i},{j})");
            }
        }
        for x in 0..p {
            for y in 0..p {
                let uu: f64 = (0..rows).map(|i| u[i * p + x] * u[i * p + y]).sum();
                let vv: f64 = (0..cols).map(|j| vt[x * cols + j] * vt[y * cols + j]).sum();
                let e = if x == y { 1.0 } else { 0.0 };
                assert!((uu - e).abs() < 1e-12 && (vv - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_small_matrices() {
        // rank-1 2x2 and rank-2 3x3, the cases that need completed bases
        check(&[1.0, 2.0, 2.0, 4.0], 2, 2);
        check(&[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0], 3, 3);
        check(&[0.0; 6], 2, 3);
        check(&[3.0, -1.0, 0.5, 2.0, 0.0, 1.0], 3, 2);
        check(&[3.0, -1.0, 0.5, 2.0, 0.0, 1.0], 2, 3);
    }

    #[test]
    fn random_square_matrices_converge() {
        // a 32x32 slice from training once stalled the sweeps
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let a: Vec<f64> = (0..32 * 32).map(|_| next()).collect();
            check(&a, 32, 32);
        }
    }

    #[test]
    fn diagonal_matrix_spectrum() {
        let (_, s, _) = thin_svd(&[0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 0.0, 2.0], 3, 3).unwrap();
        assert_eq!(s, vec![5.0, 2.0, 0.0]);
    }
}
