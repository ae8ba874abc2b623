//! t-SVD, tubal rank, optimal low-tubal-rank truncation and stable rank.
//!
//! Everything is computed slice by slice in the transformed domain, where
//! the t-SVD reduces to one ordinary matrix SVD per frontal slice of `M(T)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::svd;
use crate::tensor::Tensor3;
use crate::transform::OrthogonalTransform;

/// Default relative tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD of one row-major `rows x cols` slice, singular values descending.
#[derive(Debug, Clone)]
pub(crate) struct SliceSvd {
    /// `rows x p`, row-major, `p = min(rows, cols)`.
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// `p x cols`, row-major.
    pub vt: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl SliceSvd {
    pub fn p(&self) -> usize {
        self.s.len()
    }

    /// `sum_{j < r} f(s_j) u_j v_j^T` written into `out`.
    pub fn reconstruct_with(&self, r: usize, mut f: impl FnMut(f64) -> f64, out: &mut [f64]) {
        let (m, n, p) = (self.rows, self.cols, self.p());
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..r.min(p) {
            let s = f(self.s[j]);
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = s * self.u[i * p + j];
                if a == 0.0 {
                    continue;
                }
                let row = &mut out[i * n..(i + 1) * n];
                for (o, v) in row.iter_mut().zip(&self.vt[j * n..(j + 1) * n]) {
                    *o += a * v;
                }
            }
        }
    }
}

pub(crate) fn slice_svd(data: &[f64], rows: usize, cols: usize) -> Result<SliceSvd> {
    let (u, s, vt) = svd::thin_svd(data, rows, cols)
        .ok_or_else(|| Error::NumericalFailure(format!("SVD of a {rows}x{cols} slice did not converge")))?;
    Ok(SliceSvd { u, s, vt, rows, cols })
}

/// Singular values of a row-major slice, descending.
pub(crate) fn slice_singular_values(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    Ok(slice_svd(data, rows, cols)?.s)
}

/// Per-slice singular values of `M(T)`: entry `k` holds the descending spectrum of slice `k`.
pub fn transformed_spectra(tensor: &Tensor3, t: &OrthogonalTransform) -> Result<Vec<Vec<f64>>> {
    let hat = t.apply(tensor)?;
    (0..tensor.channels()).map(|k| slice_singular_values(hat.slice(k), tensor.rows(), tensor.cols())).collect()
}

/// `T = U *_M S *_M V^T` with t-orthogonal `U`, `V` and f-diagonal `S`.
#[derive(Debug, Clone)]
pub struct TsvdFactors {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
}

impl TsvdFactors {
    /// `U *_M S *_M V^T`.
    pub fn reconstruct(&self, t: &OrthogonalTransform) -> Result<Tensor3> {
        let us = self.u.t_product(&self.s, t)?;
        us.t_product(&self.v.t_transpose(t)?, t)
    }

    /// `||S(i, i, :)||_F` for each tube, i.e. the aggregate energy of the `i`-th
    /// singular value across transformed slices.
    pub fn tube_energies(&self) -> Vec<f64> {
        let p = self.s.rows().min(self.s.cols());
        (0..p)
            .map(|i| {
                math::sqrt(
                    (0..self.s.channels())
                        .map(|k| {
                            let v = self.s.get(i, i, k);
                            v * v
                        })
                        .sum(),
                )
            })
            .collect()
    }
}

/// Full t-SVD by per-slice SVD in the transformed domain.
pub fn tsvd(tensor: &Tensor3, t: &OrthogonalTransform) -> Result<TsvdFactors> {
    let (m, n, c) = tensor.dims();
    let hat = t.apply(tensor)?;
    let mut u_hat = Tensor3::zeros(m, m, c);
    let mut s_hat = Tensor3::zeros(m, n, c);
    let mut v_hat = Tensor3::zeros(n, n, c);
    for k in 0..c {
        let svd = slice_svd(hat.slice(k), m, n)?;
        let p = svd.p();
        for (j, &sv) in svd.s.iter().enumerate() {
            s_hat.set(j, j, k, sv);
        }
        let u_cols: Vec<Vec<f64>> = (0..p).map(|j| (0..m).map(|i| svd.u[i * p + j]).collect()).collect();
        let v_cols: Vec<Vec<f64>> = (0..p).map(|j| svd.vt[j * n..(j + 1) * n].to_vec()).collect();
        let u_full = complete_basis(u_cols, m);
        let v_full = complete_basis(v_cols, n);
        for (j, col) in u_full.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                u_hat.set(i, j, k, v);
            }
        }
        for (j, col) in v_full.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                v_hat.set(i, j, k, v);
            }
        }
    }
    Ok(TsvdFactors { u: t.inverse_apply(&u_hat)?, s: t.inverse_apply(&s_hat)?, v: t.inverse_apply(&v_hat)? })
}

/// Extends orthonormal columns to an orthonormal basis of `R^dim`.
fn complete_basis(mut cols: Vec<Vec<f64>>, dim: usize) -> Vec<Vec<f64>> {
    while cols.len() < dim {
        let refs: Vec<&Vec<f64>> = cols.iter().collect();
        let v = svd::orthogonal_complement_vector(&refs, dim);
        cols.push(v);
    }
    cols
}

/// Number of tubes with `||S(i,i,:)||_F > tol * ||S||_F`.
pub fn tubal_rank(tensor: &Tensor3, t: &OrthogonalTransform, tol: f64) -> Result<usize> {
    let spectra = transformed_spectra(tensor, t)?;
    let total = math::sqrt(spectra.iter().flatten().map(|s| s * s).sum());
    let p = tensor.rows().min(tensor.cols());
    Ok((0..p).filter(|&i| math::sqrt(spectra.iter().map(|s| s[i] * s[i]).sum()) > tol * total).count())
}

/// Rank of each transformed slice at the same relative tolerance as [`tubal_rank`].
pub fn multi_rank(tensor: &Tensor3, t: &OrthogonalTransform, tol: f64) -> Result<Vec<usize>> {
    let spectra = transformed_spectra(tensor, t)?;
    let total = math::sqrt(spectra.iter().flatten().map(|s| s * s).sum());
    Ok(spectra.iter().map(|s| s.iter().filter(|&&v| v > tol * total).count()).collect())
}

/// Optimal tubal-rank-`r` approximation: top-`r` singular triplets of every transformed slice.
pub fn truncate(tensor: &Tensor3, t: &OrthogonalTransform, r: usize) -> Result<Tensor3> {
    if r == tensor.rows().min(tensor.cols()) && r > 0 {
        t.apply(tensor)?;
        return Ok(tensor.clone());
    }
    map_spectrum(tensor, t, r, |s| s)
}

/// Soft-thresholds every transformed-slice singular value, `s -> max(s - tau, 0)`.
/// This is the proximal map of `tau * ||.||_tubal-nuclear`.
pub fn soft_threshold(tensor: &Tensor3, t: &OrthogonalTransform, tau: f64) -> Result<Tensor3> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInputs(format!("threshold must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(tensor.clone());
    }
    let p = tensor.rows().min(tensor.cols());
    let rank = p.max(1);
    map_spectrum_unchecked(tensor, t, rank, |s| (s - tau).max(0.0))
}

fn map_spectrum(
    tensor: &Tensor3,
    t: &OrthogonalTransform,
    r: usize,
    f: impl FnMut(f64) -> f64 + Copy,
) -> Result<Tensor3> {
    let max = tensor.rows().min(tensor.cols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    map_spectrum_unchecked(tensor, t, r, f)
}

fn map_spectrum_unchecked(
    tensor: &Tensor3,
    t: &OrthogonalTransform,
    r: usize,
    f: impl FnMut(f64) -> f64 + Copy,
) -> Result<Tensor3> {
    let (m, n, c) = tensor.dims();
    let hat = t.apply(tensor)?;
    let mut out_hat = Tensor3::zeros(m, n, c);
    for k in 0..c {
        let svd = slice_svd(hat.slice(k), m, n)?;
        svd.reconstruct_with(r, f, out_hat.slice_mut(k));
    }
    t.inverse_apply(&out_hat)
}

/// `sqrt(sum_k sum_{j > r} sigma_j^2(M(T)_k))`, the error of [`truncate`].
pub fn truncation_error(tensor: &Tensor3, t: &OrthogonalTransform, r: usize) -> Result<f64> {
    let spectra = transformed_spectra(tensor, t)?;
    Ok(math::sqrt(spectra.iter().flat_map(|s| s.iter().skip(r)).map(|v| v * v).sum()))
}

/// Stable rank `||T̄||_F^2 / ||T̄||^2` of the M-block-diagonal matrix.
pub fn stable_rank(tensor: &Tensor3, t: &OrthogonalTransform) -> Result<f64> {
    let spectra = transformed_spectra(tensor, t)?;
    let top = spectra.iter().filter_map(|s| s.first().copied()).fold(0.0, f64::max);
    if top == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let fro2: f64 = spectra.iter().flatten().map(|s| s * s).sum();
    Ok(fro2 / (top * top))
}
