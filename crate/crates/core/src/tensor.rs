//! Dense 3-way tensors and the t-product algebra.
//!
//! Storage is slice-major: frontal slice index outermost, then row-major
//! within a slice, so entry `(i, j, k)` of an `m x n x c` tensor lives at
//! `k*m*n + i*n + j`. For a t-vector (`n = 1`) this coincides with the
//! column-major `vec` ordering, so `vec(x)` is simply `x.data()`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::transform::OrthogonalTransform;
use crate::tsvd::slice_singular_values;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    m: usize,
    n: usize,
    c: usize,
    data: Vec<f64>,
}

/// The norms reported by [`Tensor3::norms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorNorms {
    pub fro: f64,
    /// t-spectral norm: largest singular value over the transformed slices.
    pub spectral: f64,
    /// Sum of nuclear norms of the transformed slices (no `1/c` factor).
    pub tubal_nuclear: f64,
}

impl Tensor3 {
    pub fn zeros(m: usize, n: usize, c: usize) -> Self {
        Self { m, n, c, data: vec![0.0; m * n * c] }
    }

    pub fn from_vec(m: usize, n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n * c {
            return Err(Error::DimensionMismatch(format!("{} values for a {}x{}x{} tensor", data.len(), m, n, c)));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInputs("tensor entries must be finite".into()));
        }
        Ok(Self { m, n, c, data })
    }

    pub fn from_fn(m: usize, n: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(m, n, c);
        for k in 0..c {
            for i in 0..m {
                for j in 0..n {
                    t.data[k * m * n + i * n + j] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Builds a tensor from its transformed-domain slices, `T = M^{-1}(hat)`.
    pub fn from_transformed(hat: &Tensor3, t: &OrthogonalTransform) -> Result<Self> {
        t.inverse_apply(hat)
    }

    /// I.i.d. standard normal entries.
    pub fn random_normal<R: Rng + ?Sized>(m: usize, n: usize, c: usize, rng: &mut R) -> Self {
        let data = (0..m * n * c).map(|_| StandardNormal.sample(rng)).collect();
        Self { m, n, c, data }
    }

    pub fn t_vector(d: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(d, 1, c, data)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[k * self.m * self.n + i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[k * self.m * self.n + i * self.n + j] = v;
    }

    /// Frontal slice `k` as a row-major `m x n` block.
    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.m * self.n;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.m * self.n;
        &mut self.data[k * len..(k + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fro_norm(&self) -> f64 {
        math::l2(&self.data)
    }

    /// `||vec(T)||_p` for `p >= 1`; `p = inf` gives the max-abs entry.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidInputs(format!("lp norm needs p >= 1, got {p}")));
        }
        if p == f64::INFINITY {
            return Ok(self.data.iter().fold(0.0, |a, v| a.max(v.abs())));
        }
        let s: f64 = self.data.iter().map(|v| math::powf(v.abs(), p)).sum();
        Ok(math::powf(s, 1.0 / p))
    }

    /// `<A, B> = vec(A)^T vec(B)`.
    pub fn inner(&self, other: &Tensor3) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn scaled(&self, a: f64) -> Tensor3 {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    fn same_shape(&self, other: &Tensor3) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(())
    }

    /// Frontal-slice-wise product `(A ⊙ B)_k = A_k B_k` (no transform).
    pub fn slicewise_product(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.n != other.m || self.c != other.c {
            return Err(Error::DimensionMismatch(format!(
                "slicewise product of {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let (m, n, k) = (self.m, self.n, other.n);
        let mut out = Tensor3::zeros(m, k, self.c);
        for s in 0..self.c {
            matmul(self.slice(s), other.slice(s), out.slice_mut(s), m, n, k);
        }
        Ok(out)
    }

    /// `A *_M B = M^{-1}(M(A) ⊙ M(B))`.
    pub fn t_product(&self, other: &Tensor3, t: &OrthogonalTransform) -> Result<Tensor3> {
        if self.n != other.m {
            return Err(Error::DimensionMismatch(format!("t-product of {:?} and {:?}", self.dims(), other.dims())));
        }
        if self.c != other.c {
            return Err(Error::DimensionMismatch(format!("channel counts {} and {} differ", self.c, other.c)));
        }
        let a = t.apply(self)?;
        let b = t.apply(other)?;
        t.inverse_apply(&a.slicewise_product(&b)?)
    }

    /// t-transpose: `M(A^T)_k = (M(A)_k)^T`.
    ///
    /// Since `M` acts only along mode 3 it commutes with per-slice
    /// transposition, so the result is the slice-wise transpose in the
    /// original domain for every orthogonal `M`.
    pub fn t_transpose(&self, t: &OrthogonalTransform) -> Result<Tensor3> {
        if t.channels() != self.c {
            return Err(Error::TransformChannelMismatch { transform: t.channels(), tensor: self.c });
        }
        Ok(self.slice_transpose())
    }

    pub(crate) fn slice_transpose(&self) -> Tensor3 {
        let mut out = Tensor3::zeros(self.n, self.m, self.c);
        for k in 0..self.c {
            for i in 0..self.m {
                for j in 0..self.n {
                    out.set(j, i, k, self.get(i, j, k));
                }
            }
        }
        out
    }

    /// t-identity: every frontal slice of `M(I)` is the `m x m` identity.
    pub fn t_identity(m: usize, t: &OrthogonalTransform) -> Tensor3 {
        let c = t.channels();
        let hat = Tensor3::from_fn(m, m, c, |i, j, _| if i == j { 1.0 } else { 0.0 });
        t.inverse_apply(&hat).expect("channel count matches by construction")
    }

    /// `bdiag(M(A))`, an `mc x nc` dense matrix.
    pub fn m_block_diag(&self, t: &OrthogonalTransform) -> Result<DMatrix<f64>> {
        let hat = t.apply(self)?;
        let (m, n, c) = self.dims();
        let mut out = DMatrix::zeros(m * c, n * c);
        for k in 0..c {
            let s = hat.slice(k);
            for i in 0..m {
                for j in 0..n {
                    out[(k * m + i, k * n + j)] = s[i * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn t_spectral_norm(&self, t: &OrthogonalTransform) -> Result<f64> {
        Ok(self.norms(t)?.spectral)
    }

    pub fn tubal_nuclear_norm(&self, t: &OrthogonalTransform) -> Result<f64> {
        Ok(self.norms(t)?.tubal_nuclear)
    }

    pub fn norms(&self, t: &OrthogonalTransform) -> Result<TensorNorms> {
        let hat = t.apply(self)?;
        let mut spectral: f64 = 0.0;
        let mut nuclear = 0.0;
        for k in 0..self.c {
            let sv = slice_singular_values(hat.slice(k), self.m, self.n)?;
            spectral = spectral.max(sv.first().copied().unwrap_or(0.0));
            nuclear += sv.iter().sum::<f64>();
        }
        Ok(TensorNorms { fro: self.fro_norm(), spectral, tubal_nuclear: nuclear })
    }
}

/// Row-major `out (m x k) = a (m x n) * b (n x k)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let row = &mut out[i * k..(i + 1) * k];
        for p in 0..n {
            let aip = a[i * n + p];
            if aip == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * k..(p + 1) * k]) {
                *o += aip * bv;
            }
        }
    }
}
