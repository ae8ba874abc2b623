//! The orthogonal mode-3 transform `M` and its inverse.
//!
//! `M(T) = T x_3 M`, i.e. frontal slice `k` of the result is
//! `sum_j M[k][j] * T[:, :, j]`. Because `M` is orthogonal the inverse is
//! `M^T`, which is stored at construction and never recomputed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor3;

/// How to build the transform matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    Identity,
    /// Orthonormal type-II cosine basis.
    Dct,
    /// Row-major `c x c` matrix supplied by the caller.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalTransform {
    c: usize,
    matrix: Vec<f64>,
    inverse: Vec<f64>,
}

impl OrthogonalTransform {
    /// Orthogonality tolerance on `||M^T M - I||_F`, scaled by `sqrt(c)`.
    pub const ORTHOGONALITY_TOL: f64 = 1e-10;

    pub fn build(kind: TransformKind, c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::DimensionMismatch("channel count must be >= 1".into()));
        }
        let matrix = match kind {
            TransformKind::Identity => {
                let mut m = vec![0.0; c * c];
                for k in 0..c {
                    m[k * c + k] = 1.0;
                }
                m
            }
            TransformKind::Dct => dct2_matrix(c),
            TransformKind::Custom(m) => {
                if m.len() != c * c {
                    return Err(Error::DimensionMismatch(format!(
                        "custom transform has {} entries, expected {}x{}",
                        m.len(),
                        c,
                        c
                    )));
                }
                m
            }
        };
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonOrthogonal { residual: f64::NAN });
        }
        let residual = orthogonality_residual(&matrix, c);
        if !(residual <= Self::ORTHOGONALITY_TOL * math::sqrt(c as f64)) {
            return Err(Error::NonOrthogonal { residual });
        }
        let mut inverse = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                inverse[j * c + i] = matrix[i * c + j];
            }
        }
        Ok(Self { c, matrix, inverse })
    }

    pub fn identity(c: usize) -> Self {
        Self::build(TransformKind::Identity, c).expect("identity is orthogonal")
    }

    pub fn dct(c: usize) -> Self {
        Self::build(TransformKind::Dct, c).expect("DCT-II basis is orthogonal")
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    /// Row-major `M`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Row-major `M^{-1} = M^T`.
    pub fn inverse_matrix(&self) -> &[f64] {
        &self.inverse
    }

    /// `M(T)`.
    pub fn apply(&self, t: &Tensor3) -> Result<Tensor3> {
        self.check(t)?;
        let mut out = Tensor3::zeros(t.rows(), t.cols(), self.c);
        self.apply_slices(t.data(), out.data_mut());
        Ok(out)
    }

    /// `M^{-1}(T)`.
    pub fn inverse_apply(&self, t: &Tensor3) -> Result<Tensor3> {
        self.check(t)?;
        let mut out = Tensor3::zeros(t.rows(), t.cols(), self.c);
        self.inverse_slices(t.data(), out.data_mut());
        Ok(out)
    }

    /// Raw slice-major form of [`apply`](Self::apply): `input` holds `c`
    /// contiguous slices of equal length, `out` is overwritten.
    pub fn apply_slices(&self, input: &[f64], out: &mut [f64]) {
        mix_slices(&self.matrix, self.c, input, out);
    }

    /// Raw slice-major form of [`inverse_apply`](Self::inverse_apply).
    pub fn inverse_slices(&self, input: &[f64], out: &mut [f64]) {
        mix_slices(&self.inverse, self.c, input, out);
    }

    fn check(&self, t: &Tensor3) -> Result<()> {
        if t.channels() != self.c {
            return Err(Error::TransformChannelMismatch { transform: self.c, tensor: t.channels() });
        }
        Ok(())
    }
}

/// `out[k] = sum_j mix[k][j] * input[j]` where `input[j]` is the `j`-th of `c` slices.
fn mix_slices(mix: &[f64], c: usize, input: &[f64], out: &mut [f64]) {
    debug_assert_eq!(input.len(), out.len());
    let len = input.len() / c;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..c {
        let dst = &mut out[k * len..(k + 1) * len];
        for j in 0..c {
            let w = mix[k * c + j];
            if w == 0.0 {
                continue;
            }
            let src = &input[j * len..(j + 1) * len];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
}

/// Orthonormal DCT-II: `M[k][j] = a_k cos(pi (2j + 1) k / 2c)`.
fn dct2_matrix(c: usize) -> Vec<f64> {
    let mut m = vec![0.0; c * c];
    let n = c as f64;
    for k in 0..c {
        let scale = if k == 0 { math::sqrt(1.0 / n) } else { math::sqrt(2.0 / n) };
        for j in 0..c {
            m[k * c + j] = scale * math::cos(PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n));
        }
    }
    m
}

/// `||M^T M - I||_F`.
pub fn orthogonality_residual(m: &[f64], c: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..c {
        for j in 0..c {
            let mut dot = 0.0;
            for k in 0..c {
                dot += m[k * c + i] * m[k * c + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (dot - target) * (dot - target);
        }
    }
    math::sqrt(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_identity_matrix() {
        let t = OrthogonalTransform::build(TransformKind::Identity, 3).unwrap();
        assert_eq!(t.matrix(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dct_of_one_channel_is_one() {
        let t = OrthogonalTransform::build(TransformKind::Dct, 1).unwrap();
        assert_eq!(t.matrix(), &[1.0]);
    }

    #[test]
    fn inverse_is_stored_transpose() {
        let t = OrthogonalTransform::dct(5);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(t.inverse_matrix()[i * 5 + j], t.matrix()[j * 5 + i]);
            }
        }
    }

    #[test]
    fn rejects_non_orthogonal_and_bad_shapes() {
        let err = OrthogonalTransform::build(TransformKind::Custom(vec![1.0, 0.1, 0.0, 1.0]), 2);
        assert!(matches!(err, Err(Error::NonOrthogonal { .. })));
        let err = OrthogonalTransform::build(TransformKind::Custom(vec![1.0, 0.0, 0.0]), 2);
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
        assert!(OrthogonalTransform::build(TransformKind::Identity, 0).is_err());
    }

    #[test]
    fn dct_of_constant_tubes_concentrates_in_first_slice() {
        let c = 6;
        let t = OrthogonalTransform::dct(c);
        let x = Tensor3::from_fn(2, 3, c, |_, _, _| 1.0);
        let y = t.apply(&x).unwrap();
        // <a_0 * 1, 1> = sqrt(c); other basis vectors are orthogonal to the constant
        for i in 0..2 {
            for j in 0..3 {
                assert!((y.get(i, j, 0) - math::sqrt(c as f64)).abs() < 1e-12);
                for k in 1..c {
                    assert!(y.get(i, j, k).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let t = OrthogonalTransform::dct(4);
        let x = Tensor3::zeros(2, 2, 3);
        assert!(matches!(t.apply(&x), Err(Error::TransformChannelMismatch { transform: 4, tensor: 3 })));
    }

    #[test]
    fn round_trip_and_norm_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for c in 1..8 {
            for t in [OrthogonalTransform::identity(c), OrthogonalTransform::dct(c)] {
                let x = Tensor3::random_normal(3, 4, c, &mut rng);
                let y = t.apply(&x).unwrap();
                let back = t.inverse_apply(&y).unwrap();
                assert!(math::rel_diff(back.data(), x.data()) < 1e-12);
                assert!((y.fro_norm() - x.fro_norm()).abs() <= 1e-12 * x.fro_norm());
            }
        }
    }
}
