//! Labelled datasets of t-vectors and a seeded teacher-labelled generator.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::tnn::TnnModel;
use crate::transform::OrthogonalTransform;
use crate::tsvd;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `d x 1 x c` t-vector.
    pub x: Tensor3,
    /// `+1` or `-1`.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    d: usize,
    c: usize,
    b_x: f64,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, d: usize, c: usize) -> Result<Self> {
        let mut b_x: f64 = 0.0;
        for (i, s) in samples.iter().enumerate() {
            if s.x.dims() != (d, 1, c) {
                return Err(Error::DimensionMismatch(format!("sample {i} is {:?}, expected {d}x1x{c}", s.x.dims())));
            }
            if s.y != 1.0 && s.y != -1.0 {
                return Err(Error::InvalidInputs(format!("sample {i} has label {}", s.y)));
            }
            if !s.x.is_finite() {
                return Err(Error::InvalidInputs(format!("sample {i} has non-finite entries")));
            }
            b_x = b_x.max(s.x.fro_norm());
        }
        Ok(Self { samples, d, c, b_x })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    /// `max_i ||x_i||_F`.
    pub fn b_x(&self) -> f64 {
        self.b_x
    }

    /// `(#positive, #negative)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.y > 0.0).count();
        (pos, self.samples.len() - pos)
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let samples = self.samples.iter().take(n).cloned().collect();
        Dataset::new(samples, self.d, self.c).expect("subset of a valid dataset")
    }

    /// Splits into `[0, n)` and `[n, len)`.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let a = self.samples[..n].to_vec();
        let b = self.samples[n..].to_vec();
        (Dataset::new(a, self.d, self.c).expect("valid"), Dataset::new(b, self.d, self.c).expect("valid"))
    }
}

/// Settings of [`synth_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub c: usize,
    /// Tubal rank of every teacher layer.
    pub teacher_rank: usize,
    /// Hidden widths of the teacher (defaults to two layers of width `d`).
    pub teacher_widths: Vec<usize>,
}

impl SynthConfig {
    pub fn new(seed: u64, n: usize, d: usize, c: usize, teacher_rank: usize) -> Self {
        Self { seed, n, d, c, teacher_rank, teacher_widths: alloc::vec![d, d] }
    }
}

/// The fixed low-tubal-rank teacher used by [`synth_dataset`].
pub fn synth_teacher(cfg: &SynthConfig) -> Result<TnnModel> {
    let transform = OrthogonalTransform::dct(cfg.c);
    let mut widths = alloc::vec![cfg.d];
    widths.extend(cfg.teacher_widths.iter().copied());
    let max_rank = widths.windows(2).map(|w| w[0].min(w[1])).min().unwrap_or(0);
    if cfg.teacher_rank == 0 || cfg.teacher_rank > max_rank {
        return Err(Error::RankOutOfRange { rank: cfg.teacher_rank, max: max_rank });
    }
    // teacher weights come from a stream separate from the samples
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7465_6163_6865_7221);
    let raw = TnnModel::random(&widths, transform.clone(), &mut rng)?;
    let layers =
        raw.layers().iter().map(|w| tsvd::truncate(w, &transform, cfg.teacher_rank)).collect::<Result<Vec<_>>>()?;
    raw.with_layers(layers)
}

/// Unit-norm Gaussian inputs labelled by the sign of a random low-tubal-rank
/// t-NN teacher. Classes alternate `+1, -1, ...` by rejection sampling, and
/// zero teacher outputs are resampled, so every sample has a strictly positive
/// teacher margin. Deterministic in `seed`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    let teacher = synth_teacher(cfg)?;
    let prepared = teacher.prepare();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n);
    let budget = 1000 * cfg.n.max(1) + 1000;
    let mut draws = 0usize;
    while samples.len() < cfg.n {
        let want = if samples.len() % 2 == 0 { 1.0 } else { -1.0 };
        draws += 1;
        if draws > budget {
            return Err(Error::NumericalFailure("teacher labels are too unbalanced to sample".into()));
        }
        let mut x = Tensor3::random_normal(cfg.d, 1, cfg.c, &mut rng);
        let norm = x.fro_norm();
        if norm == 0.0 {
            continue;
        }
        x = x.scaled(1.0 / norm);
        let out = prepared.forward(x.data());
        if out == 0.0 || (out > 0.0) != (want > 0.0) {
            continue;
        }
        samples.push(Sample { x, y: want });
    }
    Dataset::new(samples, cfg.d, cfg.c)
}
