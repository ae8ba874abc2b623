//! t-product neural networks.
//!
//! `f^(0) = x`, `f^(l) = relu(W^(l) *_M f^(l-1))`, `f(x) = w^T vec(f^(L))`.
//!
//! Forward and backward passes run in the transformed domain: the weights
//! are transformed once per [`PreparedModel`], each layer is then `c`
//! independent mat-vecs, and only the activations move back to the
//! original domain for the ReLU. Since `M` is orthogonal the adjoint of
//! `M` is `M^{-1}`, so cotangents flow back through the same two maps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor3;
use crate::transform::OrthogonalTransform;

#[derive(Debug, Clone, PartialEq)]
pub struct TnnModel {
    layers: Vec<Tensor3>,
    head: Vec<f64>,
    transform: OrthogonalTransform,
}

/// Per-layer and aggregate weight norms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNorms {
    /// `||W^(l)||_F` for each t-product layer.
    pub layers: Vec<f64>,
    /// `||w||_2`.
    pub head: f64,
    /// `sqrt(||w||^2 + sum_l ||W^(l)||_F^2)`, the `rho` of the margin analysis.
    pub total: f64,
    /// `||w|| * prod_l ||W^(l)||_F`, the tightest admissible `B_W`.
    pub product: f64,
}

/// Gradients of `upstream * f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Tensor3>,
    pub head: Vec<f64>,
    pub input: Tensor3,
}

impl Gradients {
    /// `<grad, W>` summed over every weight (layers and head).
    pub fn dot_weights(&self, model: &TnnModel) -> f64 {
        let layers: f64 = self.layers.iter().zip(&model.layers).map(|(g, w)| g.inner(w).expect("shapes match")).sum();
        layers + self.head.iter().zip(&model.head).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl TnnModel {
    pub fn new(layers: Vec<Tensor3>, head: Vec<f64>, transform: OrthogonalTransform) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::DimensionMismatch("a t-NN needs at least one t-product layer".into()));
        }
        let c = transform.channels();
        for (l, w) in layers.iter().enumerate() {
            if w.channels() != c {
                return Err(Error::TransformChannelMismatch { transform: c, tensor: w.channels() });
            }
            if l > 0 && w.cols() != layers[l - 1].rows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} expects width {} but layer {} outputs {}",
                    l + 1,
                    w.cols(),
                    l,
                    layers[l - 1].rows()
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidInputs(format!("layer {} has non-finite weights", l + 1)));
            }
        }
        let out = layers.last().expect("non-empty").rows() * c;
        if head.len() != out {
            return Err(Error::DimensionMismatch(format!("head has {} weights, expected {}", head.len(), out)));
        }
        if head.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInputs("head has non-finite weights".into()));
        }
        Ok(Self { layers, head, transform })
    }

    /// Gaussian initialisation, layer `l` with standard deviation `1/sqrt(c * d_{l-1})`
    /// and the head with `1/sqrt(c * d_L)`. `widths` is `[d_0, d_1, ..., d_L]`.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], transform: OrthogonalTransform, rng: &mut R) -> Result<Self> {
        Self::random_scaled(widths, transform, 1.0, rng)
    }

    /// As [`random`](Self::random) with every standard deviation multiplied by `gain`.
    pub fn random_scaled<R: Rng + ?Sized>(
        widths: &[usize],
        transform: OrthogonalTransform,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::DimensionMismatch("need at least [d_0, d_1] with positive widths".into()));
        }
        let c = transform.channels();
        let layers = widths
            .windows(2)
            .map(|w| {
                let std = gain / math::sqrt((c * w[0]) as f64);
                let dist = Normal::new(0.0, std).expect("finite std");
                let data = (0..w[1] * w[0] * c).map(|_| dist.sample(rng)).collect();
                Tensor3::from_vec(w[1], w[0], c, data)
            })
            .collect::<Result<Vec<_>>>()?;
        let d_last = *widths.last().expect("len >= 2");
        let dist = Normal::new(0.0, gain / math::sqrt((c * d_last) as f64)).expect("finite std");
        let head = (0..c * d_last).map(|_| dist.sample(rng)).collect();
        Self::new(layers, head, transform)
    }

    pub fn layers(&self) -> &[Tensor3] {
        &self.layers
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn transform(&self) -> &OrthogonalTransform {
        &self.transform
    }

    /// Number of t-product layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn channels(&self) -> usize {
        self.transform.channels()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    /// `[d_0, d_1, ..., d_L]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.rows()));
        w
    }

    /// Replaces layer weights, keeping dimensions.
    pub fn with_layers(&self, layers: Vec<Tensor3>) -> Result<Self> {
        Self::new(layers, self.head.clone(), self.transform.clone())
    }

    pub fn with_weights(&self, layers: Vec<Tensor3>, head: Vec<f64>) -> Result<Self> {
        Self::new(layers, head, self.transform.clone())
    }

    pub fn prepare(&self) -> PreparedModel<'_> {
        let hats = self.layers.iter().map(|w| self.transform.apply(w).expect("channels validated")).collect();
        PreparedModel { model: self, hats }
    }

    pub fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.dims() != (self.input_dim(), 1, self.channels()) {
            return Err(Error::DimensionMismatch(format!(
                "input is {:?}, model expects {}x1x{}",
                x.dims(),
                self.input_dim(),
                self.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.prepare().forward(x.data()))
    }

    /// `[f^(0), f^(1), ..., f^(L)]`.
    pub fn forward_features(&self, x: &Tensor3) -> Result<Vec<Tensor3>> {
        self.check_input(x)?;
        let prepared = self.prepare();
        let cache = prepared.forward_cache(x.data());
        let c = self.channels();
        let mut out = vec![x.clone()];
        for (l, z) in cache.pre.iter().enumerate() {
            let h: Vec<f64> = z.iter().map(|&v| relu(v)).collect();
            out.push(Tensor3::from_vec(self.layers[l].rows(), 1, c, h)?);
        }
        Ok(out)
    }

    /// Gradients of `upstream * f(x)` with respect to every weight and the input.
    pub fn backward(&self, x: &Tensor3, upstream: f64) -> Result<Gradients> {
        self.check_input(x)?;
        let prepared = self.prepare();
        let mut acc = GradientAccumulator::new(self);
        let input = prepared.backward_into(x.data(), upstream, Some(&mut acc));
        let (layers, head) = acc.finish(self);
        Ok(Gradients { layers, head, input: Tensor3::from_vec(self.input_dim(), 1, self.channels(), input)? })
    }

    /// `∂f/∂x`.
    pub fn input_gradient(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_input(x)?;
        let g = self.prepare().input_gradient(x.data());
        Tensor3::from_vec(self.input_dim(), 1, self.channels(), g)
    }

    /// Multiplies every weight (layers and head) by `a > 0`.
    pub fn scale_weights(&self, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::NonPositiveScale(a));
        }
        Ok(Self {
            layers: self.layers.iter().map(|w| w.scaled(a)).collect(),
            head: self.head.iter().map(|v| v * a).collect(),
            transform: self.transform.clone(),
        })
    }

    pub fn weight_norms(&self) -> WeightNorms {
        let layers: Vec<f64> = self.layers.iter().map(Tensor3::fro_norm).collect();
        let head = math::l2(&self.head);
        let total = math::sqrt(head * head + layers.iter().map(|v| v * v).sum::<f64>());
        let product = head * layers.iter().product::<f64>();
        WeightNorms { layers, head, total, product }
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Transformed layer inputs `M(f^(l-1))`, one per layer.
    inputs_hat: Vec<Vec<f64>>,
    /// Pre-activations `W^(l) *_M f^(l-1)` in the original domain.
    pre: Vec<Vec<f64>>,
    pub output: f64,
}

/// A model with its weights already moved to the transformed domain.
#[derive(Debug, Clone)]
pub struct PreparedModel<'a> {
    model: &'a TnnModel,
    hats: Vec<Tensor3>,
}

impl<'a> PreparedModel<'a> {
    pub fn model(&self) -> &'a TnnModel {
        self.model
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_cache(x).output
    }

    pub fn forward_cache(&self, x: &[f64]) -> ForwardCache {
        let t = &self.model.transform;
        let c = t.channels();
        let mut inputs_hat = Vec::with_capacity(self.hats.len());
        let mut pre = Vec::with_capacity(self.hats.len());
        let mut h = x.to_vec();
        for w_hat in &self.hats {
            let (rows, cols) = (w_hat.rows(), w_hat.cols());
            let mut h_hat = vec![0.0; h.len()];
            t.apply_slices(&h, &mut h_hat);
            let mut z_hat = vec![0.0; rows * c];
            for k in 0..c {
                let w = w_hat.slice(k);
                let hk = &h_hat[k * cols..(k + 1) * cols];
                for (i, out) in z_hat[k * rows..(k + 1) * rows].iter_mut().enumerate() {
                    *out = w[i * cols..(i + 1) * cols].iter().zip(hk).map(|(a, b)| a * b).sum();
                }
            }
            let mut z = vec![0.0; rows * c];
            t.inverse_slices(&z_hat, &mut z);
            h = z.iter().map(|&v| relu(v)).collect();
            inputs_hat.push(h_hat);
            pre.push(z);
        }
        let output = self.model.head.iter().zip(&h).map(|(a, b)| a * b).sum();
        ForwardCache { inputs_hat, pre, output }
    }

    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.backward_into(x, 1.0, None)
    }

    /// Backpropagates `upstream * f(x)`; weight gradients are added to `acc`
    /// when given. Returns the input gradient.
    pub fn backward_into(&self, x: &[f64], upstream: f64, acc: Option<&mut GradientAccumulator>) -> Vec<f64> {
        let cache = self.forward_cache(x);
        self.backward_cached(&cache, upstream, acc)
    }

    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        upstream: f64,
        mut acc: Option<&mut GradientAccumulator>,
    ) -> Vec<f64> {
        let t = &self.model.transform;
        let c = t.channels();
        let depth = self.hats.len();
        if let Some(acc) = acc.as_deref_mut() {
            let last = &cache.pre[depth - 1];
            for (g, &z) in acc.head.iter_mut().zip(last) {
                *g += upstream * relu(z);
            }
        }
        let mut g_h: Vec<f64> = self.model.head.iter().map(|w| upstream * w).collect();
        for l in (0..depth).rev() {
            let w_hat = &self.hats[l];
            let (rows, cols) = (w_hat.rows(), w_hat.cols());
            // σ'(0) = 0
            for (g, &z) in g_h.iter_mut().zip(&cache.pre[l]) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut g_hat = vec![0.0; rows * c];
            t.apply_slices(&g_h, &mut g_hat);
            let h_hat = &cache.inputs_hat[l];
            if let Some(acc) = acc.as_deref_mut() {
                let grad = &mut acc.layers_hat[l];
                for k in 0..c {
                    let gk = &g_hat[k * rows..(k + 1) * rows];
                    let hk = &h_hat[k * cols..(k + 1) * cols];
                    let slice = grad.slice_mut(k);
                    for (i, &gi) in gk.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        for (o, &hj) in slice[i * cols..(i + 1) * cols].iter_mut().zip(hk) {
                            *o += gi * hj;
                        }
                    }
                }
            }
            let mut g_in_hat = vec![0.0; cols * c];
            for k in 0..c {
                let w = w_hat.slice(k);
                let gk = &g_hat[k * rows..(k + 1) * rows];
                let dst = &mut g_in_hat[k * cols..(k + 1) * cols];
                for (i, &gi) in gk.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for (o, &wv) in dst.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                        *o += gi * wv;
                    }
                }
            }
            g_h = vec![0.0; cols * c];
            t.inverse_slices(&g_in_hat, &mut g_h);
        }
        g_h
    }
}

/// Sums weight gradients over many samples in the transformed domain.
#[derive(Debug, Clone)]
pub struct GradientAccumulator {
    layers_hat: Vec<Tensor3>,
    head: Vec<f64>,
}

impl GradientAccumulator {
    pub fn new(model: &TnnModel) -> Self {
        Self {
            layers_hat: model.layers.iter().map(|w| Tensor3::zeros(w.rows(), w.cols(), w.channels())).collect(),
            head: vec![0.0; model.head.len()],
        }
    }

    /// Moves the accumulated layer gradients back to the original domain.
    pub fn finish(self, model: &TnnModel) -> (Vec<Tensor3>, Vec<f64>) {
        let layers =
            self.layers_hat.iter().map(|g| model.transform.inverse_apply(g).expect("channels validated")).collect();
        (layers, self.head)
    }
}
