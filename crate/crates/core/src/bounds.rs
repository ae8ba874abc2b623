//! Closed-form generalization-gap bounds for t-NNs and the compression
//! distance certificate.
//!
//! The absolute constants of the bounds are unknown; they are carried as
//! multipliers in [`BoundConstants`] and default to 1, so the evaluated
//! numbers describe the shape of each bound rather than a calibrated value.

use alloc::format;
use alloc::vec::Vec;

use crate::adversarial::{self, AttackConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::math::{ceil, ln, powf, sqrt};
use crate::tnn::TnnModel;
use crate::training::project_ranks;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Multiplier of the full-parameterization adversarial bound.
    pub full: f64,
    /// Multiplier of the low-tubal-rank adversarial bound.
    pub lowrank: f64,
    /// Multiplier `C_α` of the spectral-decay bounds.
    pub decay: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { full: 1.0, lowrank: 1.0, decay: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Sample size `N`.
    pub n: usize,
    /// Number of channels `c`.
    pub c: usize,
    /// Widths `d_0, ..., d_L`.
    pub dims: Vec<usize>,
    /// Per-layer caps `B_l` on `||W^(l)||_F`.
    pub layer_caps: Vec<f64>,
    /// Cap `B_w` on the head.
    pub head_cap: f64,
    /// Input bound `B_x`.
    pub b_x: f64,
    /// Attack radius `ξ`.
    pub xi: f64,
    /// Attack-norm compatibility constant `C_R`.
    pub c_r: f64,
    /// Loss Lipschitz constant `L_l`.
    pub lipschitz: f64,
    /// Loss range bound `B`.
    pub range: f64,
    /// Confidence parameter `t > 0`.
    pub t: f64,
    pub ranks: Option<Vec<usize>>,
    /// Spectral decay `(V_0, α)`.
    pub decay: Option<(f64, f64)>,
    pub constants: BoundConstants,
}

impl BoundInputs {
    /// Inputs with unit caps, no attack, `t = 1` and unit loss constants.
    pub fn new(n: usize, c: usize, dims: Vec<usize>) -> Self {
        let depth = dims.len().saturating_sub(1);
        Self {
            n,
            c,
            dims,
            layer_caps: alloc::vec![1.0; depth],
            head_cap: 1.0,
            b_x: 1.0,
            xi: 0.0,
            c_r: 1.0,
            lipschitz: 1.0,
            range: 1.0,
            t: 1.0,
            ranks: None,
            decay: None,
            constants: BoundConstants::default(),
        }
    }

    /// Sets `L_l` and `B` from `loss` over outputs bounded by `B_f̃`.
    pub fn with_loss(mut self, loss: &LossSpec) -> Self {
        let bf = self.b_f_tilde();
        self.lipschitz = loss.lipschitz(bf);
        self.range = loss.range_bound(bf);
        self
    }

    pub fn depth(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    /// `B_W = B_w prod_l B_l`.
    pub fn b_w(&self) -> f64 {
        self.head_cap * self.layer_caps.iter().product::<f64>()
    }

    /// `B_f̃ = (B_x + ξ C_R) B_W`.
    pub fn b_f_tilde(&self) -> f64 {
        (self.b_x + self.xi * self.c_r) * self.b_w()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInputs(msg.into()));
        if self.n == 0 || self.c == 0 {
            return bad("N and c must be positive");
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return bad("need at least one layer with positive widths");
        }
        if self.layer_caps.len() != self.depth() {
            return Err(Error::InvalidInputs(format!(
                "{} layer caps for {} layers",
                self.layer_caps.len(),
                self.depth()
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !self.layer_caps.iter().all(|&b| positive(b)) || !positive(self.head_cap) || !positive(self.b_x) {
            return bad("norm caps and B_x must be positive and finite");
        }
        if !nonneg(self.xi) || !nonneg(self.c_r) || !nonneg(self.lipschitz) || !nonneg(self.range) {
            return bad("xi, C_R, L_l and B must be non-negative and finite");
        }
        if !positive(self.t) {
            return bad("t must be positive");
        }
        let k = &self.constants;
        if !positive(k.full) || !positive(k.lowrank) || !positive(k.decay) {
            return bad("bound constants must be positive");
        }
        if let Some(ranks) = &self.ranks {
            if ranks.len() != self.depth() {
                return bad("one rank per layer is required");
            }
            for (l, &r) in ranks.iter().enumerate() {
                let max = self.dims[l].min(self.dims[l + 1]);
                if r == 0 || r > max {
                    return Err(Error::RankOutOfRange { rank: r, max });
                }
            }
        }
        if let Some((v0, alpha)) = self.decay {
            if !positive(v0) || !(alpha > 0.5) || !alpha.is_finite() {
                return bad("decay needs V_0 > 0 and alpha > 1/2");
            }
        }
        Ok(())
    }

    fn confidence_term(&self) -> f64 {
        3.0 * self.range * sqrt(self.t / (2.0 * self.n as f64))
    }
}

/// `L_l B_x B_W / sqrt(N) (sqrt(2 log(2(L+1))) + 1) + 3B sqrt(t/(2N))`.
pub fn standard_gap_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let l = inp.depth() as f64;
    let n = inp.n as f64;
    let complexity = inp.lipschitz * inp.b_x * inp.b_w() / sqrt(n) * (sqrt(2.0 * ln(2.0 * (l + 1.0))) + 1.0);
    Ok(complexity + inp.confidence_term())
}

/// Complexity term of the full-parameterization adversarial bound (no confidence term).
pub fn adv_complexity_full(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let l = inp.depth() as f64;
    let params: usize = inp.dims.windows(2).map(|w| w[0] * w[1]).sum();
    let radical = sqrt(inp.c as f64 * params as f64 * ln(3.0 * (l + 1.0)));
    Ok(inp.constants.full * inp.lipschitz * inp.b_f_tilde() / sqrt(inp.n as f64) * radical)
}

/// Complexity term of the low-tubal-rank adversarial bound (no confidence term).
pub fn adv_complexity_lowrank(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let ranks = inp.ranks.as_ref().ok_or_else(|| Error::InvalidInputs("low-rank bound needs ranks".into()))?;
    let l = inp.depth() as f64;
    let params: usize = inp.dims.windows(2).zip(ranks).map(|(w, &r)| r * (w[0] + w[1])).sum();
    let radical = sqrt(inp.c as f64 * params as f64 * ln(9.0 * (l + 1.0)));
    Ok(inp.constants.lowrank * inp.lipschitz * inp.b_f_tilde() / sqrt(inp.n as f64) * radical)
}

/// `C L_l B_f̃ / sqrt(N) sqrt(c sum_l d_{l-1} d_l log(3(L+1))) + 3B sqrt(t/(2N))`.
pub fn adv_gap_bound_full(inp: &BoundInputs) -> Result<f64> {
    Ok(adv_complexity_full(inp)? + inp.confidence_term())
}

/// `C' L_l B_f̃ / sqrt(N) sqrt(c sum_l r_l (d_{l-1} + d_l) log(9(L+1))) + 3B sqrt(t/(2N))`.
pub fn adv_gap_bound_lowrank(inp: &BoundInputs) -> Result<f64> {
    Ok(adv_complexity_lowrank(inp)? + inp.confidence_term())
}

/// All pieces of the spectral-decay bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayBound {
    /// Ranks used for `r̂`, `E_1` and the main bound: the given ranks, or the
    /// balanced choice when none are given.
    pub ranks: Vec<usize>,
    /// Balanced ranks `min(ceil((L V_0 B_f̃ / B_l)^{1/α}), d_l, d_{l-1})`.
    pub optimal_ranks: Vec<usize>,
    pub r_hat: f64,
    pub e1: f64,
    pub e2: f64,
    /// Bound at `ranks`.
    pub bound: f64,
    /// Bound at the balanced ranks, in its simplified closed form.
    pub optimal_bound: f64,
}

/// Spectral-decay bound: `r̂`, `E_1`, `E_2`, the bound at the chosen ranks and
/// the bound at the balanced ranks.
pub fn adv_gap_bound_decay(inp: &BoundInputs) -> Result<DecayBound> {
    inp.validate()?;
    let (v0, alpha) = inp.decay.ok_or_else(|| Error::InvalidInputs("decay bound needs (V_0, alpha)".into()))?;
    let n = inp.n as f64;
    let c = inp.c as f64;
    let l = inp.depth() as f64;
    let bf = inp.b_f_tilde();
    let log_arg = 9.0 * n * l * bf / sqrt(c);
    if !(log_arg > 1.0) {
        return Err(Error::InvalidInputs(format!("log argument 9 N L B_f / sqrt(c) = {log_arg} must exceed 1")));
    }
    let log_term = ln(log_arg);
    let widths: Vec<f64> = inp.dims.windows(2).map(|w| (w[0] + w[1]) as f64).collect();

    let optimal_ranks: Vec<usize> = inp
        .layer_caps
        .iter()
        .zip(inp.dims.windows(2))
        .map(|(&b, w)| {
            let r = ceil(powf(l * v0 * bf / b, 1.0 / alpha));
            let cap = w[0].min(w[1]);
            // the ceiling is at least 1 for a positive argument
            if r >= cap as f64 {
                cap
            } else {
                (r as usize).max(1)
            }
        })
        .collect();
    let ranks = inp.ranks.clone().unwrap_or_else(|| optimal_ranks.clone());

    let r_hat =
        v0 * bf * ranks.iter().zip(&inp.layer_caps).map(|(&r, &b)| powf(r as f64 + 1.0, -alpha) / b).sum::<f64>();
    let e1 = c / n * ranks.iter().zip(&widths).map(|(&r, &w)| r as f64 * w).sum::<f64>() * log_term;
    let e2 = c / n
        * inp.layer_caps.iter().zip(&widths).map(|(&b, &w)| powf(l * v0 * bf / b, 1.0 / alpha) * w).sum::<f64>()
        * log_term;

    let p = 2.0 * alpha / (2.0 * alpha + 1.0);
    let bf_pow = powf(bf, (2.0 * alpha - 1.0) / (2.0 * alpha + 1.0));
    let t_over_n = sqrt(inp.t / n);
    let tail = (1.0 + inp.t * bf) / n;
    let lead = inp.constants.decay * inp.lipschitz;
    let range_ratio = if inp.lipschitz > 0.0 { inp.range / inp.lipschitz } else { 0.0 };
    let bound = lead
        * (bf * e1
            + r_hat * sqrt(e1)
            + powf(e2, p) * (bf_pow + 1.0)
            + powf(r_hat, p) * sqrt(e2)
            + (r_hat + range_ratio) * t_over_n
            + tail);

    let balanced_sum: f64 = inp.layer_caps.iter().zip(&widths).map(|(&b, &w)| powf(l * v0 / b, 1.0 / alpha) * w).sum();
    let optimal_bound = lead
        * (powf(bf, 1.0 - 1.0 / (2.0 * alpha)) * sqrt(c * balanced_sum * log_term / n)
            + powf(e2, p) * (bf_pow + 1.0)
            + sqrt(e2)
            + range_ratio * t_over_n
            + tail);

    Ok(DecayBound { ranks, optimal_ranks, r_hat, e1, e2, bound, optimal_bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub compressed: TnnModel,
    /// `||W^(l) - W_r^(l)||_F`.
    pub layer_deltas: Vec<f64>,
    /// `||W^(l) - W_r^(l)||` in t-spectral norm.
    pub layer_deltas_spectral: Vec<f64>,
    /// `δ = max_l ||W^(l) - W_r^(l)||_F`.
    pub delta: f64,
    /// `B_f̃` from the actual weight norms and the data bound.
    pub b_f_tilde: f64,
    /// `δ B_f̃ sum_l B_l^{-1}`.
    pub certificate: f64,
    /// `||w|| (B_x + ξ C_R) sum_l δ_l^sp prod_{k != l} ||W^(k)||`.
    pub spectral_certificate: f64,
    /// `max_i |y_i f(x_i + δ_i) - y_i g(x_i + δ_i)|` with `δ_i` attacking `f`.
    pub observed: f64,
}

/// Truncates every layer to its rank and compares the result with a
/// worst-case certificate on `data`.
///
/// The perturbation of each sample is computed once from the original model
/// and shared by both models. `C_R` is the F-norm radius factor of the attack
/// ball (1 for l2 balls, `sqrt(dc)` for l∞ balls) so that the certificate
/// covers every perturbed input.
pub fn compress_and_certify(
    model: &TnnModel,
    ranks: &[usize],
    data: &Dataset,
    attack: &AttackConfig,
) -> Result<CompressionReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    attack.validate()?;
    let compressed = project_ranks(model, ranks)?;
    let t = model.transform();
    let mut layer_deltas = Vec::with_capacity(ranks.len());
    let mut layer_deltas_spectral = Vec::with_capacity(ranks.len());
    let mut spectral_norms = Vec::with_capacity(ranks.len());
    for (w, wr) in model.layers().iter().zip(compressed.layers()) {
        let diff = w.sub(wr)?;
        layer_deltas.push(diff.fro_norm());
        layer_deltas_spectral.push(diff.t_spectral_norm(t)?);
        spectral_norms.push(w.t_spectral_norm(t)?);
    }
    let delta = layer_deltas.iter().copied().fold(0.0, f64::max);
    let norms = model.weight_norms();
    let radius = data.b_x() + attack.frobenius_radius(data.features(), data.channels());
    let b_f_tilde = radius * norms.product;
    let inv_sum: f64 = norms.layers.iter().map(|&b| if b > 0.0 { 1.0 / b } else { f64::INFINITY }).sum();
    let certificate = if delta == 0.0 { 0.0 } else { delta * b_f_tilde * inv_sum };
    let head_norm = norms.head;
    let spectral_certificate = head_norm
        * radius
        * (0..ranks.len())
            .map(|l| {
                let others: f64 = spectral_norms.iter().enumerate().filter(|&(k, _)| k != l).map(|(_, v)| *v).product();
                layer_deltas_spectral[l] * others
            })
            .sum::<f64>();

    let f = model.prepare();
    let g = compressed.prepare();
    let mut observed: f64 = 0.0;
    for s in data.samples() {
        let (delta_i, _) = adversarial::effective_perturbation(&f, s.x.data(), s.y, attack);
        let point: Vec<f64> = s.x.data().iter().zip(&delta_i).map(|(a, b)| a + b).collect();
        let diff = s.y * f.forward(&point) - s.y * g.forward(&point);
        observed = observed.max(diff.abs());
    }
    Ok(CompressionReport {
        compressed,
        layer_deltas,
        layer_deltas_spectral,
        delta,
        b_f_tilde,
        certificate,
        spectral_certificate,
        observed,
    })
}
