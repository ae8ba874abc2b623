//! Gradient attacks, adversarial risk and robust margins.
//!
//! All four attacks only use the direction of `z = ∂f/∂x`, so they are
//! invariant to positive rescaling of the weights of a homogeneous t-NN.
//!
//! The adversarial loss is a maximum over the attack ball. The ball always
//! contains the clean point, so risk and margin evaluation take the worse of
//! `x + δ` and `x` (see [`effective_perturbation`]); this keeps the reported
//! adversarial risk a valid lower estimate of the true maximum and never
//! below the clean risk.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::math;
use crate::tensor::Tensor3;
use crate::tnn::{PreparedModel, TnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// l2 fast gradient method.
    L2Fgm,
    /// Fast gradient sign method (l∞ ball).
    Fgsm,
    /// Projected gradient descent on the l2 ball.
    L2Pgd,
    /// Projected gradient descent on the l∞ ball.
    LinfPgd,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::L2Fgm => "fgm",
            AttackKind::Fgsm => "fgsm",
            AttackKind::L2Pgd => "pgd2",
            AttackKind::LinfPgd => "pgdinf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fgm" | "l2_fgm" => Ok(AttackKind::L2Fgm),
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd2" | "l2_pgd" => Ok(AttackKind::L2Pgd),
            "pgdinf" | "linf_pgd" => Ok(AttackKind::LinfPgd),
            other => Err(Error::InvalidInputs(format!("unknown attack '{other}'"))),
        }
    }

    pub fn is_linf(&self) -> bool {
        matches!(self, AttackKind::Fgsm | AttackKind::LinfPgd)
    }

    pub fn is_pgd(&self) -> bool {
        matches!(self, AttackKind::L2Pgd | AttackKind::LinfPgd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Radius `ξ >= 0`.
    pub xi: f64,
    /// PGD step size `ρ` (relative to `ξ`).
    pub rho: f64,
    /// PGD iterations.
    pub steps: usize,
    /// Compatibility constant `C_R = sup R_a(x) / ||x||_F` of the attack norm.
    pub compat: f64,
}

impl AttackConfig {
    pub const DEFAULT_PGD_RHO: f64 = 0.25;
    pub const DEFAULT_PGD_STEPS: usize = 10;

    pub fn new(kind: AttackKind, xi: f64) -> Self {
        Self { kind, xi, rho: Self::DEFAULT_PGD_RHO, steps: Self::DEFAULT_PGD_STEPS, compat: 1.0 }
    }

    /// No perturbation at all.
    pub fn none() -> Self {
        Self::new(AttackKind::Fgsm, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return Err(Error::InvalidInputs(format!("attack radius must be >= 0, got {}", self.xi)));
        }
        if self.kind.is_pgd() && (self.steps == 0 || !(self.rho > 0.0)) {
            return Err(Error::InvalidInputs("PGD needs steps >= 1 and rho > 0".into()));
        }
        Ok(())
    }

    /// Largest F-norm of a perturbation inside the ball, for a `d x 1 x c` input:
    /// `ξ` for l2 balls, `ξ sqrt(dc)` for l∞ balls.
    pub fn frobenius_radius(&self, d: usize, c: usize) -> f64 {
        if self.kind.is_linf() {
            self.xi * math::sqrt((d * c) as f64)
        } else {
            self.xi
        }
    }
}

/// The attack perturbation `δ` for `(x, y)` under the current weights.
pub fn attack(model: &TnnModel, x: &Tensor3, y: f64, cfg: &AttackConfig) -> Result<Tensor3> {
    model.check_input(x)?;
    cfg.validate()?;
    let delta = attack_prepared(&model.prepare(), x.data(), y, cfg);
    Tensor3::from_vec(x.rows(), 1, x.channels(), delta)
}

/// [`attack`] on raw t-vector data with pre-transformed weights.
pub fn attack_prepared(model: &PreparedModel<'_>, x: &[f64], y: f64, cfg: &AttackConfig) -> Vec<f64> {
    let n = x.len();
    if cfg.xi == 0.0 {
        return vec![0.0; n];
    }
    let xi = cfg.xi;
    match cfg.kind {
        AttackKind::L2Fgm => {
            let z = model.input_gradient(x);
            let norm = math::l2(&z);
            if norm == 0.0 {
                return vec![0.0; n];
            }
            z.iter().map(|v| -xi * y * v / norm).collect()
        }
        AttackKind::Fgsm => {
            let z = model.input_gradient(x);
            z.iter().map(|v| xi * sign(-y * v)).collect()
        }
        AttackKind::L2Pgd | AttackKind::LinfPgd => {
            let mut delta = vec![0.0; n];
            let mut point = vec![0.0; n];
            for _ in 0..cfg.steps {
                point.iter_mut().zip(x).zip(&delta).for_each(|((p, a), b)| *p = a + b);
                let z = model.input_gradient(&point);
                let norm = math::l2(&z);
                if norm == 0.0 {
                    break;
                }
                if cfg.kind == AttackKind::L2Pgd {
                    delta.iter_mut().zip(&z).for_each(|(d, v)| *d -= cfg.rho * xi * y * v / norm);
                    let dn = math::l2(&delta);
                    if dn > xi {
                        delta.iter_mut().for_each(|d| *d *= xi / dn);
                    }
                } else {
                    delta.iter_mut().zip(&z).for_each(|(d, v)| {
                        *d = (*d - cfg.rho * xi * y * v / norm).clamp(-xi, xi);
                    });
                }
            }
            delta
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The attack output if it does not increase the margin `y f`, otherwise zero.
/// Returns the perturbation together with the resulting margin.
pub fn effective_perturbation(model: &PreparedModel<'_>, x: &[f64], y: f64, cfg: &AttackConfig) -> (Vec<f64>, f64) {
    let clean = y * model.forward(x);
    if cfg.xi == 0.0 {
        return (vec![0.0; x.len()], clean);
    }
    let delta = attack_prepared(model, x, y, cfg);
    let point: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let adv = y * model.forward(&point);
    if adv <= clean {
        (delta, adv)
    } else {
        (vec![0.0; x.len()], clean)
    }
}

/// Clean and robust margins of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginEvaluation {
    /// `y_i f(x_i)`.
    pub clean: Vec<f64>,
    /// `q̃_i = y_i f(x_i + δ_i)`.
    pub robust: Vec<f64>,
}

impl MarginEvaluation {
    pub fn clean_risk(&self, loss: &LossSpec) -> f64 {
        mean(self.clean.iter().map(|&q| loss.value(q)))
    }

    pub fn adversarial_risk(&self, loss: &LossSpec) -> f64 {
        mean(self.robust.iter().map(|&q| loss.value(q)))
    }

    pub fn clean_accuracy(&self) -> f64 {
        mean(self.clean.iter().map(|&q| if q > 0.0 { 1.0 } else { 0.0 }))
    }

    pub fn robust_accuracy(&self) -> f64 {
        mean(self.robust.iter().map(|&q| if q > 0.0 { 1.0 } else { 0.0 }))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn evaluate_margins(model: &TnnModel, data: &Dataset, cfg: &AttackConfig) -> Result<MarginEvaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    if let Some(s) = data.samples().first() {
        model.check_input(&s.x)?;
    }
    let prepared = model.prepare();
    let mut clean = Vec::with_capacity(data.len());
    let mut robust = Vec::with_capacity(data.len());
    for s in data.samples() {
        clean.push(s.y * prepared.forward(s.x.data()));
        robust.push(effective_perturbation(&prepared, s.x.data(), s.y, cfg).1);
    }
    Ok(MarginEvaluation { clean, robust })
}

/// `N^{-1} sum_i l(f(x_i + δ_i), y_i)`.
pub fn adversarial_risk(model: &TnnModel, data: &Dataset, loss: &LossSpec, cfg: &AttackConfig) -> Result<f64> {
    Ok(evaluate_margins(model, data, cfg)?.adversarial_risk(loss))
}

/// `N^{-1} sum_i l(f(x_i), y_i)`.
pub fn clean_risk(model: &TnnModel, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    Ok(evaluate_margins(model, data, &AttackConfig::none())?.clean_risk(loss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginMetrics {
    /// `q̃_i` per sample.
    pub margins: Vec<f64>,
    /// `q̃_m = min_i q̃_i`.
    pub q_min: f64,
    /// `q̂_m = q̃_m / ρ^{L+1}`.
    pub q_hat: f64,
    /// `log(1 / (N L̂_adv))`, computed by log-sum-exp.
    pub log_inv_n_risk: f64,
    /// `γ̃ = g(log(1/(N L̂_adv))) / ρ^{L+1}`.
    pub gamma_tilde: f64,
    /// `ρ = ||W||_F`.
    pub rho: f64,
}

/// `log(1/(N L̂_adv)) = -log sum_i e^{-f(q̃_i)}`.
pub fn log_inv_n_risk(margins: &[f64], loss: &LossSpec) -> f64 {
    -math::log_sum_exp(margins.iter().map(|&q| -loss.frak_f(q)))
}

/// Robust margins and the smoothed normalized robust margin from precomputed `q̃_i`.
pub fn margin_metrics_from(margins: Vec<f64>, model: &TnnModel, loss: &LossSpec) -> Result<MarginMetrics> {
    if margins.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rho = model.weight_norms().total;
    let scale = math::powf(rho, (model.depth() + 1) as f64);
    let q_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let log_inv = log_inv_n_risk(&margins, loss);
    // N L̂ < l(b_f)  <=>  log(1/(N L̂)) > f(b_f)
    if !(log_inv > loss.frak_f(loss.b_f())) {
        let risk = math::exp(-log_inv) / margins.len() as f64;
        return Err(Error::NotSeparated { risk, n: margins.len() });
    }
    let gamma_tilde = loss.frak_g(log_inv)? / scale;
    Ok(MarginMetrics { q_hat: q_min / scale, q_min, log_inv_n_risk: log_inv, gamma_tilde, rho, margins })
}

pub fn margin_metrics(model: &TnnModel, data: &Dataset, loss: &LossSpec, cfg: &AttackConfig) -> Result<MarginMetrics> {
    let eval = evaluate_margins(model, data, cfg)?;
    margin_metrics_from(eval.robust, model, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::transform::OrthogonalTransform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64) -> TnnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TnnModel::random(&[3, 4, 4], OrthogonalTransform::dct(2), &mut rng).unwrap()
    }

    #[test]
    fn zero_radius_gives_zero_perturbation() {
        let model = small_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor3::random_normal(3, 1, 2, &mut rng);
        for kind in [AttackKind::L2Fgm, AttackKind::Fgsm, AttackKind::L2Pgd, AttackKind::LinfPgd] {
            let d = attack(&model, &x, 1.0, &AttackConfig::new(kind, 0.0)).unwrap();
            assert!(d.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(AttackConfig::new(AttackKind::Fgsm, -0.1).validate().is_err());
        let mut cfg = AttackConfig::new(AttackKind::L2Pgd, 0.1);
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exponential_single_sample_risk() {
        let t = OrthogonalTransform::identity(1);
        let w = Tensor3::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let model = TnnModel::new(vec![w], vec![2.0], t).unwrap();
        let x = Tensor3::from_vec(1, 1, 1, vec![0.75]).unwrap();
        let data = Dataset::new(vec![Sample { x, y: 1.0 }], 1, 1).unwrap();
        let loss = LossSpec::exponential();
        let cfg = AttackConfig::new(AttackKind::L2Fgm, 0.25);
        // margin after the attack: 2 * (0.75 - 0.25) = 1
        let risk = adversarial_risk(&model, &data, &loss, &cfg).unwrap();
        assert!((risk - math::exp(-1.0)).abs() < 1e-15);
        let m = margin_metrics(&model, &data, &loss, &cfg).unwrap();
        assert!((m.q_min - 1.0).abs() < 1e-15);
        assert!((m.gamma_tilde - m.q_hat).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_and_not_separated() {
        let model = small_model(3);
        let empty = Dataset::new(vec![], 3, 2).unwrap();
        let loss = LossSpec::logistic();
        assert_eq!(adversarial_risk(&model, &empty, &loss, &AttackConfig::none()), Err(Error::EmptyDataset));
        let m = margin_metrics_from(vec![-1.0, 2.0], &model, &loss);
        assert!(matches!(m, Err(Error::NotSeparated { .. })));
    }
}
