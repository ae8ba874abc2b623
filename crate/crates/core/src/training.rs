//! Adversarial training by explicit-Euler steps on the adversarial risk.
//!
//! Every step attacks the current batch at the current weights, freezes the
//! perturbations, and takes a gradient step on
//! `N^{-1} sum_i l(y_i f(x_i + δ_i))` with respect to all weights (layers and
//! head). An optional constraint step follows: a tubal-nuclear proximal map
//! after every step, or a tubal-rank projection after every epoch.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversarial::{self, AttackConfig, MarginEvaluation};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::tensor::Tensor3;
use crate::tnn::{GradientAccumulator, TnnModel};
use crate::tsvd;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// One step per epoch on the whole training set.
    FullBatch,
    /// Reshuffled minibatches every epoch; the last batch may be smaller.
    Sgd { batch_size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    None,
    /// Per-layer tubal-rank caps, enforced at the end of every epoch.
    RankProjection(Vec<usize>),
    /// Tubal-nuclear-norm penalty weight `λ`; prox threshold `lr * λ` every step.
    NuclearProx(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub attack: AttackConfig,
    pub loss: LossSpec,
    pub constraint: Constraint,
    pub log_every: usize,
}

impl TrainConfig {
    pub const DEFAULT_LR: f64 = 0.01;
    pub const DEFAULT_EPOCHS: usize = 200;

    pub fn new(attack: AttackConfig, loss: LossSpec) -> Self {
        Self {
            optimizer: Optimizer::FullBatch,
            lr: Self::DEFAULT_LR,
            epochs: Self::DEFAULT_EPOCHS,
            seed: 0,
            attack,
            loss,
            constraint: Constraint::None,
            log_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidInputs(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInputs("epochs must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidInputs("log_every must be >= 1".into()));
        }
        if let Optimizer::Sgd { batch_size: 0 } = self.optimizer {
            return Err(Error::InvalidInputs("batch size must be >= 1".into()));
        }
        if let Constraint::NuclearProx(lambda) = self.constraint {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidInputs(format!("lambda must be >= 0, got {lambda}")));
            }
        }
        self.attack.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub adv_risk_train: f64,
    pub clean_risk_train: f64,
    /// Zero when the test set is empty.
    pub adv_risk_test: f64,
    pub clean_risk_test: f64,
    /// Robust accuracy on the test set (train set when the test set is empty).
    pub robust_accuracy: f64,
    pub clean_accuracy: f64,
    /// `||W^(l)||_F` per layer.
    pub layer_fro: Vec<f64>,
    /// `ρ = ||W||_F` over all weights.
    pub rho: f64,
    /// Stable rank of each layer's transformed block-diagonal matrix (0 for a zero layer).
    pub stable_ranks: Vec<f64>,
    /// `q̂_m` on the training set.
    pub q_hat: f64,
    /// `γ̃` on the training set, when the set is separated.
    pub gamma_tilde: Option<f64>,
}

/// Metric snapshot of `model` at `epoch`.
pub fn log_record(
    model: &TnnModel,
    epoch: usize,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLogRecord> {
    let loss = &cfg.loss;
    let tr = adversarial::evaluate_margins(model, train, &cfg.attack)?;
    let te: Option<MarginEvaluation> =
        if test.is_empty() { None } else { Some(adversarial::evaluate_margins(model, test, &cfg.attack)?) };
    let acc_src = te.as_ref().unwrap_or(&tr);
    let norms = model.weight_norms();
    let stable_ranks = model
        .layers()
        .iter()
        .map(|w| match tsvd::stable_rank(w, model.transform()) {
            Ok(v) => Ok(v),
            Err(Error::ZeroTensor) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let (q_hat, gamma_tilde) = match adversarial::margin_metrics_from(tr.robust.clone(), model, loss) {
        Ok(m) => (m.q_hat, Some(m.gamma_tilde)),
        Err(Error::NotSeparated { .. }) => {
            let q_min = tr.robust.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = crate::math::powf(norms.total, (model.depth() + 1) as f64);
            (q_min / scale, None)
        }
        Err(e) => return Err(e),
    };
    let rec = TrainLogRecord {
        epoch,
        adv_risk_train: tr.adversarial_risk(loss),
        clean_risk_train: tr.clean_risk(loss),
        adv_risk_test: te.as_ref().map_or(0.0, |e| e.adversarial_risk(loss)),
        clean_risk_test: te.as_ref().map_or(0.0, |e| e.clean_risk(loss)),
        robust_accuracy: acc_src.robust_accuracy(),
        clean_accuracy: acc_src.clean_accuracy(),
        layer_fro: norms.layers,
        rho: norms.total,
        stable_ranks,
        q_hat,
        gamma_tilde,
    };
    let finite = rec.adv_risk_train.is_finite()
        && rec.clean_risk_train.is_finite()
        && rec.adv_risk_test.is_finite()
        && rec.clean_risk_test.is_finite()
        && rec.rho.is_finite()
        && rec.q_hat.is_finite();
    if !finite {
        return Err(Error::DivergenceDetected { epoch });
    }
    Ok(rec)
}

/// Gradient of `N_b^{-1} sum_{i in batch} l(y_i f(x_i + δ_i))` with the
/// perturbations frozen at the current weights. Returns `(risk, layers, head)`.
pub fn batch_gradient(
    model: &TnnModel,
    data: &Dataset,
    batch: &[usize],
    attack: &AttackConfig,
    loss: &LossSpec,
) -> (f64, Vec<Tensor3>, Vec<f64>) {
    let prepared = model.prepare();
    let mut acc = GradientAccumulator::new(model);
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut risk = 0.0;
    let mut point = Vec::new();
    for &i in batch {
        let s = &data.samples()[i];
        let (delta, _) = adversarial::effective_perturbation(&prepared, s.x.data(), s.y, attack);
        point.clear();
        point.extend(s.x.data().iter().zip(&delta).map(|(a, b)| a + b));
        let cache = prepared.forward_cache(&point);
        let q = s.y * cache.output;
        risk += scale * loss.value(q);
        let upstream = scale * loss.derivative(q) * s.y;
        if upstream != 0.0 {
            prepared.backward_cached(&cache, upstream, Some(&mut acc));
        }
    }
    let (layers, head) = acc.finish(model);
    (risk, layers, head)
}

/// Replaces every layer by its best tubal-rank-`r_l` approximation.
pub fn project_ranks(model: &TnnModel, ranks: &[usize]) -> Result<TnnModel> {
    if ranks.len() != model.depth() {
        return Err(Error::DimensionMismatch(format!("{} ranks for a depth-{} model", ranks.len(), model.depth())));
    }
    let layers = model
        .layers()
        .iter()
        .zip(ranks)
        .map(|(w, &r)| tsvd::truncate(w, model.transform(), r))
        .collect::<Result<Vec<_>>>()?;
    model.with_layers(layers)
}

/// Proximal map of `τ sum_l ||W^(l)||_*` applied to every layer.
pub fn prox_nuclear(model: &TnnModel, tau: f64) -> Result<TnnModel> {
    let layers =
        model.layers().iter().map(|w| tsvd::soft_threshold(w, model.transform(), tau)).collect::<Result<Vec<_>>>()?;
    model.with_layers(layers)
}

fn apply_step(model: &TnnModel, lr: f64, layers: &[Tensor3], head: &[f64], epoch: usize) -> Result<TnnModel> {
    let new_layers: Vec<Tensor3> = model
        .layers()
        .iter()
        .zip(layers)
        .map(|(w, g)| {
            let mut w = w.clone();
            w.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a -= lr * b);
            w
        })
        .collect();
    let new_head: Vec<f64> = model.head().iter().zip(head).map(|(a, b)| a - lr * b).collect();
    if !new_layers.iter().all(Tensor3::is_finite) || !new_head.iter().all(|v| v.is_finite()) {
        return Err(Error::DivergenceDetected { epoch });
    }
    model.with_weights(new_layers, new_head)
}

/// Runs adversarial training. The log holds a record for epoch 0 (the
/// initial model), every `log_every`-th epoch, and the final epoch.
pub fn train(
    model: &TnnModel,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TnnModel, Vec<TrainLogRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in train_set.samples().iter().chain(test_set.samples().first()) {
        model.check_input(&s.x)?;
    }
    if let Constraint::RankProjection(ranks) = &cfg.constraint {
        // validate eagerly so bad ranks fail before any work
        project_ranks(model, ranks)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut model = model.clone();
    let mut log = Vec::new();
    log.push(log_record(&model, 0, train_set, test_set, cfg)?);
    for epoch in 1..=cfg.epochs {
        let batch_size = match cfg.optimizer {
            Optimizer::FullBatch => order.len(),
            Optimizer::Sgd { batch_size } => {
                order.shuffle(&mut rng);
                batch_size
            }
        };
        for batch in order.chunks(batch_size) {
            let (risk, g_layers, g_head) = batch_gradient(&model, train_set, batch, &cfg.attack, &cfg.loss);
            if !risk.is_finite() {
                return Err(Error::DivergenceDetected { epoch });
            }
            if cfg.lr == 0.0 {
                continue;
            }
            model = apply_step(&model, cfg.lr, &g_layers, &g_head, epoch)?;
            if let Constraint::NuclearProx(lambda) = cfg.constraint {
                if lambda > 0.0 {
                    model = prox_nuclear(&model, cfg.lr * lambda)?;
                }
            }
        }
        if let Constraint::RankProjection(ranks) = &cfg.constraint {
            model = project_ranks(&model, ranks)?;
        }
        if epoch % cfg.log_every == 0 || epoch == cfg.epochs {
            log.push(log_record(&model, epoch, train_set, test_set, cfg)?);
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::AttackKind;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::transform::OrthogonalTransform;

    fn setup() -> (TnnModel, Dataset) {
        let data = synth_dataset(&SynthConfig::new(4, 24, 4, 3, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TnnModel::random(&[4, 6, 6], OrthogonalTransform::dct(3), &mut rng).unwrap();
        (model, data)
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let (model, data) = setup();
        let mut cfg = TrainConfig::new(AttackConfig::new(AttackKind::L2Fgm, 0.05), LossSpec::logistic());
        cfg.lr = 0.0;
        cfg.epochs = 3;
        let (out, log) = train(&model, &data, &data, &cfg).unwrap();
        assert_eq!(out, model);
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|r| r.adv_risk_train == log[0].adv_risk_train));
    }

    #[test]
    fn config_validation() {
        let base = TrainConfig::new(AttackConfig::none(), LossSpec::logistic());
        let mut c = base.clone();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.optimizer = Optimizer::Sgd { batch_size: 0 };
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.constraint = Constraint::NuclearProx(-1.0);
        assert!(c.validate().is_err());
        let mut c = base;
        c.lr = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rank_projection_caps_stable_rank() {
        let (model, data) = setup();
        let mut cfg = TrainConfig::new(AttackConfig::new(AttackKind::Fgsm, 0.02), LossSpec::logistic());
        cfg.epochs = 4;
        cfg.optimizer = Optimizer::Sgd { batch_size: 5 };
        cfg.constraint = Constraint::RankProjection(alloc::vec![1, 2]);
        let (out, log) = train(&model, &data, &data, &cfg).unwrap();
        assert!(tsvd::tubal_rank(&out.layers()[0], out.transform(), tsvd::RANK_TOL).unwrap() <= 1);
        for r in &log[1..] {
            assert!(r.stable_ranks[0] <= 3.0 + 1e-9);
            assert!(r.stable_ranks[1] <= 6.0 + 1e-9);
        }
        assert!(project_ranks(&model, &[1]).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let (model, data) = setup();
        let mut cfg = TrainConfig::new(AttackConfig::new(AttackKind::L2Pgd, 0.05), LossSpec::exponential());
        cfg.epochs = 3;
        cfg.optimizer = Optimizer::Sgd { batch_size: 7 };
        cfg.seed = 11;
        let a = train(&model, &data, &data, &cfg).unwrap();
        let b = train(&model, &data, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
