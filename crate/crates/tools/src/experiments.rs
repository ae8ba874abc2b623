//! Experiment drivers behind the `tnn` subcommands. Each returns its results
//! as data; [`crate::output`] renders them to CSV.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnn_core::bounds::{self, BoundConstants, BoundInputs, CompressionReport, DecayBound};
use tnn_core::data::{synth_dataset, SynthConfig};
use tnn_core::stats::{linear_fit, mean, LinearFit};
use tnn_core::training::{log_record, train, Constraint, Optimizer, TrainConfig, TrainLogRecord};
use tnn_core::{Dataset, TnnModel};

use crate::config::{DataSource, RankSetting, RunConfig};
use crate::error::{Result, ToolError};
use crate::formats;
use crate::idx;

/// Separates the model-initialization stream from the data stream.
const MODEL_STREAM: u64 = 0x6d6f_6465_6c00_0000;

/// `n` samples from the configured source.
pub fn load_data(cfg: &RunConfig, n: usize) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic => {
            let synth = SynthConfig::new(cfg.seed, n, cfg.features, cfg.channels, cfg.teacher_rank);
            Ok(synth_dataset(&synth)?)
        }
        DataSource::Mnist { images, labels } => {
            let data = idx::load_mnist(images, labels, n)?;
            if data.len() < n {
                return Err(ToolError::Config(format!(
                    "MNIST files hold only {} samples of digits 3 and 7",
                    data.len()
                )));
            }
            Ok(data)
        }
    }
}

/// Training set of size `n_train` and the test set that follows it.
pub fn train_test(cfg: &RunConfig, n_train: usize) -> Result<(Dataset, Dataset)> {
    let all = load_data(cfg, n_train + cfg.n_test)?;
    Ok(all.split_at(n_train))
}

pub fn init_model(cfg: &RunConfig, repeat: u64) -> Result<TnnModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(repeat) ^ MODEL_STREAM);
    Ok(TnnModel::random_scaled(&cfg.widths(), cfg.build_transform()?, cfg.init_gain, &mut rng)?)
}

pub fn train_config(cfg: &RunConfig, constraint: Constraint) -> TrainConfig {
    let mut tc = TrainConfig::new(cfg.attack_config(), cfg.loss);
    tc.optimizer = if cfg.batch == 0 { Optimizer::FullBatch } else { Optimizer::Sgd { batch_size: cfg.batch } };
    tc.lr = cfg.lr;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.constraint = constraint;
    tc.log_every = cfg.log_every.max(1);
    tc
}

fn rank_constraint(cfg: &RunConfig, setting: RankSetting) -> Constraint {
    match setting {
        RankSetting::Full => Constraint::None,
        RankSetting::Rank(r) => {
            Constraint::RankProjection(cfg.widths().windows(2).map(|w| r.min(w[0]).min(w[1])).collect())
        }
    }
}

/// One training run of the sample-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRun {
    pub repeat: usize,
    pub n: usize,
    pub rank: RankSetting,
    pub adv_risk_train: f64,
    pub adv_risk_test: f64,
    pub clean_risk_train: f64,
    pub clean_risk_test: f64,
}

impl GapRun {
    pub fn adv_gap(&self) -> f64 {
        self.adv_risk_test - self.adv_risk_train
    }

    pub fn clean_gap(&self) -> f64 {
        self.clean_risk_test - self.clean_risk_train
    }
}

/// Seed-averaged gaps at one `(N, rank)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct GapPoint {
    pub n: usize,
    pub rank: RankSetting,
    pub adv_gap: f64,
    pub clean_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub runs: Vec<GapRun>,
    pub points: Vec<GapPoint>,
    /// Fit of the mean adversarial gap on `1/sqrt(N)`, per rank setting.
    pub fits: Vec<(RankSetting, LinearFit)>,
}

/// Trains `init` and returns the log. Zero epochs is allowed here and gives
/// just the record of the initial model.
fn training_log(init: &TnnModel, train_set: &Dataset, test: &Dataset, tc: &TrainConfig) -> Result<Vec<TrainLogRecord>> {
    if tc.epochs == 0 {
        return Ok(vec![log_record(init, 0, train_set, test, tc)?]);
    }
    Ok(train(init, train_set, test, tc)?.1)
}

pub fn gap_vs_n(cfg: &RunConfig) -> Result<GapReport> {
    if cfg.n_values.is_empty() || cfg.ranks.is_empty() {
        return Err(ToolError::Config("gap-vs-n needs at least one N and one rank setting".into()));
    }
    let n_max = *cfg.n_values.iter().max().expect("nonempty");
    let (pool, test) = train_test(cfg, n_max)?;
    let mut runs = Vec::new();
    for repeat in 0..cfg.repeats.max(1) {
        let init = init_model(cfg, repeat as u64)?;
        for &n in &cfg.n_values {
            let train_set = pool.take(n);
            for &rank in &cfg.ranks {
                let mut tc = train_config(cfg, rank_constraint(cfg, rank));
                // only the final record is used
                tc.log_every = tc.epochs.max(1);
                let log = training_log(&init, &train_set, &test, &tc)?;
                let last = log.last().expect("log has the initial record");
                runs.push(GapRun {
                    repeat,
                    n,
                    rank,
                    adv_risk_train: last.adv_risk_train,
                    adv_risk_test: last.adv_risk_test,
                    clean_risk_train: last.clean_risk_train,
                    clean_risk_test: last.clean_risk_test,
                });
            }
        }
    }
    let mut points = Vec::new();
    let mut fits = Vec::new();
    for &rank in &cfg.ranks {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &n in &cfg.n_values {
            let here: Vec<&GapRun> = runs.iter().filter(|r| r.n == n && r.rank == rank).collect();
            let adv: Vec<f64> = here.iter().map(|r| r.adv_gap()).collect();
            let clean: Vec<f64> = here.iter().map(|r| r.clean_gap()).collect();
            let point = GapPoint { n, rank, adv_gap: mean(&adv), clean_gap: mean(&clean) };
            xs.push(1.0 / (n as f64).sqrt());
            ys.push(point.adv_gap);
            points.push(point);
        }
        if xs.len() >= 2 {
            fits.push((rank, linear_fit(&xs, &ys)?));
        }
    }
    Ok(GapReport { runs, points, fits })
}

/// Training log of one over-parameterized adversarial training run.
pub fn implicit_bias(cfg: &RunConfig) -> Result<Vec<TrainLogRecord>> {
    let (train_set, test_set) = train_test(cfg, cfg.n_train)?;
    let init = init_model(cfg, 0)?;
    let constraint = match cfg.ranks.as_slice() {
        [] => Constraint::None,
        _ => Constraint::RankProjection(cfg.layer_ranks()?),
    };
    let log = training_log(&init, &train_set, &test_set, &train_config(cfg, constraint))?;
    Ok(log)
}

/// One training log per `λ`, all from the same initialization and data.
pub fn nuclear_reg(cfg: &RunConfig) -> Result<Vec<(f64, Vec<TrainLogRecord>)>> {
    if cfg.lambda.is_empty() {
        return Err(ToolError::Config("nuclear-reg needs at least one lambda".into()));
    }
    let (train_set, test_set) = train_test(cfg, cfg.n_train)?;
    let init = init_model(cfg, 0)?;
    let mut out = Vec::new();
    for &lambda in &cfg.lambda {
        let constraint = if lambda == 0.0 { Constraint::None } else { Constraint::NuclearProx(lambda) };
        let log = training_log(&init, &train_set, &test_set, &train_config(cfg, constraint))?;
        if let Some(rec) = log.iter().find(|r| r.layer_fro.iter().all(|&v| v == 0.0)) {
            return Err(ToolError::DegenerateRun { lambda, epoch: rec.epoch });
        }
        out.push((lambda, log));
    }
    Ok(out)
}

/// Every evaluated bound for the configured inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    pub b_w: f64,
    pub b_f_tilde: f64,
    pub standard: f64,
    pub full: f64,
    pub full_complexity: f64,
    pub lowrank: f64,
    pub lowrank_complexity: f64,
    pub decay: DecayBound,
}

pub fn bound_inputs(cfg: &RunConfig) -> Result<BoundInputs> {
    let (_, c) = cfg.input_shape();
    let dims = cfg.widths();
    let mut inp = BoundInputs::new(cfg.n_train, c, dims);
    inp.layer_caps = match cfg.caps.len() {
        1 => vec![cfg.caps[0]; cfg.layers],
        n if n == cfg.layers => cfg.caps.clone(),
        n => return Err(ToolError::Config(format!("{n} caps for {} layers", cfg.layers))),
    };
    inp.head_cap = cfg.head_cap;
    inp.b_x = cfg.b_x;
    inp.xi = cfg.xi();
    inp.c_r = cfg.c_r;
    inp.t = cfg.confidence_t;
    inp.ranks = Some(cfg.layer_ranks()?);
    inp.decay = Some((cfg.decay_v0, cfg.decay_alpha));
    inp.constants =
        BoundConstants { full: cfg.constant_full, lowrank: cfg.constant_lowrank, decay: cfg.constant_decay };
    Ok(inp.with_loss(&cfg.loss))
}

pub fn bounds(cfg: &RunConfig) -> Result<BoundsReport> {
    let inputs = bound_inputs(cfg)?;
    Ok(BoundsReport {
        b_w: inputs.b_w(),
        b_f_tilde: inputs.b_f_tilde(),
        standard: bounds::standard_gap_bound(&inputs)?,
        full: bounds::adv_gap_bound_full(&inputs)?,
        full_complexity: bounds::adv_complexity_full(&inputs)?,
        lowrank: bounds::adv_gap_bound_lowrank(&inputs)?,
        lowrank_complexity: bounds::adv_complexity_lowrank(&inputs)?,
        decay: bounds::adv_gap_bound_decay(&inputs)?,
        inputs,
    })
}

/// Compresses the configured checkpoint (or a random model) and certifies it
/// on `n_test` samples.
pub fn compress(cfg: &RunConfig) -> Result<CompressionReport> {
    let model = match &cfg.model {
        Some(path) => formats::load_model(path, cfg.build_transform()?)?,
        None => init_model(cfg, 0)?,
    };
    let data = load_data(cfg, cfg.n_test)?;
    let ranks = if cfg.model.is_some() {
        let w = model.widths();
        let caps: Vec<usize> = w.windows(2).map(|p| p[0].min(p[1])).collect();
        match cfg.ranks.as_slice() {
            [one] => caps.iter().map(|&c| if let RankSetting::Rank(r) = one { *r } else { c }).collect(),
            _ => cfg.layer_ranks()?,
        }
    } else {
        cfg.layer_ranks()?
    };
    Ok(bounds::compress_and_certify(&model, &ranks, &data, &cfg.attack_config())?)
}
