//! Adam, the one-cycle schedule and the per-field training loop.

use std::fmt;
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::{BasisSettings, ColumnStats, FeatureVariant, FieldNormalizer, InputScaler};
use crate::net::checkpoint::Checkpoint;
use crate::net::{GeoModel, Matrix, ModelConfig, ParamStore, Tape};
use crate::pipeline::{prepare_all, PreparedCase};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{Error, FieldId, MeshCase, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Matrix::zeros(t.rows(), t.cols()))
                .collect()
        };
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts before
    /// anything is modified.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameter blocks",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params.tensors()[i].shape() {
                return Err(Error::Shape(format!(
                    "gradient shape for '{}'",
                    params.names()[i]
                )));
            }
            if !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in parameter block '{}'",
                    params.names()[i]
                )));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, w) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in w.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anneal {
    Linear,
    Cosine,
}

/// Shape of the one-cycle schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    pub max_lr: f64,
    pub warmup_frac: f64,
    pub div: f64,
    pub final_div: f64,
    pub anneal: Anneal,
}

impl Default for OneCycle {
    fn default() -> Self {
        OneCycle {
            max_lr: 1e-3,
            warmup_frac: 0.3,
            div: 25.0,
            final_div: 1e4,
            anneal: Anneal::Cosine,
        }
    }
}

impl OneCycle {
    /// Step at which the rate peaks.
    pub fn peak_step(&self, total_steps: usize) -> usize {
        (self.warmup_frac * total_steps.saturating_sub(1) as f64).round() as usize
    }

    /// Learning rate for `step` in `0..total_steps`. The first step is
    /// `max_lr / div`, the peak step exactly `max_lr`, the last step
    /// `max_lr / final_div`. A single-step run uses `max_lr`.
    pub fn lr(&self, step: usize, total_steps: usize) -> f64 {
        let start = self.max_lr / self.div;
        let end = self.max_lr / self.final_div;
        let peak = self.peak_step(total_steps);
        if total_steps <= 1 || step == peak {
            return self.max_lr;
        }
        let last = total_steps - 1;
        if step >= last {
            return end;
        }
        if step == 0 {
            return start;
        }
        let interp = |from: f64, to: f64, t: f64| match self.anneal {
            Anneal::Linear => from + (to - from) * t,
            Anneal::Cosine => to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()),
        };
        if step < peak {
            interp(start, self.max_lr, step as f64 / peak as f64)
        } else {
            interp(
                self.max_lr,
                end,
                (step - peak) as f64 / (last - peak) as f64,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub field: FieldId,
    pub variant: FeatureVariant,
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub subsample_n: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub schedule: OneCycle,
    /// Log-transform pressure targets before normalizing.
    pub log_pressure: bool,
    pub factorial_norm: bool,
    /// Standardize node and edge features with statistics of the training
    /// cases. Off by default: inputs are used raw.
    #[serde(default)]
    pub standardize_inputs: bool,
}

impl TrainConfig {
    pub fn new(field: FieldId) -> Self {
        TrainConfig {
            field,
            variant: FeatureVariant::default_for(field),
            model: ModelConfig::default(),
            epochs: 600,
            batch_size: 1,
            subsample_n: 32_000,
            seed: 0,
            adam: AdamConfig::default(),
            schedule: OneCycle::default(),
            log_pressure: false,
            factorial_norm: false,
            standardize_inputs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.subsample_n == 0 {
            return Err(Error::Config("subsample size must be at least 1".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config("only batch size 1 is supported".into()));
        }
        if !(self.schedule.max_lr > 0.0) {
            return Err(Error::Config("max_lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.schedule.warmup_frac)
            || !(self.schedule.div > 0.0)
            || !(self.schedule.final_div > 0.0)
        {
            return Err(Error::Config("bad one-cycle parameters".into()));
        }
        if self.model.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over cases of the per-case training MSE.
    pub mse: f64,
    /// Rate used for the last step of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// A run that stopped early, with the history recorded so far.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub history: Vec<EpochRecord>,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} epochs)", self.error, self.history.len())
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        TrainFailure {
            error,
            history: Vec::new(),
        }
    }
}

/// Indices drawn for one case in one epoch: `(batch, supervised)` where
/// `supervised` lists positions in `batch`.
pub fn epoch_sample(
    case: &MeshCase,
    n: usize,
    seed: u64,
    epoch: u64,
    case_index: u64,
) -> (Vec<usize>, Vec<usize>) {
    let s = case.subsample(n, derive_seed(seed, Stream::Sampling, epoch, case_index));
    (s.index_map, s.drawn)
}

/// Mean squared error of one batch, supervised only at `supervised`.
pub fn batch_loss(
    model: &GeoModel,
    prepared: &PreparedCase,
    targets: &[f64],
    batch: &[usize],
    supervised: &[usize],
    seed: u64,
    epoch: u64,
) -> Result<(f64, Vec<Matrix>)> {
    let input = prepared.build_input(&model.config, batch, seed, epoch)?;
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, &input)?;
    let pred = tape.gather(pred, supervised.into());
    let y: Rc<[f64]> = supervised.iter().map(|&j| targets[batch[j]]).collect();
    let loss = tape.mse(pred, y);
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss);
    let grads = bound
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols()))
        })
        .collect();
    Ok((value, grads))
}

/// Trains one per-field model on `cases`.
pub fn train_field(
    cases: &[MeshCase],
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    train_field_with(cases, cfg, |_| {})
}

/// [`train_field`] with a callback after every epoch.
pub fn train_field_with(
    cases: &[MeshCase],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Config("no training cases".into()).into());
    }
    let recentred: Vec<MeshCase> = cases.iter().map(MeshCase::recentre).collect();
    let mut basis = BasisSettings::fit(&recentred)?;
    basis.factorial_norm = cfg.factorial_norm;

    let mut raw = Vec::new();
    for c in &recentred {
        raw.extend(c.field_values(cfg.field).ok_or_else(|| {
            Error::Invariant(format!("training case '{}' has no targets", c.case_id))
        })?);
    }
    let normalizer = FieldNormalizer::fit(&raw, cfg.field, cfg.log_pressure)?;
    drop(raw);

    let n_basis = basis.n_basis;
    let unscaled = prepare_all(&recentred, cfg.variant, &basis, &cfg.model, None)?;
    let (prepared, scaler) = if cfg.standardize_inputs {
        let mut node_stats = ColumnStats::new(cfg.variant.node_width(n_basis));
        let mut edge_stats = ColumnStats::new(cfg.variant.edge_width(n_basis));
        for p in &unscaled {
            p.accumulate_stats(&cfg.model, cfg.seed, &mut node_stats, &mut edge_stats)?;
        }
        let scaler = InputScaler {
            node: node_stats.finish(),
            edge: edge_stats.finish(),
        };
        let prepared = unscaled
            .into_iter()
            .map(|p| p.with_scaler(&scaler))
            .collect::<Result<Vec<_>>>()?;
        (prepared, scaler)
    } else {
        let identity = InputScaler::identity(
            cfg.variant.node_width(n_basis),
            cfg.variant.edge_width(n_basis),
        );
        (unscaled, identity)
    };
    let targets: Vec<Vec<f64>> = prepared
        .iter()
        .map(|p| {
            p.field_values(cfg.field)
                .map(|v| v.into_iter().map(|x| normalizer.normalize(x)).collect())
        })
        .collect::<Result<_>>()?;

    let mut model = GeoModel::new(
        cfg.model.clone(),
        cfg.variant.node_width(n_basis),
        cfg.variant.edge_width(n_basis),
        cfg.seed,
    );
    let mut adam = AdamState::new(cfg.adam, &model.params);
    let total_steps = cfg.epochs * prepared.len();
    let mut step = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64, 0));
        let mut sum = 0.0;
        let mut lr = 0.0;
        for &ci in &order {
            let p = &prepared[ci];
            let (batch, supervised) =
                epoch_sample(&p.case, cfg.subsample_n, cfg.seed, epoch as u64, ci as u64);
            let result = batch_loss(
                &model,
                p,
                &targets[ci],
                &batch,
                &supervised,
                cfg.seed,
                epoch as u64,
            )
            .and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "loss diverged at epoch {} on case '{}'",
                        epoch + 1,
                        p.case.case_id
                    )));
                }
                lr = cfg.schedule.lr(step, total_steps);
                adam.step(&mut model.params, &grads, lr)?;
                Ok(loss)
            });
            match result {
                Ok(loss) => sum += loss,
                Err(error) => return Err(TrainFailure { error, history }),
            }
            step += 1;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            mse: sum / prepared.len() as f64,
            lr,
        };
        on_epoch(&record);
        history.push(record);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            field: cfg.field,
            variant: cfg.variant,
            basis,
            normalizer,
            scaler,
            model,
        },
        history,
    })
}

/// `epoch mse lr` per line, floats in shortest round-trip form.
pub fn format_history(history: &[EpochRecord]) -> String {
    let mut out = String::from("# epoch mse lr\n");
    for r in history {
        out.push_str(&format!("{} {} {}\n", r.epoch, r.mse, r.lr));
    }
    out
}

pub fn parse_history(text: &str, origin: &Path) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(err("expected 'epoch mse lr'"));
        }
        out.push(EpochRecord {
            epoch: cols[0].parse().map_err(|_| err("bad epoch"))?,
            mse: cols[1].parse().map_err(|_| err("bad mse"))?,
            lr: cols[2].parse().map_err(|_| err("bad lr"))?,
        });
    }
    Ok(out)
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, format_history(history)).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_history(&text, path)
}
