//! Mini-batch training of the KAN under the regularized objective.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HorizonPair, NormalizationParams};
use crate::error::{Error, Result};
use crate::kan::{loss_and_gradient, KanModel, LossTerms, LossWeights};

/// Losses above this (or non-finite) abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub horizon_n: usize,
    pub grid_intervals: usize,
    pub spline_order: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            nu1: 0.12,
            nu2: 0.15,
            steps: 400,
            batch_size: 128,
            learning_rate: 0.05,
            seed: 0,
            horizon_n: 100,
            grid_intervals: 4,
            spline_order: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("nu1", self.nu1), ("nu2", self.nu2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.horizon_n == 0 || self.grid_intervals == 0 {
            return Err(Error::InvalidConfig(
                "horizon_n and grid_intervals must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            nu1: self.nu1,
            nu2: self.nu2,
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{value}`")))
        }
        match key {
            "lambda" => self.lambda = num(key, value)?,
            "nu1" => self.nu1 = num(key, value)?,
            "nu2" => self.nu2 = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "horizon_n" => self.horizon_n = num(key, value)?,
            "grid_intervals" => self.grid_intervals = num(key, value)?,
            "spline_order" => self.spline_order = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", n + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "nu1={}", self.nu1);
        let _ = writeln!(s, "nu2={}", self.nu2);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "horizon_n={}", self.horizon_n);
        let _ = writeln!(s, "grid_intervals={}", self.grid_intervals);
        let _ = writeln!(s, "spline_order={}", self.spline_order);
        s
    }
}

/// One optimizer step: the batch objective before the update and the
/// validation MSE of the same parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub train: LossTerms,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    /// Validation MSE after the last update.
    pub final_val_loss: f64,
    /// Test RMSE in °C, filled in by the caller once a test split is scored.
    pub test_rmse_c: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    /// `step,train_loss,val_loss`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "train_loss", "val_loss"])?;
        for r in &self.steps {
            w.serialize((r.step, r.train.total, r.val_loss))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Regularized loss on one batch.
pub fn total_loss(model: &KanModel, batch: &[HorizonPair], weights: &LossWeights) -> Result<LossTerms> {
    loss_and_gradient(model, batch, weights).map(|(l, _)| l)
}

pub fn mse(model: &KanModel, pairs: &[HorizonPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let s: f64 = pairs
        .iter()
        .map(|p| {
            let r = model.forward(p.t_bar, p.k_bar) - p.target;
            r * r
        })
        .sum();
    Ok(s / pairs.len() as f64)
}

/// RMSE in °C: normalized residuals scaled by Δ_T.
pub fn evaluate_rmse(model: &KanModel, pairs: &[HorizonPair], norm: &NormalizationParams) -> Result<f64> {
    Ok(norm.delta() * mse(model, pairs)?.sqrt())
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn update(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Seeded epoch shuffler; an epoch's tail shorter than a batch is dropped.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            pos: 0,
            size: size.min(n),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c),
        };
        b.order.shuffle(&mut b.rng);
        b
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + self.size];
        self.pos += self.size;
        out
    }
}

/// Runs `config.steps` Adam updates and returns the final-step model.
pub fn train(
    model: &KanModel,
    train_pairs: &[HorizonPair],
    val_pairs: &[HorizonPair],
    config: &TrainConfig,
) -> Result<(KanModel, TrainReport)> {
    config.validate()?;
    model.validate()?;
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let started = Instant::now();
    let weights = config.weights();
    let mut model = model.clone();
    let mut theta = model.params();
    let mut opt = Adam::new(theta.len(), config.learning_rate);
    let mut batcher = Batcher::new(train_pairs.len(), config.batch_size, config.seed);
    let mut batch = Vec::with_capacity(batcher.size);
    let mut steps = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        batch.clear();
        batch.extend(batcher.next().iter().map(|&i| train_pairs[i]));
        let (terms, grad) = loss_and_gradient(&model, &batch, &weights)?;
        let val_loss = mse(&model, val_pairs)?;
        for loss in [terms.total, val_loss] {
            if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Diverged { step, loss });
            }
        }
        steps.push(StepRecord {
            step,
            train: terms,
            val_loss,
        });
        opt.update(&mut theta, &grad);
        model.set_params(&theta);
    }

    let final_val_loss = mse(&model, val_pairs)?;
    if !final_val_loss.is_finite() || final_val_loss > DIVERGENCE_LIMIT {
        return Err(Error::Diverged {
            step: config.steps,
            loss: final_val_loss,
        });
    }
    Ok((
        model,
        TrainReport {
            steps,
            final_val_loss,
            test_rmse_c: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    ))
}
