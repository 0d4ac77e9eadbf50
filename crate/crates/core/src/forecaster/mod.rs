//! Forecasting models, their losses and the plain training loop.

pub mod linear;
pub mod mlp;
pub mod params;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use linear::{decompose, LinearForecaster};
pub use mlp::MlpForecaster;
pub use params::{ParamVector, Segment};

use crate::data::{Window, WindowSpec};
use crate::error::{Error, Result};

pub const DEFAULT_KERNEL: usize = 25;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Linear,
    Mlp,
}

impl ArchKind {
    pub fn tag(self) -> u8 {
        match self {
            ArchKind::Linear => 0,
            ArchKind::Mlp => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ArchKind::Linear),
            1 => Some(ArchKind::Mlp),
            _ => None,
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "dlinear" => Ok(ArchKind::Linear),
            "mlp" => Ok(ArchKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArchKind::Linear => "linear",
            ArchKind::Mlp => "mlp",
        })
    }
}

/// Architecture together with its one structural hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear { kernel: usize },
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn linear() -> Self {
        Architecture::Linear { kernel: DEFAULT_KERNEL }
    }

    pub fn mlp() -> Self {
        Architecture::Mlp { hidden: DEFAULT_HIDDEN }
    }

    pub fn of_kind(kind: ArchKind) -> Self {
        match kind {
            ArchKind::Linear => Self::linear(),
            ArchKind::Mlp => Self::mlp(),
        }
    }

    pub fn kind(&self) -> ArchKind {
        match self {
            Architecture::Linear { .. } => ArchKind::Linear,
            Architecture::Mlp { .. } => ArchKind::Mlp,
        }
    }

    /// Kernel width for linear, hidden width for MLP.
    pub fn size_param(&self) -> usize {
        match *self {
            Architecture::Linear { kernel } => kernel,
            Architecture::Mlp { hidden } => hidden,
        }
    }

    pub fn from_parts(kind: ArchKind, size: usize) -> Self {
        match kind {
            ArchKind::Linear => Architecture::Linear { kernel: size },
            ArchKind::Mlp => Architecture::Mlp { hidden: size },
        }
    }

    pub fn layout(&self, spec: WindowSpec) -> Vec<Segment> {
        match *self {
            Architecture::Linear { .. } => LinearForecaster::layout(spec.lookback, spec.horizon),
            Architecture::Mlp { hidden } => MlpForecaster::layout(spec.lookback, spec.horizon, hidden),
        }
    }

    pub fn param_count(&self, spec: WindowSpec) -> usize {
        self.layout(spec).iter().map(Segment::size).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Forecaster {
    Linear(LinearForecaster),
    Mlp(MlpForecaster),
}

impl Forecaster {
    pub fn architecture(&self) -> Architecture {
        match self {
            Forecaster::Linear(l) => Architecture::Linear { kernel: l.kernel },
            Forecaster::Mlp(m) => Architecture::Mlp { hidden: m.hidden() },
        }
    }

    pub fn lookback(&self) -> usize {
        match self {
            Forecaster::Linear(l) => l.lookback(),
            Forecaster::Mlp(m) => m.lookback(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Forecaster::Linear(l) => l.horizon(),
            Forecaster::Mlp(m) => m.horizon(),
        }
    }

    pub fn flatten(&self) -> ParamVector {
        match self {
            Forecaster::Linear(l) => l.flatten(),
            Forecaster::Mlp(m) => m.flatten(),
        }
    }

    pub fn unflatten(pv: &ParamVector, arch: Architecture, spec: WindowSpec) -> Result<Self> {
        match arch {
            Architecture::Linear { kernel } => {
                LinearForecaster::unflatten(pv, spec.lookback, spec.horizon, kernel).map(Forecaster::Linear)
            }
            Architecture::Mlp { hidden } => {
                MlpForecaster::unflatten(pv, spec.lookback, spec.horizon, hidden).map(Forecaster::Mlp)
            }
        }
    }

    /// Predictions for a column block (`m x cols` in, `n x cols` out).
    pub fn predict_columns(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Forecaster::Linear(l) => l.predict_columns(x),
            Forecaster::Mlp(m) => m.predict_columns(x),
        }
    }

    /// Forecast for one `m x C` window; channels share weights.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.lookback() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input rows", self.lookback()),
                got: format!("{}", x.nrows()),
            });
        }
        Ok(self.predict_columns(x))
    }

    /// Batch MSE and its gradient as a flat vector in layout order.
    pub fn loss_grad(&self, batch: &PairBatch) -> (f64, Vec<f64>) {
        match self {
            Forecaster::Linear(l) => {
                let (loss, g) = l.loss_grad_columns(batch.inputs.view(), batch.targets.view());
                (loss, g.flatten().values)
            }
            Forecaster::Mlp(m) => {
                let (loss, g) = m.loss_grad_columns(batch.inputs.view(), batch.targets.view());
                (loss, g.flatten().values)
            }
        }
    }

    pub fn loss(&self, batch: &PairBatch) -> f64 {
        let pred = self.predict_columns(batch.inputs.view());
        let count = pred.len() as f64;
        pred.iter()
            .zip(batch.targets.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / count
    }
}

/// Windows laid side by side: column `p * C + c` holds channel `c` of pair `p`.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub channels: usize,
}

impl PairBatch {
    pub fn from_windows<'a>(pairs: impl IntoIterator<Item = &'a Window>) -> Self {
        let pairs: Vec<&Window> = pairs.into_iter().collect();
        let first = pairs.first().expect("non-empty batch");
        let (m, n, c) = (first.input.nrows(), first.target.nrows(), first.input.ncols());
        let mut inputs = Array2::zeros((m, pairs.len() * c));
        let mut targets = Array2::zeros((n, pairs.len() * c));
        for (p, w) in pairs.iter().enumerate() {
            inputs.slice_mut(s![.., p * c..(p + 1) * c]).assign(&w.input);
            targets.slice_mut(s![.., p * c..(p + 1) * c]).assign(&w.target);
        }
        Self {
            inputs,
            targets,
            channels: c,
        }
    }

    pub fn pairs(&self) -> usize {
        self.inputs.ncols() / self.channels
    }
}

fn uniform_open(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    loop {
        let v = rng.gen_range(-bound..bound);
        if v != -bound {
            return v;
        }
    }
}

/// Draws every parameter i.i.d. uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// in layout order.
pub fn init_params(arch: Architecture, spec: WindowSpec, seed: u64) -> Result<Forecaster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (spec.lookback, spec.horizon);
    let mut draw = |shape: (usize, usize), fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Array2::from_shape_simple_fn(shape, || uniform_open(&mut rng, bound))
    };
    let vec = |a: Array2<f64>| Array1::from(a.into_raw_vec_and_offset().0);
    match arch {
        Architecture::Linear { kernel } => {
            linear::check_kernel(kernel)?;
            let w_seasonal = draw((n, m), m);
            let b_seasonal = vec(draw((n, 1), m));
            let w_trend = draw((n, m), m);
            let b_trend = vec(draw((n, 1), m));
            Ok(Forecaster::Linear(LinearForecaster {
                w_seasonal,
                w_trend,
                b_seasonal,
                b_trend,
                kernel,
            }))
        }
        Architecture::Mlp { hidden } => {
            if hidden == 0 {
                return Err(Error::InvalidArgument("MLP hidden width must be positive".into()));
            }
            let w1 = draw((hidden, m), m);
            let b1 = vec(draw((hidden, 1), m));
            let w2 = draw((n, hidden), hidden);
            let b2 = vec(draw((n, 1), hidden));
            Ok(Forecaster::Mlp(MlpForecaster { w1, b1, w2, b2 }))
        }
    }
}

/// Mean of squared differences over every element.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let count = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
}

impl TrainConfig {
    /// Expert schedule: Adam, lr 0.005, mini-batches of 32, 5 epochs.
    pub fn expert_default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 0.005,
            epochs: 5,
            batch_size: BatchSize::Size(32),
            seed: 0,
        }
    }

    /// Test-model schedule on synthetic data: Adam, lr 0.005, 1000 full-batch steps.
    pub fn test_model_default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 0.005,
            epochs: 1000,
            batch_size: BatchSize::Full,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == BatchSize::Size(0) {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Forecaster,
    /// Mean training loss of each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

struct Adam {
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.first).zip(&mut self.second) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// One plain gradient-descent step, `p - lr * g`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Trains a copy of `model` on `pairs`. Full-batch training visits pairs in
/// the given order; mini-batches are reshuffled every epoch from `cfg.seed`.
pub fn train(model: &Forecaster, pairs: &[Window], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let arch = model.architecture();
    let spec = WindowSpec {
        lookback: model.lookback(),
        horizon: model.horizon(),
        stride: 1,
    };
    for w in pairs {
        if w.input.nrows() != spec.lookback || w.target.nrows() != spec.horizon {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x_ input, {}x_ target", spec.lookback, spec.horizon),
                got: format!("{}x_ input, {}x_ target", w.input.nrows(), w.target.nrows()),
            });
        }
    }

    let mut current = model.clone();
    let mut flat = current.flatten();
    let mut adam = Adam::new(flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let batch = match cfg.batch_size {
        BatchSize::Full => pairs.len(),
        BatchSize::Size(b) => b.min(pairs.len()),
    };
    // the full batch never changes, build it once
    let full = (batch == pairs.len()).then(|| PairBatch::from_windows(pairs));

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if full.is_none() {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            let owned;
            let b = match &full {
                Some(b) => b,
                None => {
                    owned = PairBatch::from_windows(chunk.iter().map(|&i| &pairs[i]));
                    &owned
                }
            };
            let (loss, grad) = current.loss_grad(b);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            match cfg.optimizer {
                Optimizer::Sgd => sgd_step(&mut flat.values, &grad, cfg.learning_rate),
                Optimizer::Adam => adam.update(&mut flat.values, &grad, cfg.learning_rate),
            }
            current = Forecaster::unflatten(&flat, arch, spec)?;
        }
        if !flat.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        epoch_losses.push(weighted / pairs.len() as f64);
    }
    Ok(TrainOutcome {
        model: current,
        epoch_losses,
    })
}
