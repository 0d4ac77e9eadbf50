//! The condensation loop: trajectory-matching epochs on the synthetic series,
//! with an additive label update every `G` epochs.
//!
//! The label update works on disjoint `(m + n)`-row blocks starting at row 0.
//! Each block's last `n` rows are moved towards an expert's forecast of its
//! first `m` rows:
//!
//! ```text
//! label <- (1 - beta) * label + beta * expert(input)
//! ```
//!
//! Inputs are never written, so a pass scales the label error by exactly
//! `(1 - beta)^2`. Rows after the last whole block are left alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::ExpertBuffer;
use crate::data::{sample_init_synthetic, windows, SeriesOrigin, SyntheticSeries, TimeSeries, WindowSpec};
use crate::error::{Error, Result};
use crate::eval::evaluate_pairs;
use crate::forecaster::{Architecture, Forecaster, TrainConfig};
use crate::seed::derive_seed;
use crate::unroll::{grad_synthetic, student_unroll, trajectory_loss, UnrollConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondenseConfig {
    /// Total condensation epochs `E`.
    pub epochs: usize,
    /// A label-update epoch happens whenever `epoch % gap == 0`.
    pub gap: usize,
    pub beta: f64,
    pub unroll: UnrollConfig,
    pub outer_lr: f64,
    pub outer_momentum: f64,
    pub synthetic_len: usize,
    pub condtsf: bool,
    /// Test metrics every this many epochs; 0 disables them.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            gap: 3,
            beta: 0.01,
            unroll: UnrollConfig::default(),
            outer_lr: 0.01,
            outer_momentum: 0.5,
            synthetic_len: 48,
            condtsf: true,
            eval_every: 0,
            seed: 0,
        }
    }
}

impl CondenseConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return fail("condensation needs at least one epoch".into());
        }
        if self.gap == 0 {
            return fail("gap G must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("beta must be in (0,1), got {}", self.beta));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return fail(format!("outer learning rate must be positive, got {}", self.outer_lr));
        }
        if !(0.0..1.0).contains(&self.outer_momentum) {
            return fail(format!("outer momentum must be in [0,1), got {}", self.outer_momentum));
        }
        if self.unroll.alpha.is_nan() || self.unroll.alpha <= 0.0 {
            return fail(format!(
                "student learning rate must be positive, got {}",
                self.unroll.alpha
            ));
        }
        self.unroll.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochKind {
    Match,
    CondTsf,
}

impl EpochKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EpochKind::Match => "Match",
            EpochKind::CondTsf => "CondTSF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub kind: EpochKind,
    pub param_error: Option<f64>,
    pub label_error: f64,
    pub test_mae: Option<f64>,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut out = String::from("epoch,kind,param_error,label_error,test_mae,test_mse\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{},{}",
                r.epoch,
                r.kind.as_str(),
                opt(r.param_error),
                r.label_error,
                opt(r.test_mae),
                opt(r.test_mse)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Start rows of the disjoint `(m + n)` blocks.
fn block_starts(len: usize, spec: WindowSpec) -> Result<Vec<usize>> {
    let span = spec.span();
    if len < span {
        return Err(Error::NoBlocks { block: span });
    }
    Ok((0..=len - span).step_by(span).collect())
}

/// One additive label update with `expert`, applied to every whole block.
pub fn condtsf_update(
    s: &SyntheticSeries,
    expert: &Forecaster,
    spec: WindowSpec,
    beta: f64,
) -> Result<SyntheticSeries> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta must be in [0,1], got {beta}")));
    }
    let (m, n) = (spec.lookback, spec.horizon);
    let mut out = s.clone();
    for t in block_starts(s.len(), spec)? {
        let pred = expert.forward(s.values.slice(s![t..t + m, ..]))?;
        let mut label = out.values.slice_mut(s![t + m..t + m + n, ..]);
        label.zip_mut_with(&pred, |y, &p| *y = (1.0 - beta) * *y + beta * p);
    }
    Ok(out)
}

/// Sum over blocks of the squared distance between the expert's forecast and the block label.
pub fn label_error(s: ArrayView2<f64>, expert: &Forecaster, spec: WindowSpec) -> Result<f64> {
    let (m, n) = (spec.lookback, spec.horizon);
    let mut total = 0.0;
    for t in block_starts(s.nrows(), spec)? {
        let pred = expert.forward(s.slice(s![t..t + m, ..]))?;
        let label = s.slice(s![t + m..t + m + n, ..]);
        total += pred
            .iter()
            .zip(label.iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>();
    }
    Ok(total)
}

/// A random train segment, the `Random` reference row.
pub fn random_baseline(train: &TimeSeries, len: usize, seed: u64) -> Result<SyntheticSeries> {
    sample_init_synthetic(train, len, seed)
}

/// Test-split access for periodic evaluation during condensation.
#[derive(Debug, Clone)]
pub struct TestProbe<'a> {
    pub test: ArrayView2<'a, f64>,
    pub arch: Architecture,
    pub trials: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl TestProbe<'_> {
    fn measure(&self, s: &SyntheticSeries, spec: WindowSpec) -> Result<(f64, f64)> {
        let pairs = windows(s.values.view(), spec.with_stride(1))?;
        let results = evaluate_pairs(&pairs, self.test, self.arch, spec, self.trials, &self.train, self.seed)?;
        let count = results.len() as f64;
        Ok((
            results.iter().map(|r| r.mae).sum::<f64>() / count,
            results.iter().map(|r| r.mse).sum::<f64>() / count,
        ))
    }
}

/// Distills `train` into a synthetic series of `cfg.synthetic_len` rows.
///
/// Epochs run `1..=E`. With the label update enabled, epochs divisible by `G`
/// apply [`condtsf_update`] with one uniformly drawn expert; every other epoch
/// draws an expert pair, unrolls the student on `s` and takes one momentum-SGD
/// step on the whole series. The label error against expert 0 is logged after
/// every epoch.
pub fn distill(
    buf: &ExpertBuffer,
    train: &TimeSeries,
    cfg: &CondenseConfig,
    probe: Option<&TestProbe<'_>>,
) -> Result<(SyntheticSeries, MetricsLog)> {
    cfg.validate()?;
    buf.check_fingerprint(train, true)?;
    if buf.is_empty() {
        return Err(Error::InvalidArgument("expert buffer is empty".into()));
    }
    let spec = buf.spec;
    if cfg.synthetic_len < spec.span() {
        return Err(Error::InvalidArgument(format!(
            "synthetic length {} is shorter than one window ({})",
            cfg.synthetic_len,
            spec.span()
        )));
    }
    let experts: Vec<Forecaster> = (0..buf.len()).map(|i| buf.expert_model(i)).collect::<Result<_>>()?;

    let mut s = sample_init_synthetic(train, cfg.synthetic_len, cfg.seed)?;
    s.origin = SeriesOrigin::Distilled;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut velocity = Array2::<f64>::zeros(s.values.raw_dim());
    let mut log = MetricsLog::default();

    for epoch in 1..=cfg.epochs {
        let label_epoch = cfg.condtsf && epoch % cfg.gap == 0;
        let pick = rng.gen_range(0..buf.len());
        let (kind, param_error) = if label_epoch {
            s = condtsf_update(&s, &experts[pick], spec, cfg.beta)?;
            (EpochKind::CondTsf, None)
        } else {
            let pair = &buf.pairs[pick];
            let (theta_n, tape) = match student_unroll(&pair.theta0, &s, buf.arch, spec, &cfg.unroll) {
                Err(Error::NonFiniteDuringUnroll { .. }) => return Err(Error::NonFiniteSynthetic { epoch }),
                other => other?,
            };
            let loss = trajectory_loss(&theta_n, &pair.theta_f, &pair.theta0)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteSynthetic { epoch });
            }
            let grad = grad_synthetic(&tape, &pair.theta_f, &pair.theta0)?;
            velocity *= cfg.outer_momentum;
            velocity += &grad;
            s.values.scaled_add(-cfg.outer_lr, &velocity);
            (EpochKind::Match, Some(loss))
        };
        if !s.is_finite() {
            return Err(Error::NonFiniteSynthetic { epoch });
        }
        let label = label_error(s.values.view(), &experts[0], spec)?;
        let (test_mae, test_mse) = match probe {
            Some(p) if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 => {
                let (mae, mse) = p.measure(&s, spec)?;
                (Some(mae), Some(mse))
            }
            _ => (None, None),
        };
        log.records.push(EpochRecord {
            epoch,
            kind,
            param_error,
            label_error: label,
            test_mae,
            test_mse,
        });
    }
    Ok((s, log))
}
