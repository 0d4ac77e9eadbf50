//! Differentiating the trajectory-matching loss through an unrolled student.
//!
//! The student starts at an expert's initial parameters and takes `N` full-batch
//! gradient-descent steps on the pairs cut from the synthetic series `s`:
//!
//! ```text
//! theta[j+1] = theta[j] - alpha * grad_theta L_train(theta[j], s)
//! ```
//!
//! The loss is `|theta[N] - theta_f|^2 / |theta_f - theta_0|^2`. Its gradient
//! with respect to `s` is accumulated backwards with the adjoint
//! `lambda[j] = dL/dtheta[j]`. For the linear forecaster the model output is
//! bilinear in (parameters, input), so with `phi(theta, s) = <grad L_train, v>`
//! evaluated at `v = lambda[j+1]`:
//!
//! ```text
//! lambda[j] = lambda[j+1] - alpha * grad_theta phi
//! dL/ds    += -alpha * grad_s phi
//! ```
//!
//! where `grad_theta phi` is a Hessian-vector product and `grad_s phi` collects
//! the contribution of every synthetic row, both as an input row and as a
//! target row of each pair.

use ndarray::{s, Array2, ArrayView2};

use crate::data::{window_starts, SyntheticSeries, WindowSpec};
use crate::error::{Error, Result};
use crate::forecaster::{sgd_step, Architecture, LinearForecaster, PairBatch, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnrollConfig {
    /// Number of student gradient steps.
    pub steps: usize,
    /// Student learning rate.
    pub alpha: f64,
    /// Stride used to cut training pairs from the synthetic series.
    pub pair_stride: usize,
}

impl Default for UnrollConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            alpha: 0.01,
            pair_stride: 24,
        }
    }
}

impl UnrollConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("unroll needs at least one step".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "student learning rate must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.pair_stride == 0 {
            return Err(Error::InvalidArgument("pair stride must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the reverse pass needs: the student iterates and the pair matrices.
#[derive(Debug, Clone)]
pub struct UnrollTape {
    thetas: Vec<LinearForecaster>,
    batch: PairBatch,
    starts: Vec<usize>,
    lookback: usize,
    horizon: usize,
    series_len: usize,
    alpha: f64,
}

impl UnrollTape {
    /// Number of recorded steps `N`.
    pub fn len(&self) -> usize {
        self.thetas.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Student parameters after `j` steps.
    pub fn theta(&self, j: usize) -> Option<ParamVector> {
        self.thetas.get(j).map(LinearForecaster::flatten)
    }

    pub fn final_theta(&self) -> ParamVector {
        self.thetas.last().expect("tape holds theta_0").flatten()
    }

    pub fn pair_starts(&self) -> &[usize] {
        &self.starts
    }

    fn validate(&self) -> Result<()> {
        if self.thetas.len() < 2 {
            return Err(Error::TapeInvalid("no recorded steps".into()));
        }
        let cols = self.batch.inputs.ncols();
        if self.batch.inputs.nrows() != self.lookback
            || self.batch.targets.nrows() != self.horizon
            || self.batch.targets.ncols() != cols
            || cols != self.starts.len() * self.batch.channels
        {
            return Err(Error::TapeInvalid(
                "pair matrices do not match the recorded windows".into(),
            ));
        }
        if self
            .starts
            .iter()
            .any(|&t| t + self.lookback + self.horizon > self.series_len)
        {
            return Err(Error::TapeInvalid("window start beyond the series".into()));
        }
        Ok(())
    }
}

fn linear_kernel(arch: Architecture) -> Result<usize> {
    match arch {
        Architecture::Linear { kernel } => Ok(kernel),
        Architecture::Mlp { .. } => Err(Error::LayoutMismatch(
            "the student unroll is defined for the linear forecaster only".into(),
        )),
    }
}

/// Pairs cut from `s` at `pair_stride`, with the anchored tail window.
pub fn synthetic_pairs(s: ArrayView2<f64>, spec: WindowSpec, pair_stride: usize) -> Result<(Vec<usize>, PairBatch)> {
    let spec = spec.with_stride(pair_stride);
    let starts = window_starts(s.nrows(), spec).map_err(|_| Error::NoSyntheticPairs)?;
    let windows = crate::data::windows(s, spec)?;
    Ok((starts, PairBatch::from_windows(&windows)))
}

/// Runs `cfg.steps` full-batch gradient steps from `theta0` on the pairs of `s`.
pub fn student_unroll(
    theta0: &ParamVector,
    s: &SyntheticSeries,
    arch: Architecture,
    spec: WindowSpec,
    cfg: &UnrollConfig,
) -> Result<(ParamVector, UnrollTape)> {
    cfg.validate()?;
    let kernel = linear_kernel(arch)?;
    let (m, n) = (spec.lookback, spec.horizon);
    let mut student = LinearForecaster::unflatten(theta0, m, n, kernel)?;
    let (starts, batch) = synthetic_pairs(s.values.view(), spec, cfg.pair_stride)?;

    let mut flat = theta0.clone();
    let mut thetas = Vec::with_capacity(cfg.steps + 1);
    thetas.push(student.clone());
    for step in 0..cfg.steps {
        let (_, grad) = student.loss_grad_columns(batch.inputs.view(), batch.targets.view());
        sgd_step(&mut flat.values, &grad.flatten().values, cfg.alpha);
        if !flat.is_finite() {
            return Err(Error::NonFiniteDuringUnroll { step });
        }
        student = LinearForecaster::unflatten(&flat, m, n, kernel)?;
        thetas.push(student.clone());
    }
    let tape = UnrollTape {
        thetas,
        batch,
        starts,
        lookback: m,
        horizon: n,
        series_len: s.len(),
        alpha: cfg.alpha,
    };
    Ok((flat, tape))
}

/// `|theta_N - theta_f|^2 / |theta_f - theta_0|^2`.
pub fn trajectory_loss(theta_n: &ParamVector, theta_f: &ParamVector, theta0: &ParamVector) -> Result<f64> {
    let denom = theta_f.squared_distance(theta0)?;
    if denom == 0.0 {
        return Err(Error::DegenerateExpert);
    }
    Ok(theta_n.squared_distance(theta_f)? / denom)
}

/// Gradient of [`trajectory_loss`] with respect to the synthetic series, by
/// reverse accumulation through every recorded student step.
pub fn grad_synthetic(tape: &UnrollTape, theta_f: &ParamVector, theta0: &ParamVector) -> Result<Array2<f64>> {
    tape.validate()?;
    let first = tape.thetas[0].flatten();
    first.check_layout(theta_f)?;
    first.check_layout(theta0)?;
    let denom = theta_f.squared_distance(theta0)?;
    if denom == 0.0 {
        return Err(Error::DegenerateExpert);
    }

    let (m, n) = (tape.lookback, tape.horizon);
    let kernel = tape.thetas[0].kernel;
    let channels = tape.batch.channels;
    let inputs = tape.batch.inputs.view();
    let targets = tape.batch.targets.view();
    let scale = 2.0 / (n * inputs.ncols()) as f64;
    let alpha = tape.alpha;

    let theta_n = tape.final_theta();
    let mut adjoint = ParamVector {
        values: theta_n
            .values
            .iter()
            .zip(&theta_f.values)
            .map(|(a, b)| 2.0 * (a - b) / denom)
            .collect(),
        layout: theta_n.layout.clone(),
    };

    let mut grad = Array2::<f64>::zeros((tape.series_len, channels));
    for theta in tape.thetas[..tape.len()].iter().rev() {
        let v = LinearForecaster::unflatten(&adjoint, m, n, kernel)?;
        let d = theta.decompose_columns(inputs);
        let residual = theta.apply(&d) - targets;
        let q = v.apply(&d) * scale;
        let r = residual * scale;

        let hvp = theta.param_grad(&d, q.view()).flatten();
        let d_inputs = theta.input_adjoint(q.view()) + v.input_adjoint(r.view());

        for (p, &t) in tape.starts.iter().enumerate() {
            let cols = s![.., p * channels..(p + 1) * channels];
            let mut input_rows = grad.slice_mut(s![t..t + m, ..]);
            input_rows.scaled_add(-alpha, &d_inputs.slice(cols));
            let mut target_rows = grad.slice_mut(s![t + m..t + m + n, ..]);
            target_rows.scaled_add(alpha, &q.slice(cols));
        }
        sgd_step(&mut adjoint.values, &hvp.values, alpha);
    }
    Ok(grad)
}

/// Loss of a fresh unroll on `s`; used by the finite-difference harness.
fn unrolled_loss(
    values: &Array2<f64>,
    theta0: &ParamVector,
    theta_f: &ParamVector,
    arch: Architecture,
    spec: WindowSpec,
    cfg: &UnrollConfig,
) -> Result<f64> {
    let s = SyntheticSeries {
        values: values.clone(),
        origin: crate::data::SeriesOrigin::Distilled,
        seed: 0,
    };
    let (theta_n, _) = student_unroll(theta0, &s, arch, spec, cfg)?;
    trajectory_loss(&theta_n, theta_f, theta0)
}

/// Central-difference check of [`grad_synthetic`]. Returns the largest
/// elementwise relative error, each with denominator
/// `max(|analytic|, |numeric|, 1e-12)`.
pub fn fd_check(
    s: &SyntheticSeries,
    theta0: &ParamVector,
    theta_f: &ParamVector,
    arch: Architecture,
    spec: WindowSpec,
    cfg: &UnrollConfig,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (_, tape) = student_unroll(theta0, s, arch, spec, cfg)?;
    let analytic = grad_synthetic(&tape, theta_f, theta0)?;
    let mut probe = s.values.clone();
    let mut worst = 0.0f64;
    for ((i, c), &a) in analytic.indexed_iter() {
        let orig = probe[[i, c]];
        probe[[i, c]] = orig + h;
        let plus = unrolled_loss(&probe, theta0, theta_f, arch, spec, cfg)?;
        probe[[i, c]] = orig - h;
        let minus = unrolled_loss(&probe, theta0, theta_f, arch, spec, cfg)?;
        probe[[i, c]] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
