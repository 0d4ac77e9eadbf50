//! Decomposition-linear forecaster.
//!
//! The lookback window is split into a trend (replicate-padded moving average
//! of odd width `K`) and a seasonal remainder; each part goes through its own
//! `n x m` affine head and the heads are summed. Weights are shared across
//! channels, so every channel is an independent column of the same map.
//!
//! Everything here works on column blocks: a batch of `B` windows over `C`
//! channels is an `m x (B*C)` matrix, one column per (window, channel).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::params::{ParamVector, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearForecaster {
    pub w_seasonal: Array2<f64>,
    pub w_trend: Array2<f64>,
    pub b_seasonal: Array1<f64>,
    pub b_trend: Array1<f64>,
    pub kernel: usize,
}

/// Seasonal and trend parts of a column block.
#[derive(Debug, Clone)]
pub struct Decomposed {
    pub seasonal: Array2<f64>,
    pub trend: Array2<f64>,
}

pub(crate) fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::KernelEven(kernel));
    }
    Ok(())
}

/// Centered moving average down each column with replicate padding.
pub fn moving_average(x: ArrayView2<f64>, kernel: usize) -> Array2<f64> {
    let rows = x.nrows();
    let half = (kernel / 2) as isize;
    let inv = kernel as f64;
    let mut out = Array2::zeros(x.raw_dim());
    for t in 0..rows {
        let mut acc = x.row(clamp(t as isize - half, rows)).to_owned();
        for j in (-half + 1)..=half {
            acc += &x.row(clamp(t as isize + j, rows));
        }
        acc /= inv;
        out.row_mut(t).assign(&acc);
    }
    out
}

/// Transpose of [`moving_average`] as a linear operator on columns.
pub fn moving_average_adjoint(g: ArrayView2<f64>, kernel: usize) -> Array2<f64> {
    let rows = g.nrows();
    let half = (kernel / 2) as isize;
    let inv = kernel as f64;
    let mut out = Array2::zeros(g.raw_dim());
    for t in 0..rows {
        let scaled = g.row(t).mapv(|v| v / inv);
        for j in -half..=half {
            let mut dst = out.row_mut(clamp(t as isize + j, rows));
            dst += &scaled;
        }
    }
    out
}

fn clamp(i: isize, rows: usize) -> usize {
    i.clamp(0, rows as isize - 1) as usize
}

/// Splits `x` into `(seasonal, trend)` with `seasonal = x - trend`.
pub fn decompose(x: ArrayView2<f64>, kernel: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_kernel(kernel)?;
    let trend = moving_average(x, kernel);
    let seasonal = &x - &trend;
    Ok((seasonal, trend))
}

impl LinearForecaster {
    pub fn zeros(lookback: usize, horizon: usize, kernel: usize) -> Result<Self> {
        check_kernel(kernel)?;
        Ok(Self {
            w_seasonal: Array2::zeros((horizon, lookback)),
            w_trend: Array2::zeros((horizon, lookback)),
            b_seasonal: Array1::zeros(horizon),
            b_trend: Array1::zeros(horizon),
            kernel,
        })
    }

    pub fn lookback(&self) -> usize {
        self.w_seasonal.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.w_seasonal.nrows()
    }

    pub fn layout(lookback: usize, horizon: usize) -> Vec<Segment> {
        ParamVector::layout_of(&[
            ("w_seasonal", &[horizon, lookback]),
            ("b_seasonal", &[horizon]),
            ("w_trend", &[horizon, lookback]),
            ("b_trend", &[horizon]),
        ])
    }

    pub fn flatten(&self) -> ParamVector {
        let mut values = Vec::with_capacity(2 * self.horizon() * (self.lookback() + 1));
        values.extend(self.w_seasonal.iter());
        values.extend(self.b_seasonal.iter());
        values.extend(self.w_trend.iter());
        values.extend(self.b_trend.iter());
        ParamVector {
            values,
            layout: Self::layout(self.lookback(), self.horizon()),
        }
    }

    pub fn unflatten(pv: &ParamVector, lookback: usize, horizon: usize, kernel: usize) -> Result<Self> {
        check_kernel(kernel)?;
        if pv.layout != Self::layout(lookback, horizon) {
            return Err(Error::LayoutMismatch(format!(
                "expected linear layout for m={lookback}, n={horizon}"
            )));
        }
        let take = |name: &str| pv.segment(name).expect("segment present").to_vec();
        Ok(Self {
            w_seasonal: Array2::from_shape_vec((horizon, lookback), take("w_seasonal")).expect("shape"),
            b_seasonal: Array1::from(take("b_seasonal")),
            w_trend: Array2::from_shape_vec((horizon, lookback), take("w_trend")).expect("shape"),
            b_trend: Array1::from(take("b_trend")),
            kernel,
        })
    }

    pub fn decompose_columns(&self, x: ArrayView2<f64>) -> Decomposed {
        let trend = moving_average(x, self.kernel);
        let seasonal = &x - &trend;
        Decomposed { seasonal, trend }
    }

    /// Output columns for pre-decomposed input columns.
    pub fn apply(&self, d: &Decomposed) -> Array2<f64> {
        let mut out = self.w_seasonal.dot(&d.seasonal) + self.w_trend.dot(&d.trend);
        let bias = &self.b_seasonal + &self.b_trend;
        for mut col in out.axis_iter_mut(Axis(1)) {
            col += &bias;
        }
        out
    }

    pub fn predict_columns(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.apply(&self.decompose_columns(x))
    }

    /// Parameter gradient for upstream output gradient `g` (n x cols).
    pub fn param_grad(&self, d: &Decomposed, g: ArrayView2<f64>) -> LinearForecaster {
        let bias = g.sum_axis(Axis(1));
        LinearForecaster {
            w_seasonal: g.dot(&d.seasonal.t()),
            w_trend: g.dot(&d.trend.t()),
            b_seasonal: bias.clone(),
            b_trend: bias,
            kernel: self.kernel,
        }
    }

    /// Input gradient for upstream output gradient `g`: `Ws^T g + A^T (Wt^T g - Ws^T g)`.
    pub fn input_adjoint(&self, g: ArrayView2<f64>) -> Array2<f64> {
        let through_seasonal = self.w_seasonal.t().dot(&g);
        let through_trend = self.w_trend.t().dot(&g);
        let diff = &through_trend - &through_seasonal;
        through_seasonal + moving_average_adjoint(diff.view(), self.kernel)
    }

    /// Mean squared error over all entries of `targets` and its parameter gradient.
    pub fn loss_grad_columns(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, LinearForecaster) {
        let d = self.decompose_columns(inputs);
        let residual = self.apply(&d) - targets;
        let count = residual.len() as f64;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / count;
        let g = residual * (2.0 / count);
        (loss, self.param_grad(&d, g.view()))
    }
}
