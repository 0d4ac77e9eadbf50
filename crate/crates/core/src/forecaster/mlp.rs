//! One-hidden-layer ReLU forecaster, channel-shared like the linear model.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::params::{ParamVector, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpForecaster {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

fn add_bias(mut x: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    for mut col in x.axis_iter_mut(Axis(1)) {
        col += b;
    }
    x
}

impl MlpForecaster {
    pub fn lookback(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.w2.nrows()
    }

    pub fn layout(lookback: usize, horizon: usize, hidden: usize) -> Vec<Segment> {
        ParamVector::layout_of(&[
            ("w1", &[hidden, lookback]),
            ("b1", &[hidden]),
            ("w2", &[horizon, hidden]),
            ("b2", &[horizon]),
        ])
    }

    pub fn flatten(&self) -> ParamVector {
        let mut values = Vec::new();
        values.extend(self.w1.iter());
        values.extend(self.b1.iter());
        values.extend(self.w2.iter());
        values.extend(self.b2.iter());
        ParamVector {
            values,
            layout: Self::layout(self.lookback(), self.horizon(), self.hidden()),
        }
    }

    pub fn unflatten(pv: &ParamVector, lookback: usize, horizon: usize, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument("MLP hidden width must be positive".into()));
        }
        if pv.layout != Self::layout(lookback, horizon, hidden) {
            return Err(Error::LayoutMismatch(format!(
                "expected MLP layout for m={lookback}, n={horizon}, H={hidden}"
            )));
        }
        let take = |name: &str| pv.segment(name).expect("segment present").to_vec();
        Ok(Self {
            w1: Array2::from_shape_vec((hidden, lookback), take("w1")).expect("shape"),
            b1: Array1::from(take("b1")),
            w2: Array2::from_shape_vec((horizon, hidden), take("w2")).expect("shape"),
            b2: Array1::from(take("b2")),
        })
    }

    pub fn predict_columns(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let hidden = add_bias(self.w1.dot(&x), &self.b1).mapv(|v| v.max(0.0));
        add_bias(self.w2.dot(&hidden), &self.b2)
    }

    pub fn loss_grad_columns(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, MlpForecaster) {
        let pre = add_bias(self.w1.dot(&inputs), &self.b1);
        let act = pre.mapv(|v| v.max(0.0));
        let residual = add_bias(self.w2.dot(&act), &self.b2) - targets;
        let count = residual.len() as f64;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / count;
        let g = residual * (2.0 / count);

        let w2 = g.dot(&act.t());
        let b2 = g.sum_axis(Axis(1));
        let mut dh = self.w2.t().dot(&g);
        ndarray::Zip::from(&mut dh).and(&pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let w1 = dh.dot(&inputs.t());
        let b1 = dh.sum_axis(Axis(1));
        (loss, MlpForecaster { w1, b1, w2, b2 })
    }
}
