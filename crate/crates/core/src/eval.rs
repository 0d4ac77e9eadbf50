//! Evaluation protocol: fresh forecasters trained on a series, scored on the
//! test split with per-element MAE and MSE.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::data::{window_starts, windows, SplitDataset, SyntheticSeries, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::forecaster::{init_params, train, ArchKind, Architecture, Forecaster, TrainConfig};
use crate::seed::{derive_seed, splitmix64};

pub const DEFAULT_TRIALS: usize = 5;
const TEST_CHUNK: usize = 512;

/// MAE and MSE over every stride-1 window of `test`, averaged over windows,
/// horizon steps and channels.
pub fn test_error(model: &Forecaster, test: ArrayView2<f64>, spec: WindowSpec) -> Result<(f64, f64)> {
    let (m, n) = (spec.lookback, spec.horizon);
    if model.lookback() != m || model.horizon() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("model for m={m}, n={n}"),
            got: format!("m={}, n={}", model.lookback(), model.horizon()),
        });
    }
    let starts = window_starts(test.nrows(), spec.with_stride(1))?;
    let c = test.ncols();
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for chunk in starts.chunks(TEST_CHUNK) {
        let mut inputs = Array2::zeros((m, chunk.len() * c));
        let mut targets = Array2::zeros((n, chunk.len() * c));
        for (p, &t) in chunk.iter().enumerate() {
            inputs
                .slice_mut(s![.., p * c..(p + 1) * c])
                .assign(&test.slice(s![t..t + m, ..]));
            targets
                .slice_mut(s![.., p * c..(p + 1) * c])
                .assign(&test.slice(s![t + m..t + m + n, ..]));
        }
        let pred = model.predict_columns(inputs.view());
        for (p, y) in pred.iter().zip(targets.iter()) {
            let d = p - y;
            abs_sum += d.abs();
            sq_sum += d * d;
        }
    }
    let count = (starts.len() * n * c) as f64;
    Ok((abs_sum / count, sq_sum / count))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub trials: Vec<TrialResult>,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub arch: ArchKind,
    pub dataset_id: String,
    /// Row label such as `Random`, `MTT`, `MTT+CondTSF` or `Full`.
    pub origin: String,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_trials(trials: Vec<TrialResult>, arch: ArchKind, dataset_id: String, origin: String) -> Self {
        let (mean_mae, std_mae) = mean_std(trials.iter().map(|t| t.mae));
        let (mean_mse, std_mse) = mean_std(trials.iter().map(|t| t.mse));
        Self {
            trials,
            mean_mae,
            std_mae,
            mean_mse,
            std_mse,
            arch,
            dataset_id,
            origin,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# label={}", self.origin);
        let _ = writeln!(out, "# dataset={}", self.dataset_id);
        let _ = writeln!(out, "# arch={}", self.arch);
        out.push_str("trial,seed,mae,mse\n");
        for (i, t) in self.trials.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{:.16e},{:.16e}", t.seed, t.mae, t.mse);
        }
        let _ = writeln!(out, "mean,,{:.16e},{:.16e}", self.mean_mae, self.mean_mse);
        let _ = writeln!(out, "std,,{:.16e},{:.16e}", self.std_mae, self.std_mse);
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses [`EvalReport::to_csv`] output; aggregates are recomputed from the trial rows.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut label = String::new();
        let mut dataset = String::new();
        let mut arch = ArchKind::Linear;
        let mut trials = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let row = lineno + 1;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "label" => label = v.trim().to_owned(),
                        "dataset" => dataset = v.trim().to_owned(),
                        "arch" => arch = v.trim().parse()?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line.starts_with("trial,") || line.starts_with("mean,") || line.starts_with("std,") {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(Error::Parse {
                    row,
                    col: cells.len(),
                    msg: "expected trial,seed,mae,mse".into(),
                });
            }
            let num = |col: usize| -> Result<f64> {
                cells[col].trim().parse().map_err(|_| Error::Parse {
                    row,
                    col: col + 1,
                    msg: format!("bad number {:?}", cells[col]),
                })
            };
            let seed = cells[1].trim().parse().map_err(|_| Error::Parse {
                row,
                col: 2,
                msg: format!("bad seed {:?}", cells[1]),
            })?;
            trials.push(TrialResult {
                seed,
                mae: num(2)?,
                mse: num(3)?,
            });
        }
        if trials.is_empty() {
            return Err(Error::EmptyFile);
        }
        Ok(Self::from_trials(trials, arch, dataset, label))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Trains `trials` fresh models on `pairs` and scores each on `test`.
/// Trial `i` initializes from `derive_seed(master_seed, i)`; results keep trial order.
pub fn evaluate_pairs(
    pairs: &[Window],
    test: ArrayView2<f64>,
    arch: Architecture,
    spec: WindowSpec,
    trials: usize,
    cfg: &TrainConfig,
    master_seed: u64,
) -> Result<Vec<TrialResult>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let attribute = |source: Error| Error::Trial {
                index: i,
                source: Box::new(source),
            };
            let model = init_params(arch, spec, seed).map_err(attribute)?;
            let trained = train(&model, pairs, &cfg.with_seed(splitmix64(seed))).map_err(attribute)?;
            let (mae, mse) = test_error(&trained.model, test, spec).map_err(attribute)?;
            Ok(TrialResult { seed, mae, mse })
        })
        .collect()
}

/// Scores a synthetic series by training on its stride-1 windows.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_synthetic(
    s: &SyntheticSeries,
    split: &SplitDataset,
    arch: Architecture,
    spec: WindowSpec,
    trials: usize,
    cfg: &TrainConfig,
    master_seed: u64,
    label: &str,
) -> Result<EvalReport> {
    let pairs = windows(s.values.view(), spec.with_stride(1))?;
    let results = evaluate_pairs(&pairs, split.test.values.view(), arch, spec, trials, cfg, master_seed)?;
    Ok(EvalReport::from_trials(
        results,
        arch.kind(),
        dataset_id(split),
        label.to_owned(),
    ))
}

/// Reference row: models trained on every stride-1 window of the full train split.
pub fn evaluate_full(
    split: &SplitDataset,
    arch: Architecture,
    spec: WindowSpec,
    trials: usize,
    cfg: &TrainConfig,
    master_seed: u64,
) -> Result<EvalReport> {
    let pairs = windows(split.train.values.view(), spec.with_stride(1))?;
    let results = evaluate_pairs(&pairs, split.test.values.view(), arch, spec, trials, cfg, master_seed)?;
    Ok(EvalReport::from_trials(
        results,
        arch.kind(),
        dataset_id(split),
        "Full".into(),
    ))
}

fn dataset_id(split: &SplitDataset) -> String {
    split
        .train
        .source_id
        .strip_suffix(":train")
        .unwrap_or(&split.train.source_id)
        .to_owned()
}

/// Canonical ordering for comparison tables.
fn row_rank(label: &str) -> usize {
    match label {
        "Random" => 0,
        "MTT" => 1,
        "MTT+CondTSF" => 2,
        "Full" => 3,
        _ => 4,
    }
}

/// Fixed-width comparison table, rows ordered Random / MTT / MTT+CondTSF / Full / others.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<&EvalReport> = reports.iter().collect();
    rows.sort_by_key(|r| row_rank(&r.origin));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<10} {:<7} {:>6}  {:>17}  {:>17}",
        "method", "dataset", "arch", "trials", "MAE", "MSE"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<14} {:<10} {:<7} {:>6}  {:>8.4}±{:<8.4}  {:>8.4}±{:<8.4}",
            r.origin,
            r.dataset_id,
            r.arch.to_string(),
            r.trials.len(),
            r.mean_mae,
            r.std_mae,
            r.mean_mse,
            r.std_mse
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::LinearForecaster;
    use ndarray::array;

    #[test]
    fn single_window_hand_case() {
        // zero model with y = -(difference): pred - y = [[1,-2],[0,1]]
        let model = Forecaster::Linear(LinearForecaster::zeros(1, 2, 1).unwrap());
        let test = array![[0.0, 0.0], [-1.0, 2.0], [0.0, -1.0]];
        let (mae, mse) = test_error(&model, test.view(), WindowSpec::new(1, 2, 1).unwrap()).unwrap();
        assert_eq!(mae, 1.0);
        assert_eq!(mse, 1.5);
    }

    #[test]
    fn unit_offsets() {
        let model = Forecaster::Linear(LinearForecaster::zeros(2, 2, 1).unwrap());
        let test = Array2::from_shape_fn((9, 3), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let (mae, mse) = test_error(&model, test.view(), WindowSpec::new(2, 2, 1).unwrap()).unwrap();
        assert_eq!((mae, mse), (1.0, 1.0));
    }

    #[test]
    fn report_round_trip() {
        let trials = vec![
            TrialResult {
                seed: 3,
                mae: 0.5,
                mse: 0.25,
            },
            TrialResult {
                seed: 4,
                mae: 0.7,
                mse: 0.45,
            },
        ];
        let report = EvalReport::from_trials(trials, ArchKind::Linear, "ETTh2".into(), "MTT".into());
        assert!((report.mean_mae - 0.6).abs() < 1e-15);
        assert!((report.std_mae - 0.1).abs() < 1e-15);
        let back = EvalReport::parse_csv(&report.to_csv()).unwrap();
        assert_eq!(back, report);
        let table = comparison_table(&[back]);
        assert!(table.contains("MTT"));
    }
}
