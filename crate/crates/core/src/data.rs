//! Series ingestion, chronological splitting with z-normalization, sliding
//! windows and synthetic-series initialization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A raw multichannel series: rows are time steps, columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Array2<f64>,
    pub channel_names: Vec<String>,
    pub source_id: String,
}

impl TimeSeries {
    pub fn new(values: Array2<f64>, channel_names: Vec<String>, source_id: impl Into<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyFile);
        }
        if channel_names.len() != values.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channel names", values.ncols()),
                got: format!("{}", channel_names.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series".into()));
        }
        Ok(Self {
            values,
            channel_names,
            source_id: source_id.into(),
        })
    }

    /// Builds a series with generated channel names `ch0`, `ch1`, ...
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|c| format!("ch{c}")).collect();
        Self::new(values, names, "memory")
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// SHA-256 over the row-major little-endian f64 matrix.
    pub fn fingerprint(&self) -> [u8; 32] {
        fingerprint(self.values.view())
    }
}

pub fn fingerprint(values: ArrayView2<f64>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for row in values.rows() {
        for v in row {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Lookback, horizon and stride, all in time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            lookback: 24,
            horizon: 24,
            stride: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize, stride: usize) -> Result<Self> {
        if lookback == 0 || horizon == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "window spec needs positive lookback/horizon/stride, got {lookback}/{horizon}/{stride}"
            )));
        }
        Ok(Self {
            lookback,
            horizon,
            stride,
        })
    }

    pub fn span(&self) -> usize {
        self.lookback + self.horizon
    }

    pub fn with_stride(self, stride: usize) -> Self {
        Self { stride, ..self }
    }
}

/// Normalized train/test split with the train statistics used for both halves.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub channel_mean: Array1<f64>,
    pub channel_std: Array1<f64>,
    pub split_ratio: f64,
}

impl SplitDataset {
    /// Maps normalized values back to the raw scale.
    pub fn denormalize(&self, values: ArrayView2<f64>) -> Array2<f64> {
        let mut out = values.to_owned();
        for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.channel_mean[c], self.channel_std[c]);
            col.mapv_inplace(|v| v * sd + mu);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOrigin {
    RandomSegment,
    Distilled,
}

/// The learnable synthetic series.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub values: Array2<f64>,
    pub origin: SeriesOrigin,
    pub seed: u64,
}

impl SyntheticSeries {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One (input, target) training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub start: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Column excluded from the values, matched by header name.
    pub date_column: Option<String>,
}

/// Reads a comma-separated file into a series. Rows and columns in errors are 1-based,
/// rows counted over data rows (header excluded).
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, opts, source_id)
}

pub fn parse_csv(text: &str, opts: &CsvOptions, source_id: String) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header: Option<Vec<String>> = if opts.has_header {
        let h = reader.headers().map_err(|e| Error::Parse {
            row: 0,
            col: 0,
            msg: e.to_string(),
        })?;
        Some(h.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let skip = match (&opts.date_column, &header) {
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::ColumnNotFound(name.clone()))?,
        ),
        (Some(name), None) => return Err(Error::ColumnNotFound(name.clone())),
        _ => None,
    };

    let mut data: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            col: 0,
            msg: e.to_string(),
        })?;
        let mut count = 0usize;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == skip {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("cannot parse {cell:?} as a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::Parse {
                    row,
                    col: count,
                    msg: format!("expected {w} value columns, found {count}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let width = match width {
        Some(w) if rows > 0 && w > 0 => w,
        _ => return Err(Error::EmptyFile),
    };
    let names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != skip)
            .map(|(_, n)| n)
            .collect(),
        None => (0..width).map(|c| format!("ch{c}")).collect(),
    };
    let values = Array2::from_shape_vec((rows, width), data).expect("row-major buffer");
    TimeSeries::new(values, names, source_id)
}

/// Chronological split at `floor(ratio * T)` followed by per-channel z-scoring
/// with train mean and population std. A constant train channel is an error
/// under `strict`; otherwise its std is taken as 1.
pub fn split_normalize(ts: &TimeSeries, ratio: f64, spec: WindowSpec, strict: bool) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in (0,1), got {ratio}"
        )));
    }
    let total = ts.len();
    let n_train = (ratio * total as f64).floor() as usize;
    let need = spec.span();
    if n_train < need {
        return Err(Error::SplitTooShort {
            part: "train",
            len: n_train,
            need,
        });
    }
    if total - n_train < need {
        return Err(Error::SplitTooShort {
            part: "test",
            len: total - n_train,
            need,
        });
    }
    let train_raw = ts.values.slice(s![..n_train, ..]);
    let test_raw = ts.values.slice(s![n_train.., ..]);

    let channels = ts.channels();
    let mut mean = Array1::zeros(channels);
    let mut std = Array1::zeros(channels);
    for c in 0..channels {
        let col = train_raw.column(c);
        let mu = col.sum() / n_train as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n_train as f64;
        let mut sd = var.sqrt();
        if sd.is_nan() || sd <= 0.0 {
            if strict {
                return Err(Error::ConstantChannel(ts.channel_names[c].clone()));
            }
            log::warn!(
                "channel {:?} is constant in the train split; using std = 1",
                ts.channel_names[c]
            );
            sd = 1.0;
        }
        mean[c] = mu;
        std[c] = sd;
    }

    let normalize = |raw: ArrayView2<f64>| {
        let mut out = raw.to_owned();
        for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (mean[c], std[c]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        out
    };
    let train = TimeSeries::new(
        normalize(train_raw),
        ts.channel_names.clone(),
        format!("{}:train", ts.source_id),
    )?;
    let test = TimeSeries::new(
        normalize(test_raw),
        ts.channel_names.clone(),
        format!("{}:test", ts.source_id),
    )?;
    Ok(SplitDataset {
        train,
        test,
        channel_mean: mean,
        channel_std: std,
        split_ratio: ratio,
    })
}

/// Window start indices: `0, stride, 2*stride, ...` while the window fits,
/// plus the tail window anchored at `T - (m + n)` when not already present.
pub fn window_starts(len: usize, spec: WindowSpec) -> Result<Vec<usize>> {
    let span = spec.span();
    if len < span {
        return Err(Error::SeriesTooShort { len, need: span });
    }
    let last = len - span;
    let mut starts: Vec<usize> = (0..=last).step_by(spec.stride).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    Ok(starts)
}

pub fn windows(series: ArrayView2<f64>, spec: WindowSpec) -> Result<Vec<Window>> {
    let (m, n) = (spec.lookback, spec.horizon);
    Ok(window_starts(series.nrows(), spec)?
        .into_iter()
        .map(|t| Window {
            input: series.slice(s![t..t + m, ..]).to_owned(),
            target: series.slice(s![t + m..t + m + n, ..]).to_owned(),
            start: t,
        })
        .collect())
}

/// A contiguous train segment of length `len` starting uniformly at random.
pub fn sample_init_synthetic(train: &TimeSeries, len: usize, seed: u64) -> Result<SyntheticSeries> {
    let total = train.len();
    if len == 0 || total < len {
        return Err(Error::TrainTooShort {
            len: total,
            need: len.max(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..=total - len);
    Ok(SyntheticSeries {
        values: train.values.slice(s![start..start + len, ..]).to_owned(),
        origin: SeriesOrigin::RandomSegment,
        seed,
    })
}

fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,<channel names>` followed by one row per step at 17 significant digits.
pub fn write_series_csv(path: impl AsRef<Path>, values: ArrayView2<f64>, channel_names: &[String]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, series_csv_string(values, channel_names)).map_err(|e| Error::io(path, e))
}

pub fn series_csv_string(values: ArrayView2<f64>, channel_names: &[String]) -> String {
    let mut out = String::from("t");
    for name in channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, row) in values.rows().into_iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in row {
            out.push(',');
            out.push_str(&format_real(*v));
        }
        out.push('\n');
    }
    out
}

/// Reads a series written by [`write_series_csv`]; the `t` column is dropped.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    load_csv(
        path,
        &CsvOptions {
            has_header: true,
            date_column: Some("t".into()),
        },
    )
}
