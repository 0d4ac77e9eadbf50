//! Expert parameter buffer: generation, binary persistence and the
//! prediction-consistency diagnostic.
//!
//! File layout, all integers and reals little-endian:
//!
//! ```text
//! "TSCB" | version u32 | arch u8 (0 linear, 1 mlp) | m u32 | n u32 | K u32 | C u32 | k u32
//!        | sha256 of the normalized train matrix (32 bytes) | master seed u64
//!        | k x (expert index u32 | final train loss f64 | theta_0 f64s | theta_f f64s)
//! ```
//!
//! The `K` slot carries the moving-average width for linear experts and the
//! hidden width for MLP experts.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{windows, SyntheticSeries, TimeSeries, WindowSpec};
use crate::error::{Error, Result};
use crate::forecaster::{init_params, train, ArchKind, Architecture, Forecaster, ParamVector, TrainConfig};
use crate::seed::{derive_seed, splitmix64};

pub const MAGIC: &[u8; 4] = b"TSCB";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_EXPERTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPair {
    pub theta0: ParamVector,
    pub theta_f: ParamVector,
    pub expert_index: usize,
    pub train_loss_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBuffer {
    pub pairs: Vec<ExpertPair>,
    pub arch: Architecture,
    pub spec: WindowSpec,
    pub channels: usize,
    pub fingerprint: [u8; 32],
    /// Training schedule used for generation; not part of the file, so `None` after loading.
    pub train_config: Option<TrainConfig>,
    pub master_seed: u64,
}

impl ExpertBuffer {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint)
    }

    /// Compares the stored fingerprint with `train`. A mismatch is an error
    /// under `strict` and a logged warning otherwise.
    pub fn check_fingerprint(&self, train: &TimeSeries, strict: bool) -> Result<()> {
        let found = train.fingerprint();
        if found == self.fingerprint {
            return Ok(());
        }
        let err = Error::FingerprintMismatch {
            expected: self.fingerprint_hex(),
            found: hex::encode(found),
        };
        if strict {
            return Err(err);
        }
        log::warn!("{err}");
        Ok(())
    }

    /// Final-parameter model of expert `i`.
    pub fn expert_model(&self, i: usize) -> Result<Forecaster> {
        Forecaster::unflatten(&self.pairs[i].theta_f, self.arch, self.spec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.arch.kind().tag());
        for v in [
            self.spec.lookback,
            self.spec.horizon,
            self.arch.size_param(),
            self.channels,
            self.pairs.len(),
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        for pair in &self.pairs {
            out.extend_from_slice(&(pair.expert_index as u32).to_le_bytes());
            out.extend_from_slice(&pair.train_loss_final.to_le_bytes());
            out.extend_from_slice(&pair.theta0.to_le_bytes());
            out.extend_from_slice(&pair.theta_f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let tag = r.take(1)?[0];
        let kind = ArchKind::from_tag(tag).ok_or_else(|| Error::InvalidArgument(format!("unknown arch tag {tag}")))?;
        let lookback = r.u32()? as usize;
        let horizon = r.u32()? as usize;
        let size = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let k = r.u32()? as usize;
        let mut fingerprint = [0u8; 32];
        fingerprint.copy_from_slice(r.take(32)?);
        let master_seed = r.u64()?;

        let spec = WindowSpec::new(lookback, horizon, 1)?;
        let arch = Architecture::from_parts(kind, size);
        let layout = arch.layout(spec);
        let count = arch.param_count(spec);
        let mut pairs = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            let expert_index = r.u32()? as usize;
            let train_loss_final = r.f64()?;
            let theta0 = ParamVector::new(r.f64s(count)?, layout.clone())?;
            let theta_f = ParamVector::new(r.f64s(count)?, layout.clone())?;
            pairs.push(ExpertPair {
                theta0,
                theta_f,
                expert_index,
                train_loss_final,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} trailing bytes after the last expert record",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            pairs,
            arch,
            spec,
            channels,
            fingerprint,
            train_config: None,
            master_seed,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or(Error::TruncatedFile)?;
        let out = self.bytes.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(8).ok_or(Error::TruncatedFile)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Trains `k` experts from independent initializations on every window of
/// `train`. Expert `i` draws its initialization from `derive_seed(master, i)`
/// and its batch order from a second mix of that seed, so the result does not
/// depend on scheduling.
pub fn generate_buffer(
    train_series: &TimeSeries,
    spec: WindowSpec,
    arch: Architecture,
    k: usize,
    cfg: &TrainConfig,
    master_seed: u64,
) -> Result<ExpertBuffer> {
    if k == 0 {
        return Err(Error::InvalidArgument("buffer needs at least one expert".into()));
    }
    cfg.validate()?;
    let pairs = windows(train_series.values.view(), spec)?;
    let experts: Result<Vec<ExpertPair>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let attribute = |source: Error| Error::Expert {
                index: i,
                source: Box::new(source),
            };
            let model = init_params(arch, spec, seed).map_err(attribute)?;
            let outcome = train(&model, &pairs, &cfg.with_seed(splitmix64(seed))).map_err(attribute)?;
            let theta0 = model.flatten();
            let theta_f = outcome.model.flatten();
            if theta0.squared_distance(&theta_f)? == 0.0 {
                return Err(attribute(Error::DegenerateExpert));
            }
            Ok(ExpertPair {
                theta0,
                theta_f,
                expert_index: i,
                train_loss_final: outcome.final_loss().unwrap_or(f64::NAN),
            })
        })
        .collect();
    Ok(ExpertBuffer {
        pairs: experts?,
        arch,
        spec: spec.with_stride(1),
        channels: train_series.channels(),
        fingerprint: train_series.fingerprint(),
        train_config: Some(*cfg),
        master_seed,
    })
}

pub fn save_buffer(buf: &ExpertBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, buf.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_buffer(path: impl AsRef<Path>) -> Result<ExpertBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ExpertBuffer::from_bytes(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// Mean over synthetic windows of the mean pairwise expert prediction distance.
    pub mean_pairwise_distance: f64,
    /// Largest per-window mean pairwise distance.
    pub max_pairwise_distance: f64,
    /// Mean Frobenius norm of one expert prediction, for scale.
    pub mean_prediction_norm: f64,
}

impl ConsistencyReport {
    pub fn relative_spread(&self) -> f64 {
        self.mean_pairwise_distance / self.mean_prediction_norm
    }
}

/// How closely the trained experts agree on the synthetic inputs.
pub fn expert_consistency(buf: &ExpertBuffer, s: &SyntheticSeries, spec: WindowSpec) -> Result<ConsistencyReport> {
    if buf.len() < 2 {
        return Err(Error::SingleExpert);
    }
    let experts: Vec<Forecaster> = (0..buf.len()).map(|i| buf.expert_model(i)).collect::<Result<_>>()?;
    let wins = windows(s.values.view(), spec)?;
    let mut sum_mean = 0.0;
    let mut max_mean = 0.0f64;
    let mut norm_sum = 0.0;
    for w in &wins {
        let preds: Vec<_> = experts
            .iter()
            .map(|e| e.forward(w.input.view()))
            .collect::<Result<_>>()?;
        let mut dist = 0.0;
        let mut count = 0usize;
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                dist += (&preds[i] - &preds[j]).iter().map(|d| d * d).sum::<f64>().sqrt();
                count += 1;
            }
        }
        let mean = dist / count as f64;
        sum_mean += mean;
        max_mean = max_mean.max(mean);
        norm_sum += preds
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>();
    }
    let windows_count = wins.len() as f64;
    Ok(ConsistencyReport {
        mean_pairwise_distance: sum_mean / windows_count,
        max_pairwise_distance: max_mean,
        mean_prediction_norm: norm_sum / (windows_count * experts.len() as f64),
    })
}
