//! Command implementations behind the `tscond` binary.
//!
//! Every command that produces artifacts also writes `<artifact>.manifest`:
//! the fully resolved configuration followed by `# artifact` lines carrying
//! SHA-256 digests of what was written. A manifest is itself a valid config
//! file, so passing it back through `--config` repeats the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::buffer::{generate_buffer, load_buffer, save_buffer, ExpertBuffer};
use crate::condense::{distill, random_baseline, MetricsLog, TestProbe};
use crate::config::RunConfig;
use crate::data::{
    load_csv, read_series_csv, split_normalize, write_series_csv, CsvOptions, SeriesOrigin, SplitDataset,
    SyntheticSeries,
};
use crate::error::Error;
use crate::eval::{comparison_table, evaluate_full, evaluate_synthetic, EvalReport};

/// Loads `data.path` and splits it; the date column is dropped when the header has one.
pub fn load_dataset(cfg: &RunConfig) -> Result<SplitDataset> {
    let path = cfg
        .data
        .path
        .as_ref()
        .context("no dataset given (use --data or data.path)")?;
    let with_date = CsvOptions {
        has_header: true,
        date_column: Some(cfg.data.date_column.clone()),
    };
    let ts = match load_csv(path, &with_date) {
        Err(Error::ColumnNotFound(_)) => load_csv(
            path,
            &CsvOptions {
                has_header: true,
                date_column: None,
            },
        ),
        other => other,
    }
    .with_context(|| format!("loading {}", path.display()))?;
    Ok(split_normalize(
        &ts,
        cfg.data.split_ratio,
        cfg.window_spec(),
        cfg.data.strict,
    )?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Writes the manifest for `command` next to `primary`.
pub fn write_manifest(primary: &Path, command: &str, cfg: &RunConfig, artifacts: &[(&str, &Path)]) -> Result<PathBuf> {
    let mut text = String::new();
    let _ = writeln!(text, "# tscond {command} manifest");
    text.push_str(&cfg.to_text());
    text.push('\n');
    for (label, path) in artifacts {
        let _ = writeln!(
            text,
            "# artifact {label} {} sha256={}",
            path.display(),
            sha256_file(path)?
        );
    }
    let out = manifest_path(primary);
    fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(out)
}

/// Generates experts on the train split and saves them to `buffer.out`.
pub fn run_buffer(cfg: &RunConfig) -> Result<ExpertBuffer> {
    let out = cfg
        .buffer
        .out
        .clone()
        .context("no buffer output path (use --out or buffer.out)")?;
    let split = load_dataset(cfg)?;
    let buf = generate_buffer(
        &split.train,
        cfg.window_spec(),
        cfg.expert_arch(),
        cfg.buffer.k,
        &cfg.expert_train_config(),
        cfg.buffer.seed,
    )?;
    save_buffer(&buf, &out)?;
    write_manifest(&out, "buffer", cfg, &[("buffer", &out)])?;
    Ok(buf)
}

pub fn open_buffer(cfg: &RunConfig, split: &SplitDataset) -> Result<ExpertBuffer> {
    let path = cfg
        .buffer
        .out
        .as_ref()
        .context("no buffer given (use --buffer or buffer.out)")?;
    let buf = load_buffer(path).with_context(|| format!("loading buffer {}", path.display()))?;
    buf.check_fingerprint(&split.train, true)
        .with_context(|| format!("buffer {} was generated from different data", path.display()))?;
    if buf.spec.lookback != cfg.data.m || buf.spec.horizon != cfg.data.n {
        bail!(
            "buffer was generated for m={}, n={} but the config asks for m={}, n={}",
            buf.spec.lookback,
            buf.spec.horizon,
            cfg.data.m,
            cfg.data.n
        );
    }
    Ok(buf)
}

fn distill_with(cfg: &RunConfig, split: &SplitDataset, buf: &ExpertBuffer) -> Result<(SyntheticSeries, MetricsLog)> {
    let probe = TestProbe {
        test: split.test.values.view(),
        arch: cfg.eval_arch(),
        trials: 1,
        train: cfg.eval_train_config(),
        seed: cfg.eval.seed,
    };
    let probe = (cfg.condense.eval_every > 0).then_some(&probe);
    Ok(distill(buf, &split.train, &cfg.condense_config(), probe)?)
}

/// Default metrics path: `<synthetic stem>.metrics.csv` beside the synthetic CSV.
pub fn default_metrics_path(synthetic: &Path) -> PathBuf {
    let stem = synthetic
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    synthetic.with_file_name(format!("{stem}.metrics.csv"))
}

/// Distills the train split and writes the synthetic series, the metrics log and a manifest.
pub fn run_distill(cfg: &RunConfig, metrics_out: Option<&Path>) -> Result<(SyntheticSeries, MetricsLog)> {
    let out = cfg
        .condense
        .out
        .clone()
        .context("no synthetic output path (use --out-synthetic or condense.out)")?;
    let metrics_out = metrics_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_metrics_path(&out));
    let split = load_dataset(cfg)?;
    let buf = open_buffer(cfg, &split)?;
    let (s, log) = distill_with(cfg, &split, &buf)?;
    write_series_csv(&out, s.values.view(), &split.train.channel_names)?;
    log.write_csv(&metrics_out)?;
    write_manifest(&out, "distill", cfg, &[("synthetic", &out), ("metrics", &metrics_out)])?;
    Ok((s, log))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalTarget {
    Synthetic(PathBuf),
    Random,
    Full,
}

/// Row label for a synthetic CSV: taken from its distill manifest when present.
pub fn infer_label(synthetic: &Path) -> String {
    let manifest = manifest_path(synthetic);
    if let Ok(text) = fs::read_to_string(manifest) {
        let (entries, _) = crate::config::parse_entries(&text);
        if let Some((_, v)) = entries.iter().rev().find(|(k, _)| k == "condense.condtsf") {
            return if v == "true" { "MTT+CondTSF" } else { "MTT" }.to_owned();
        }
    }
    synthetic
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".into())
}

pub fn run_eval(cfg: &RunConfig, target: &EvalTarget, out: &Path, label: Option<&str>) -> Result<EvalReport> {
    let split = load_dataset(cfg)?;
    let spec = cfg.window_spec();
    let arch = cfg.eval_arch();
    let report = match target {
        EvalTarget::Full => evaluate_full(
            &split,
            arch,
            spec,
            cfg.eval.trials,
            &cfg.expert_train_config(),
            cfg.eval.seed,
        )?,
        EvalTarget::Random => {
            let s = random_baseline(&split.train, cfg.condense.l, cfg.condense.seed)?;
            evaluate_synthetic(
                &s,
                &split,
                arch,
                spec,
                cfg.eval.trials,
                &cfg.eval_train_config(),
                cfg.eval.seed,
                "Random",
            )?
        }
        EvalTarget::Synthetic(path) => {
            let ts = read_series_csv(path).with_context(|| format!("loading synthetic series {}", path.display()))?;
            if ts.channels() != split.train.channels() {
                bail!(
                    "synthetic series has {} channels, dataset has {}",
                    ts.channels(),
                    split.train.channels()
                );
            }
            let s = SyntheticSeries {
                values: ts.values,
                origin: SeriesOrigin::Distilled,
                seed: cfg.condense.seed,
            };
            let inferred = infer_label(path);
            evaluate_synthetic(
                &s,
                &split,
                arch,
                spec,
                cfg.eval.trials,
                &cfg.eval_train_config(),
                cfg.eval.seed,
                label.unwrap_or(&inferred),
            )?
        }
    };
    let mut report = report;
    if let Some(l) = label {
        report.origin = l.to_owned();
    }
    report.write_csv(out)?;
    write_manifest(out, "eval", cfg, &[("report", out)])?;
    Ok(report)
}

/// One sweep axis: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `"G=1,3,5;beta=0.01,0.05"`. Bare names refer to the `condense` section.
pub fn parse_grid(grid: &str) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for part in grid.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = part
            .split_once('=')
            .with_context(|| format!("grid axis {part:?} is not key=v1,v2,..."))?;
        let name = name.trim().to_owned();
        let key = if name.contains('.') {
            name.clone()
        } else {
            format!("condense.{name}")
        };
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_owned())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            bail!("grid axis {name:?} has no values");
        }
        axes.push(GridAxis { name, key, values });
    }
    if axes.is_empty() {
        bail!("empty grid");
    }
    Ok(axes)
}

/// Cartesian product in row-major order (last axis fastest).
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<String>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut cell = prefix.clone();
                    cell.push(v.clone());
                    cell
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    pub mean_mae: f64,
    pub mean_mse: f64,
}

/// Distills and evaluates every grid cell; cells are independent and run in parallel.
pub fn run_sweep(cfg: &RunConfig, axes: &[GridAxis], out: &Path) -> Result<Vec<SweepRow>> {
    let split = load_dataset(cfg)?;
    let buf = open_buffer(cfg, &split)?;
    let cells = grid_cells(axes);
    let mut configs = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut c = cfg.clone();
        for (axis, value) in axes.iter().zip(cell) {
            c.set(&axis.key, value).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        let errs = c.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs).into());
        }
        configs.push(c);
    }
    let rows: Result<Vec<SweepRow>> = configs
        .par_iter()
        .zip(&cells)
        .map(|(c, cell)| {
            let (s, _) = distill_with(c, &split, &buf)?;
            let report = evaluate_synthetic(
                &s,
                &split,
                c.eval_arch(),
                c.window_spec(),
                c.eval.trials,
                &c.eval_train_config(),
                c.eval.seed,
                "sweep",
            )?;
            Ok(SweepRow {
                values: cell.clone(),
                mean_mae: report.mean_mae,
                mean_mse: report.mean_mse,
            })
        })
        .collect();
    let rows = rows?;
    let mut text = axes.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(",");
    text.push_str(",mean_mae,mean_mse\n");
    for row in &rows {
        let _ = writeln!(
            text,
            "{},{:.16e},{:.16e}",
            row.values.join(","),
            row.mean_mae,
            row.mean_mse
        );
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    write_manifest(out, "sweep", cfg, &[("sweep", out)])?;
    Ok(rows)
}

/// Merges eval reports into one comparison table, optionally saved as CSV.
pub fn run_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<String> {
    if inputs.is_empty() {
        bail!("no eval reports given");
    }
    let reports: Vec<EvalReport> = inputs
        .iter()
        .map(|p| EvalReport::read_csv(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let table = comparison_table(&reports);
    if let Some(out) = out {
        let mut text = String::from("method,dataset,arch,trials,mean_mae,std_mae,mean_mse,std_mse\n");
        for r in &reports {
            let _ = writeln!(
                text,
                "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.origin,
                r.dataset_id,
                r.arch,
                r.trials.len(),
                r.mean_mae,
                r.std_mae,
                r.mean_mse,
                r.std_mse
            );
        }
        fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_and_cardinality() {
        let axes = parse_grid("G=1,3,5;beta=0.01,0.05").unwrap();
        assert_eq!(axes[0].key, "condense.G");
        assert_eq!(axes[1].key, "condense.beta");
        let cells = grid_cells(&axes);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], vec!["1".to_string(), "0.05".to_string()]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("G").is_err());
        assert!(parse_grid("G=").is_err());
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("out/s.csv")),
            PathBuf::from("out/s.csv.manifest")
        );
        assert_eq!(
            default_metrics_path(Path::new("out/s.csv")),
            PathBuf::from("out/s.metrics.csv")
        );
    }
}
