//! Run configuration: a sectioned `key = value` file plus dotted overrides.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment            (also after a value: key = 3  # note)
//! [section]            (starts a section)
//! key = value          (key inside the current section)
//! section.key = value  (fully qualified key, valid anywhere)
//! ```
//!
//! Values are bare or double-quoted. Booleans are `true`/`false`.
//! Precedence is command line over file over defaults, and every problem is
//! reported together rather than stopping at the first.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::condense::CondenseConfig;
use crate::data::WindowSpec;
use crate::error::{Error, Result};
use crate::forecaster::{ArchKind, Architecture, BatchSize, Optimizer, TrainConfig};
use crate::unroll::UnrollConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax {
        line: usize,
        msg: String,
    },
    UnknownKey(String),
    TypeError {
        key: String,
        expected: &'static str,
        value: String,
    },
    ValidationError {
        key: String,
        reason: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            ConfigError::UnknownKey(k) => write!(f, "unknown key {k:?}"),
            ConfigError::TypeError { key, expected, value } => {
                write!(f, "{key}: expected {expected}, got {value:?}")
            }
            ConfigError::ValidationError { key, reason } => write!(f, "{key}: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub split_ratio: f64,
    pub m: usize,
    pub n: usize,
    pub strict: bool,
    /// Excluded from the values when present in the header.
    pub date_column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kernel: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferSection {
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondenseSection {
    pub e: usize,
    pub g: usize,
    pub beta: f64,
    pub n: usize,
    pub alpha: f64,
    /// Defaults to the horizon when unset.
    pub pair_stride: Option<usize>,
    pub outer_lr: f64,
    pub outer_momentum: f64,
    pub l: usize,
    pub condtsf: bool,
    pub eval_every: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub arch: ArchKind,
    pub trials: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub buffer: BufferSection,
    pub condense: CondenseSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cond = CondenseConfig::default();
        let unroll = UnrollConfig::default();
        let expert = TrainConfig::expert_default();
        let test = TrainConfig::test_model_default();
        Self {
            data: DataSection {
                path: None,
                split_ratio: 0.7,
                m: 24,
                n: 24,
                strict: false,
                date_column: "date".into(),
            },
            model: ModelSection {
                kernel: crate::forecaster::DEFAULT_KERNEL,
                hidden: crate::forecaster::DEFAULT_HIDDEN,
            },
            buffer: BufferSection {
                k: crate::buffer::DEFAULT_EXPERTS,
                epochs: expert.epochs,
                lr: expert.learning_rate,
                batch: 32,
                seed: 0,
                out: None,
            },
            condense: CondenseSection {
                e: cond.epochs,
                g: cond.gap,
                beta: cond.beta,
                n: unroll.steps,
                alpha: unroll.alpha,
                pair_stride: None,
                outer_lr: cond.outer_lr,
                outer_momentum: cond.outer_momentum,
                l: cond.synthetic_len,
                condtsf: cond.condtsf,
                eval_every: cond.eval_every,
                seed: cond.seed,
                out: None,
            },
            eval: EvalSection {
                arch: ArchKind::Linear,
                trials: crate::eval::DEFAULT_TRIALS,
                steps: test.epochs,
                lr: test.learning_rate,
                seed: 0,
            },
        }
    }
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "data.path",
    "data.split_ratio",
    "data.m",
    "data.n",
    "data.strict",
    "data.date_column",
    "model.kernel",
    "model.hidden",
    "buffer.k",
    "buffer.epochs",
    "buffer.lr",
    "buffer.batch",
    "buffer.seed",
    "buffer.out",
    "condense.E",
    "condense.G",
    "condense.beta",
    "condense.N",
    "condense.alpha",
    "condense.pair_stride",
    "condense.outer_lr",
    "condense.outer_momentum",
    "condense.L",
    "condense.condtsf",
    "condense.eval_every",
    "condense.seed",
    "condense.out",
    "eval.arch",
    "eval.trials",
    "eval.steps",
    "eval.lr",
    "eval.seed",
];

fn type_err(key: &str, expected: &'static str, value: &str) -> ConfigError {
    ConfigError::TypeError {
        key: key.to_owned(),
        expected,
        value: value.to_owned(),
    }
}

fn parse_num<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> std::result::Result<T, ConfigError> {
    value.parse().map_err(|_| type_err(key, expected, value))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(type_err(key, "boolean", value)),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one fully qualified key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ConfigError> {
        const INT: &str = "non-negative integer";
        const REAL: &str = "real number";
        match key {
            "data.path" => self.data.path = opt_path(value),
            "data.split_ratio" => self.data.split_ratio = parse_num(key, value, REAL)?,
            "data.m" => self.data.m = parse_num(key, value, INT)?,
            "data.n" => self.data.n = parse_num(key, value, INT)?,
            "data.strict" => self.data.strict = parse_bool(key, value)?,
            "data.date_column" => self.data.date_column = value.to_owned(),
            "model.kernel" => self.model.kernel = parse_num(key, value, INT)?,
            "model.hidden" => self.model.hidden = parse_num(key, value, INT)?,
            "buffer.k" => self.buffer.k = parse_num(key, value, INT)?,
            "buffer.epochs" => self.buffer.epochs = parse_num(key, value, INT)?,
            "buffer.lr" => self.buffer.lr = parse_num(key, value, REAL)?,
            "buffer.batch" => self.buffer.batch = parse_num(key, value, INT)?,
            "buffer.seed" => self.buffer.seed = parse_num(key, value, INT)?,
            "buffer.out" => self.buffer.out = opt_path(value),
            "condense.E" => self.condense.e = parse_num(key, value, INT)?,
            "condense.G" => self.condense.g = parse_num(key, value, INT)?,
            "condense.beta" => self.condense.beta = parse_num(key, value, REAL)?,
            "condense.N" => self.condense.n = parse_num(key, value, INT)?,
            "condense.alpha" => self.condense.alpha = parse_num(key, value, REAL)?,
            "condense.pair_stride" => {
                self.condense.pair_stride = if value.is_empty() {
                    None
                } else {
                    Some(parse_num(key, value, INT)?)
                }
            }
            "condense.outer_lr" => self.condense.outer_lr = parse_num(key, value, REAL)?,
            "condense.outer_momentum" => self.condense.outer_momentum = parse_num(key, value, REAL)?,
            "condense.L" => self.condense.l = parse_num(key, value, INT)?,
            "condense.condtsf" => self.condense.condtsf = parse_bool(key, value)?,
            "condense.eval_every" => self.condense.eval_every = parse_num(key, value, INT)?,
            "condense.seed" => self.condense.seed = parse_num(key, value, INT)?,
            "condense.out" => self.condense.out = opt_path(value),
            "eval.arch" => self.eval.arch = value.parse().map_err(|_| type_err(key, "linear or mlp", value))?,
            "eval.trials" => self.eval.trials = parse_num(key, value, INT)?,
            "eval.steps" => self.eval.steps = parse_num(key, value, INT)?,
            "eval.lr" => self.eval.lr = parse_num(key, value, REAL)?,
            "eval.seed" => self.eval.seed = parse_num(key, value, INT)?,
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Textual value of one key, as it would be written to a file.
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "data.path" => path(&self.data.path),
            "data.split_ratio" => self.data.split_ratio.to_string(),
            "data.m" => self.data.m.to_string(),
            "data.n" => self.data.n.to_string(),
            "data.strict" => self.data.strict.to_string(),
            "data.date_column" => self.data.date_column.clone(),
            "model.kernel" => self.model.kernel.to_string(),
            "model.hidden" => self.model.hidden.to_string(),
            "buffer.k" => self.buffer.k.to_string(),
            "buffer.epochs" => self.buffer.epochs.to_string(),
            "buffer.lr" => self.buffer.lr.to_string(),
            "buffer.batch" => self.buffer.batch.to_string(),
            "buffer.seed" => self.buffer.seed.to_string(),
            "buffer.out" => path(&self.buffer.out),
            "condense.E" => self.condense.e.to_string(),
            "condense.G" => self.condense.g.to_string(),
            "condense.beta" => self.condense.beta.to_string(),
            "condense.N" => self.condense.n.to_string(),
            "condense.alpha" => self.condense.alpha.to_string(),
            "condense.pair_stride" => self.condense.pair_stride.map(|v| v.to_string()).unwrap_or_default(),
            "condense.outer_lr" => self.condense.outer_lr.to_string(),
            "condense.outer_momentum" => self.condense.outer_momentum.to_string(),
            "condense.L" => self.condense.l.to_string(),
            "condense.condtsf" => self.condense.condtsf.to_string(),
            "condense.eval_every" => self.condense.eval_every.to_string(),
            "condense.seed" => self.condense.seed.to_string(),
            "condense.out" => path(&self.condense.out),
            "eval.arch" => self.eval.arch.to_string(),
            "eval.trials" => self.eval.trials.to_string(),
            "eval.steps" => self.eval.steps.to_string(),
            "eval.lr" => self.eval.lr.to_string(),
            "eval.seed" => self.eval.seed.to_string(),
            _ => return None,
        })
    }

    /// Every constraint the modules will enforce, checked up front.
    pub fn validate(&self) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, key: &str, reason: &str| {
            if !ok {
                errs.push(ConfigError::ValidationError {
                    key: key.to_owned(),
                    reason: reason.to_owned(),
                });
            }
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();
        check(
            self.data.split_ratio > 0.0 && self.data.split_ratio < 1.0,
            "data.split_ratio",
            "must be in (0,1)",
        );
        check(self.data.m >= 1, "data.m", "must be at least 1");
        check(self.data.n >= 1, "data.n", "must be at least 1");
        check(self.model.kernel % 2 == 1, "model.kernel", "must be odd and positive");
        check(self.model.hidden >= 1, "model.hidden", "must be at least 1");
        check(self.buffer.k >= 1, "buffer.k", "must be at least 1");
        check(self.buffer.epochs >= 1, "buffer.epochs", "must be at least 1");
        check(positive(self.buffer.lr), "buffer.lr", "must be positive");
        check(self.buffer.batch >= 1, "buffer.batch", "must be at least 1");
        check(self.condense.e >= 1, "condense.E", "must be at least 1");
        check(self.condense.g >= 1, "condense.G", "must be at least 1");
        check(
            self.condense.beta > 0.0 && self.condense.beta < 1.0,
            "condense.beta",
            "must be in (0,1)",
        );
        check(self.condense.n >= 1, "condense.N", "must be at least 1");
        check(positive(self.condense.alpha), "condense.alpha", "must be positive");
        check(
            self.condense.pair_stride != Some(0),
            "condense.pair_stride",
            "must be at least 1",
        );
        check(
            positive(self.condense.outer_lr),
            "condense.outer_lr",
            "must be positive",
        );
        check(
            (0.0..1.0).contains(&self.condense.outer_momentum),
            "condense.outer_momentum",
            "must be in [0,1)",
        );
        check(
            self.condense.l >= self.data.m + self.data.n,
            "condense.L",
            "must be at least m + n",
        );
        check(self.eval.trials >= 1, "eval.trials", "must be at least 1");
        check(positive(self.eval.lr), "eval.lr", "must be positive");
        errs
    }

    /// Manifest-style text with every resolved key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let (sec, name) = key.split_once('.').expect("qualified key");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let value = self.get(key).expect("known key");
            if value.is_empty() || value.contains(char::is_whitespace) || value.contains('#') {
                let _ = writeln!(out, "{name} = \"{value}\"");
            } else {
                let _ = writeln!(out, "{name} = {value}");
            }
        }
        out
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            lookback: self.data.m,
            horizon: self.data.n,
            stride: 1,
        }
    }

    pub fn expert_arch(&self) -> Architecture {
        Architecture::Linear {
            kernel: self.model.kernel,
        }
    }

    pub fn eval_arch(&self) -> Architecture {
        match self.eval.arch {
            ArchKind::Linear => Architecture::Linear {
                kernel: self.model.kernel,
            },
            ArchKind::Mlp => Architecture::Mlp {
                hidden: self.model.hidden,
            },
        }
    }

    /// Schedule for experts and for the full-data reference models.
    pub fn expert_train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: self.buffer.lr,
            epochs: self.buffer.epochs,
            batch_size: BatchSize::Size(self.buffer.batch),
            seed: self.buffer.seed,
        }
    }

    /// Schedule for test models trained on synthetic series.
    pub fn eval_train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: self.eval.lr,
            epochs: self.eval.steps,
            batch_size: BatchSize::Full,
            seed: self.eval.seed,
        }
    }

    pub fn condense_config(&self) -> CondenseConfig {
        CondenseConfig {
            epochs: self.condense.e,
            gap: self.condense.g,
            beta: self.condense.beta,
            unroll: UnrollConfig {
                steps: self.condense.n,
                alpha: self.condense.alpha,
                pair_stride: self.condense.pair_stride.unwrap_or(self.data.n),
            },
            outer_lr: self.condense.outer_lr,
            outer_momentum: self.condense.outer_momentum,
            synthetic_len: self.condense.l,
            condtsf: self.condense.condtsf,
            eval_every: self.condense.eval_every,
            seed: self.condense.seed,
        }
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses file text into ordered `(qualified key, value)` entries.
pub fn parse_entries(text: &str) -> (Vec<(String, String)>, Vec<ConfigError>) {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = Some(name.trim().to_owned()),
                _ => errors.push(ConfigError::Syntax {
                    line: i + 1,
                    msg: format!("malformed section header {line:?}"),
                }),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            });
            continue;
        };
        let key = key.trim();
        let value = unquote(value.trim()).to_owned();
        let qualified = match (&section, key.contains('.')) {
            (_, true) => key.to_owned(),
            (Some(sec), false) => format!("{sec}.{key}"),
            (None, false) => {
                errors.push(ConfigError::UnknownKey(key.to_owned()));
                continue;
            }
        };
        entries.push((qualified, value));
    }
    (entries, errors)
}

/// Resolves defaults, then the file (if any), then `section.key=value` overrides.
pub fn parse_config(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match file {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
        None => None,
    };
    parse_config_str(text.as_deref(), overrides)
}

pub fn parse_config_str(file_text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut errors = Vec::new();
    let mut entries = Vec::new();
    if let Some(text) = file_text {
        let (e, errs) = parse_entries(text);
        entries.extend(e);
        errors.extend(errs);
    }
    for o in overrides {
        match o.split_once('=') {
            Some((k, v)) => entries.push((k.trim().to_owned(), unquote(v.trim()).to_owned())),
            None => errors.push(ConfigError::Syntax {
                line: 0,
                msg: format!("override {o:?} is not key=value"),
            }),
        }
    }
    for (key, value) in &entries {
        if let Err(e) = cfg.set(key, value) {
            errors.push(e);
        }
    }
    errors.extend(cfg.validate());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(r: Result<RunConfig>) -> Vec<ConfigError> {
        match r {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn defaults() {
        let cfg = parse_config_str(None, &[]).unwrap();
        assert_eq!((cfg.data.m, cfg.data.n), (24, 24));
        assert_eq!(cfg.condense.l, 48);
        assert_eq!(cfg.condense.beta, 0.01);
        assert_eq!(cfg.condense.g, 3);
        assert_eq!(cfg.eval.trials, 5);
        assert_eq!(cfg.condense_config().unroll.pair_stride, 24);
    }

    #[test]
    fn beta_out_of_range() {
        let errs = errors(parse_config_str(None, &["condense.beta=1.5".into()]));
        assert_eq!(
            errs,
            vec![ConfigError::ValidationError {
                key: "condense.beta".into(),
                reason: "must be in (0,1)".into()
            }]
        );
    }

    #[test]
    fn command_line_wins() {
        let cfg = parse_config_str(Some("[condense]\nG = 5\n"), &["condense.G=7".into()]).unwrap();
        assert_eq!(cfg.condense.g, 7);
        let cfg = parse_config_str(Some("[condense]\nG = 5\n"), &[]).unwrap();
        assert_eq!(cfg.condense.g, 5);
    }

    #[test]
    fn all_errors_collected() {
        let text = "[data]\nm = many\nbogus = 1\n[eval]\narch = lstm\nnot a line\n";
        let errs = errors(parse_config_str(Some(text), &["condense.beta=x".into()]));
        assert_eq!(errs.len(), 5, "{errs:?}");
        assert!(errs.contains(&ConfigError::UnknownKey("data.bogus".into())));
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigError::TypeError { key, .. } if key == "data.m")));
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigError::TypeError { key, .. } if key == "eval.arch")));
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigError::TypeError { key, .. } if key == "condense.beta")));
        assert!(errs.iter().any(|e| matches!(e, ConfigError::Syntax { line: 6, .. })));
    }

    #[test]
    fn validation_errors_collected() {
        let errs = errors(parse_config_str(
            None,
            &["condense.G=0".into(), "model.kernel=4".into(), "condense.L=10".into()],
        ));
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse_config_str(
            Some("data.path = \"/tmp/with space.csv\"  # trailing\n[condense]\nbeta = 0.05\ncondtsf = false\n"),
            &[],
        )
        .unwrap();
        assert_eq!(cfg.data.path.as_deref(), Some(Path::new("/tmp/with space.csv")));
        let again = parse_config_str(Some(&cfg.to_text()), &[]).unwrap();
        assert_eq!(again, cfg);
    }
}
