#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscond::data::{load_csv, CsvOptions, TimeSeries};

/// `TSCOND_ETTH2`, else `data/ETTh2.csv` at the workspace root.
pub fn etth2_path() -> Option<PathBuf> {
    let candidate = std::env::var_os("TSCOND_ETTH2")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ETTh2.csv"));
    candidate.is_file().then_some(candidate)
}

pub fn load_etth2() -> Option<TimeSeries> {
    let path = etth2_path()?;
    let opts = CsvOptions {
        has_header: true,
        date_column: Some("date".into()),
    };
    Some(load_csv(&path, &opts).expect("ETTh2 file exists but does not parse"))
}

/// Hourly series shaped like the ETT transformer data: seven channels sharing
/// daily and weekly cycles, a slowly drifting level and AR(1) noise.
pub fn ett_like(rows: usize, seed: u64) -> TimeSeries {
    const CHANNELS: usize = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<[f64; 4]> = (0..CHANNELS)
        .map(|_| {
            [
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.2..0.6),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let mut level = 0.0;
    let mut noise = [0.0; CHANNELS];
    let mut values = Array2::zeros((rows, CHANNELS));
    for t in 0..rows {
        level += rng.gen_range(-0.05..0.05) - 0.001 * level;
        let day = (t as f64) * std::f64::consts::TAU / 24.0;
        let week = (t as f64) * std::f64::consts::TAU / 168.0;
        for c in 0..CHANNELS {
            let [a_day, a_week, a_level, phase] = mix[c];
            noise[c] = 0.8 * noise[c] + rng.gen_range(-0.3..0.3);
            values[[t, c]] =
                a_day * (day + phase).sin() + a_week * (week + 0.5 * phase).sin() + a_level * level + noise[c];
        }
    }
    let names = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]
        .map(String::from)
        .to_vec();
    TimeSeries::new(values, names, "ETTh2-surrogate").unwrap()
}

/// Two-channel sinusoid with mild noise.
pub fn sinusoid(rows: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((rows, 2), |(t, c)| {
        let t = t as f64;
        (t * std::f64::consts::TAU / 24.0 + c as f64).sin()
            + 0.5 * (t * std::f64::consts::TAU / 60.0).cos()
            + rng.gen_range(-0.05..0.05)
    });
    TimeSeries::new(values, vec!["a".into(), "b".into()], "sinusoid").unwrap()
}

use tscond::buffer::{generate_buffer, ExpertBuffer};
use tscond::condense::{distill, random_baseline, MetricsLog};
use tscond::config::RunConfig;
use tscond::data::{split_normalize, SplitDataset};
use tscond::eval::{evaluate_full, evaluate_synthetic, EvalReport};

pub struct Protocol {
    pub random: EvalReport,
    pub mtt: EvalReport,
    pub condtsf: EvalReport,
    pub full: EvalReport,
    pub mtt_log: MetricsLog,
    pub condtsf_log: MetricsLog,
}

/// Buffer, two distillations (with and without label updates) and the four
/// evaluation rows, all under `cfg`.
pub fn run_protocol(ts: &TimeSeries, cfg: &RunConfig) -> Protocol {
    let spec = cfg.window_spec();
    let split = split_normalize(ts, cfg.data.split_ratio, spec, false).unwrap();
    let buffer = generate_buffer(
        &split.train,
        spec,
        cfg.expert_arch(),
        cfg.buffer.k,
        &cfg.expert_train_config(),
        cfg.buffer.seed,
    )
    .unwrap();
    run_protocol_with(&split, &buffer, cfg)
}

pub fn run_protocol_with(split: &SplitDataset, buffer: &ExpertBuffer, cfg: &RunConfig) -> Protocol {
    let spec = cfg.window_spec();

    let run = |condtsf: bool| {
        let mut c = cfg.condense_config();
        c.condtsf = condtsf;
        distill(buffer, &split.train, &c, None).unwrap()
    };
    let (s_mtt, mtt_log) = run(false);
    let (s_cond, condtsf_log) = run(true);

    let arch = cfg.eval_arch();
    let tc = cfg.eval_train_config();
    let trials = cfg.eval.trials;
    let random_s = random_baseline(&split.train, cfg.condense.l, cfg.condense.seed).unwrap();
    let random = evaluate_synthetic(&random_s, split, arch, spec, trials, &tc, cfg.eval.seed, "Random").unwrap();
    let mtt = evaluate_synthetic(&s_mtt, split, arch, spec, trials, &tc, cfg.eval.seed, "MTT").unwrap();
    let condtsf = evaluate_synthetic(&s_cond, split, arch, spec, trials, &tc, cfg.eval.seed, "MTT+CondTSF").unwrap();
    let full = evaluate_full(split, arch, spec, trials, &cfg.expert_train_config(), cfg.eval.seed).unwrap();
    Protocol {
        random,
        mtt,
        condtsf,
        full,
        mtt_log,
        condtsf_log,
    }
}

/// Writes `ts` as an ETT-style CSV with a leading `date` column.
pub fn write_dated_csv(ts: &TimeSeries, path: &std::path::Path) {
    use std::fmt::Write as _;
    let mut text = String::from("date");
    for name in &ts.channel_names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (t, row) in ts.values.rows().into_iter().enumerate() {
        let _ = write!(text, "2016-07-{:02} {:02}:00:00", 1 + t / 24 % 28, t % 24);
        for v in row {
            let _ = write!(text, ",{v:.17e}");
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
