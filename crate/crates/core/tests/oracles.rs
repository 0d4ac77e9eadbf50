use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscond::data::{windows, SeriesOrigin, SyntheticSeries, WindowSpec};
use tscond::forecaster::{init_params, train, Architecture, BatchSize, Forecaster, Optimizer, TrainConfig};
use tscond::unroll::{fd_check, grad_synthetic, student_unroll, trajectory_loss, UnrollConfig};

fn random_series(len: usize, channels: usize, seed: u64) -> SyntheticSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SyntheticSeries {
        values: Array2::from_shape_fn((len, channels), |_| rng.gen_range(-1.0..1.0)),
        origin: SeriesOrigin::Distilled,
        seed,
    }
}

fn toy_params(
    arch: Architecture,
    spec: WindowSpec,
) -> (tscond::forecaster::ParamVector, tscond::forecaster::ParamVector) {
    let theta0 = init_params(arch, spec, 11).unwrap().flatten();
    let theta_f = init_params(arch, spec, 12).unwrap().flatten();
    (theta0, theta_f)
}

#[test]
fn hypergradient_matches_finite_differences() {
    let spec = WindowSpec::new(4, 4, 1).unwrap();
    let arch = Architecture::Linear { kernel: 3 };
    let (theta0, theta_f) = toy_params(arch, spec);
    let s = random_series(48, 2, 5);
    let cfg = UnrollConfig {
        steps: 3,
        alpha: 0.01,
        pair_stride: 4,
    };
    let worst = fd_check(&s, &theta0, &theta_f, arch, spec, &cfg, 1e-5).unwrap();
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn overlapping_input_and_target_rows_accumulate() {
    // stride 4 with m = n = 4: rows 4..8 are the target of pair 0 and the input of pair 1
    let spec = WindowSpec::new(4, 4, 1).unwrap();
    let arch = Architecture::Linear { kernel: 3 };
    let (theta0, theta_f) = toy_params(arch, spec);
    let s = random_series(12, 1, 6);
    let cfg = UnrollConfig {
        steps: 4,
        alpha: 0.05,
        pair_stride: 4,
    };
    let (_, tape) = student_unroll(&theta0, &s, arch, spec, &cfg).unwrap();
    assert_eq!(tape.pair_starts(), &[0, 4]);
    let worst = fd_check(&s, &theta0, &theta_f, arch, spec, &cfg, 1e-5).unwrap();
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn hypergradient_with_large_kernel_and_many_steps() {
    let spec = WindowSpec::new(24, 24, 1).unwrap();
    let arch = Architecture::linear();
    let (theta0, theta_f) = toy_params(arch, spec);
    let s = random_series(48, 1, 7);
    let cfg = UnrollConfig {
        steps: 10,
        alpha: 0.05,
        pair_stride: 24,
    };
    let worst = fd_check(&s, &theta0, &theta_f, arch, spec, &cfg, 1e-5).unwrap();
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn unroll_is_bit_identical_to_full_batch_sgd() {
    let spec = WindowSpec::new(4, 4, 1).unwrap();
    let arch = Architecture::Linear { kernel: 3 };
    let theta0 = init_params(arch, spec, 3).unwrap();
    let s = random_series(30, 3, 8);
    let cfg = UnrollConfig {
        steps: 7,
        alpha: 0.02,
        pair_stride: 4,
    };
    let (theta_n, _) = student_unroll(&theta0.flatten(), &s, arch, spec, &cfg).unwrap();
    let pairs = windows(s.values.view(), spec.with_stride(4)).unwrap();
    let tc = TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: 0.02,
        epochs: 7,
        batch_size: BatchSize::Full,
        seed: 99,
    };
    let trained = train(&theta0, &pairs, &tc).unwrap().model.flatten();
    assert_eq!(theta_n.values.len(), trained.values.len());
    for (a, b) in theta_n.values.iter().zip(&trained.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn init_std_matches_uniform_moments() {
    // weights are U(-1/sqrt(24), 1/sqrt(24)); collect ~10^6 draws over many seeds
    let spec = WindowSpec::new(24, 24, 1).unwrap();
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut seed = 0;
    while count < 1_000_000 {
        let model = init_params(Architecture::linear(), spec, seed).unwrap();
        let pv = model.flatten();
        for name in ["w_seasonal", "w_trend"] {
            for &v in pv.segment(name).unwrap() {
                sum += v;
                sq += v * v;
                count += 1;
            }
        }
        seed += 1;
    }
    let mean = sum / count as f64;
    let std = (sq / count as f64 - mean * mean).sqrt();
    let expected = (2.0 / 24f64.sqrt()) / 12f64.sqrt();
    assert!((std / expected - 1.0).abs() < 0.01, "std {std} vs {expected}");
}

#[test]
fn trajectory_loss_identities() {
    let spec = WindowSpec::new(4, 4, 1).unwrap();
    let (theta0, theta_f) = toy_params(Architecture::Linear { kernel: 3 }, spec);
    assert!(trajectory_loss(&theta_f, &theta_f, &theta0).unwrap().abs() < 1e-12);
    assert!((trajectory_loss(&theta0, &theta_f, &theta0).unwrap() - 1.0).abs() < 1e-12);
    let mid = theta0.scaled(0.3);
    let base = trajectory_loss(&mid, &theta_f, &theta0).unwrap();
    for c in [-2.5, 1e-3, 7.0] {
        let scaled = trajectory_loss(&mid.scaled(c), &theta_f.scaled(c), &theta0.scaled(c)).unwrap();
        assert!((scaled - base).abs() < 1e-12 * base.max(1.0));
    }
}

#[test]
fn gradient_is_zero_when_student_lands_on_expert() {
    let spec = WindowSpec::new(2, 2, 1).unwrap();
    let arch = Architecture::Linear { kernel: 1 };
    let theta0 = init_params(arch, spec, 1).unwrap().flatten();
    let s = random_series(8, 1, 2);
    let cfg = UnrollConfig {
        steps: 2,
        alpha: 0.1,
        pair_stride: 2,
    };
    let (theta_n, tape) = student_unroll(&theta0, &s, arch, spec, &cfg).unwrap();
    let g = grad_synthetic(&tape, &theta_n, &theta0).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn mlp_forward_and_training_reduce_loss() {
    let spec = WindowSpec::new(6, 3, 1).unwrap();
    let arch = Architecture::Mlp { hidden: 8 };
    let model = init_params(arch, spec, 4).unwrap();
    assert!(matches!(model, Forecaster::Mlp(_)));
    let series = Array2::from_shape_fn((80, 2), |(t, c)| ((t as f64) * 0.3 + c as f64).sin());
    let pairs = windows(series.view(), spec).unwrap();
    let cfg = TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 0.01,
        epochs: 50,
        batch_size: BatchSize::Full,
        seed: 0,
    };
    let out = train(&model, &pairs, &cfg).unwrap();
    assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    let back = Forecaster::unflatten(&out.model.flatten(), arch, spec).unwrap();
    assert_eq!(back.flatten(), out.model.flatten());
}
