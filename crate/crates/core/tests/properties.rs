use ndarray::Array2;
use proptest::prelude::*;

use tscond::buffer::ExpertBuffer;
use tscond::condense::{condtsf_update, label_error};
use tscond::data::{split_normalize, window_starts, SeriesOrigin, SyntheticSeries, TimeSeries, WindowSpec};
use tscond::forecaster::{init_params, Architecture, Forecaster, PairBatch, ParamVector};
use tscond::unroll::trajectory_loss;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn small_arch() -> impl Strategy<Value = Architecture> {
    prop_oneof![
        (0usize..3).prop_map(|h| Architecture::Linear { kernel: 2 * h + 1 }),
        (1usize..6).prop_map(|hidden| Architecture::Mlp { hidden }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_round_trips(values in matrix(12..60, 1..4), ratio in 0.4f64..0.6) {
        let ts = TimeSeries::from_values(values.clone()).unwrap();
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let split = split_normalize(&ts, ratio, spec, false).unwrap();
        let n_train = split.train.len();
        let back_train = split.denormalize(split.train.values.view());
        let back_test = split.denormalize(split.test.values.view());
        for ((t, c), v) in values.indexed_iter() {
            let back = if t < n_train { back_train[[t, c]] } else { back_test[[t - n_train, c]] };
            prop_assert!((back - v).abs() <= 1e-10 * v.abs().max(1.0));
        }
    }

    #[test]
    fn window_counts(len in 1usize..200, m in 1usize..10, n in 1usize..10, stride in 1usize..12) {
        let spec = WindowSpec::new(m, n, stride).unwrap();
        match window_starts(len, spec) {
            Err(_) => prop_assert!(len < m + n),
            Ok(starts) => {
                let last = len - m - n;
                let regular = last / stride + 1;
                let expected = regular + usize::from(last % stride != 0);
                prop_assert_eq!(starts.len(), expected);
                prop_assert_eq!(*starts.last().unwrap(), last);
                prop_assert!(starts.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn linear_forecaster_is_affine(seed in any::<u64>(), kernel in 0usize..4, lambda in -2.0f64..2.0,
                                   x in matrix(6..7, 3..4), y in matrix(6..7, 3..4)) {
        let spec = WindowSpec::new(6, 3, 1).unwrap();
        let model = init_params(Architecture::Linear { kernel: 2 * kernel + 1 }, spec, seed).unwrap();
        let mixed = &x * lambda + &y * (1.0 - lambda);
        let lhs = model.forward(mixed.view()).unwrap();
        let rhs = model.forward(x.view()).unwrap() * lambda + model.forward(y.view()).unwrap() * (1.0 - lambda);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences(seed in any::<u64>(), arch in small_arch(),
                                                    x in matrix(5..6, 4..5), y in matrix(3..4, 4..5)) {
        let spec = WindowSpec::new(5, 3, 1).unwrap();
        let model = init_params(arch, spec, seed).unwrap();
        let batch = PairBatch { inputs: x / 50.0, targets: y / 50.0, channels: 2 };
        let (_, grad) = model.loss_grad(&batch);
        let base = model.flatten();
        let h = 1e-6;
        for (i, g) in grad.iter().enumerate() {
            let mut plus = base.clone();
            plus.values[i] += h;
            let mut minus = base.clone();
            minus.values[i] -= h;
            let lp = Forecaster::unflatten(&plus, arch, spec).unwrap().loss(&batch);
            let lm = Forecaster::unflatten(&minus, arch, spec).unwrap().loss(&batch);
            let numeric = (lp - lm) / (2.0 * h);
            // ReLU kinks make the MLP non-smooth; skip coordinates straddling one
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-3);
            if matches!(arch, Architecture::Mlp { .. }) && err > 1e-3 {
                continue;
            }
            prop_assert!(err < 1e-6, "coordinate {} analytic {} numeric {}", i, g, numeric);
        }
    }

    #[test]
    fn label_update_decays_exactly(seed in any::<u64>(), beta in 0.001f64..0.3, passes in 1usize..6,
                                   values in matrix(9..30, 1..3)) {
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let expert = init_params(Architecture::Linear { kernel: 3 }, spec, seed).unwrap();
        let s = SyntheticSeries { values, origin: SeriesOrigin::Distilled, seed: 0 };
        let before = label_error(s.values.view(), &expert, spec).unwrap();
        prop_assume!(before > 1e-6);
        let mut cur = s.clone();
        for _ in 0..passes {
            cur = condtsf_update(&cur, &expert, spec, beta).unwrap();
        }
        let after = label_error(cur.values.view(), &expert, spec).unwrap();
        let want = (1.0 - beta).powi(2 * passes as i32);
        prop_assert!(((after / before) - want).abs() <= 1e-9 * want.max(1e-300));

        // only label rows of whole blocks may change
        let blocks = s.len() / 4;
        for ((t, c), v) in s.values.indexed_iter() {
            let is_label = t < blocks * 4 && t % 4 >= 2;
            if !is_label {
                prop_assert_eq!(v.to_bits(), cur.values[[t, c]].to_bits());
            }
        }
    }

    #[test]
    fn trajectory_loss_is_scale_invariant(a in prop::collection::vec(-5.0f64..5.0, 6),
                                          b in prop::collection::vec(-5.0f64..5.0, 6),
                                          c in prop::collection::vec(-5.0f64..5.0, 6),
                                          scale in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
        let layout = ParamVector::layout_of(&[("w", &[6])]);
        let pv = |v: &Vec<f64>| ParamVector::new(v.clone(), layout.clone()).unwrap();
        let (n, f, z) = (pv(&a), pv(&b), pv(&c));
        prop_assume!(f.squared_distance(&z).unwrap() > 1e-3);
        let base = trajectory_loss(&n, &f, &z).unwrap();
        let scaled = trajectory_loss(&n.scaled(scale), &f.scaled(scale), &z.scaled(scale)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn buffer_bytes_round_trip(arch in small_arch(), k in 1usize..4, seed in any::<u64>()) {
        let spec = WindowSpec::new(4, 2, 1).unwrap();
        let pairs = (0..k)
            .map(|i| tscond::buffer::ExpertPair {
                theta0: init_params(arch, spec, seed ^ i as u64).unwrap().flatten(),
                theta_f: init_params(arch, spec, seed.wrapping_add(1 + i as u64)).unwrap().flatten(),
                expert_index: i,
                train_loss_final: 0.5 / (i + 1) as f64,
            })
            .collect();
        let buf = ExpertBuffer {
            pairs,
            arch,
            spec,
            channels: 3,
            fingerprint: [7; 32],
            train_config: None,
            master_seed: seed,
        };
        let back = ExpertBuffer::from_bytes(&buf.to_bytes()).unwrap();
        prop_assert_eq!(back, buf);
    }
}
