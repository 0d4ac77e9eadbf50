use std::ffi::{CStr, CString};
use std::ptr;

use tscond_ffi::*;

fn last_error() -> String {
    let p = tscond_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn wave(rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols)
        .map(|i| {
            let (t, c) = ((i / cols) as f64, (i % cols) as f64);
            (t * std::f64::consts::TAU / 24.0 + c).sin() + 0.3 * (t / 50.0 + c).cos()
        })
        .collect()
}

struct Fixture {
    series: *mut TscondSeries,
    split: *mut TscondSplit,
    buffer: *mut TscondBuffer,
}

impl Fixture {
    fn new(m: usize, n: usize) -> Self {
        let values = wave(600, 2);
        let mut series = ptr::null_mut();
        let mut split = ptr::null_mut();
        let mut buffer = ptr::null_mut();
        unsafe {
            assert_eq!(
                tscond_series_from_values(values.as_ptr(), 600, 2, &mut series),
                TscondStatus::Ok
            );
            assert_eq!(
                tscond_split_normalize(series, 0.7, m, n, false, &mut split),
                TscondStatus::Ok
            );
            let mut params = tscond_buffer_params_default();
            params.experts = 2;
            params.epochs = 2;
            assert_eq!(
                tscond_buffer_generate(split, m, n, &params, &mut buffer),
                TscondStatus::Ok
            );
        }
        Self { series, split, buffer }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            tscond_buffer_free(self.buffer);
            tscond_split_free(self.split);
            tscond_series_free(self.series);
        }
    }
}

#[test]
fn series_round_trip_and_shape() {
    let values = wave(10, 3);
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(
            tscond_series_from_values(values.as_ptr(), 10, 3, &mut s),
            TscondStatus::Ok
        );
        let (mut rows, mut cols) = (0, 0);
        assert_eq!(tscond_series_shape(s, &mut rows, &mut cols), TscondStatus::Ok);
        assert_eq!((rows, cols), (10, 3));
        let mut back = vec![0.0; 30];
        assert_eq!(tscond_series_copy_values(s, back.as_mut_ptr(), 30), TscondStatus::Ok);
        assert_eq!(back, values);
        assert_eq!(
            tscond_series_copy_values(s, back.as_mut_ptr(), 29),
            TscondStatus::InvalidArgument
        );
        tscond_series_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut s = ptr::null_mut();
    let missing = CString::new("/nonexistent/data.csv").unwrap();
    unsafe {
        assert_eq!(
            tscond_series_load_csv(missing.as_ptr(), ptr::null(), &mut s),
            TscondStatus::Io
        );
        assert!(last_error().contains("/nonexistent/data.csv"));
        assert!(s.is_null());
        assert_eq!(
            tscond_series_load_csv(ptr::null(), ptr::null(), &mut s),
            TscondStatus::NullArgument
        );
        assert!(last_error().contains("path"));

        let nan = [1.0, f64::NAN];
        assert_eq!(
            tscond_series_from_values(nan.as_ptr(), 2, 1, &mut s),
            TscondStatus::Data
        );

        let values = wave(20, 1);
        assert_eq!(
            tscond_series_from_values(values.as_ptr(), 20, 1, &mut s),
            TscondStatus::Ok
        );
        let mut split = ptr::null_mut();
        assert_eq!(
            tscond_split_normalize(s, 0.7, 24, 24, false, &mut split),
            TscondStatus::Data
        );
        assert!(split.is_null());
        tscond_series_free(s);

        let bogus = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(bogus.path(), b"NOPE").unwrap();
        let path = CString::new(bogus.path().to_str().unwrap()).unwrap();
        let mut buf = ptr::null_mut();
        assert_eq!(tscond_buffer_load(path.as_ptr(), &mut buf), TscondStatus::BufferFormat);
        assert_eq!(tscond_buffer_len(buf), 0);
        // freeing null handles is a no-op
        tscond_buffer_free(ptr::null_mut());
        tscond_series_free(ptr::null_mut());
        tscond_split_free(ptr::null_mut());
    }
}

#[test]
fn csv_loading_drops_the_date_column() {
    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(
        file.path(),
        "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4\n",
    )
    .unwrap();
    let path = CString::new(file.path().to_str().unwrap()).unwrap();
    let date = CString::new("date").unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(
            tscond_series_load_csv(path.as_ptr(), date.as_ptr(), &mut s),
            TscondStatus::Ok
        );
        let (mut rows, mut cols) = (0, 0);
        tscond_series_shape(s, &mut rows, &mut cols);
        assert_eq!((rows, cols), (2, 2));
        tscond_series_free(s);
    }
}

#[test]
fn buffer_save_load_and_label_update() {
    let fx = Fixture::new(4, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("b.bin").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(tscond_buffer_len(fx.buffer), 2);
        assert_eq!(tscond_buffer_save(fx.buffer, path.as_ptr()), TscondStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(tscond_buffer_load(path.as_ptr(), &mut loaded), TscondStatus::Ok);
        assert_eq!(tscond_buffer_len(loaded), 2);

        let mut train = ptr::null_mut();
        assert_eq!(
            tscond_split_part(fx.split, TscondPart::Train, &mut train),
            TscondStatus::Ok
        );
        let mut s = ptr::null_mut();
        let head = {
            let mut all = vec![0.0; 420 * 2];
            tscond_series_copy_values(train, all.as_mut_ptr(), all.len());
            all.truncate(16 * 2);
            all
        };
        assert_eq!(
            tscond_series_from_values(head.as_ptr(), 16, 2, &mut s),
            TscondStatus::Ok
        );

        let (mut before, mut after) = (0.0, 0.0);
        assert_eq!(tscond_label_error(s, loaded, 1, &mut before), TscondStatus::Ok);
        assert_eq!(tscond_condtsf_update(s, loaded, 1, 0.1), TscondStatus::Ok);
        assert_eq!(tscond_label_error(s, loaded, 1, &mut after), TscondStatus::Ok);
        assert!(((after / before) - 0.81).abs() < 1e-12);
        assert_eq!(tscond_condtsf_update(s, loaded, 5, 0.1), TscondStatus::InvalidArgument);

        tscond_series_free(s);
        tscond_series_free(train);
        tscond_buffer_free(loaded);
    }
}

#[test]
fn distill_and_evaluate() {
    let fx = Fixture::new(4, 4);
    unsafe {
        let mut params = tscond_condense_params_default();
        assert_eq!(params.gap, 3);
        params.epochs = 12;
        params.synthetic_len = 16;
        let mut synthetic = ptr::null_mut();
        let mut label = f64::NAN;
        assert_eq!(
            tscond_distill(fx.buffer, fx.split, &params, &mut synthetic, &mut label),
            TscondStatus::Ok
        );
        assert!(label.is_finite());
        let (mut rows, mut cols) = (0, 0);
        tscond_series_shape(synthetic, &mut rows, &mut cols);
        assert_eq!((rows, cols), (16, 2));

        let mut eval = tscond_eval_params_default();
        eval.trials = 2;
        eval.steps = 50;
        let (mut mae, mut mse) = (0.0, 0.0);
        assert_eq!(
            tscond_evaluate(synthetic, fx.split, 4, 4, &eval, &mut mae, &mut mse),
            TscondStatus::Ok
        );
        assert!(mae > 0.0 && mse > 0.0);
        eval.arch = TscondArch::Mlp;
        eval.hidden = 8;
        assert_eq!(
            tscond_evaluate(synthetic, fx.split, 4, 4, &eval, &mut mae, &mut mse),
            TscondStatus::Ok
        );
        assert_eq!(
            tscond_evaluate(ptr::null(), fx.split, 4, 4, &eval, &mut mae, &mut mse),
            TscondStatus::Ok
        );

        params.beta = 2.0;
        assert_eq!(
            tscond_distill(fx.buffer, fx.split, &params, &mut synthetic, ptr::null_mut()),
            TscondStatus::InvalidArgument
        );
        assert!(last_error().contains("beta"));
        tscond_series_free(synthetic);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(tscond_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
