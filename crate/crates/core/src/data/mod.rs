//! Time-series ingestion, normalization, splitting and windowing, plus the
//! built-in synthetic nonlinear benchmark.

mod csv_io;
mod synthetic;

pub use csv_io::{load_csv, write_recording_csv, CsvSchema};
pub use synthetic::{synthetic_raw, synthetic_splits, GroundTruthSystem, SyntheticProfile};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::scalar::{lit, to_f64, Scalar};

/// A collection of contiguous recordings sharing one channel schema. Each
/// recording is a (time x (n_u + n_y)) matrix with inputs first.
#[derive(Debug, Clone)]
pub struct SequenceDataset<T> {
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub sample_period: f64,
    pub recordings: Vec<Matrix<T>>,
}

impl<T: Scalar> SequenceDataset<T> {
    pub fn n_u(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_y(&self) -> usize {
        self.output_names.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_u() + self.n_y()
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.n_channels();
        for (i, r) in self.recordings.iter().enumerate() {
            if r.cols() != w {
                return Err(Error::shape(
                    format!("recording {i}"),
                    format!("{w} channels"),
                    format!("{}", r.cols()),
                ));
            }
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("recording {i}"),
                });
            }
        }
        Ok(())
    }

    pub fn total_rows(&self) -> usize {
        self.recordings.iter().map(|r| r.rows()).sum()
    }

    fn with_recordings(&self, recordings: Vec<Matrix<T>>) -> Self {
        SequenceDataset {
            input_names: self.input_names.clone(),
            output_names: self.output_names.clone(),
            sample_period: self.sample_period,
            recordings,
        }
    }
}

/// Per-channel standardization statistics, fit on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Normalization<T> {
    /// Per-channel mean and standard deviation over every row of every
    /// recording. A floor of 1e-8 guards constant channels.
    pub fn fit(ds: &SequenceDataset<T>) -> Self {
        let w = ds.n_channels();
        let mut mean = vec![0.0f64; w];
        let mut count = 0usize;
        for r in &ds.recordings {
            for i in 0..r.rows() {
                for (m, v) in mean.iter_mut().zip(r.row(i)) {
                    *m += to_f64(*v);
                }
            }
            count += r.rows();
        }
        let n = count.max(1) as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0f64; w];
        for r in &ds.recordings {
            for i in 0..r.rows() {
                for ((s, v), m) in var.iter_mut().zip(r.row(i)).zip(&mean) {
                    let d = to_f64(*v) - *m;
                    *s += d * d;
                }
            }
        }
        let std: Vec<T> = var
            .iter()
            .map(|s| lit::<T>((s / n).sqrt().max(1e-8)))
            .collect();
        Normalization {
            mean: mean.into_iter().map(lit::<T>).collect(),
            std,
        }
    }

    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![T::zero(); channels],
            std: vec![T::one(); channels],
        }
    }

    pub fn apply(&self, ds: &SequenceDataset<T>) -> SequenceDataset<T> {
        let recs = ds
            .recordings
            .iter()
            .map(|r| {
                Matrix::from_fn(r.rows(), r.cols(), |i, j| {
                    (r.get(i, j) - self.mean[j]) / self.std[j]
                })
            })
            .collect();
        ds.with_recordings(recs)
    }

    pub fn normalize_value(&self, channel: usize, v: T) -> T {
        (v - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize_value(&self, channel: usize, v: T) -> T {
        v * self.std[channel] + self.mean[channel]
    }

    /// Statistics of the output channels only (channels n_u..).
    pub fn output_stats(&self, n_u: usize) -> (Vec<T>, Vec<T>) {
        (self.mean[n_u..].to_vec(), self.std[n_u..].to_vec())
    }
}

/// Normalized train/val/test(/ood) splits plus the statistics that
/// produced them.
#[derive(Debug, Clone)]
pub struct DataSplits<T> {
    pub train: SequenceDataset<T>,
    pub val: SequenceDataset<T>,
    pub test: SequenceDataset<T>,
    pub ood: Option<SequenceDataset<T>>,
    pub norm: Normalization<T>,
}

/// Assigns whole recordings to splits (deterministic given the seed), fits
/// statistics on the training split only, and normalizes everything with
/// them.
pub fn split_and_normalize<T: Scalar>(
    ds: &SequenceDataset<T>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DataSplits<T>> {
    ds.validate()?;
    let (a, b, c) = ratios;
    if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::Config(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let k = ds.recordings.len();
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((k as f64) * a).round() as usize;
    let n_val = ((k as f64) * b).round() as usize;
    let n_train = n_train.min(k);
    let n_val = n_val.min(k - n_train);
    let n_test = k - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "not enough recordings ({k}) to populate all splits with ratios {ratios:?}"
        )));
    }
    let pick = |idx: &[usize]| -> Vec<Matrix<T>> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted.iter().map(|&i| ds.recordings[i].clone()).collect()
    };
    let train_raw = ds.with_recordings(pick(&order[..n_train]));
    let val_raw = ds.with_recordings(pick(&order[n_train..n_train + n_val]));
    let test_raw = ds.with_recordings(pick(&order[n_train + n_val..]));
    let norm = Normalization::fit(&train_raw);
    Ok(DataSplits {
        train: norm.apply(&train_raw),
        val: norm.apply(&val_raw),
        test: norm.apply(&test_raw),
        ood: None,
        norm,
    })
}

/// Normalizes already-separated splits with statistics from the training
/// split.
pub fn normalize_presplit<T: Scalar>(
    train: SequenceDataset<T>,
    val: SequenceDataset<T>,
    test: SequenceDataset<T>,
    ood: Option<SequenceDataset<T>>,
) -> Result<DataSplits<T>> {
    for ds in [&train, &val, &test].into_iter().chain(ood.as_ref()) {
        ds.validate()?;
    }
    let norm = Normalization::fit(&train);
    Ok(DataSplits {
        train: norm.apply(&train),
        val: norm.apply(&val),
        test: norm.apply(&test),
        ood: ood.map(|d| norm.apply(&d)),
        norm,
    })
}

/// One training/evaluation window: a warmup slice feeding the initializer
/// and the prediction slice that follows it immediately in source time.
#[derive(Debug, Clone)]
pub struct Window<T> {
    /// t_init x (n_u + n_y): row k is [u^k, y^(k-1)].
    pub warmup: Matrix<T>,
    /// t_init x n_y: y^k, the initializer's training targets.
    pub warmup_targets: Matrix<T>,
    /// t_pred x n_u inputs of the prediction slice.
    pub u: Matrix<T>,
    /// t_pred x n_y measured outputs of the prediction slice.
    pub y: Matrix<T>,
}

pub struct WindowSet<T> {
    pub windows: Vec<Window<T>>,
    /// Recordings skipped because they were shorter than
    /// t_init + t_pred + 1.
    pub skipped_recordings: usize,
}

/// Sliding windows over every recording. The warmup needs one extra
/// leading row (for y^(k-1)), so a recording of length t_init + t_pred + 1
/// yields exactly one window.
pub fn make_windows<T: Scalar>(
    split: &SequenceDataset<T>,
    t_init: usize,
    t_pred: usize,
    stride: usize,
) -> WindowSet<T> {
    assert!(stride > 0, "stride must be positive");
    let n_u = split.n_u();
    let n_y = split.n_y();
    let need = t_init + t_pred + 1;
    let mut windows = Vec::new();
    let mut skipped = 0usize;
    for rec in &split.recordings {
        let rows = rec.rows();
        if rows < need {
            skipped += 1;
            continue;
        }
        let count = (rows - need) / stride + 1;
        for wdx in 0..count {
            // prediction slice starts here; warmup is the t_init rows before
            let start = t_init + 1 + wdx * stride;
            let mut warmup = Matrix::zeros(t_init, n_u + n_y);
            let mut warmup_targets = Matrix::zeros(t_init, n_y);
            for (r, k) in (start - t_init..start).enumerate() {
                for j in 0..n_u {
                    warmup.set(r, j, rec.get(k, j));
                }
                for j in 0..n_y {
                    warmup.set(r, n_u + j, rec.get(k - 1, n_u + j));
                    warmup_targets.set(r, j, rec.get(k, n_u + j));
                }
            }
            let u = Matrix::from_fn(t_pred, n_u, |i, j| rec.get(start + i, j));
            let y = Matrix::from_fn(t_pred, n_y, |i, j| rec.get(start + i, n_u + j));
            windows.push(Window {
                warmup,
                warmup_targets,
                u,
                y,
            });
        }
    }
    WindowSet {
        windows,
        skipped_recordings: skipped,
    }
}
