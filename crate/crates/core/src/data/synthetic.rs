//! Built-in synthetic benchmark: a known 2-input/2-output coupled damped
//! system `x+ = A0 x + B0 u + eps*tanh(W x)`, `y = x`, driven by
//! band-limited noise plus step/ramp maneuvers. The spectral radius of A0
//! is 0.95 and tanh is bounded, so the ground truth has finite gain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::scalar::{lit, Scalar};

use super::{DataSplits, Normalization, SequenceDataset};

/// Fixed ground-truth system constants.
#[derive(Debug, Clone)]
pub struct GroundTruthSystem {
    pub a0: [[f64; 2]; 2],
    pub b0: [[f64; 2]; 2],
    pub w: [[f64; 2]; 2],
    pub epsilon: f64,
}

impl GroundTruthSystem {
    pub fn new(epsilon: f64) -> Self {
        let (c, s) = (0.4f64.cos(), 0.4f64.sin());
        GroundTruthSystem {
            a0: [[0.95 * c, -0.95 * s], [0.95 * s, 0.95 * c]],
            b0: [[0.10, 0.02], [-0.03, 0.08]],
            w: [[0.9, -0.5], [0.4, 1.1]],
            epsilon,
        }
    }

    pub fn step(&self, x: [f64; 2], u: [f64; 2]) -> [f64; 2] {
        let lin0 = self.a0[0][0] * x[0] + self.a0[0][1] * x[1] + self.b0[0][0] * u[0] + self.b0[0][1] * u[1];
        let lin1 = self.a0[1][0] * x[0] + self.a0[1][1] * x[1] + self.b0[1][0] * u[0] + self.b0[1][1] * u[1];
        let n0 = (self.w[0][0] * x[0] + self.w[0][1] * x[1]).tanh();
        let n1 = (self.w[1][0] * x[0] + self.w[1][1] * x[1]).tanh();
        [lin0 + self.epsilon * n0, lin1 + self.epsilon * n1]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticProfile {
    /// Nonlinearity strength; 0 makes the ground truth exactly linear.
    pub epsilon: f64,
    pub excitation_amplitude: f64,
    /// OOD recordings use this multiple of the excitation amplitude.
    pub ood_amplitude_factor: f64,
    pub duration_train: usize,
    pub duration_val: usize,
    pub duration_test: usize,
    pub duration_ood: usize,
    pub seed: u64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            epsilon: 0.2,
            excitation_amplitude: 1.0,
            ood_amplitude_factor: 2.0,
            duration_train: 12000,
            duration_val: 2000,
            duration_test: 6000,
            duration_ood: 2000,
            seed: 0,
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Band-limited noise plus occasional held steps and linear ramps.
fn excitation(rng: &mut ChaCha8Rng, duration: usize, amplitude: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(duration);
    let mut smooth = [0.0f64; 2];
    let mut level = [0.0f64; 2];
    let mut target = [0.0f64; 2];
    let mut ramp_left = [0usize; 2];
    let mut ramp_step = [0.0f64; 2];
    let mut until_maneuver = [0usize; 2];
    for _ in 0..duration {
        let mut u = [0.0f64; 2];
        for ch in 0..2 {
            // AR(1) noise with unit stationary variance
            smooth[ch] = 0.9 * smooth[ch] + 0.435889894354 * standard_normal(rng);
            if until_maneuver[ch] == 0 {
                target[ch] = rng.gen_range(-1.0..=1.0);
                let ramp = if rng.gen_bool(0.5) {
                    rng.gen_range(1..=100)
                } else {
                    1 // a step
                };
                ramp_left[ch] = ramp;
                ramp_step[ch] = (target[ch] - level[ch]) / ramp as f64;
                until_maneuver[ch] = rng.gen_range(150..=500);
            }
            until_maneuver[ch] -= 1;
            if ramp_left[ch] > 0 {
                level[ch] += ramp_step[ch];
                ramp_left[ch] -= 1;
            }
            u[ch] = amplitude * (0.7 * level[ch] + 0.3 * smooth[ch]);
        }
        out.push(u);
    }
    out
}

fn generate_recording<T: Scalar>(
    system: &GroundTruthSystem,
    duration: usize,
    amplitude: f64,
    seed: u64,
) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_seq = excitation(&mut rng, duration, amplitude);
    let mut rec = Matrix::zeros(duration, 4);
    let mut x = [0.0f64; 2];
    for (k, u) in u_seq.iter().enumerate() {
        rec.set(k, 0, lit::<T>(u[0]));
        rec.set(k, 1, lit::<T>(u[1]));
        rec.set(k, 2, lit::<T>(x[0]));
        rec.set(k, 3, lit::<T>(x[1]));
        x = system.step(x, *u);
    }
    rec
}

fn dataset_from<T: Scalar>(recording: Matrix<T>) -> SequenceDataset<T> {
    SequenceDataset {
        input_names: vec!["u0".into(), "u1".into()],
        output_names: vec!["y0".into(), "y1".into()],
        sample_period: 1.0,
        recordings: vec![recording],
    }
}

/// Raw (unnormalized) pre-assigned splits, one recording per split. The
/// OOD recording uses the widened excitation and is never mixed into the
/// other splits.
pub fn synthetic_raw<T: Scalar>(
    profile: &SyntheticProfile,
) -> Result<(
    SequenceDataset<T>,
    SequenceDataset<T>,
    SequenceDataset<T>,
    Option<SequenceDataset<T>>,
)> {
    for (name, d) in [
        ("train", profile.duration_train),
        ("val", profile.duration_val),
        ("test", profile.duration_test),
    ] {
        if d < 102 {
            return Err(Error::Config(format!(
                "synthetic {name} duration {d} is below the minimum window length"
            )));
        }
    }
    let system = GroundTruthSystem::new(profile.epsilon);
    let amp = profile.excitation_amplitude;
    let base = profile.seed;
    let train = dataset_from(generate_recording::<T>(&system, profile.duration_train, amp, base ^ 0x7261_696e));
    let val = dataset_from(generate_recording::<T>(&system, profile.duration_val, amp, base ^ 0x7661_6c00));
    let test = dataset_from(generate_recording::<T>(&system, profile.duration_test, amp, base ^ 0x7465_7374));
    let ood = if profile.duration_ood >= 102 {
        Some(dataset_from(generate_recording::<T>(
            &system,
            profile.duration_ood,
            amp * profile.ood_amplitude_factor,
            base ^ 0x6f6f_6400,
        )))
    } else {
        None
    };
    Ok((train, val, test, ood))
}

/// Like [`synthetic_raw`] but normalized with training statistics.
pub fn synthetic_splits<T: Scalar>(profile: &SyntheticProfile) -> Result<DataSplits<T>> {
    let (train, val, test, ood) = synthetic_raw(profile)?;
    let norm = Normalization::fit(&train);
    Ok(DataSplits {
        train: norm.apply(&train),
        val: norm.apply(&val),
        test: norm.apply(&test),
        ood: ood.map(|d| norm.apply(&d)),
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_identical() {
        let p = SyntheticProfile {
            duration_train: 500,
            duration_val: 200,
            duration_test: 200,
            duration_ood: 200,
            ..Default::default()
        };
        let a = synthetic_splits::<f64>(&p).unwrap();
        let b = synthetic_splits::<f64>(&p).unwrap();
        assert_eq!(a.train.recordings[0], b.train.recordings[0]);
        assert_eq!(
            a.ood.as_ref().unwrap().recordings[0],
            b.ood.as_ref().unwrap().recordings[0]
        );
    }

    #[test]
    fn bounded_for_long_horizons() {
        // spectral radius < 1 and bounded nonlinearity: outputs stay bounded
        let system = GroundTruthSystem::new(0.3);
        let rec = generate_recording::<f64>(&system, 100_000, 2.0, 9);
        assert!(rec.is_finite());
        assert!(rec.max_abs() < 100.0, "unexpectedly large state {}", rec.max_abs());
    }

    #[test]
    fn linear_when_epsilon_zero() {
        // with eps = 0 the recursion is exactly linear: superposition holds
        let system = GroundTruthSystem::new(0.0);
        let x1 = system.step([1.0, -2.0], [0.5, 0.0]);
        let x2 = system.step([0.5, 3.0], [0.0, -1.0]);
        let xs = system.step([1.5, 1.0], [0.5, -1.0]);
        assert!((xs[0] - (x1[0] + x2[0])).abs() < 1e-15);
        assert!((xs[1] - (x1[1] + x2[1])).abs() < 1e-15);
    }

    #[test]
    fn ood_has_wider_excitation() {
        let p = SyntheticProfile {
            duration_train: 3000,
            duration_val: 300,
            duration_test: 300,
            duration_ood: 3000,
            ..Default::default()
        };
        let s = synthetic_splits::<f64>(&p).unwrap();
        // compare raw input energy: denormalize and average |u|
        let avg_abs = |ds: &SequenceDataset<f64>, norm: &Normalization<f64>| {
            let r = &ds.recordings[0];
            let mut acc = 0.0;
            for i in 0..r.rows() {
                acc += norm.denormalize_value(0, r.get(i, 0)).abs();
            }
            acc / r.rows() as f64
        };
        let train_amp = avg_abs(&s.train, &s.norm);
        let ood_amp = avg_abs(s.ood.as_ref().unwrap(), &s.norm);
        assert!(
            ood_amp > 1.4 * train_amp,
            "ood amplitude {ood_amp} not clearly above train {train_amp}"
        );
    }
}
