//! Accuracy metrics and empirical robustness probes: per-channel RMSE over
//! an evaluation horizon, and worst-case (incremental) gain estimation by
//! gradient ascent on an additive input perturbation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, SequenceDataset, Window};
use crate::error::{Error, Result};
use crate::model::{
    recover_explicit_factored, recover_explicit_lu, Model, ModelKind, PredictorParams, Recovered,
};
use crate::numkit::Matrix;
use crate::scalar::{lit, to_f64, Scalar};
use crate::trainer::{lti_backward, lti_forward, AdamState};

/// Default prediction horizon for evaluation.
pub const DEFAULT_EVAL_HORIZON: usize = 900;
/// Default warmup length fed to the initializer before each evaluation
/// window.
pub const DEFAULT_EVAL_WARMUP: usize = 50;

/// Per-channel root mean squared error: for channel m,
/// sqrt of the mean over all (sequence, step) pairs of the squared error.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub format_version: u32,
    pub split: String,
    pub horizon: usize,
    pub sequence_count: usize,
    pub channel_names: Vec<String>,
    pub per_channel_rmse: Vec<f64>,
    pub mean_rmse: f64,
    /// True when the requested horizon exceeded the data and was clamped.
    pub truncated: bool,
}

/// Builds evaluation windows: warmup of `t_init` rows followed by a
/// prediction slice of `horizon` rows, non-overlapping. The horizon is
/// clamped to what the recordings can support (with a warning flag).
pub fn evaluation_windows<T: Scalar>(
    split: &SequenceDataset<T>,
    t_init: usize,
    horizon: usize,
) -> Result<(Vec<Window<T>>, usize, bool)> {
    let longest = split
        .recordings
        .iter()
        .map(|r| r.rows())
        .max()
        .unwrap_or(0);
    if longest < t_init + 2 {
        return Err(Error::Config(format!(
            "split recordings too short for warmup {t_init} (+2 rows)"
        )));
    }
    let max_horizon = longest - t_init - 1;
    let eff = horizon.min(max_horizon);
    let truncated = eff < horizon;
    let ws = make_windows(split, t_init, eff, eff);
    if ws.windows.is_empty() {
        return Err(Error::Config("no evaluation windows".into()));
    }
    Ok((ws.windows, eff, truncated))
}

/// Evaluates RMSE in original (denormalized) units, per output channel,
/// plus the channel average.
pub fn rmse<T: Scalar>(
    model: &Model<T>,
    split: &SequenceDataset<T>,
    split_name: &str,
    t_init: usize,
    horizon: usize,
) -> Result<MetricsReport> {
    if split.n_u() != model.dims.n_u || split.n_y() != model.dims.n_y {
        return Err(Error::shape(
            "rmse split channels",
            format!("n_u={}, n_y={}", model.dims.n_u, model.dims.n_y),
            format!("n_u={}, n_y={}", split.n_u(), split.n_y()),
        ));
    }
    let (windows, eff_horizon, truncated) = evaluation_windows(split, t_init, horizon)?;
    let n_u = model.dims.n_u;
    let n_y = model.dims.n_y;
    let (_, out_std) = model.norm.output_stats(n_u);
    let sums: Vec<(Vec<f64>, usize)> = windows
        .par_iter()
        .map(|w| {
            let yhat = model.predict_window(&w.warmup, &w.u)?;
            let mut acc = vec![0.0f64; n_y];
            for k in 0..w.y.rows() {
                for m in 0..n_y {
                    // same statistics scale both signals: the error in
                    // original units is std_m * (normalized error)
                    let e = to_f64(out_std[m]) * to_f64(yhat.get(k, m) - w.y.get(k, m));
                    acc[m] += e * e;
                }
            }
            Ok((acc, w.y.rows()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0f64; n_y];
    let mut count = 0usize;
    for (a, c) in &sums {
        for (x, y) in acc.iter_mut().zip(a) {
            *x += *y;
        }
        count += c;
    }
    let per_channel: Vec<f64> = acc.iter().map(|s| (s / count as f64).sqrt()).collect();
    let mean = per_channel.iter().sum::<f64>() / n_y as f64;
    Ok(MetricsReport {
        format_version: 1,
        split: split_name.to_string(),
        horizon: eff_horizon,
        sequence_count: windows.len(),
        channel_names: model.output_names.clone(),
        per_channel_rmse: per_channel,
        mean_rmse: mean,
        truncated,
    })
}

/// Gain-search settings. Plain gradient ascent by default; Adam behind a
/// flag for badly scaled problems.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainSearchConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub use_adam: bool,
    /// Perturbation norm cap as a multiple of the input norm (the ratio is
    /// unbounded as the perturbation cancels the input, so the search is
    /// confined to a ball).
    pub cap_factor: f64,
    pub seed: u64,
}

impl GainSearchConfig {
    pub fn gain_defaults() -> Self {
        GainSearchConfig {
            steps: 2000,
            learning_rate: 0.001,
            use_adam: false,
            cap_factor: 10.0,
            seed: 0,
        }
    }

    pub fn incremental_defaults() -> Self {
        GainSearchConfig {
            steps: 1000,
            learning_rate: 0.001,
            use_adam: false,
            cap_factor: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SequenceGain {
    pub seq_index: usize,
    /// Best ratio found over the whole trace.
    pub best_gain: f64,
    /// Denominator energy at the best point.
    pub denominator_energy: f64,
    /// x0' X x0 for the tilde-parameterized kinds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    /// Whether the norm cap was ever active during the ascent.
    pub capped: bool,
    /// The ratio diverged (non-finite); the sequence was abandoned.
    pub failed: bool,
    /// Ratio per ascent step (the reported gain is the max of this trace).
    pub trace: Vec<f64>,
    /// The maximizing perturbation, row-major (steps x n_u).
    pub witness: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainReport {
    pub format_version: u32,
    pub mode: String,
    pub split: String,
    pub horizon: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub cap_factor: f64,
    pub per_sequence: Vec<SequenceGain>,
    /// Maximum of the per-sequence best gains.
    pub worst_gain: f64,
    pub worst_seq_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_sq_configured: Option<f64>,
}

impl GainReport {
    pub fn recompute_worst(&mut self) {
        let mut worst = f64::NEG_INFINITY;
        let mut idx = 0;
        for s in &self.per_sequence {
            if !s.failed && s.best_gain > worst {
                worst = s.best_gain;
                idx = s.seq_index;
            }
        }
        self.worst_gain = worst;
        self.worst_seq_index = idx;
    }
}

/// Engine with the recovery solved once, able to run forward passes and
/// input-gradient backward passes for any kind.
pub struct GainEngine<'m, T: Scalar> {
    model: &'m Model<T>,
    lti: Option<Recovered<T>>,
}

enum Objective<'a, T> {
    /// sum_k |yhat_k|^2
    OutputEnergy,
    /// sum_k |yhat_k - ref_k|^2
    DiffEnergy(&'a Matrix<T>),
}

impl<'m, T: Scalar> GainEngine<'m, T> {
    pub fn new(model: &'m Model<T>) -> Result<Self> {
        let lti = match (&model.predictor, model.kind) {
            (PredictorParams::Tilde(p), ModelKind::Constrained) => {
                Some(recover_explicit_factored(p)?)
            }
            (PredictorParams::Tilde(p), ModelKind::LtiRnn) => Some(recover_explicit_lu(p)?),
            _ => None,
        };
        Ok(GainEngine { model, lti })
    }

    pub fn forward(&self, x0: &[T], u: &Matrix<T>) -> Result<Matrix<T>> {
        match (&self.model.predictor, &self.lti) {
            (PredictorParams::Tilde(_), Some(rec)) => {
                Ok(lti_forward(&rec.explicit, x0, u)?.outputs)
            }
            (PredictorParams::Rnn(net), _) => Ok(net.forward(x0, u)?.outputs),
            (PredictorParams::Lstm(net), _) => Ok(net.forward_seeded(x0, u)?.outputs),
            _ => unreachable!("engine construction matched the predictor"),
        }
    }

    /// Returns the objective value and its gradient with respect to the
    /// input sequence.
    fn objective_with_grad(
        &self,
        x0: &[T],
        u: &Matrix<T>,
        objective: &Objective<'_, T>,
    ) -> Result<(f64, Matrix<T>)> {
        let two = lit::<T>(2.0);
        let d_out_of = |outputs: &Matrix<T>| -> (f64, Matrix<T>) {
            let mut energy = 0.0f64;
            let mut d = Matrix::zeros(outputs.rows(), outputs.cols());
            for i in 0..outputs.rows() {
                for j in 0..outputs.cols() {
                    let e = match objective {
                        Objective::OutputEnergy => outputs.get(i, j),
                        Objective::DiffEnergy(r) => outputs.get(i, j) - r.get(i, j),
                    };
                    energy += to_f64(e) * to_f64(e);
                    d.set(i, j, two * e);
                }
            }
            (energy, d)
        };
        match (&self.model.predictor, &self.lti) {
            (PredictorParams::Tilde(_), Some(rec)) => {
                let trace = lti_forward(&rec.explicit, x0, u)?;
                let (energy, d_out) = d_out_of(&trace.outputs);
                let (_, d_u, _) = lti_backward(&rec.explicit, &trace, u, &d_out);
                Ok((energy, d_u))
            }
            (PredictorParams::Rnn(net), _) => {
                let fwd = net.forward(x0, u)?;
                let (energy, d_out) = d_out_of(&fwd.outputs);
                let (_, d_u, _) = net.backward(&fwd, &d_out);
                Ok((energy, d_u))
            }
            (PredictorParams::Lstm(net), _) => {
                let fwd = net.forward_seeded(x0, u)?;
                let (energy, d_out) = d_out_of(&fwd.outputs);
                let (_, d_u, _) = net.backward(&fwd, &d_out);
                Ok((energy, d_u))
            }
            _ => unreachable!(),
        }
    }

    /// x0' X x0 when the model carries a Lyapunov matrix.
    fn gamma0(&self, x0: &[T]) -> Option<f64> {
        match &self.model.predictor {
            PredictorParams::Tilde(p) => {
                let xv = p.x.mul_vec(x0);
                Some(to_f64(crate::numkit::dot(x0, &xv)))
            }
            _ => None,
        }
    }
}

fn frob_norm<T: Scalar>(m: &Matrix<T>) -> f64 {
    m.data()
        .iter()
        .fold(0.0f64, |acc, v| acc + to_f64(*v) * to_f64(*v))
        .sqrt()
}

/// Gradient ascent on the ratio num(u0 + theta) / denom(u0 + theta) for
/// one sequence. `denom_against` controls the denominator:
/// the full perturbed input (gain mode) or the perturbation alone
/// (incremental mode).
fn ascend_sequence<T: Scalar>(
    engine: &GainEngine<'_, T>,
    seq_index: usize,
    x0: &[T],
    u0: &Matrix<T>,
    reference: Option<Matrix<T>>,
    cfg: &GainSearchConfig,
    theta_init: Matrix<T>,
) -> Result<SequenceGain> {
    let steps = u0.rows();
    let n_u = u0.cols();
    let cap_radius = {
        let n = frob_norm(u0);
        if n > 0.0 {
            cfg.cap_factor * n
        } else {
            f64::INFINITY
        }
    };
    let mut theta = theta_init;
    let mut adam = cfg.use_adam.then(|| AdamState::<T>::new(steps * n_u));
    let lr = lit::<T>(cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best_gain = f64::NEG_INFINITY;
    let mut best_theta = theta.clone();
    let mut best_denominator = 0.0f64;
    let mut capped = false;
    let incremental = reference.is_some();
    for _iter in 0..=cfg.steps {
        let u_pert = {
            let mut m = u0.clone();
            m.add_scaled(&theta, T::one());
            m
        };
        let objective = match &reference {
            Some(r) => Objective::DiffEnergy(r),
            None => Objective::OutputEnergy,
        };
        let (numerator, d_num) = engine.objective_with_grad(x0, &u_pert, &objective)?;
        let denom = if incremental {
            frob_norm(&theta).powi(2)
        } else {
            frob_norm(&u_pert).powi(2)
        };
        if denom <= 0.0 {
            // 0/0 at theta = 0 in incremental mode (guarded by the noise
            // init); treat as failure if it still happens
            return Ok(SequenceGain {
                seq_index,
                best_gain: f64::NAN,
                denominator_energy: 0.0,
                gamma0: engine.gamma0(x0),
                capped,
                failed: true,
                trace,
                witness: vec![],
            });
        }
        let ratio = numerator / denom;
        if !ratio.is_finite() {
            return Ok(SequenceGain {
                seq_index,
                best_gain: if best_gain.is_finite() { best_gain } else { f64::NAN },
                denominator_energy: best_denominator,
                gamma0: engine.gamma0(x0),
                capped,
                failed: true,
                trace,
                witness: matrix_rows(&best_theta),
            });
        }
        trace.push(ratio);
        if ratio > best_gain {
            best_gain = ratio;
            best_theta = theta.clone();
            best_denominator = denom;
        }
        if _iter == cfg.steps {
            break;
        }
        // d(num/denom)/dtheta = (d_num - ratio * d_denom) / denom where
        // d_denom/dtheta = 2*u_pert (gain) or 2*theta (incremental)
        let denom_t = lit::<T>(denom);
        let ratio_t = lit::<T>(ratio);
        let two = lit::<T>(2.0);
        let mut grad = Matrix::zeros(steps, n_u);
        for i in 0..steps {
            for j in 0..n_u {
                let dd = if incremental {
                    two * theta.get(i, j)
                } else {
                    two * u_pert.get(i, j)
                };
                grad.set(i, j, (d_num.get(i, j) - ratio_t * dd) / denom_t);
            }
        }
        match adam.as_mut() {
            Some(state) => {
                // ascent: Adam on the negated gradient
                let neg: Vec<T> = grad.data().iter().map(|g| -*g).collect();
                let updated = state.step(theta.data(), &neg, lr);
                theta.data_mut().copy_from_slice(&updated);
            }
            None => theta.add_scaled(&grad, lr),
        }
        let norm = frob_norm(&theta);
        if norm > cap_radius {
            capped = true;
            let s = lit::<T>(cap_radius / norm);
            for v in theta.data_mut() {
                *v = *v * s;
            }
        }
    }
    Ok(SequenceGain {
        seq_index,
        best_gain,
        denominator_energy: best_denominator,
        gamma0: engine.gamma0(x0),
        capped,
        failed: false,
        trace,
        witness: matrix_rows(&best_theta),
    })
}

fn matrix_rows<T: Scalar>(m: &Matrix<T>) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|v| to_f64(*v)).collect())
        .collect()
}

pub fn rows_to_matrix<T: Scalar>(rows: &[Vec<f64>]) -> Result<Matrix<T>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    let mut m = Matrix::zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(Error::Config("ragged witness rows".into()));
        }
        for (j, v) in row.iter().enumerate() {
            m.set(i, j, lit::<T>(*v));
        }
    }
    Ok(m)
}

fn run_gain_search<T: Scalar>(
    model: &Model<T>,
    split: &SequenceDataset<T>,
    split_name: &str,
    t_init: usize,
    horizon: usize,
    cfg: &GainSearchConfig,
    incremental: bool,
) -> Result<GainReport> {
    let engine = GainEngine::new(model)?;
    let (windows, eff_horizon, _) = evaluation_windows(split, t_init, horizon)?;
    let jobs: Vec<(usize, &Window<T>)> = windows.iter().enumerate().collect();
    let per_sequence: Vec<SequenceGain> = jobs
        .par_iter()
        .map(|(idx, w)| {
            let (x0, _) = model.init_state(&w.warmup)?;
            let theta0 = if incremental {
                // small Gaussian noise: the incremental ratio is 0/0 at zero
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(*idx as u64 + 1);
                Matrix::from_fn(w.u.rows(), w.u.cols(), |_, _| {
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    lit::<T>(1e-3 * (-2.0 * u1.ln()).sqrt() * u2.cos())
                })
            } else {
                Matrix::zeros(w.u.rows(), w.u.cols())
            };
            let reference = if incremental {
                Some(engine.forward(&x0, &w.u)?)
            } else {
                None
            };
            ascend_sequence(&engine, *idx, &x0, &w.u, reference, cfg, theta0)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = GainReport {
        format_version: 1,
        mode: if incremental { "incremental".into() } else { "gain".into() },
        split: split_name.to_string(),
        horizon: eff_horizon,
        steps: cfg.steps,
        learning_rate: cfg.learning_rate,
        cap_factor: cfg.cap_factor,
        per_sequence,
        worst_gain: f64::NEG_INFINITY,
        worst_seq_index: 0,
        gamma_sq_configured: model.gamma_sq.map(to_f64),
    };
    report.recompute_worst();
    Ok(report)
}

/// Worst finite stability gain: for each validation sequence, ascend
/// sum|yhat_pert|^2 / sum|u_pert|^2 over the perturbation, and report the
/// maximum across sequences.
pub fn worst_gain<T: Scalar>(
    model: &Model<T>,
    split: &SequenceDataset<T>,
    split_name: &str,
    t_init: usize,
    horizon: usize,
    cfg: &GainSearchConfig,
) -> Result<GainReport> {
    run_gain_search(model, split, split_name, t_init, horizon, cfg, false)
}

/// Worst incremental stability gain: ascend
/// sum|yhat_pert - yhat|^2 / sum|theta|^2 with the unperturbed prediction
/// computed once per sequence from the same initial state.
pub fn worst_incremental_gain<T: Scalar>(
    model: &Model<T>,
    split: &SequenceDataset<T>,
    split_name: &str,
    t_init: usize,
    horizon: usize,
    cfg: &GainSearchConfig,
) -> Result<GainReport> {
    run_gain_search(model, split, split_name, t_init, horizon, cfg, true)
}

/// Replays a stored witness and returns the achieved ratio; used to verify
/// reports independently of the search.
pub fn replay_witness<T: Scalar>(
    model: &Model<T>,
    split: &SequenceDataset<T>,
    t_init: usize,
    horizon: usize,
    seq: &SequenceGain,
    incremental: bool,
) -> Result<f64> {
    let engine = GainEngine::new(model)?;
    let (windows, _, _) = evaluation_windows(split, t_init, horizon)?;
    let w = windows
        .get(seq.seq_index)
        .ok_or_else(|| Error::Config(format!("witness sequence {} out of range", seq.seq_index)))?;
    let (x0, _) = model.init_state(&w.warmup)?;
    let theta = rows_to_matrix::<T>(&seq.witness)?;
    let mut u_pert = w.u.clone();
    u_pert.add_scaled(&theta, T::one());
    let outputs = engine.forward(&x0, &u_pert)?;
    if incremental {
        let reference = engine.forward(&x0, &w.u)?;
        let mut num = 0.0f64;
        for i in 0..outputs.rows() {
            for j in 0..outputs.cols() {
                let e = to_f64(outputs.get(i, j) - reference.get(i, j));
                num += e * e;
            }
        }
        Ok(num / frob_norm(&theta).powi(2))
    } else {
        let num = frob_norm(&outputs).powi(2);
        Ok(num / frob_norm(&u_pert).powi(2))
    }
}

/// One row per model: accuracy and robustness side by side.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_incremental: Option<GainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_sq: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub per_channel_rmse: Vec<f64>,
    pub mean_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_incremental_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_sq: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComparisonTable {
    pub format_version: u32,
    pub split: String,
    pub horizon: usize,
    pub channel_names: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Merges per-model reports into one table. All reports must describe the
/// same split and horizon.
pub fn compare_models(entries: &[ModelSummary]) -> Result<ComparisonTable> {
    if entries.is_empty() {
        return Ok(ComparisonTable {
            format_version: 1,
            split: String::new(),
            horizon: 0,
            channel_names: vec![],
            rows: vec![],
        });
    }
    let split = entries[0].metrics.split.clone();
    let horizon = entries[0].metrics.horizon;
    for e in entries {
        if e.metrics.split != split || e.metrics.horizon != horizon {
            return Err(Error::MismatchedReports(format!(
                "'{}' is over split '{}' horizon {}, expected split '{split}' horizon {horizon}",
                e.name, e.metrics.split, e.metrics.horizon
            )));
        }
        for g in [&e.gain, &e.gain_incremental].into_iter().flatten() {
            if g.split != split {
                return Err(Error::MismatchedReports(format!(
                    "gain report for '{}' is over split '{}', expected '{split}'",
                    e.name, g.split
                )));
            }
        }
    }
    let rows = entries
        .iter()
        .map(|e| ComparisonRow {
            name: e.name.clone(),
            per_channel_rmse: e.metrics.per_channel_rmse.clone(),
            mean_rmse: e.metrics.mean_rmse,
            worst_gain: e.gain.as_ref().map(|g| g.worst_gain),
            worst_incremental_gain: e.gain_incremental.as_ref().map(|g| g.worst_gain),
            gamma_sq: e.gamma_sq,
        })
        .collect();
    Ok(ComparisonTable {
        format_version: 1,
        split,
        horizon,
        channel_names: entries[0].metrics.channel_names.clone(),
        rows,
    })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for c in &self.channel_names {
            out.push_str(&format!(",rmse_{c}"));
        }
        out.push_str(",mean_rmse,worst_gain,worst_incremental_gain,gamma_sq\n");
        for r in &self.rows {
            out.push_str(&r.name);
            for v in &r.per_channel_rmse {
                out.push_str(&format!(",{v}"));
            }
            let opt = |o: Option<f64>| o.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                ",{},{},{},{}\n",
                r.mean_rmse,
                opt(r.worst_gain),
                opt(r.worst_incremental_gain),
                opt(r.gamma_sq)
            ));
        }
        out
    }

    /// (worst gain, mean RMSE) pairs for the robustness/accuracy plot.
    pub fn plot_data_csv(&self) -> String {
        let mut out = String::from("model,worst_gain,worst_incremental_gain,mean_rmse,gamma_sq\n");
        for r in &self.rows {
            let opt = |o: Option<f64>| o.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name,
                opt(r.worst_gain),
                opt(r.worst_incremental_gain),
                r.mean_rmse,
                opt(r.gamma_sq)
            ));
        }
        out
    }
}
