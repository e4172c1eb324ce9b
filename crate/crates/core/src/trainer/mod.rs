//! Gradient-based learning for every model kind: the initializer LSTM is
//! trained first on warmup windows, then the predictor is trained with
//! Adam; the constrained kind additionally carries the barrier term and a
//! backtracking line search that never accepts an infeasible step.

mod adam;
mod bptt;
mod linesearch;

pub use adam::AdamState;
pub use bptt::{
    batch_loss, bptt_gradients, chain_to_tilde, lstm_supervised_gradients, lstm_supervised_loss,
    lti_backward, lti_forward, BatchItem, ExplicitGrads, GradOutput, LtiTrace,
};
pub use linesearch::{constrained_update, LineSearchStatus};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{feasibility_margin, init_feasible, training_margin};
use crate::data::{make_windows, DataSplits, Window};
use crate::error::{Error, Result};
use crate::model::{
    Dims, LstmNetwork, Model, ModelKind, PredictorParams, RnnNetwork, TildeParams,
};
use crate::numkit::Matrix;
use crate::scalar::{lit, to_f64, Scalar};

/// Training hyperparameters. The defaults are the ones used throughout:
/// learning rate 0.0025 with Adam, batches of 128, warmup and prediction
/// windows of 50 steps, 2000 predictor epochs, 400 initializer epochs,
/// barrier weight 0.001 decayed by 10x every 100 epochs, and a line search
/// budget of 100 halvings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seq_len_pred: usize,
    pub seq_len_init: usize,
    pub init_epochs: usize,
    pub nu0: f64,
    pub nu_decay_factor: f64,
    pub nu_decay_every: usize,
    pub backtrack_steps: u32,
    pub seed: u64,
    /// Scale of the random blocks fed to the feasible initializer.
    pub init_scale: f64,
    /// Recurrent layers for the RNN/LSTM kinds and the initializer.
    pub num_layers: usize,
    /// Window stride; defaults to seq_len_pred (non-overlapping).
    pub stride: Option<usize>,
    /// Record wall-clock time per epoch. Off by default so that two runs
    /// with the same seed produce byte-identical logs.
    pub log_timing: bool,
    /// Entries above this magnitude make the step get skipped and logged.
    pub grad_overflow_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0025,
            batch_size: 128,
            epochs: 2000,
            seq_len_pred: 50,
            seq_len_init: 50,
            init_epochs: 400,
            nu0: 0.001,
            nu_decay_factor: 10.0,
            nu_decay_every: 100,
            backtrack_steps: 100,
            seed: 0,
            init_scale: 0.1,
            num_layers: 1,
            stride: None,
            log_timing: false,
            grad_overflow_limit: 1e12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.nu0 <= 0.0 || self.nu_decay_factor <= 0.0 {
            return Err(Error::Config("learning_rate, nu0 and nu_decay_factor must be positive".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("seq_len_pred", self.seq_len_pred),
            ("seq_len_init", self.seq_len_init),
            ("init_epochs", self.init_epochs),
            ("nu_decay_every", self.nu_decay_every),
            ("num_layers", self.num_layers),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.seq_len_pred)
    }
}

/// Barrier weight schedule: nu0 divided by the decay factor once per
/// `nu_decay_every` completed epochs (epochs are counted from 0).
pub fn nu_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.nu0 / cfg.nu_decay_factor.powi((epoch / cfg.nu_decay_every) as i32)
}

/// The loss of one predicted sequence: (1/T)·Σ_k |yhat_k - y_k|², plus
/// ν·barrier for the constrained kind.
pub fn loss<T: Scalar>(
    y: &Matrix<T>,
    yhat: &Matrix<T>,
    p: &TildeParams<T>,
    nu: T,
    constrained: bool,
) -> Result<T> {
    if y.rows() != yhat.rows() || y.cols() != yhat.cols() {
        return Err(Error::shape(
            "loss sequences",
            format!("{}x{}", y.rows(), y.cols()),
            format!("{}x{}", yhat.rows(), yhat.cols()),
        ));
    }
    let mut acc = T::zero();
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            let e = yhat.get(i, j) - y.get(i, j);
            acc = acc + e * e;
        }
    }
    let mse = acc / T::from_usize(y.rows()).unwrap();
    if constrained {
        Ok(mse + nu * crate::constraints::barrier(p)?)
    } else {
        Ok(mse)
    }
}

/// One line of the training log (line-delimited JSON on disk).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_barrier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility_margin: Option<f64>,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backtrack_count: Option<u32>,
    pub skipped_steps: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitLogRecord {
    pub epoch: usize,
    pub mse: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TrainOutcome {
    Completed,
    /// The line search could not find a feasible step; the model holds the
    /// last feasible parameters and `epoch` is where training stopped.
    StoppedByLineSearch { epoch: usize },
}

pub struct TrainResult<T> {
    pub model: Model<T>,
    pub log: Vec<LogRecord>,
    pub init_log: Vec<InitLogRecord>,
    pub outcome: TrainOutcome,
}

fn fan_in_fill<T: Scalar>(m: &mut Matrix<T>, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (m.cols().max(1) as f64).sqrt();
    for v in m.data_mut() {
        *v = lit::<T>(rng.gen_range(-bound..=bound));
    }
}

fn init_lstm<T: Scalar>(
    input: usize,
    hidden: usize,
    layers: usize,
    n_out: usize,
    rng: &mut ChaCha8Rng,
) -> LstmNetwork<T> {
    let mut net = LstmNetwork::zeros(input, hidden, layers, n_out);
    let bound = 1.0 / (hidden as f64).sqrt();
    for l in &mut net.layers {
        for m in [
            &mut l.w_i, &mut l.u_i, &mut l.w_f, &mut l.u_f, &mut l.w_g, &mut l.u_g, &mut l.w_o,
            &mut l.u_o,
        ] {
            for v in m.data_mut() {
                *v = lit::<T>(rng.gen_range(-bound..=bound));
            }
        }
        for b in [&mut l.b_i, &mut l.b_f, &mut l.b_g, &mut l.b_o] {
            for v in b.iter_mut() {
                *v = lit::<T>(rng.gen_range(-bound..=bound));
            }
        }
    }
    fan_in_fill(&mut net.w_out, rng);
    net
}

fn init_predictor<T: Scalar>(
    kind: ModelKind,
    dims: &Dims,
    gamma_sq: Option<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PredictorParams<T>> {
    match kind {
        ModelKind::Constrained => {
            let g = gamma_sq.ok_or_else(|| {
                Error::Config("the constrained kind requires gamma_sq > 0".into())
            })?;
            if g <= 0.0 {
                return Err(Error::Config("gamma_sq must be positive".into()));
            }
            let p = init_feasible::<T>(*dims, lit::<T>(g), cfg.init_scale, rng.gen())?;
            Ok(PredictorParams::Tilde(p))
        }
        ModelKind::LtiRnn => {
            let mut p = TildeParams::<T>::zero_blocks(*dims, T::one());
            for m in [
                &mut p.a_t, &mut p.b1_t, &mut p.b2_t, &mut p.c1, &mut p.d11, &mut p.d12,
                &mut p.c2_t, &mut p.d21_t,
            ] {
                fan_in_fill(m, rng);
            }
            Ok(PredictorParams::Tilde(p))
        }
        ModelKind::Rnn => {
            let mut net = RnnNetwork::<T>::zeros(dims.n_u, dims.n_x, cfg.num_layers, dims.n_y);
            for l in &mut net.layers {
                fan_in_fill(&mut l.w, rng);
                fan_in_fill(&mut l.u, rng);
                let bound = 1.0 / (l.u.cols() as f64).sqrt();
                for v in l.b.iter_mut() {
                    *v = lit::<T>(rng.gen_range(-bound..=bound));
                }
            }
            fan_in_fill(&mut net.w_out, rng);
            Ok(PredictorParams::Rnn(net))
        }
        ModelKind::Lstm => Ok(PredictorParams::Lstm(init_lstm(
            dims.n_u,
            dims.n_x,
            cfg.num_layers,
            dims.n_y,
            rng,
        ))),
    }
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn flat_max_abs<T: Scalar>(v: &[T]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| {
        let a = to_f64(x.abs());
        // NaN entries must trip the overflow guard, not slip past max()
        if a.is_nan() {
            f64::INFINITY
        } else {
            acc.max(a)
        }
    })
}

fn flat_norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter()
        .fold(0.0f64, |acc, x| acc + to_f64(*x) * to_f64(*x))
        .sqrt()
}

/// Trains the warmup-state initializer on the windows' warmup slices.
fn train_initializer<T: Scalar>(
    windows: &[Window<T>],
    dims: &Dims,
    n_channels: usize,
    cfg: &TrainConfig,
    log: &mut Vec<InitLogRecord>,
) -> Result<LstmNetwork<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut net = init_lstm::<T>(n_channels, dims.n_x, cfg.num_layers, dims.n_y, &mut rng);
    let mut adam = AdamState::<T>::new(net.flat_len());
    let lr = lit::<T>(cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);
    for epoch in 0..cfg.init_epochs {
        let order = shuffled_indices(windows.len(), &mut shuffle_rng);
        let mut epoch_mse = 0.0f64;
        let mut batches = 0usize;
        let mut max_norm = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Matrix<T>, &Matrix<T>)> = chunk
                .iter()
                .map(|&i| (&windows[i].warmup, &windows[i].warmup_targets))
                .collect();
            let (grads, mse) = lstm_supervised_gradients(&net, &batch)?;
            max_norm = max_norm.max(flat_norm(&grads));
            if flat_max_abs(&grads) > cfg.grad_overflow_limit {
                continue;
            }
            let flat = adam.step(&net.to_flat(), &grads, lr);
            net = net.from_flat(&flat);
            epoch_mse += to_f64(mse);
            batches += 1;
        }
        log.push(InitLogRecord {
            epoch,
            mse: epoch_mse / batches.max(1) as f64,
            grad_norm: max_norm,
        });
    }
    Ok(net)
}

/// Full training pipeline: initializer first, then the predictor, with the
/// barrier loss, ν schedule and line search for the constrained kind.
/// `sink` receives each predictor log record as it is produced.
pub fn train<T: Scalar>(
    kind: ModelKind,
    dims: Dims,
    gamma_sq: Option<f64>,
    splits: &DataSplits<T>,
    cfg: &TrainConfig,
    mut sink: impl FnMut(&LogRecord),
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    dims.validate()?;
    if splits.train.n_u() == 0 {
        return Err(Error::Config("dataset has no input channels".into()));
    }
    if dims.n_u != splits.train.n_u() || dims.n_y != splits.train.n_y() {
        return Err(Error::shape(
            "train dims vs dataset",
            format!("n_u={}, n_y={}", splits.train.n_u(), splits.train.n_y()),
            format!("n_u={}, n_y={}", dims.n_u, dims.n_y),
        ));
    }
    let ws = make_windows(&splits.train, cfg.seq_len_init, cfg.seq_len_pred, cfg.stride());
    if ws.windows.is_empty() {
        return Err(Error::Config(format!(
            "training split yields no windows (need recordings of length >= {})",
            cfg.seq_len_init + cfg.seq_len_pred + 1
        )));
    }
    let windows = ws.windows;
    let n_channels = splits.train.n_channels();

    // Phase 1: initializer (trained separately; frozen afterwards).
    let mut init_log = Vec::new();
    let initializer = train_initializer(&windows, &dims, n_channels, cfg, &mut init_log)?;

    // Initial predictor states come from the frozen initializer, so they
    // can be computed once.
    let x0s: Vec<Vec<T>> = windows
        .iter()
        .map(|w| {
            let fwd = initializer.forward(&w.warmup)?;
            Ok(fwd.final_state.h.last().unwrap().clone())
        })
        .collect::<Result<Vec<_>>>()?;

    // Phase 2: predictor.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut params = init_predictor::<T>(kind, &dims, gamma_sq, cfg, &mut rng)?;
    let mut adam = AdamState::<T>::new(params.flat_len());
    let lr = lit::<T>(cfg.learning_rate);
    let margin = training_margin::<T>(&dims);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(4);
    let mut log: Vec<LogRecord> = Vec::with_capacity(cfg.epochs);
    let mut outcome = TrainOutcome::Completed;

    'epochs: for epoch in 0..cfg.epochs {
        let t_start = std::time::Instant::now();
        let nu = nu_at(cfg, epoch);
        let order = shuffled_indices(windows.len(), &mut shuffle_rng);
        let mut epoch_mse = 0.0f64;
        let mut batches = 0usize;
        let mut max_grad_norm = 0.0f64;
        let mut backtracks = 0u32;
        let mut skipped = 0u32;
        let mut last_barrier: Option<f64> = None;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<BatchItem<'_, T>> = chunk
                .iter()
                .map(|&i| BatchItem {
                    x0: &x0s[i],
                    u: &windows[i].u,
                    y: &windows[i].y,
                })
                .collect();
            let out = bptt_gradients(kind, &params, &batch, lit::<T>(nu))?;
            epoch_mse += to_f64(out.mse);
            batches += 1;
            if let Some(b) = out.barrier {
                last_barrier = Some(to_f64(b));
            }
            max_grad_norm = max_grad_norm.max(flat_norm(&out.flat));
            if flat_max_abs(&out.flat) > cfg.grad_overflow_limit {
                skipped += 1;
                continue;
            }
            let proposed_flat = adam.step(&params.to_flat(), &out.flat, lr);
            if kind.is_constrained() {
                let (PredictorParams::Tilde(p_old), PredictorParams::Tilde(p_prop)) =
                    (&params, &params.from_flat(&proposed_flat))
                else {
                    unreachable!("constrained kind always carries tilde parameters")
                };
                let (accepted, status) =
                    constrained_update(p_old, p_prop, margin, cfg.backtrack_steps);
                match status {
                    LineSearchStatus::Accepted { halvings, .. } => {
                        backtracks += halvings;
                        params = PredictorParams::Tilde(accepted);
                    }
                    LineSearchStatus::StopTraining => {
                        outcome = TrainOutcome::StoppedByLineSearch { epoch };
                        let record = LogRecord {
                            epoch,
                            mse: epoch_mse / batches as f64,
                            barrier: last_barrier,
                            nu_barrier: last_barrier.map(|b| nu * b),
                            nu: Some(nu),
                            feasibility_margin: feasibility_margin(&accepted).ok(),
                            grad_norm: max_grad_norm,
                            backtrack_count: Some(backtracks + cfg.backtrack_steps),
                            skipped_steps: skipped,
                            wall_time: cfg
                                .log_timing
                                .then(|| t_start.elapsed().as_secs_f64()),
                        };
                        sink(&record);
                        log.push(record);
                        params = PredictorParams::Tilde(accepted);
                        break 'epochs;
                    }
                }
            } else {
                params = params.from_flat(&proposed_flat);
            }
        }
        let (feas_margin, barrier_now) = match (&params, kind.is_constrained()) {
            (PredictorParams::Tilde(p), true) => (
                feasibility_margin(p).ok(),
                crate::constraints::barrier(p).ok().map(to_f64),
            ),
            _ => (None, None),
        };
        let record = LogRecord {
            epoch,
            mse: epoch_mse / batches.max(1) as f64,
            barrier: barrier_now,
            nu_barrier: barrier_now.map(|b| nu * b),
            nu: kind.is_constrained().then_some(nu),
            feasibility_margin: feas_margin,
            grad_norm: max_grad_norm,
            backtrack_count: kind.is_constrained().then_some(backtracks),
            skipped_steps: skipped,
            wall_time: cfg.log_timing.then(|| t_start.elapsed().as_secs_f64()),
        };
        sink(&record);
        log.push(record);
    }

    let model = Model {
        kind,
        dims,
        predictor: params,
        initializer,
        norm: splits.norm.clone(),
        input_names: splits.train.input_names.clone(),
        output_names: splits.train.output_names.clone(),
        sample_period: splits.train.sample_period,
        gamma_sq: if kind.is_constrained() {
            gamma_sq.map(lit::<T>)
        } else {
            None
        },
    };
    Ok(TrainResult {
        model,
        log,
        init_log,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_schedule_exact() {
        let cfg = TrainConfig::default();
        assert_eq!(nu_at(&cfg, 0), 0.001);
        assert_eq!(nu_at(&cfg, 99), 0.001);
        assert_eq!(nu_at(&cfg, 100), 0.0001);
        assert_eq!(nu_at(&cfg, 199), 0.0001);
        assert_eq!(nu_at(&cfg, 250), 0.001 / 100.0);
        for e in 0..1000 {
            let expect = 0.001 / 10.0f64.powi((e / 100) as i32);
            assert_eq!(nu_at(&cfg, e), expect);
        }
    }

    #[test]
    fn loss_values() {
        let y = Matrix::<f64>::zeros(2, 1);
        let yhat = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let p = TildeParams::zero_blocks(Dims::with_state(1, 1, 1, 1), 1.0);
        // unconstrained: plain (1/T) sum
        assert_eq!(loss(&y, &y, &p, 0.0, false).unwrap(), 0.0);
        assert_eq!(loss(&y, &yhat, &p, 0.0, false).unwrap(), 1.0);
        // constrained zero-block instance: mse + nu * (-log 2)
        let l = loss(&y, &y, &p, 0.001, true).unwrap();
        assert!((l - (0.0 - 0.001 * 2.0_f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_mismatched_shapes() {
        let y = Matrix::<f64>::zeros(2, 1);
        let yhat = Matrix::<f64>::zeros(3, 1);
        let p = TildeParams::zero_blocks(Dims::with_state(1, 1, 1, 1), 1.0);
        assert!(loss(&y, &yhat, &p, 0.0, false).is_err());
    }

    #[test]
    fn loss_infeasible_constrained_errors() {
        let y = Matrix::<f64>::zeros(2, 1);
        let mut p = TildeParams::zero_blocks(Dims::with_state(1, 1, 1, 1), 1.0);
        p.a_t.set(0, 0, 100.0);
        assert!(loss(&y, &y, &p, 0.001, true).is_err());
    }
}
