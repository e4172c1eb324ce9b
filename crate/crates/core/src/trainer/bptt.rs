//! Backpropagation through time for all predictor kinds, over the batch
//! of (x0, u, y) sequences. Gradients are exact reverse mode, unrolled
//! over the full prediction window; for the tilde-parameterized kinds the
//! chain rule continues through the recovery map A = X⁻¹Ã, C2 = T⁻¹C̃2.
//!
//! The batch loss is the mean over sequences of (1/T)·Σ_k |ŷ_k - y_k|²,
//! plus ν·barrier for the constrained kind.

use rayon::prelude::*;

use crate::constraints::{barrier, barrier_gradient};
use crate::error::{Error, Result};
use crate::model::{
    psi, recover_explicit_factored, recover_explicit_lu, ExplicitParams, ModelKind,
    PredictorParams, Recovered, TildeGradient, TildeParams,
};
use crate::numkit::Matrix;
use crate::scalar::{lit, Scalar};

/// One training sequence: initial predictor state, inputs and targets.
pub struct BatchItem<'a, T> {
    pub x0: &'a [T],
    pub u: &'a Matrix<T>,
    pub y: &'a Matrix<T>,
}

/// Sequences per deterministic reduction chunk. Chunks are processed in
/// parallel but combined in index order, so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 16;

/// Gradients in the explicit parameter space.
#[derive(Debug, Clone)]
pub struct ExplicitGrads<T> {
    pub a: Matrix<T>,
    pub b1: Matrix<T>,
    pub b2: Matrix<T>,
    pub c1: Matrix<T>,
    pub d11: Matrix<T>,
    pub d12: Matrix<T>,
    pub c2: Matrix<T>,
    pub d21: Matrix<T>,
}

impl<T: Scalar> ExplicitGrads<T> {
    fn zeros(dims: &crate::model::Dims) -> Self {
        ExplicitGrads {
            a: Matrix::zeros(dims.n_x, dims.n_x),
            b1: Matrix::zeros(dims.n_x, dims.n_u),
            b2: Matrix::zeros(dims.n_x, dims.n_z),
            c1: Matrix::zeros(dims.n_y, dims.n_x),
            d11: Matrix::zeros(dims.n_y, dims.n_u),
            d12: Matrix::zeros(dims.n_y, dims.n_z),
            c2: Matrix::zeros(dims.n_z, dims.n_x),
            d21: Matrix::zeros(dims.n_z, dims.n_u),
        }
    }

    fn add(&mut self, other: &ExplicitGrads<T>) {
        let one = T::one();
        self.a.add_scaled(&other.a, one);
        self.b1.add_scaled(&other.b1, one);
        self.b2.add_scaled(&other.b2, one);
        self.c1.add_scaled(&other.c1, one);
        self.d11.add_scaled(&other.d11, one);
        self.d12.add_scaled(&other.d12, one);
        self.c2.add_scaled(&other.c2, one);
        self.d21.add_scaled(&other.d21, one);
    }

    fn scale(&mut self, s: T) {
        for m in [
            &mut self.a, &mut self.b1, &mut self.b2, &mut self.c1, &mut self.d11, &mut self.d12,
            &mut self.c2, &mut self.d21,
        ] {
            for v in m.data_mut() {
                *v = *v * s;
            }
        }
    }
}

/// Forward trace of the LTI + tanh recursion with what backward needs.
pub struct LtiTrace<T> {
    /// (T+1) x n_x, row 0 = x0.
    pub states: Matrix<T>,
    /// T x n_z nonlinearity outputs w = tanh(z).
    pub w: Matrix<T>,
    /// T x n_y predictions.
    pub outputs: Matrix<T>,
}

pub fn lti_forward<T: Scalar>(
    ex: &ExplicitParams<T>,
    x0: &[T],
    u: &Matrix<T>,
) -> Result<LtiTrace<T>> {
    let d = &ex.dims;
    ex.validate_state_input(x0, u.row(0))?;
    let steps = u.rows();
    let mut states = Matrix::zeros(steps + 1, d.n_x);
    let mut w_all = Matrix::zeros(steps, d.n_z);
    let mut outputs = Matrix::zeros(steps, d.n_y);
    states.row_mut(0).copy_from_slice(x0);
    let mut x = x0.to_vec();
    for k in 0..steps {
        let uk = u.row(k);
        let mut z = ex.c2.mul_vec(&x);
        for (zi, v) in z.iter_mut().zip(ex.d21.mul_vec(uk)) {
            *zi = *zi + v;
        }
        let w = psi(&z);
        let mut y = ex.c1.mul_vec(&x);
        for (yi, v) in y.iter_mut().zip(ex.d11.mul_vec(uk)) {
            *yi = *yi + v;
        }
        for (yi, v) in y.iter_mut().zip(ex.d12.mul_vec(&w)) {
            *yi = *yi + v;
        }
        let mut x_next = ex.a.mul_vec(&x);
        for (xi, v) in x_next.iter_mut().zip(ex.b1.mul_vec(uk)) {
            *xi = *xi + v;
        }
        for (xi, v) in x_next.iter_mut().zip(ex.b2.mul_vec(&w)) {
            *xi = *xi + v;
        }
        w_all.row_mut(k).copy_from_slice(&w);
        outputs.row_mut(k).copy_from_slice(&y);
        states.row_mut(k + 1).copy_from_slice(&x_next);
        x = x_next;
    }
    Ok(LtiTrace {
        states,
        w: w_all,
        outputs,
    })
}

/// Reverse pass through the recursion. `d_out` is dLoss/dy per step.
/// Returns explicit-space parameter gradients, input gradients and dL/dx0.
pub fn lti_backward<T: Scalar>(
    ex: &ExplicitParams<T>,
    trace: &LtiTrace<T>,
    u: &Matrix<T>,
    d_out: &Matrix<T>,
) -> (ExplicitGrads<T>, Matrix<T>, Vec<T>) {
    let d = &ex.dims;
    let steps = u.rows();
    let mut grads = ExplicitGrads::zeros(d);
    let mut d_u = Matrix::zeros(steps, d.n_u);
    let mut lambda = vec![T::zero(); d.n_x]; // adjoint of x[k+1]
    let one = T::one();
    for k in (0..steps).rev() {
        let g_y = d_out.row(k);
        let xk = trace.states.row(k);
        let uk = u.row(k);
        let wk = trace.w.row(k);
        // dL/dw from the output path and the state path
        let mut dw = ex.d12.tr_mul_vec(g_y);
        for (a, b) in dw.iter_mut().zip(ex.b2.tr_mul_vec(&lambda)) {
            *a = *a + b;
        }
        // through tanh: dz = (1 - w^2) . dw
        let mut dz = dw;
        for (dzi, w) in dz.iter_mut().zip(wk) {
            *dzi = *dzi * (one - *w * *w);
        }
        // parameter gradients at this step
        grads.a.add_outer(&lambda, xk, one);
        grads.b1.add_outer(&lambda, uk, one);
        grads.b2.add_outer(&lambda, wk, one);
        grads.c1.add_outer(g_y, xk, one);
        grads.d11.add_outer(g_y, uk, one);
        grads.d12.add_outer(g_y, wk, one);
        grads.c2.add_outer(&dz, xk, one);
        grads.d21.add_outer(&dz, uk, one);
        // input gradient
        let mut du = ex.d11.tr_mul_vec(g_y);
        for (a, b) in du.iter_mut().zip(ex.b1.tr_mul_vec(&lambda)) {
            *a = *a + b;
        }
        for (a, b) in du.iter_mut().zip(ex.d21.tr_mul_vec(&dz)) {
            *a = *a + b;
        }
        d_u.row_mut(k).copy_from_slice(&du);
        // adjoint of x[k]
        let mut lam_new = ex.c1.tr_mul_vec(g_y);
        for (a, b) in lam_new.iter_mut().zip(ex.a.tr_mul_vec(&lambda)) {
            *a = *a + b;
        }
        for (a, b) in lam_new.iter_mut().zip(ex.c2.tr_mul_vec(&dz)) {
            *a = *a + b;
        }
        lambda = lam_new;
    }
    (grads, d_u, lambda)
}

/// Pulls explicit-space gradients back to the tilde parameterization
/// through A = X⁻¹Ã (and friends) and C2 = T⁻¹C̃2:
///
///   dÃ = X⁻¹ dA,   dX -= X⁻¹ dA Aᵀ   (same for B1, B2)
///   dC̃2_i = dC2_i / t_i,   dt_i -= (dC2_i · C2_i) / t_i  (same for D21)
pub fn chain_to_tilde<T: Scalar>(
    p: &TildeParams<T>,
    rec: &Recovered<T>,
    eg: &ExplicitGrads<T>,
) -> Result<TildeGradient<T>> {
    let d = &p.dims;
    let mut out = TildeGradient::zeros(d);
    let ex = &rec.explicit;
    let da_t = rec.x_solver.solve_matrix(&eg.a)?;
    let db1_t = rec.x_solver.solve_matrix(&eg.b1)?;
    let db2_t = rec.x_solver.solve_matrix(&eg.b2)?;
    // dX = -(X^-1 dF) F^T summed over F in {A, B1, B2}
    let mut dx = Matrix::zeros(d.n_x, d.n_x);
    dx.add_scaled(&da_t.matmul(&ex.a.transpose()), -T::one());
    dx.add_scaled(&db1_t.matmul(&ex.b1.transpose()), -T::one());
    dx.add_scaled(&db2_t.matmul(&ex.b2.transpose()), -T::one());
    out.a_t = da_t;
    out.b1_t = db1_t;
    out.b2_t = db2_t;
    out.x = dx;
    out.c1 = eg.c1.clone();
    out.d11 = eg.d11.clone();
    out.d12 = eg.d12.clone();
    let mut c2_t = eg.c2.clone();
    let mut d21_t = eg.d21.clone();
    for i in 0..d.n_z {
        let t_inv = T::one() / p.t_diag[i];
        let mut dt = T::zero();
        for j in 0..d.n_x {
            dt = dt + eg.c2.get(i, j) * ex.c2.get(i, j);
        }
        for j in 0..d.n_u {
            dt = dt + eg.d21.get(i, j) * ex.d21.get(i, j);
        }
        out.t_diag[i] = -t_inv * dt;
        for v in c2_t.row_mut(i) {
            *v = *v * t_inv;
        }
        for v in d21_t.row_mut(i) {
            *v = *v * t_inv;
        }
    }
    out.c2_t = c2_t;
    out.d21_t = d21_t;
    Ok(out)
}

/// dLoss/dy for one sequence under the (1/T)·Σ|e|² loss.
fn mse_d_out<T: Scalar>(outputs: &Matrix<T>, targets: &Matrix<T>) -> (Matrix<T>, T) {
    let steps = outputs.rows();
    let scale = lit::<T>(2.0) / T::from_usize(steps).unwrap();
    let mut d = Matrix::zeros(steps, outputs.cols());
    let mut mse = T::zero();
    for i in 0..steps {
        for j in 0..outputs.cols() {
            let e = outputs.get(i, j) - targets.get(i, j);
            mse = mse + e * e;
            d.set(i, j, scale * e);
        }
    }
    (d, mse / T::from_usize(steps).unwrap())
}

/// Batch-mean gradient for every model kind, in the flat layout of the
/// corresponding `PredictorParams`.
pub struct GradOutput<T> {
    pub flat: Vec<T>,
    /// Batch-mean MSE part of the loss.
    pub mse: T,
    /// Barrier value for the constrained kind.
    pub barrier: Option<T>,
}

pub fn bptt_gradients<T: Scalar>(
    kind: ModelKind,
    params: &PredictorParams<T>,
    batch: &[BatchItem<'_, T>],
    nu: T,
) -> Result<GradOutput<T>> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let inv_b = T::one() / T::from_usize(batch.len()).unwrap();
    match (kind, params) {
        (ModelKind::Constrained | ModelKind::LtiRnn, PredictorParams::Tilde(p)) => {
            let rec = if kind.is_constrained() {
                recover_explicit_factored(p)?
            } else {
                recover_explicit_lu(p)?
            };
            let ex = &rec.explicit;
            let chunks: Vec<(ExplicitGrads<T>, T)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut acc = ExplicitGrads::zeros(&p.dims);
                    let mut mse = T::zero();
                    for item in chunk {
                        let trace = lti_forward(ex, item.x0, item.u)?;
                        let (d_out, seq_mse) = mse_d_out(&trace.outputs, item.y);
                        let (g, _, _) = lti_backward(ex, &trace, item.u, &d_out);
                        acc.add(&g);
                        mse = mse + seq_mse;
                    }
                    Ok((acc, mse))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = ExplicitGrads::zeros(&p.dims);
            let mut mse = T::zero();
            for (g, m) in &chunks {
                total.add(g);
                mse = mse + *m;
            }
            total.scale(inv_b);
            mse = mse * inv_b;
            if !mse.is_finite() {
                return Err(Error::GradientOverflow("non-finite batch loss".into()));
            }
            let mut tilde = chain_to_tilde(p, &rec, &total)?;
            let barrier_value = if kind.is_constrained() {
                let b = barrier(p)?;
                let bg = barrier_gradient(p)?;
                tilde.add_scaled(&bg, nu);
                Some(b)
            } else {
                None
            };
            Ok(GradOutput {
                flat: tilde.to_flat(&p.dims),
                mse,
                barrier: barrier_value,
            })
        }
        (ModelKind::Rnn, PredictorParams::Rnn(net)) => {
            let chunks: Vec<(Vec<T>, T)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut acc = vec![T::zero(); net.flat_len()];
                    let mut mse = T::zero();
                    for item in chunk {
                        let fwd = net.forward(item.x0, item.u)?;
                        let (d_out, seq_mse) = mse_d_out(&fwd.outputs, item.y);
                        let (g, _, _) = net.backward(&fwd, &d_out);
                        for (a, b) in acc.iter_mut().zip(g.to_flat()) {
                            *a = *a + b;
                        }
                        mse = mse + seq_mse;
                    }
                    Ok((acc, mse))
                })
                .collect::<Result<Vec<_>>>()?;
            finish_flat(chunks, inv_b)
        }
        (ModelKind::Lstm, PredictorParams::Lstm(net)) => {
            let chunks: Vec<(Vec<T>, T)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut acc = vec![T::zero(); net.flat_len()];
                    let mut mse = T::zero();
                    for item in chunk {
                        let fwd = net.forward_seeded(item.x0, item.u)?;
                        let (d_out, seq_mse) = mse_d_out(&fwd.outputs, item.y);
                        let (g, _, _) = net.backward(&fwd, &d_out);
                        for (a, b) in acc.iter_mut().zip(g.to_flat()) {
                            *a = *a + b;
                        }
                        mse = mse + seq_mse;
                    }
                    Ok((acc, mse))
                })
                .collect::<Result<Vec<_>>>()?;
            finish_flat(chunks, inv_b)
        }
        (kind, _) => Err(Error::Config(format!(
            "parameter set does not match model kind {}",
            kind.name()
        ))),
    }
}

fn finish_flat<T: Scalar>(chunks: Vec<(Vec<T>, T)>, inv_b: T) -> Result<GradOutput<T>> {
    let mut flat = vec![T::zero(); chunks[0].0.len()];
    let mut mse = T::zero();
    for (g, m) in &chunks {
        for (a, b) in flat.iter_mut().zip(g) {
            *a = *a + *b;
        }
        mse = mse + *m;
    }
    for v in flat.iter_mut() {
        *v = *v * inv_b;
    }
    mse = mse * inv_b;
    if !mse.is_finite() {
        return Err(Error::GradientOverflow("non-finite batch loss".into()));
    }
    Ok(GradOutput {
        flat,
        mse,
        barrier: None,
    })
}

/// The loss that `bptt_gradients` differentiates, for oracle checks and
/// logging: batch-mean MSE plus ν·barrier for the constrained kind.
pub fn batch_loss<T: Scalar>(
    kind: ModelKind,
    params: &PredictorParams<T>,
    batch: &[BatchItem<'_, T>],
    nu: T,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let inv_b = T::one() / T::from_usize(batch.len()).unwrap();
    let mut mse = T::zero();
    match (kind, params) {
        (ModelKind::Constrained | ModelKind::LtiRnn, PredictorParams::Tilde(p)) => {
            let rec = if kind.is_constrained() {
                recover_explicit_factored(p)?
            } else {
                recover_explicit_lu(p)?
            };
            for item in batch {
                let trace = lti_forward(&rec.explicit, item.x0, item.u)?;
                mse = mse + mse_d_out(&trace.outputs, item.y).1;
            }
            mse = mse * inv_b;
            if kind.is_constrained() {
                return Ok(mse + nu * barrier(p)?);
            }
            Ok(mse)
        }
        (ModelKind::Rnn, PredictorParams::Rnn(net)) => {
            for item in batch {
                let fwd = net.forward(item.x0, item.u)?;
                mse = mse + mse_d_out(&fwd.outputs, item.y).1;
            }
            Ok(mse * inv_b)
        }
        (ModelKind::Lstm, PredictorParams::Lstm(net)) => {
            for item in batch {
                let fwd = net.forward_seeded(item.x0, item.u)?;
                mse = mse + mse_d_out(&fwd.outputs, item.y).1;
            }
            Ok(mse * inv_b)
        }
        (kind, _) => Err(Error::Config(format!(
            "parameter set does not match model kind {}",
            kind.name()
        ))),
    }
}

/// Supervised gradient for a standalone LSTM (the initializer): MSE of the
/// readout against per-step targets, batch mean, network starting at rest.
pub fn lstm_supervised_gradients<T: Scalar>(
    net: &crate::model::LstmNetwork<T>,
    batch: &[(&Matrix<T>, &Matrix<T>)],
) -> Result<(Vec<T>, T)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let inv_b = T::one() / T::from_usize(batch.len()).unwrap();
    let chunks: Vec<(Vec<T>, T)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); net.flat_len()];
            let mut mse = T::zero();
            for (inputs, targets) in chunk {
                let fwd = net.forward(inputs)?;
                let (d_out, seq_mse) = mse_d_out(&fwd.outputs, targets);
                let (g, _, _) = net.backward(&fwd, &d_out);
                for (a, b) in acc.iter_mut().zip(g.to_flat()) {
                    *a = *a + b;
                }
                mse = mse + seq_mse;
            }
            Ok((acc, mse))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = finish_flat(chunks, inv_b)?;
    Ok((out.flat, out.mse))
}

pub fn lstm_supervised_loss<T: Scalar>(
    net: &crate::model::LstmNetwork<T>,
    batch: &[(&Matrix<T>, &Matrix<T>)],
) -> Result<T> {
    let inv_b = T::one() / T::from_usize(batch.len()).unwrap();
    let mut mse = T::zero();
    for (inputs, targets) in batch {
        let fwd = net.forward(inputs)?;
        mse = mse + mse_d_out(&fwd.outputs, targets).1;
    }
    Ok(mse * inv_b)
}
