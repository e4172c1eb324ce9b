//! Stacked LSTM with a linear readout. One implementation serves both the
//! hidden-state initializer and the LSTM baseline predictor; the backward
//! pass is hand-rolled reverse mode over the standard cell equations:
//!
//! ```text
//! i = sigmoid(W_i v + U_i h + b_i)      f = sigmoid(W_f v + U_f h + b_f)
//! g = tanh(W_g v + U_g h + b_g)         o = sigmoid(W_o v + U_o h + b_o)
//! c' = f.c + i.g                        h' = o.tanh(c')
//! ```

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<T> {
    pub w_i: Matrix<T>,
    pub u_i: Matrix<T>,
    pub b_i: Vec<T>,
    pub w_f: Matrix<T>,
    pub u_f: Matrix<T>,
    pub b_f: Vec<T>,
    pub w_g: Matrix<T>,
    pub u_g: Matrix<T>,
    pub b_g: Vec<T>,
    pub w_o: Matrix<T>,
    pub u_o: Matrix<T>,
    pub b_o: Vec<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            w_i: Matrix::zeros(hidden, input),
            u_i: Matrix::zeros(hidden, hidden),
            b_i: vec![T::zero(); hidden],
            w_f: Matrix::zeros(hidden, input),
            u_f: Matrix::zeros(hidden, hidden),
            b_f: vec![T::zero(); hidden],
            w_g: Matrix::zeros(hidden, input),
            u_g: Matrix::zeros(hidden, hidden),
            b_g: vec![T::zero(); hidden],
            w_o: Matrix::zeros(hidden, input),
            u_o: Matrix::zeros(hidden, hidden),
            b_o: vec![T::zero(); hidden],
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }
}

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        LstmState {
            h: vec![vec![T::zero(); hidden]; layers],
            c: vec![vec![T::zero(); hidden]; layers],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNetwork<T> {
    pub layers: Vec<LstmLayer<T>>,
    /// n_out x hidden readout applied to the top layer at every step.
    pub w_out: Matrix<T>,
    pub b_out: Vec<T>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

struct StepCache<T> {
    input: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    i: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    tanh_c: Vec<T>,
}

/// Forward trace kept for the backward pass.
pub struct LstmForward<T> {
    pub outputs: Matrix<T>,
    pub final_state: LstmState<T>,
    cache: Vec<Vec<StepCache<T>>>, // [step][layer]
    top_h: Vec<Vec<T>>,            // top-layer hidden per step
}

impl<T: Scalar> LstmNetwork<T> {
    pub fn zeros(input: usize, hidden: usize, layers: usize, n_out: usize) -> Self {
        assert!(layers >= 1);
        let mut ls = Vec::with_capacity(layers);
        ls.push(LstmLayer::zeros(input, hidden));
        for _ in 1..layers {
            ls.push(LstmLayer::zeros(hidden, hidden));
        }
        LstmNetwork {
            layers: ls,
            w_out: Matrix::zeros(n_out, hidden),
            b_out: vec![T::zero(); n_out],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.w_out.rows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Runs the network from an explicit initial state.
    pub fn forward_from(&self, state0: &LstmState<T>, inputs: &Matrix<T>) -> Result<LstmForward<T>> {
        if inputs.rows() == 0 {
            return Err(Error::shape("lstm input", "nonempty sequence".to_string(), "0 rows".to_string()));
        }
        if inputs.cols() != self.input_size() {
            return Err(Error::shape(
                "lstm input",
                format!("{} cols", self.input_size()),
                format!("{}", inputs.cols()),
            ));
        }
        let steps = inputs.rows();
        let hidden = self.hidden_size();
        let mut state = state0.clone();
        let mut cache: Vec<Vec<StepCache<T>>> = Vec::with_capacity(steps);
        let mut top_h: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut outputs = Matrix::zeros(steps, self.output_size());
        for k in 0..steps {
            let mut layer_input = inputs.row(k).to_vec();
            let mut step_cache = Vec::with_capacity(self.layers.len());
            for (l, layer) in self.layers.iter().enumerate() {
                let h_prev = state.h[l].clone();
                let c_prev = state.c[l].clone();
                let mut pre_i = layer.w_i.mul_vec(&layer_input);
                let mut pre_f = layer.w_f.mul_vec(&layer_input);
                let mut pre_g = layer.w_g.mul_vec(&layer_input);
                let mut pre_o = layer.w_o.mul_vec(&layer_input);
                let rec_i = layer.u_i.mul_vec(&h_prev);
                let rec_f = layer.u_f.mul_vec(&h_prev);
                let rec_g = layer.u_g.mul_vec(&h_prev);
                let rec_o = layer.u_o.mul_vec(&h_prev);
                let mut i_gate = vec![T::zero(); hidden];
                let mut f_gate = vec![T::zero(); hidden];
                let mut g_gate = vec![T::zero(); hidden];
                let mut o_gate = vec![T::zero(); hidden];
                let mut c_new = vec![T::zero(); hidden];
                let mut tanh_c = vec![T::zero(); hidden];
                let mut h_new = vec![T::zero(); hidden];
                for n in 0..hidden {
                    pre_i[n] = pre_i[n] + rec_i[n] + layer.b_i[n];
                    pre_f[n] = pre_f[n] + rec_f[n] + layer.b_f[n];
                    pre_g[n] = pre_g[n] + rec_g[n] + layer.b_g[n];
                    pre_o[n] = pre_o[n] + rec_o[n] + layer.b_o[n];
                    i_gate[n] = sigmoid(pre_i[n]);
                    f_gate[n] = sigmoid(pre_f[n]);
                    g_gate[n] = pre_g[n].tanh();
                    o_gate[n] = sigmoid(pre_o[n]);
                    c_new[n] = f_gate[n] * c_prev[n] + i_gate[n] * g_gate[n];
                    tanh_c[n] = c_new[n].tanh();
                    h_new[n] = o_gate[n] * tanh_c[n];
                }
                step_cache.push(StepCache {
                    input: layer_input.clone(),
                    h_prev,
                    c_prev,
                    i: i_gate,
                    f: f_gate,
                    g: g_gate,
                    o: o_gate,
                    tanh_c,
                });
                state.h[l] = h_new.clone();
                state.c[l] = c_new;
                layer_input = h_new;
            }
            let mut y = self.w_out.mul_vec(&layer_input);
            for (yv, b) in y.iter_mut().zip(&self.b_out) {
                *yv = *yv + *b;
            }
            outputs.row_mut(k).copy_from_slice(&y);
            top_h.push(layer_input);
            cache.push(step_cache);
        }
        Ok(LstmForward {
            outputs,
            final_state: state,
            cache,
            top_h,
        })
    }

    /// Runs from rest.
    pub fn forward(&self, inputs: &Matrix<T>) -> Result<LstmForward<T>> {
        let state0 = LstmState::zeros(self.num_layers(), self.hidden_size());
        self.forward_from(&state0, inputs)
    }

    /// Runs with the first layer's hidden vector seeded by `x0` (cells and
    /// the remaining layers start at rest). This is how a predictor takes
    /// over the initializer's final hidden state.
    pub fn forward_seeded(&self, x0: &[T], inputs: &Matrix<T>) -> Result<LstmForward<T>> {
        if x0.len() != self.hidden_size() {
            return Err(Error::shape(
                "lstm seed state",
                format!("{}", self.hidden_size()),
                format!("{}", x0.len()),
            ));
        }
        let mut state0 = LstmState::zeros(self.num_layers(), self.hidden_size());
        state0.h[0].copy_from_slice(x0);
        self.forward_from(&state0, inputs)
    }

    /// Reverse-mode pass. `d_outputs` holds dLoss/dy per step; returns
    /// parameter gradients (same shapes as the network), input gradients
    /// and the gradient with respect to the initial state.
    pub fn backward(
        &self,
        fwd: &LstmForward<T>,
        d_outputs: &Matrix<T>,
    ) -> (LstmNetwork<T>, Matrix<T>, LstmState<T>) {
        let steps = fwd.cache.len();
        let hidden = self.hidden_size();
        let layers = self.num_layers();
        assert_eq!(d_outputs.rows(), steps);
        assert_eq!(d_outputs.cols(), self.output_size());

        let mut grads = LstmNetwork::zeros(self.input_size(), hidden, layers, self.output_size());
        let mut d_inputs = Matrix::zeros(steps, self.input_size());
        let mut dh: Vec<Vec<T>> = vec![vec![T::zero(); hidden]; layers];
        let mut dc: Vec<Vec<T>> = vec![vec![T::zero(); hidden]; layers];

        for k in (0..steps).rev() {
            let dy = d_outputs.row(k);
            // readout
            grads.w_out.add_outer(dy, &fwd.top_h[k], T::one());
            for (b, d) in grads.b_out.iter_mut().zip(dy) {
                *b = *b + *d;
            }
            let mut d_from_above = self.w_out.tr_mul_vec(dy);
            for l in (0..layers).rev() {
                let cache = &fwd.cache[k][l];
                let layer = &self.layers[l];
                let g = &mut grads.layers[l];
                let mut dh_total = d_from_above;
                for (a, b) in dh_total.iter_mut().zip(&dh[l]) {
                    *a = *a + *b;
                }
                let mut da_i = vec![T::zero(); hidden];
                let mut da_f = vec![T::zero(); hidden];
                let mut da_g = vec![T::zero(); hidden];
                let mut da_o = vec![T::zero(); hidden];
                let mut dc_prev = vec![T::zero(); hidden];
                for n in 0..hidden {
                    let do_ = dh_total[n] * cache.tanh_c[n];
                    let dtc = dh_total[n] * cache.o[n];
                    let dc_total = dc[l][n] + dtc * (T::one() - cache.tanh_c[n] * cache.tanh_c[n]);
                    let di = dc_total * cache.g[n];
                    let df = dc_total * cache.c_prev[n];
                    let dg = dc_total * cache.i[n];
                    dc_prev[n] = dc_total * cache.f[n];
                    da_i[n] = di * cache.i[n] * (T::one() - cache.i[n]);
                    da_f[n] = df * cache.f[n] * (T::one() - cache.f[n]);
                    da_g[n] = dg * (T::one() - cache.g[n] * cache.g[n]);
                    da_o[n] = do_ * cache.o[n] * (T::one() - cache.o[n]);
                }
                g.w_i.add_outer(&da_i, &cache.input, T::one());
                g.w_f.add_outer(&da_f, &cache.input, T::one());
                g.w_g.add_outer(&da_g, &cache.input, T::one());
                g.w_o.add_outer(&da_o, &cache.input, T::one());
                g.u_i.add_outer(&da_i, &cache.h_prev, T::one());
                g.u_f.add_outer(&da_f, &cache.h_prev, T::one());
                g.u_g.add_outer(&da_g, &cache.h_prev, T::one());
                g.u_o.add_outer(&da_o, &cache.h_prev, T::one());
                for n in 0..hidden {
                    g.b_i[n] = g.b_i[n] + da_i[n];
                    g.b_f[n] = g.b_f[n] + da_f[n];
                    g.b_g[n] = g.b_g[n] + da_g[n];
                    g.b_o[n] = g.b_o[n] + da_o[n];
                }
                // flowing to the previous step of this layer
                let mut dh_prev = layer.u_i.tr_mul_vec(&da_i);
                for (a, b) in dh_prev.iter_mut().zip(layer.u_f.tr_mul_vec(&da_f)) {
                    *a = *a + b;
                }
                for (a, b) in dh_prev.iter_mut().zip(layer.u_g.tr_mul_vec(&da_g)) {
                    *a = *a + b;
                }
                for (a, b) in dh_prev.iter_mut().zip(layer.u_o.tr_mul_vec(&da_o)) {
                    *a = *a + b;
                }
                dh[l] = dh_prev;
                dc[l] = dc_prev;
                // flowing to the layer below (or the input row)
                let mut dv = layer.w_i.tr_mul_vec(&da_i);
                for (a, b) in dv.iter_mut().zip(layer.w_f.tr_mul_vec(&da_f)) {
                    *a = *a + b;
                }
                for (a, b) in dv.iter_mut().zip(layer.w_g.tr_mul_vec(&da_g)) {
                    *a = *a + b;
                }
                for (a, b) in dv.iter_mut().zip(layer.w_o.tr_mul_vec(&da_o)) {
                    *a = *a + b;
                }
                d_from_above = dv;
            }
            d_inputs.row_mut(k).copy_from_slice(&d_from_above);
        }
        let d_state0 = LstmState { h: dh, c: dc };
        (grads, d_inputs, d_state0)
    }

    pub fn flat_len(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += 4 * (l.w_i.rows() * l.w_i.cols() + l.u_i.rows() * l.u_i.cols() + l.b_i.len());
        }
        n + self.w_out.rows() * self.w_out.cols() + self.b_out.len()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.flat_len());
        for l in &self.layers {
            for m in [&l.w_i, &l.u_i] {
                out.extend_from_slice(m.data());
            }
            out.extend_from_slice(&l.b_i);
            for m in [&l.w_f, &l.u_f] {
                out.extend_from_slice(m.data());
            }
            out.extend_from_slice(&l.b_f);
            for m in [&l.w_g, &l.u_g] {
                out.extend_from_slice(m.data());
            }
            out.extend_from_slice(&l.b_g);
            for m in [&l.w_o, &l.u_o] {
                out.extend_from_slice(m.data());
            }
            out.extend_from_slice(&l.b_o);
        }
        out.extend_from_slice(self.w_out.data());
        out.extend_from_slice(&self.b_out);
        out
    }

    pub fn from_flat(&self, flat: &[T]) -> Self {
        assert_eq!(flat.len(), self.flat_len());
        let mut net = self.clone();
        let mut pos = 0usize;
        for l in &mut net.layers {
            for m in [&mut l.w_i, &mut l.u_i] {
                let n = m.rows() * m.cols();
                m.data_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let nb = l.b_i.len();
            l.b_i.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
            for m in [&mut l.w_f, &mut l.u_f] {
                let n = m.rows() * m.cols();
                m.data_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let nb = l.b_f.len();
            l.b_f.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
            for m in [&mut l.w_g, &mut l.u_g] {
                let n = m.rows() * m.cols();
                m.data_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let nb = l.b_g.len();
            l.b_g.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
            for m in [&mut l.w_o, &mut l.u_o] {
                let n = m.rows() * m.cols();
                m.data_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let nb = l.b_o.len();
            l.b_o.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        {
            let n = net.w_out.rows() * net.w_out.cols();
            net.w_out.data_mut().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        let nb = net.b_out.len();
        net.b_out.copy_from_slice(&flat[pos..pos + nb]);
        pos += nb;
        assert_eq!(pos, flat.len());
        net
    }
}
