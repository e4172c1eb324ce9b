//! Plain stacked tanh recurrence with biases and a linear readout:
//! `h' = tanh(W v + U h + b)`, `y = W_out h_top + b_out`.

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayer<T> {
    pub w: Matrix<T>, // hidden x input
    pub u: Matrix<T>, // hidden x hidden
    pub b: Vec<T>,
}

impl<T: Scalar> RnnLayer<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        RnnLayer {
            w: Matrix::zeros(hidden, input),
            u: Matrix::zeros(hidden, hidden),
            b: vec![T::zero(); hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnNetwork<T> {
    pub layers: Vec<RnnLayer<T>>,
    pub w_out: Matrix<T>,
    pub b_out: Vec<T>,
}

struct StepCache<T> {
    input: Vec<T>,
    h_prev: Vec<T>,
    h: Vec<T>,
}

pub struct RnnForward<T> {
    pub outputs: Matrix<T>,
    pub final_hidden: Vec<Vec<T>>,
    cache: Vec<Vec<StepCache<T>>>,
}

impl<T: Scalar> RnnNetwork<T> {
    pub fn zeros(input: usize, hidden: usize, layers: usize, n_out: usize) -> Self {
        assert!(layers >= 1);
        let mut ls = Vec::with_capacity(layers);
        ls.push(RnnLayer::zeros(input, hidden));
        for _ in 1..layers {
            ls.push(RnnLayer::zeros(hidden, hidden));
        }
        RnnNetwork {
            layers: ls,
            w_out: Matrix::zeros(n_out, hidden),
            b_out: vec![T::zero(); n_out],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_size(&self) -> usize {
        self.w_out.rows()
    }

    /// Forward with the first layer's hidden state seeded by `x0`.
    pub fn forward(&self, x0: &[T], inputs: &Matrix<T>) -> Result<RnnForward<T>> {
        if inputs.rows() == 0 {
            return Err(Error::shape("rnn input", "nonempty sequence".to_string(), "0 rows".to_string()));
        }
        if inputs.cols() != self.input_size() {
            return Err(Error::shape(
                "rnn input",
                format!("{} cols", self.input_size()),
                format!("{}", inputs.cols()),
            ));
        }
        if x0.len() != self.hidden_size() {
            return Err(Error::shape(
                "rnn seed state",
                format!("{}", self.hidden_size()),
                format!("{}", x0.len()),
            ));
        }
        let hidden = self.hidden_size();
        let layers = self.layers.len();
        let steps = inputs.rows();
        let mut h: Vec<Vec<T>> = vec![vec![T::zero(); hidden]; layers];
        h[0].copy_from_slice(x0);
        let mut cache: Vec<Vec<StepCache<T>>> = Vec::with_capacity(steps);
        let mut outputs = Matrix::zeros(steps, self.output_size());
        for k in 0..steps {
            let mut layer_input = inputs.row(k).to_vec();
            let mut step_cache = Vec::with_capacity(layers);
            for (l, layer) in self.layers.iter().enumerate() {
                let h_prev = h[l].clone();
                let mut pre = layer.w.mul_vec(&layer_input);
                let rec = layer.u.mul_vec(&h_prev);
                let mut h_new = vec![T::zero(); hidden];
                for n in 0..hidden {
                    h_new[n] = (pre[n] + rec[n] + layer.b[n]).tanh();
                    pre[n] = h_new[n];
                }
                step_cache.push(StepCache {
                    input: layer_input.clone(),
                    h_prev,
                    h: h_new.clone(),
                });
                h[l] = h_new.clone();
                layer_input = h_new;
            }
            let mut y = self.w_out.mul_vec(&layer_input);
            for (yv, b) in y.iter_mut().zip(&self.b_out) {
                *yv = *yv + *b;
            }
            outputs.row_mut(k).copy_from_slice(&y);
            cache.push(step_cache);
        }
        Ok(RnnForward {
            outputs,
            final_hidden: h,
            cache,
        })
    }

    /// Reverse mode; returns (parameter gradients, input gradients, d_x0).
    pub fn backward(
        &self,
        fwd: &RnnForward<T>,
        d_outputs: &Matrix<T>,
    ) -> (RnnNetwork<T>, Matrix<T>, Vec<T>) {
        let steps = fwd.cache.len();
        let hidden = self.hidden_size();
        let layers = self.layers.len();
        assert_eq!(d_outputs.rows(), steps);
        let mut grads = RnnNetwork::zeros(self.input_size(), hidden, layers, self.output_size());
        let mut d_inputs = Matrix::zeros(steps, self.input_size());
        let mut dh: Vec<Vec<T>> = vec![vec![T::zero(); hidden]; layers];
        for k in (0..steps).rev() {
            let dy = d_outputs.row(k);
            let top = &fwd.cache[k][layers - 1].h;
            grads.w_out.add_outer(dy, top, T::one());
            for (b, d) in grads.b_out.iter_mut().zip(dy) {
                *b = *b + *d;
            }
            let mut d_from_above = self.w_out.tr_mul_vec(dy);
            for l in (0..layers).rev() {
                let cache = &fwd.cache[k][l];
                let layer = &self.layers[l];
                let g = &mut grads.layers[l];
                let mut da = vec![T::zero(); hidden];
                for n in 0..hidden {
                    let dh_total = d_from_above[n] + dh[l][n];
                    da[n] = dh_total * (T::one() - cache.h[n] * cache.h[n]);
                }
                g.w.add_outer(&da, &cache.input, T::one());
                g.u.add_outer(&da, &cache.h_prev, T::one());
                for n in 0..hidden {
                    g.b[n] = g.b[n] + da[n];
                }
                dh[l] = layer.u.tr_mul_vec(&da);
                d_from_above = layer.w.tr_mul_vec(&da);
            }
            d_inputs.row_mut(k).copy_from_slice(&d_from_above);
        }
        (grads, d_inputs, dh.swap_remove(0))
    }

    pub fn flat_len(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += l.w.rows() * l.w.cols() + l.u.rows() * l.u.cols() + l.b.len();
        }
        n + self.w_out.rows() * self.w_out.cols() + self.b_out.len()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.flat_len());
        for l in &self.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(l.u.data());
            out.extend_from_slice(&l.b);
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
            for m in [&mut l.w, &mut l.u] {
                let n = m.rows() * m.cols();
                m.data_mut().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        let n = net.w_out.rows() * net.w_out.cols();
        net.w_out.data_mut().copy_from_slice(&flat[pos..pos + n]);
        pos += n;
        let nb = net.b_out.len();
        net.b_out.copy_from_slice(&flat[pos..pos + nb]);
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_zero_output() {
        let net = RnnNetwork::<f64>::zeros(2, 3, 2, 2);
        let inputs = Matrix::from_fn(10, 2, |k, j| (k + j) as f64);
        let fwd = net.forward(&[0.0; 3], &inputs).unwrap();
        assert!(fwd.outputs.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_layer_hand_step() {
        let mut net = RnnNetwork::<f64>::zeros(1, 1, 1, 1);
        net.layers[0].w.set(0, 0, 0.5);
        net.layers[0].u.set(0, 0, -0.3);
        net.layers[0].b[0] = 0.1;
        net.w_out.set(0, 0, 2.0);
        net.b_out[0] = -1.0;
        let inputs = Matrix::from_vec(1, 1, vec![0.4]).unwrap();
        let fwd = net.forward(&[0.6], &inputs).unwrap();
        let h = (0.5 * 0.4 - 0.3 * 0.6 + 0.1_f64).tanh();
        assert!((fwd.outputs.get(0, 0) - (2.0 * h - 1.0)).abs() < 1e-15);
    }
}
