//! The dynamical systems being learned: a linear time-invariant block in
//! feedback with an elementwise tanh, plus the unconstrained baselines
//! (same LTI structure, a plain tanh RNN, a stacked LSTM) and the LSTM
//! that produces initial hidden states from a warmup window.
//!
//! The predictor recursion is
//!
//! ```text
//! x[k+1] = A x[k] + B1 u[k] + B2 w[k]
//! yhat[k] = C1 x[k] + D11 u[k] + D12 w[k]
//! z[k]   = C2 x[k] + D21 u[k],          w[k] = tanh(z[k])
//! ```
//!
//! `z` has no feedthrough from `w`, so the interconnection is well posed by
//! construction. There are no bias terms anywhere in this recursion.

mod lstm;
mod rnn;

pub use lstm::{LstmLayer, LstmNetwork, LstmState};
pub use rnn::{RnnLayer, RnnNetwork};

use crate::error::{Error, Result};
use crate::numkit::{CholeskyFactor, LuFactor, Matrix, SymmetricMatrix};
use crate::scalar::Scalar;

/// Channel and state sizes of the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_u: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub n_z: usize,
}

impl Dims {
    /// State size defaults to the nonlinearity width.
    pub fn new(n_u: usize, n_y: usize, n_z: usize) -> Self {
        Dims {
            n_u,
            n_y,
            n_x: n_z,
            n_z,
        }
    }

    pub fn with_state(n_u: usize, n_y: usize, n_x: usize, n_z: usize) -> Self {
        Dims { n_u, n_y, n_x, n_z }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_y == 0 || self.n_x == 0 || self.n_z == 0 {
            return Err(Error::Config(format!("all dims must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Sector and slope bounds of the scalar nonlinearity. tanh satisfies the
/// sector (alpha, beta) = (0, 1) and the slope restriction (mu, eta) = (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBounds<T> {
    pub alpha: T,
    pub beta: T,
    pub mu: T,
    pub eta: T,
}

impl<T: Scalar> SectorBounds<T> {
    pub fn tanh_default() -> Self {
        SectorBounds {
            alpha: T::zero(),
            beta: T::one(),
            mu: T::zero(),
            eta: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > self.beta || self.mu > self.eta {
            return Err(Error::Config("sector bounds require alpha <= beta and mu <= eta".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for SectorBounds<T> {
    fn default() -> Self {
        Self::tanh_default()
    }
}

/// Convexified parameter set: the tilde blocks plus the Lyapunov matrix X,
/// the diagonal multiplier T and the fixed squared gain bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeParams<T> {
    pub dims: Dims,
    pub a_t: Matrix<T>,   // n_x x n_x
    pub b1_t: Matrix<T>,  // n_x x n_u
    pub b2_t: Matrix<T>,  // n_x x n_z
    pub c1: Matrix<T>,    // n_y x n_x
    pub d11: Matrix<T>,   // n_y x n_u
    pub d12: Matrix<T>,   // n_y x n_z
    pub c2_t: Matrix<T>,  // n_z x n_x
    pub d21_t: Matrix<T>, // n_z x n_u
    /// Stored full but kept symmetric; the flat parameterization below only
    /// exposes the lower triangle, so updates cannot break symmetry.
    pub x: Matrix<T>,
    pub t_diag: Vec<T>,
    pub gamma_sq: T,
}

impl<T: Scalar> TildeParams<T> {
    /// All-zero system blocks with X = T = I: always feasible.
    pub fn zero_blocks(dims: Dims, gamma_sq: T) -> Self {
        TildeParams {
            dims,
            a_t: Matrix::zeros(dims.n_x, dims.n_x),
            b1_t: Matrix::zeros(dims.n_x, dims.n_u),
            b2_t: Matrix::zeros(dims.n_x, dims.n_z),
            c1: Matrix::zeros(dims.n_y, dims.n_x),
            d11: Matrix::zeros(dims.n_y, dims.n_u),
            d12: Matrix::zeros(dims.n_y, dims.n_z),
            c2_t: Matrix::zeros(dims.n_z, dims.n_x),
            d21_t: Matrix::zeros(dims.n_z, dims.n_u),
            x: Matrix::identity(dims.n_x),
            t_diag: vec![T::one(); dims.n_z],
            gamma_sq,
        }
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let d = &self.dims;
        let checks: [(&str, usize, usize, &Matrix<T>); 8] = [
            ("a_t", d.n_x, d.n_x, &self.a_t),
            ("b1_t", d.n_x, d.n_u, &self.b1_t),
            ("b2_t", d.n_x, d.n_z, &self.b2_t),
            ("c1", d.n_y, d.n_x, &self.c1),
            ("d11", d.n_y, d.n_u, &self.d11),
            ("d12", d.n_y, d.n_z, &self.d12),
            ("c2_t", d.n_z, d.n_x, &self.c2_t),
            ("d21_t", d.n_z, d.n_u, &self.d21_t),
        ];
        for (name, r, c, m) in checks {
            if m.rows() != r || m.cols() != c {
                return Err(Error::shape(
                    format!("TildeParams.{name}"),
                    format!("{r}x{c}"),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
        }
        if self.x.rows() != d.n_x || self.x.cols() != d.n_x {
            return Err(Error::shape("TildeParams.x", format!("{0}x{0}", d.n_x), format!("{}x{}", self.x.rows(), self.x.cols())));
        }
        if self.t_diag.len() != d.n_z {
            return Err(Error::shape("TildeParams.t_diag", format!("{}", d.n_z), format!("{}", self.t_diag.len())));
        }
        Ok(())
    }

    /// Full domain-type check: shapes, X positive definite, T positive.
    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        if self.gamma_sq <= T::zero() {
            return Err(Error::Config("gamma_sq must be positive".into()));
        }
        if self.t_diag.iter().any(|t| *t <= T::zero()) {
            return Err(Error::Config("multiplier diagonal must be strictly positive".into()));
        }
        crate::numkit::cholesky(&SymmetricMatrix::from_full(&self.x)?)?;
        Ok(())
    }

    /// Number of free scalars: the eight system blocks, the lower triangle
    /// of X and the diagonal of T. gamma_sq is a fixed hyperparameter.
    pub fn flat_len(&self) -> usize {
        let d = &self.dims;
        d.n_x * d.n_x
            + d.n_x * d.n_u
            + d.n_x * d.n_z
            + d.n_y * d.n_x
            + d.n_y * d.n_u
            + d.n_y * d.n_z
            + d.n_z * d.n_x
            + d.n_z * d.n_u
            + d.n_x * (d.n_x + 1) / 2
            + d.n_z
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.flat_len());
        for m in [
            &self.a_t, &self.b1_t, &self.b2_t, &self.c1, &self.d11, &self.d12, &self.c2_t,
            &self.d21_t,
        ] {
            out.extend_from_slice(m.data());
        }
        for i in 0..self.dims.n_x {
            for j in 0..=i {
                out.push(self.x.get(i, j));
            }
        }
        out.extend_from_slice(&self.t_diag);
        out
    }

    /// Rebuilds parameters from the flat layout, using `self` as the shape
    /// template. X comes back exactly symmetric.
    pub fn from_flat(&self, flat: &[T]) -> Self {
        assert_eq!(flat.len(), self.flat_len(), "flat parameter length mismatch");
        let d = self.dims;
        let mut pos = 0usize;
        let mut take = |r: usize, c: usize| {
            let m = Matrix::from_vec(r, c, flat[pos..pos + r * c].to_vec())
                .unwrap_or_else(|_| {
                    // Non-finite values can legitimately appear mid-line-search;
                    // keep them so the feasibility check rejects the point.
                    let mut m = Matrix::zeros(r, c);
                    m.data_mut().copy_from_slice(&flat[pos..pos + r * c]);
                    m
                });
            pos += r * c;
            m
        };
        let a_t = take(d.n_x, d.n_x);
        let b1_t = take(d.n_x, d.n_u);
        let b2_t = take(d.n_x, d.n_z);
        let c1 = take(d.n_y, d.n_x);
        let d11 = take(d.n_y, d.n_u);
        let d12 = take(d.n_y, d.n_z);
        let c2_t = take(d.n_z, d.n_x);
        let d21_t = take(d.n_z, d.n_u);
        let mut x = Matrix::zeros(d.n_x, d.n_x);
        for i in 0..d.n_x {
            for j in 0..=i {
                x.set(i, j, flat[pos]);
                x.set(j, i, flat[pos]);
                pos += 1;
            }
        }
        let t_diag = flat[pos..pos + d.n_z].to_vec();
        TildeParams {
            dims: d,
            a_t,
            b1_t,
            b2_t,
            c1,
            d11,
            d12,
            c2_t,
            d21_t,
            x,
            t_diag,
            gamma_sq: self.gamma_sq,
        }
    }
}

/// Gradient with respect to a `TildeParams` set: one matrix per block.
/// The X entry holds the gradient as a full matrix under the convention
/// that off-diagonal perturbations move both mirrored entries; `to_flat`
/// combines them to match the lower-triangle parameterization.
#[derive(Debug, Clone)]
pub struct TildeGradient<T> {
    pub a_t: Matrix<T>,
    pub b1_t: Matrix<T>,
    pub b2_t: Matrix<T>,
    pub c1: Matrix<T>,
    pub d11: Matrix<T>,
    pub d12: Matrix<T>,
    pub c2_t: Matrix<T>,
    pub d21_t: Matrix<T>,
    pub x: Matrix<T>,
    pub t_diag: Vec<T>,
    /// Gradient with respect to gamma_sq; informational only (the gain
    /// bound is a fixed hyperparameter during training).
    pub gamma_sq: T,
}

impl<T: Scalar> TildeGradient<T> {
    pub fn zeros(dims: &Dims) -> Self {
        TildeGradient {
            a_t: Matrix::zeros(dims.n_x, dims.n_x),
            b1_t: Matrix::zeros(dims.n_x, dims.n_u),
            b2_t: Matrix::zeros(dims.n_x, dims.n_z),
            c1: Matrix::zeros(dims.n_y, dims.n_x),
            d11: Matrix::zeros(dims.n_y, dims.n_u),
            d12: Matrix::zeros(dims.n_y, dims.n_z),
            c2_t: Matrix::zeros(dims.n_z, dims.n_x),
            d21_t: Matrix::zeros(dims.n_z, dims.n_u),
            x: Matrix::zeros(dims.n_x, dims.n_x),
            t_diag: vec![T::zero(); dims.n_z],
            gamma_sq: T::zero(),
        }
    }

    pub fn add_scaled(&mut self, other: &TildeGradient<T>, s: T) {
        self.a_t.add_scaled(&other.a_t, s);
        self.b1_t.add_scaled(&other.b1_t, s);
        self.b2_t.add_scaled(&other.b2_t, s);
        self.c1.add_scaled(&other.c1, s);
        self.d11.add_scaled(&other.d11, s);
        self.d12.add_scaled(&other.d12, s);
        self.c2_t.add_scaled(&other.c2_t, s);
        self.d21_t.add_scaled(&other.d21_t, s);
        self.x.add_scaled(&other.x, s);
        for (a, b) in self.t_diag.iter_mut().zip(&other.t_diag) {
            *a = *a + s * *b;
        }
        self.gamma_sq = self.gamma_sq + s * other.gamma_sq;
    }

    /// Flattens in the `TildeParams` layout (gamma excluded).
    pub fn to_flat(&self, dims: &Dims) -> Vec<T> {
        let mut out = Vec::new();
        for m in [
            &self.a_t, &self.b1_t, &self.b2_t, &self.c1, &self.d11, &self.d12, &self.c2_t,
            &self.d21_t,
        ] {
            out.extend_from_slice(m.data());
        }
        for i in 0..dims.n_x {
            for j in 0..=i {
                if i == j {
                    out.push(self.x.get(i, i));
                } else {
                    out.push(self.x.get(i, j) + self.x.get(j, i));
                }
            }
        }
        out.extend_from_slice(&self.t_diag);
        out
    }
}

/// Recovered system matrices used for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitParams<T> {
    pub dims: Dims,
    pub a: Matrix<T>,
    pub b1: Matrix<T>,
    pub b2: Matrix<T>,
    pub c1: Matrix<T>,
    pub d11: Matrix<T>,
    pub d12: Matrix<T>,
    pub c2: Matrix<T>,
    pub d21: Matrix<T>,
}

/// Solver used to undo the X scaling during recovery. Cholesky for the
/// constrained model (X stays positive definite); LU for the unconstrained
/// LTI baseline, whose X may drift indefinite while remaining invertible.
pub enum XSolver<T> {
    Spd(CholeskyFactor<T>),
    Lu(LuFactor<T>),
}

impl<T: Scalar> XSolver<T> {
    pub fn solve_matrix(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        match self {
            XSolver::Spd(f) => f.solve_matrix(rhs),
            XSolver::Lu(f) => f.solve_matrix(rhs),
        }
    }
}

/// Explicit parameters together with the X factorization that produced
/// them, so backward passes can reuse the solve.
pub struct Recovered<T> {
    pub explicit: ExplicitParams<T>,
    pub x_solver: XSolver<T>,
}

fn recover_with<T: Scalar>(p: &TildeParams<T>, solver: XSolver<T>) -> Result<Recovered<T>> {
    p.validate_shapes()?;
    let a = solver.solve_matrix(&p.a_t)?;
    let b1 = solver.solve_matrix(&p.b1_t)?;
    let b2 = solver.solve_matrix(&p.b2_t)?;
    let mut c2 = p.c2_t.clone();
    let mut d21 = p.d21_t.clone();
    for (i, t) in p.t_diag.iter().enumerate() {
        if *t == T::zero() {
            return Err(Error::Singular { pivot: i });
        }
        let inv = T::one() / *t;
        for v in c2.row_mut(i) {
            *v = *v * inv;
        }
        for v in d21.row_mut(i) {
            *v = *v * inv;
        }
    }
    Ok(Recovered {
        explicit: ExplicitParams {
            dims: p.dims,
            a,
            b1,
            b2,
            c1: p.c1.clone(),
            d11: p.d11.clone(),
            d12: p.d12.clone(),
            c2,
            d21,
        },
        x_solver: solver,
    })
}

/// Recovers the explicit system matrices from the convexified set:
/// A = X⁻¹Ã, B1 = X⁻¹B̃1, B2 = X⁻¹B̃2, C2 = T⁻¹C̃2, D21 = T⁻¹D̃21.
/// Requires X positive definite.
pub fn recover_explicit<T: Scalar>(p: &TildeParams<T>) -> Result<ExplicitParams<T>> {
    Ok(recover_explicit_factored(p)?.explicit)
}

pub fn recover_explicit_factored<T: Scalar>(p: &TildeParams<T>) -> Result<Recovered<T>> {
    let chol = crate::numkit::cholesky(&SymmetricMatrix::from_full(&p.x)?)?;
    recover_with(p, XSolver::Spd(chol))
}

/// Recovery through a general LU solve, for the unconstrained LTI baseline.
pub fn recover_explicit_lu<T: Scalar>(p: &TildeParams<T>) -> Result<Recovered<T>> {
    let lu = LuFactor::new(&p.x)?;
    recover_with(p, XSolver::Lu(lu))
}

/// Elementwise tanh, the disturbance block.
pub fn psi<T: Scalar>(z: &[T]) -> Vec<T> {
    z.iter().map(|v| v.tanh()).collect()
}

impl<T: Scalar> ExplicitParams<T> {
    pub fn validate_state_input(&self, x: &[T], u: &[T]) -> Result<()> {
        if x.len() != self.dims.n_x {
            return Err(Error::shape("state", format!("{}", self.dims.n_x), format!("{}", x.len())));
        }
        if u.len() != self.dims.n_u {
            return Err(Error::shape("input", format!("{}", self.dims.n_u), format!("{}", u.len())));
        }
        Ok(())
    }
}

/// One step of the predictor recursion; returns (next state, output).
pub fn step<T: Scalar>(p: &ExplicitParams<T>, x: &[T], u: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    p.validate_state_input(x, u)?;
    let mut z = p.c2.mul_vec(x);
    for (zi, v) in z.iter_mut().zip(p.d21.mul_vec(u)) {
        *zi = *zi + v;
    }
    let w = psi(&z);
    let mut x_next = p.a.mul_vec(x);
    for (xi, v) in x_next.iter_mut().zip(p.b1.mul_vec(u)) {
        *xi = *xi + v;
    }
    for (xi, v) in x_next.iter_mut().zip(p.b2.mul_vec(&w)) {
        *xi = *xi + v;
    }
    let mut y = p.c1.mul_vec(x);
    for (yi, v) in y.iter_mut().zip(p.d11.mul_vec(u)) {
        *yi = *yi + v;
    }
    for (yi, v) in y.iter_mut().zip(p.d12.mul_vec(&w)) {
        *yi = *yi + v;
    }
    Ok((x_next, y))
}

/// Full simulation trace: outputs plus the visited states (including the
/// initial one), which the certificate checks need.
#[derive(Debug, Clone)]
pub struct SimTrace<T> {
    /// T x n_y outputs.
    pub outputs: Matrix<T>,
    /// (T+1) x n_x states; row 0 is x0.
    pub states: Matrix<T>,
}

/// Runs the recursion over an input sequence (rows of `u` are time steps).
pub fn simulate<T: Scalar>(p: &ExplicitParams<T>, x0: &[T], u: &Matrix<T>) -> Result<SimTrace<T>> {
    if u.rows() == 0 {
        return Err(Error::shape("simulate input", "nonempty sequence".to_string(), "0 rows".to_string()));
    }
    if u.cols() != p.dims.n_u {
        return Err(Error::shape("simulate input", format!("{} cols", p.dims.n_u), format!("{}", u.cols())));
    }
    let steps = u.rows();
    let mut outputs = Matrix::zeros(steps, p.dims.n_y);
    let mut states = Matrix::zeros(steps + 1, p.dims.n_x);
    states.row_mut(0).copy_from_slice(x0);
    let mut x = x0.to_vec();
    for k in 0..steps {
        let (x_next, y) = step(p, &x, u.row(k))?;
        outputs.row_mut(k).copy_from_slice(&y);
        states.row_mut(k + 1).copy_from_slice(&x_next);
        x = x_next;
    }
    Ok(SimTrace { outputs, states })
}

/// Which predictor architecture a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// LTI + tanh predictor trained under the definiteness constraint.
    Constrained,
    /// Same parameterization and dynamics, no constraint.
    LtiRnn,
    /// Plain tanh recurrence with biases.
    Rnn,
    /// Stacked LSTM with a linear readout.
    Lstm,
}

impl ModelKind {
    pub fn is_constrained(self) -> bool {
        matches!(self, ModelKind::Constrained)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constrained" | "crnn" => Ok(ModelKind::Constrained),
            "lti_rnn" | "ltirnn" => Ok(ModelKind::LtiRnn),
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Constrained => "constrained",
            ModelKind::LtiRnn => "lti_rnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }
}

/// Parameters of whichever predictor architecture is in use.
#[derive(Debug, Clone)]
pub enum PredictorParams<T> {
    Tilde(TildeParams<T>),
    Rnn(RnnNetwork<T>),
    Lstm(LstmNetwork<T>),
}

impl<T: Scalar> PredictorParams<T> {
    pub fn flat_len(&self) -> usize {
        match self {
            PredictorParams::Tilde(p) => p.flat_len(),
            PredictorParams::Rnn(p) => p.flat_len(),
            PredictorParams::Lstm(p) => p.flat_len(),
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        match self {
            PredictorParams::Tilde(p) => p.to_flat(),
            PredictorParams::Rnn(p) => p.to_flat(),
            PredictorParams::Lstm(p) => p.to_flat(),
        }
    }

    pub fn from_flat(&self, flat: &[T]) -> Self {
        match self {
            PredictorParams::Tilde(p) => PredictorParams::Tilde(p.from_flat(flat)),
            PredictorParams::Rnn(p) => PredictorParams::Rnn(p.from_flat(flat)),
            PredictorParams::Lstm(p) => PredictorParams::Lstm(p.from_flat(flat)),
        }
    }
}

/// A trained (or initialized) model as a whole: predictor parameters, the
/// warmup-state initializer, and the normalization it was trained under.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub kind: ModelKind,
    pub dims: Dims,
    pub predictor: PredictorParams<T>,
    pub initializer: LstmNetwork<T>,
    pub norm: crate::data::Normalization<T>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub sample_period: f64,
    /// Configured gain bound; present only for the constrained kind.
    pub gamma_sq: Option<T>,
}

impl<T: Scalar> Model<T> {
    /// Runs the initializer over a warmup window (rows of [u^k, y^(k-1)])
    /// and returns the final hidden state of the last layer together with
    /// the readout predictions (used only for initializer training loss).
    pub fn init_state(&self, warmup: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
        let fwd = self.initializer.forward(warmup)?;
        let x0 = fwd.final_state.h.last().expect("at least one layer").clone();
        Ok((x0, fwd.outputs))
    }

    /// Simulates the predictor from a given initial state.
    pub fn predict(&self, x0: &[T], u: &Matrix<T>) -> Result<Matrix<T>> {
        baseline_forward(self.kind, &self.predictor, x0, u)
    }

    /// Warmup + prediction in one call.
    pub fn predict_window(&self, warmup: &Matrix<T>, u: &Matrix<T>) -> Result<Matrix<T>> {
        let (x0, _) = self.init_state(warmup)?;
        self.predict(&x0, u)
    }

    pub fn tilde_params(&self) -> Option<&TildeParams<T>> {
        match &self.predictor {
            PredictorParams::Tilde(p) => Some(p),
            _ => None,
        }
    }
}

/// Runs a baseline predictor forward from an initial state. For the LTI
/// baseline this is exactly the constrained dynamics with an unconstrained
/// parameter set; for RNN/LSTM the state seeds the first layer.
pub fn baseline_forward<T: Scalar>(
    kind: ModelKind,
    params: &PredictorParams<T>,
    x0: &[T],
    u: &Matrix<T>,
) -> Result<Matrix<T>> {
    match (kind, params) {
        (ModelKind::Constrained, PredictorParams::Tilde(p)) => {
            Ok(simulate(&recover_explicit_factored(p)?.explicit, x0, u)?.outputs)
        }
        (ModelKind::LtiRnn, PredictorParams::Tilde(p)) => {
            Ok(simulate(&recover_explicit_lu(p)?.explicit, x0, u)?.outputs)
        }
        (ModelKind::Rnn, PredictorParams::Rnn(p)) => Ok(p.forward(x0, u)?.outputs),
        (ModelKind::Lstm, PredictorParams::Lstm(p)) => Ok(p.forward_seeded(x0, u)?.outputs),
        (kind, _) => Err(Error::Config(format!(
            "parameter set does not match model kind {}",
            kind.name()
        ))),
    }
}
