//! Assembly and management of the definiteness certificate: the multiplier
//! matrices, the 5x5-block constraint matrix M, the log-det barrier and its
//! gradient, an analytic feasible initializer, and a numerical verifier of
//! the dissipation argument behind the gain bound.
//!
//! Block row order of M (dimension n_x + n_u + n_z + n_x + n_y):
//!
//! ```text
//!   row 1 (x):      [ -X      0        C2~ᵀ    A~ᵀ    C1ᵀ  ]
//!   row 2 (gamma):  [  0     -g²I      D21~ᵀ   B1~ᵀ   D11ᵀ ]
//!   row 3 (T):      [  C2~    D21~    -2T      B2~ᵀ   D12ᵀ ]
//!   row 4 (state):  [  A~     B1~      B2~    -X      0    ]
//!   row 5 (output): [  C1     D11      D12     0     -I    ]
//! ```
//!
//! The tanh sector (0, 1) is baked into the -2T and off-diagonal T blocks;
//! general sector bounds are exposed only through the multiplier matrices
//! for verification purposes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{recover_explicit_factored, simulate, SectorBounds, TildeGradient, TildeParams};
use crate::numkit::{
    cholesky, inv_spd, is_negative_definite, norm_sq, Matrix, SymmetricMatrix,
};
use crate::scalar::{lit, to_f64, Scalar};

/// Index ranges of the five semantic block rows/columns of M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub x_rows: std::ops::Range<usize>,
    pub gamma_rows: std::ops::Range<usize>,
    pub t_rows: std::ops::Range<usize>,
    pub state_rows: std::ops::Range<usize>,
    pub output_rows: std::ops::Range<usize>,
}

impl BlockLayout {
    pub fn new(dims: &crate::model::Dims) -> Self {
        let o1 = 0;
        let o2 = o1 + dims.n_x;
        let o3 = o2 + dims.n_u;
        let o4 = o3 + dims.n_z;
        let o5 = o4 + dims.n_x;
        let end = o5 + dims.n_y;
        BlockLayout {
            x_rows: o1..o2,
            gamma_rows: o2..o3,
            t_rows: o3..o4,
            state_rows: o4..o5,
            output_rows: o5..end,
        }
    }

    pub fn dim(&self) -> usize {
        self.output_rows.end
    }
}

/// The assembled symmetric constraint matrix plus its block layout.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix<T> {
    pub m: SymmetricMatrix<T>,
    pub layout: BlockLayout,
}

/// Builds M from the convexified parameter set. Symmetry is structural:
/// only the lower triangle is ever written.
pub fn assemble_constraint_matrix<T: Scalar>(p: &TildeParams<T>) -> Result<ConstraintMatrix<T>> {
    p.validate_shapes()?;
    let layout = BlockLayout::new(&p.dims);
    let mut m = SymmetricMatrix::zeros(layout.dim());
    let (o1, o2, o3, o4, o5) = (
        layout.x_rows.start,
        layout.gamma_rows.start,
        layout.t_rows.start,
        layout.state_rows.start,
        layout.output_rows.start,
    );
    // diagonal blocks
    for i in 0..p.dims.n_x {
        for j in 0..=i {
            m.set(o1 + i, o1 + j, -p.x.get(i, j));
            m.set(o4 + i, o4 + j, -p.x.get(i, j));
        }
    }
    for i in 0..p.dims.n_u {
        m.set(o2 + i, o2 + i, -p.gamma_sq);
    }
    for i in 0..p.dims.n_z {
        m.set(o3 + i, o3 + i, -(p.t_diag[i] + p.t_diag[i]));
    }
    for i in 0..p.dims.n_y {
        m.set(o5 + i, o5 + i, -T::one());
    }
    // lower off-diagonal blocks
    for i in 0..p.dims.n_z {
        for j in 0..p.dims.n_x {
            m.set(o3 + i, o1 + j, p.c2_t.get(i, j));
        }
        for j in 0..p.dims.n_u {
            m.set(o3 + i, o2 + j, p.d21_t.get(i, j));
        }
    }
    for i in 0..p.dims.n_x {
        for j in 0..p.dims.n_x {
            m.set(o4 + i, o1 + j, p.a_t.get(i, j));
        }
        for j in 0..p.dims.n_u {
            m.set(o4 + i, o2 + j, p.b1_t.get(i, j));
        }
        for j in 0..p.dims.n_z {
            m.set(o4 + i, o3 + j, p.b2_t.get(i, j));
        }
    }
    for i in 0..p.dims.n_y {
        for j in 0..p.dims.n_x {
            m.set(o5 + i, o1 + j, p.c1.get(i, j));
        }
        for j in 0..p.dims.n_u {
            m.set(o5 + i, o2 + j, p.d11.get(i, j));
        }
        for j in 0..p.dims.n_z {
            m.set(o5 + i, o3 + j, p.d12.get(i, j));
        }
    }
    Ok(ConstraintMatrix { m, layout })
}

/// Default feasibility margin used during training: 1e-8 scaled by the
/// dimension of M, to keep Cholesky honest at the boundary.
pub fn training_margin<T: Scalar>(dims: &crate::model::Dims) -> T {
    let dim = BlockLayout::new(dims).dim();
    lit::<T>(1e-8) * T::from_usize(dim).unwrap()
}

/// True iff M is negative definite with the given margin. Non-finite
/// parameters are simply infeasible, never an error.
pub fn feasible<T: Scalar>(p: &TildeParams<T>, margin: T) -> bool {
    match assemble_constraint_matrix(p) {
        Ok(cm) => {
            if !cm.m.is_finite() {
                return false;
            }
            is_negative_definite(&cm.m, margin).unwrap_or(false)
        }
        Err(_) => false,
    }
}

/// Analytic feasible initialization: X = T = I and small random system
/// blocks, halved until the constraint holds with margin. Zero blocks are
/// always feasible, so the halving loop terminates.
pub fn init_feasible<T: Scalar>(
    dims: crate::model::Dims,
    gamma_sq: T,
    scale: f64,
    seed: u64,
) -> Result<TildeParams<T>> {
    dims.validate()?;
    if gamma_sq <= T::zero() {
        return Err(Error::Config("gamma_sq must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = TildeParams::zero_blocks(dims, gamma_sq);
    let fill = |m: &mut Matrix<T>, rng: &mut ChaCha8Rng| {
        for v in m.data_mut() {
            *v = lit::<T>(rng.gen_range(-scale..=scale));
        }
    };
    fill(&mut p.a_t, &mut rng);
    fill(&mut p.b1_t, &mut rng);
    fill(&mut p.b2_t, &mut rng);
    fill(&mut p.c1, &mut rng);
    fill(&mut p.d11, &mut rng);
    fill(&mut p.d12, &mut rng);
    fill(&mut p.c2_t, &mut rng);
    fill(&mut p.d21_t, &mut rng);
    let margin = training_margin::<T>(&dims);
    let half = lit::<T>(0.5);
    for _ in 0..=60 {
        if feasible(&p, margin) {
            return Ok(p);
        }
        for m in [
            &mut p.a_t, &mut p.b1_t, &mut p.b2_t, &mut p.c1, &mut p.d11, &mut p.d12, &mut p.c2_t,
            &mut p.d21_t,
        ] {
            for v in m.data_mut() {
                *v = *v * half;
            }
        }
    }
    Err(Error::Infeasible(
        "no feasible point after 60 halvings (gamma_sq too small for margin?)".into(),
    ))
}

/// Barrier value -log det(-M). Errors if M is not negative definite.
pub fn barrier<T: Scalar>(p: &TildeParams<T>) -> Result<T> {
    let cm = assemble_constraint_matrix(p)?;
    let neg = cm.m.negated_with_margin(T::zero());
    Ok(-cholesky(&neg)?.log_det())
}

/// d(-log det(-M))/dM maps back through the block placements: a parameter
/// sitting at position (r, c) of M (and mirrored at (c, r)) receives
/// 2·G[r][c] where G = (-M)⁻¹; diagonal placements receive G once.
pub fn barrier_gradient<T: Scalar>(p: &TildeParams<T>) -> Result<TildeGradient<T>> {
    let cm = assemble_constraint_matrix(p)?;
    let neg = cm.m.negated_with_margin(T::zero());
    let g = inv_spd(&neg)?;
    let d = &p.dims;
    let (o1, o2, o3, o4, o5) = (
        cm.layout.x_rows.start,
        cm.layout.gamma_rows.start,
        cm.layout.t_rows.start,
        cm.layout.state_rows.start,
        cm.layout.output_rows.start,
    );
    let two = lit::<T>(2.0);
    let grad_block = |row0: usize, col0: usize, rows: usize, cols: usize| {
        Matrix::from_fn(rows, cols, |i, j| two * g.get(row0 + i, col0 + j))
    };
    let a_t = grad_block(o4, o1, d.n_x, d.n_x);
    let b1_t = grad_block(o4, o2, d.n_x, d.n_u);
    let b2_t = grad_block(o4, o3, d.n_x, d.n_z);
    let c1 = grad_block(o5, o1, d.n_y, d.n_x);
    let d11 = grad_block(o5, o2, d.n_y, d.n_u);
    let d12 = grad_block(o5, o3, d.n_y, d.n_z);
    let c2_t = grad_block(o3, o1, d.n_z, d.n_x);
    let d21_t = grad_block(o3, o2, d.n_z, d.n_u);
    // X appears as -X in blocks (1,1) and (4,4)
    let x = Matrix::from_fn(d.n_x, d.n_x, |i, j| {
        -(g.get(o1 + i, o1 + j) + g.get(o4 + i, o4 + j))
    });
    let t_diag = (0..d.n_z)
        .map(|i| -two * g.get(o3 + i, o3 + i))
        .collect();
    let gamma_sq = -(0..d.n_u).fold(T::zero(), |acc, i| acc + g.get(o2 + i, o2 + i));
    Ok(TildeGradient {
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
        gamma_sq,
    })
}

/// The two multiplier matrices in 2x2 block form (each 2·n_z square):
/// P = [[-2T, s·T], [s·T, -p·T]] with s = alpha+beta (resp. mu+eta) and
/// p = 2·alpha·beta (resp. 2·mu·eta).
#[derive(Debug, Clone)]
pub struct MultiplierPair<T> {
    pub p_sect: SymmetricMatrix<T>,
    pub p_slope: SymmetricMatrix<T>,
}

pub fn multiplier_matrices<T: Scalar>(
    sb: &SectorBounds<T>,
    t_diag: &[T],
) -> Result<MultiplierPair<T>> {
    sb.validate()?;
    if t_diag.iter().any(|t| *t <= T::zero()) {
        return Err(Error::Config("multiplier diagonal must be strictly positive".into()));
    }
    let n = t_diag.len();
    let two = lit::<T>(2.0);
    let build = |lo: T, hi: T| {
        SymmetricMatrix::from_fn(2 * n, |i, j| {
            if i == j {
                if i < n {
                    -two * t_diag[i]
                } else {
                    -two * lo * hi * t_diag[i - n]
                }
            } else if i >= n && j < n && i - n == j {
                (lo + hi) * t_diag[j]
            } else {
                T::zero()
            }
        })
    };
    Ok(MultiplierPair {
        p_sect: build(sb.alpha, sb.beta),
        p_slope: build(sb.mu, sb.eta),
    })
}

/// Quadratic form v'Pv for the stacked vector (top, bottom).
pub fn multiplier_quadratic_form<T: Scalar>(
    p: &SymmetricMatrix<T>,
    top: &[T],
    bottom: &[T],
) -> T {
    let n = top.len();
    assert_eq!(bottom.len(), n);
    assert_eq!(p.dim(), 2 * n);
    let mut v = Vec::with_capacity(2 * n);
    v.extend_from_slice(top);
    v.extend_from_slice(bottom);
    let mut acc = T::zero();
    for i in 0..2 * n {
        for j in 0..2 * n {
            acc = acc + v[i] * p.get(i, j) * v[j];
        }
    }
    acc
}

/// Outcome of the numerical dissipation check on one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    /// Number of steps where the per-step inequality was violated beyond
    /// the tolerance.
    pub step_violations: usize,
    /// Largest per-step slack V(x+) - V(x) + |y|^2 - g^2|u|^2 (negative
    /// means the inequality held with room).
    pub worst_step_slack: f64,
    /// Output energy sum.
    pub output_energy: f64,
    /// g^2 times the input energy sum.
    pub gain_times_input_energy: f64,
    /// Initial-state offset x0' X x0.
    pub gamma0: f64,
    /// Slack of the summed bound (negative means it held).
    pub bound_slack: f64,
    /// True iff the summed bound held within tolerance.
    pub bound_holds: bool,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step_slack: Option<Vec<f64>>,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.step_violations == 0 && self.bound_holds
    }
}

/// Simulates the recovered system and checks the per-step dissipation
/// inequality and the summed gain bound
/// `sum |y|^2 <= g^2 sum |u|^2 + x0' X x0`. Total on infeasible inputs:
/// violations are reported, not raised.
pub fn verify_dissipation<T: Scalar>(
    p: &TildeParams<T>,
    x0: &[T],
    u: &Matrix<T>,
    keep_per_step: bool,
) -> Result<DissipationReport> {
    let tol = 1e-9;
    let rec = recover_explicit_factored(p)?;
    let trace = simulate(&rec.explicit, x0, u)?;
    let x_sym = SymmetricMatrix::from_full(&p.x)?;
    let v_of = |x: &[T]| -> f64 {
        let xv = x_sym.to_full().mul_vec(x);
        to_f64(crate::numkit::dot(x, &xv))
    };
    let gamma_sq = to_f64(p.gamma_sq);
    let steps = u.rows();
    let mut step_violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut out_energy = 0.0f64;
    let mut in_energy = 0.0f64;
    let mut per_step = if keep_per_step { Some(Vec::with_capacity(steps)) } else { None };
    for k in 0..steps {
        let v_now = v_of(trace.states.row(k));
        let v_next = v_of(trace.states.row(k + 1));
        let ye = to_f64(norm_sq(trace.outputs.row(k)));
        let ue = to_f64(norm_sq(u.row(k)));
        let slack = v_next - v_now + ye - gamma_sq * ue;
        if slack > tol {
            step_violations += 1;
        }
        worst = worst.max(slack);
        out_energy += ye;
        in_energy += ue;
        if let Some(v) = per_step.as_mut() {
            v.push(slack);
        }
    }
    let gamma0 = v_of(x0);
    let bound_slack = out_energy - (gamma_sq * in_energy + gamma0);
    Ok(DissipationReport {
        step_violations,
        worst_step_slack: worst,
        output_energy: out_energy,
        gain_times_input_energy: gamma_sq * in_energy,
        gamma0,
        bound_slack,
        bound_holds: bound_slack <= tol,
        tolerance: tol,
        per_step_slack: per_step,
    })
}

/// Incremental variant: two trajectories from the same initial state; the
/// difference signals must satisfy `sum |dy|^2 <= g^2 sum |du|^2` (no
/// offset, since dx0 = 0).
pub fn verify_incremental<T: Scalar>(
    p: &TildeParams<T>,
    x0: &[T],
    u_a: &Matrix<T>,
    u_b: &Matrix<T>,
) -> Result<DissipationReport> {
    if u_a.rows() != u_b.rows() || u_a.cols() != u_b.cols() {
        return Err(Error::shape(
            "verify_incremental",
            format!("{}x{}", u_a.rows(), u_a.cols()),
            format!("{}x{}", u_b.rows(), u_b.cols()),
        ));
    }
    let tol = 1e-9;
    let rec = recover_explicit_factored(p)?;
    let ta = simulate(&rec.explicit, x0, u_a)?;
    let tb = simulate(&rec.explicit, x0, u_b)?;
    let x_sym = SymmetricMatrix::from_full(&p.x)?;
    let x_full = x_sym.to_full();
    let v_of_diff = |xa: &[T], xb: &[T]| -> f64 {
        let d: Vec<T> = xa.iter().zip(xb).map(|(a, b)| *a - *b).collect();
        let xv = x_full.mul_vec(&d);
        to_f64(crate::numkit::dot(&d, &xv))
    };
    let gamma_sq = to_f64(p.gamma_sq);
    let steps = u_a.rows();
    let mut step_violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut dy_energy = 0.0f64;
    let mut du_energy = 0.0f64;
    for k in 0..steps {
        let v_now = v_of_diff(ta.states.row(k), tb.states.row(k));
        let v_next = v_of_diff(ta.states.row(k + 1), tb.states.row(k + 1));
        let dy: f64 = ta
            .outputs
            .row(k)
            .iter()
            .zip(tb.outputs.row(k))
            .map(|(a, b)| to_f64(*a - *b).powi(2))
            .sum();
        let du: f64 = u_a
            .row(k)
            .iter()
            .zip(u_b.row(k))
            .map(|(a, b)| to_f64(*a - *b).powi(2))
            .sum();
        let slack = v_next - v_now + dy - gamma_sq * du;
        if slack > tol {
            step_violations += 1;
        }
        worst = worst.max(slack);
        dy_energy += dy;
        du_energy += du;
    }
    let bound_slack = dy_energy - gamma_sq * du_energy;
    Ok(DissipationReport {
        step_violations,
        worst_step_slack: worst,
        output_energy: dy_energy,
        gain_times_input_energy: gamma_sq * du_energy,
        gamma0: 0.0,
        bound_slack,
        bound_holds: bound_slack <= tol,
        tolerance: tol,
        per_step_slack: None,
    })
}

/// Largest margin for which M is still negative definite, found by
/// bisection on the Cholesky test. A proxy for |lambda_max(M)|.
pub fn feasibility_margin<T: Scalar>(p: &TildeParams<T>) -> Result<f64> {
    let cm = assemble_constraint_matrix(p)?;
    if !is_negative_definite(&cm.m, T::zero())? {
        return Ok(0.0);
    }
    // bracket: diagonal entries bound |lambda| from below at.. use Frobenius
    let mut hi = to_f64(cm.m.frobenius_norm()).max(1e-300);
    let mut lo = 0.0f64;
    if is_negative_definite(&cm.m, lit::<T>(hi))? {
        return Ok(hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if is_negative_definite(&cm.m, lit::<T>(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(lo)
}
