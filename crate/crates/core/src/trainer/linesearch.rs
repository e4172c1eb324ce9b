//! Backtracking line search that keeps the constrained parameters inside
//! the feasible set: accept the proposed point if it satisfies the
//! definiteness test, otherwise walk back toward the last feasible point,
//! halving the step each attempt.

use crate::constraints::feasible;
use crate::model::TildeParams;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchStatus {
    /// Accepted, possibly after backtracking; `tau` is the accepted step
    /// fraction and `halvings` how many times it was halved.
    Accepted { tau: f64, halvings: u32 },
    /// No feasible point found within the attempt budget; training must
    /// stop with the previous parameters.
    StopTraining,
}

/// Returns the accepted parameter set (p_old itself when stopping) and the
/// search status. `p_old` must be feasible; the result always is.
pub fn constrained_update<T: Scalar>(
    p_old: &TildeParams<T>,
    p_proposed: &TildeParams<T>,
    margin: T,
    max_steps: u32,
) -> (TildeParams<T>, LineSearchStatus) {
    if feasible(p_proposed, margin) {
        return (
            p_proposed.clone(),
            LineSearchStatus::Accepted {
                tau: 1.0,
                halvings: 0,
            },
        );
    }
    let old_flat = p_old.to_flat();
    let prop_flat = p_proposed.to_flat();
    let mut tau = 1.0f64;
    for attempt in 1..=max_steps {
        tau *= 0.5;
        let t = lit::<T>(tau);
        let flat: Vec<T> = old_flat
            .iter()
            .zip(&prop_flat)
            .map(|(o, p)| *o + t * (*p - *o))
            .collect();
        let candidate = p_old.from_flat(&flat);
        if feasible(&candidate, margin) {
            return (
                candidate,
                LineSearchStatus::Accepted {
                    tau,
                    halvings: attempt,
                },
            );
        }
    }
    (p_old.clone(), LineSearchStatus::StopTraining)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::init_feasible;
    use crate::model::Dims;

    #[test]
    fn feasible_proposal_accepted_at_full_step() {
        let dims = Dims::with_state(1, 1, 2, 2);
        let p_old = init_feasible::<f64>(dims, 5.0, 0.1, 1).unwrap();
        let p_new = init_feasible::<f64>(dims, 5.0, 0.1, 2).unwrap();
        let (accepted, status) = constrained_update(&p_old, &p_new, 0.0, 100);
        assert_eq!(
            status,
            LineSearchStatus::Accepted {
                tau: 1.0,
                halvings: 0
            }
        );
        assert_eq!(accepted, p_new);
    }

    #[test]
    fn infeasible_proposal_backtracks_to_feasible() {
        let dims = Dims::with_state(1, 1, 2, 2);
        let p_old = init_feasible::<f64>(dims, 5.0, 0.1, 3).unwrap();
        let mut p_new = p_old.clone();
        for v in p_new.a_t.data_mut() {
            *v = *v + 50.0;
        }
        assert!(!feasible(&p_new, 0.0));
        let (accepted, status) = constrained_update(&p_old, &p_new, 1e-9, 100);
        match status {
            LineSearchStatus::Accepted { tau, halvings } => {
                assert!(tau < 1.0);
                assert!(halvings >= 1);
            }
            other => panic!("expected acceptance, got {other:?}"),
        }
        assert!(feasible(&accepted, 1e-9));
    }

    #[test]
    fn hopeless_proposal_stops_training() {
        // an infeasible X makes every tau > 0 infeasible once it dominates:
        // push X toward a near-singular direction so that even tiny steps
        // violate the margin
        let dims = Dims::with_state(1, 1, 2, 2);
        let p_old = init_feasible::<f64>(dims, 5.0, 0.0, 4).unwrap();
        let mut p_new = p_old.clone();
        // X entry blows up so far that any convex combination with tau >=
        // 2^-100 stays infeasible under a large margin
        p_new.x.set(0, 0, -1e40);
        let (accepted, status) = constrained_update(&p_old, &p_new, 1e-6, 100);
        assert_eq!(status, LineSearchStatus::StopTraining);
        assert_eq!(accepted, p_old);
    }
}
