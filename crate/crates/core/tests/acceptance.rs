//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities (visible with --nocapture; cargo's own
//! per-test ok/FAILED line reflects the verdict either way).

mod support;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmirnn_core::constraints::{
    assemble_constraint_matrix, barrier, barrier_gradient, feasibility_margin, feasible,
    init_feasible, verify_dissipation, verify_incremental,
};
use lmirnn_core::data::{make_windows, synthetic_splits, SyntheticProfile};
use lmirnn_core::evaluation::{
    rmse, worst_gain, worst_incremental_gain, GainSearchConfig, DEFAULT_EVAL_HORIZON,
    DEFAULT_EVAL_WARMUP,
};
use lmirnn_core::model::{
    Dims, LstmNetwork, Model, ModelKind, PredictorParams, RnnNetwork, TildeParams,
};
use lmirnn_core::numkit::{is_negative_definite, Matrix, SymmetricMatrix};
use lmirnn_core::trainer::{
    batch_loss, bptt_gradients, nu_at, train, BatchItem, TrainConfig, TrainOutcome, TrainResult,
};
use lmirnn_core::Splits;
use support::{central_difference, grad_close, sym_eigenvalues};

// ---------------------------------------------------------------------
// Shared fixture: the constrained training run of criterion 4, reused by
// criterion 5.

struct Fixture {
    splits: Splits,
    result: TrainResult<f64>,
    margins: Vec<f64>,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let profile = SyntheticProfile {
            epsilon: 0.2,
            duration_train: 4000,
            duration_val: 1500,
            duration_test: 1500,
            duration_ood: 1500,
            seed: 1,
            ..Default::default()
        };
        let splits = synthetic_splits::<f64>(&profile).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            init_epochs: 200,
            batch_size: 16,
            seed: 7,
            ..Default::default()
        };
        let mut margins = Vec::new();
        let result = train(
            ModelKind::Constrained,
            Dims::with_state(2, 2, 8, 8),
            Some(20.0),
            &splits,
            &cfg,
            |rec| margins.push(rec.feasibility_margin.unwrap_or(-1.0)),
        )
        .unwrap();
        Fixture {
            splits,
            result,
            margins,
        }
    })
}

// ---------------------------------------------------------------------

/// Criterion 1: certificate soundness. 20 random feasible parameter sets
/// (dims up to (3,3,8,8), gamma^2 in {5, 20}), 100 random inputs of length
/// 200 each: zero violations of the summed bound, and the incremental
/// bound with shared initial state.
#[test]
fn acceptance_01_certificate_soundness() {
    let dim_grid = [
        Dims::with_state(1, 1, 2, 2),
        Dims::with_state(2, 2, 4, 4),
        Dims::with_state(3, 3, 8, 8),
        Dims::with_state(2, 3, 6, 6),
        Dims::with_state(3, 1, 8, 8),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst_bound_slack = f64::NEG_INFINITY;
    let mut worst_inc_slack = f64::NEG_INFINITY;
    for set in 0..20 {
        let dims = dim_grid[set % dim_grid.len()];
        let gamma_sq = if set % 2 == 0 { 5.0 } else { 20.0 };
        let p = init_feasible::<f64>(dims, gamma_sq, 0.5, 9000 + set as u64).unwrap();
        assert!(feasible(&p, 0.0));
        for s in 0..100 {
            let x0: Vec<f64> = (0..dims.n_x).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let u = Matrix::from_fn(200, dims.n_u, |_, _| rng.gen_range(-1.0..=1.0));
            let rep = verify_dissipation(&p, &x0, &u, false).unwrap();
            assert_eq!(
                rep.step_violations, 0,
                "set {set} seq {s}: step violations, worst slack {}",
                rep.worst_step_slack
            );
            assert!(
                rep.bound_slack <= 1e-9,
                "set {set} seq {s}: bound slack {}",
                rep.bound_slack
            );
            worst_bound_slack = worst_bound_slack.max(rep.bound_slack);
            let u_b = Matrix::from_fn(200, dims.n_u, |_, _| rng.gen_range(-1.0..=1.0));
            let inc = verify_incremental(&p, &x0, &u, &u_b).unwrap();
            assert!(
                inc.bound_slack <= 1e-9,
                "set {set} seq {s}: incremental slack {}",
                inc.bound_slack
            );
            worst_inc_slack = worst_inc_slack.max(inc.bound_slack);
        }
    }
    println!(
        "acceptance 1 PASS: 20 sets x 100 sequences, worst bound slack {worst_bound_slack:.3e}, worst incremental slack {worst_inc_slack:.3e}"
    );
}

/// Criterion 2: constraint-matrix assembly matches the hand-built 5x5
/// example entrywise, and the Cholesky definiteness test agrees in sign
/// with a brute-force eigenvalue oracle on 100 random symmetric matrices.
#[test]
fn acceptance_02_lmi_assembly_oracle() {
    // hand example: dims (1,1,1,1), a_t = 0.1, X = T = 1, gamma^2 = 5
    let mut p = TildeParams::<f64>::zero_blocks(Dims::with_state(1, 1, 1, 1), 5.0);
    p.a_t.set(0, 0, 0.1);
    let m = assemble_constraint_matrix(&p).unwrap().m.to_full();
    let expected = [
        [-1.0, 0.0, 0.0, 0.1, 0.0],
        [0.0, -5.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -2.0, 0.0, 0.0],
        [0.1, 0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, -1.0],
    ];
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(m.get(i, j), expected[i][j], "entry ({i},{j})");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut both = [0usize; 2];
    for round in 0..100 {
        let dim = 1 + round % 10;
        let shift = if round % 2 == 0 { -(dim as f64) } else { 0.0 };
        let sym = SymmetricMatrix::from_fn(dim, |i, j| {
            rng.gen_range(-1.0..=1.0) + if i == j { shift } else { 0.0 }
        });
        let eigs = sym_eigenvalues(&sym);
        let expected = *eigs.last().unwrap() < 0.0;
        let got = is_negative_definite(&sym, 0.0).unwrap();
        assert_eq!(got, expected, "round {round} eigenvalues {eigs:?}");
        both[expected as usize] += 1;
    }
    assert!(both[0] > 0 && both[1] > 0);
    println!(
        "acceptance 2 PASS: hand 5x5 exact; eigen-sign agreement on 100 matrices ({} negative definite, {} not)",
        both[1], both[0]
    );
}

/// Criterion 3: BPTT gradients (all four kinds) match central finite
/// differences within 1e-4 relative, and the barrier gradient within 1e-5.
#[test]
fn acceptance_03_gradient_correctness() {
    let dims = Dims::with_state(2, 2, 4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mk_batch = |rng: &mut ChaCha8Rng| {
        let x0s: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..dims.n_x).map(|_| rng.gen_range(-0.5..=0.5)).collect())
            .collect();
        let us: Vec<Matrix<f64>> = (0..2)
            .map(|_| Matrix::from_fn(6, dims.n_u, |_, _| rng.gen_range(-1.0..=1.0)))
            .collect();
        let ys: Vec<Matrix<f64>> = (0..2)
            .map(|_| Matrix::from_fn(6, dims.n_y, |_, _| rng.gen_range(-1.0..=1.0)))
            .collect();
        (x0s, us, ys)
    };
    let kinds: Vec<(ModelKind, PredictorParams<f64>, f64)> = vec![
        (
            ModelKind::Constrained,
            PredictorParams::Tilde(init_feasible(dims, 5.0, 0.4, 51).unwrap()),
            0.001,
        ),
        (
            ModelKind::LtiRnn,
            PredictorParams::Tilde({
                let mut p = init_feasible(dims, 5.0, 0.4, 52).unwrap();
                for i in 0..dims.n_x {
                    p.x.set(i, i, 1.4 + 0.1 * i as f64);
                }
                for (i, t) in p.t_diag.iter_mut().enumerate() {
                    *t = 0.8 + 0.2 * i as f64;
                }
                p
            }),
            0.0,
        ),
        (
            ModelKind::Rnn,
            PredictorParams::Rnn({
                let z = RnnNetwork::zeros(dims.n_u, dims.n_x, 2, dims.n_y);
                let flat: Vec<f64> = (0..z.flat_len()).map(|_| rng.gen_range(-0.5..=0.5)).collect();
                z.from_flat(&flat)
            }),
            0.0,
        ),
        (
            ModelKind::Lstm,
            PredictorParams::Lstm({
                let z = LstmNetwork::zeros(dims.n_u, dims.n_x, 2, dims.n_y);
                let flat: Vec<f64> = (0..z.flat_len()).map(|_| rng.gen_range(-0.5..=0.5)).collect();
                z.from_flat(&flat)
            }),
            0.0,
        ),
    ];
    let mut checked_total = 0usize;
    for (kind, params, nu) in &kinds {
        let (x0s, us, ys) = mk_batch(&mut rng);
        let batch: Vec<BatchItem<'_, f64>> = (0..2)
            .map(|i| BatchItem {
                x0: &x0s[i],
                u: &us[i],
                y: &ys[i],
            })
            .collect();
        let analytic = bptt_gradients(*kind, params, &batch, *nu).unwrap().flat;
        let flat0 = params.to_flat();
        let mut f = |flat: &[f64]| {
            let p = params.from_flat(flat);
            batch_loss(*kind, &p, &batch, *nu).unwrap()
        };
        let numeric = central_difference(&mut f, &flat0, 1e-6);
        for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            assert!(
                grad_close(*a, *n, 1e-4, 1e-9),
                "{} index {k}: {a} vs {n}",
                kind.name()
            );
        }
        checked_total += analytic.len();
    }
    // barrier gradient at 1e-5
    let p = init_feasible::<f64>(dims, 5.0, 0.4, 53).unwrap();
    let analytic = barrier_gradient(&p).unwrap().to_flat(&dims);
    let flat0 = p.to_flat();
    let mut f = |flat: &[f64]| barrier(&p.from_flat(flat)).unwrap();
    let numeric = central_difference(&mut f, &flat0, 1e-6);
    for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        assert!(grad_close(*a, *n, 1e-5, 1e-8), "barrier index {k}: {a} vs {n}");
    }
    checked_total += analytic.len();
    println!("acceptance 3 PASS: {checked_total} parameter gradients verified against central differences");
}

/// Criterion 4: a constrained run (synthetic benchmark, n_z = 8, 200
/// epochs, gamma^2 = 20) keeps the parameters feasible at every logged
/// epoch and the final checkpoint passes certification.
#[test]
fn acceptance_04_constraint_preservation_during_training() {
    let fx = fixture();
    assert_eq!(fx.result.outcome, TrainOutcome::Completed);
    assert_eq!(fx.margins.len(), 200);
    let first_mse = fx.result.log.first().unwrap().mse;
    let last_mse = fx.result.log.last().unwrap().mse;
    assert!(
        last_mse < first_mse,
        "training did not reduce the loss: {first_mse} -> {last_mse}"
    );
    for (epoch, margin) in fx.margins.iter().enumerate() {
        assert!(*margin > 0.0, "epoch {epoch}: feasibility margin {margin}");
    }
    // certification of the final checkpoint: definiteness + fresh
    // dissipation checks (a round-trip through the JSON format included)
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    lmirnn_core::checkpoint::save(&fx.result.model, &path).unwrap();
    let loaded = lmirnn_core::checkpoint::load::<f64>(&path).unwrap();
    let p = loaded.tilde_params().unwrap();
    assert!(feasible(p, 0.0));
    let margin = feasibility_margin(p).unwrap();
    assert!(margin > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for _ in 0..100 {
        let x0: Vec<f64> = (0..8).map(|_| 0.5 * rng.gen_range(-1.0..=1.0)).collect();
        let u = Matrix::from_fn(200, 2, |_, _| rng.gen_range(-1.0..=1.0));
        let rep = verify_dissipation(p, &x0, &u, false).unwrap();
        assert_eq!(rep.step_violations, 0);
        assert!(rep.bound_holds);
    }
    println!(
        "acceptance 4 PASS: 200 epochs all feasible (final margin {margin:.3e}), checkpoint certifies"
    );
}

/// Criterion 5: the empirically searched gains of the criterion-4
/// checkpoint never exceed the configured bound 20 (plus the x0 offset for
/// the non-incremental case).
#[test]
fn acceptance_05_empirical_gain_below_certificate() {
    let fx = fixture();
    let model = &fx.result.model;
    let horizon = 400;
    let gain_cfg = GainSearchConfig::gain_defaults(); // 2000 steps, lr 0.001
    let rep = worst_gain(model, &fx.splits.val, "val", 50, horizon, &gain_cfg).unwrap();
    for s in &rep.per_sequence {
        assert!(!s.failed);
        let bound = 20.0 + s.gamma0.unwrap() / s.denominator_energy;
        assert!(
            s.best_gain <= bound + 1e-9,
            "sequence {}: gain {} above bound {bound}",
            s.seq_index,
            s.best_gain
        );
    }
    let inc_cfg = GainSearchConfig::incremental_defaults(); // 1000 steps
    let rep_inc =
        worst_incremental_gain(model, &fx.splits.val, "val", 50, horizon, &inc_cfg).unwrap();
    assert!(
        rep_inc.worst_gain <= 20.0 + 1e-9,
        "incremental gain {} above configured 20",
        rep_inc.worst_gain
    );
    println!(
        "acceptance 5 PASS: worst gain {:.4}, worst incremental gain {:.4}, bound 20",
        rep.worst_gain, rep_inc.worst_gain
    );
}

/// Criterion 6: with the nonlinearity disabled, the gain search on the
/// scalar system A = 0.5, B1 = C1 = 1 lands within 10% of the
/// frequency-sweep oracle for horizon 2000.
#[test]
fn acceptance_06_linear_gain_oracle() {
    let dims = Dims::with_state(1, 1, 1, 1);
    let mut p = TildeParams::<f64>::zero_blocks(dims, 1.0);
    p.a_t.set(0, 0, 0.5);
    p.b1_t.set(0, 0, 1.0);
    p.c1.set(0, 0, 1.0); // c2 stays zero: tanh path disabled
    let model = Model {
        kind: ModelKind::LtiRnn,
        dims,
        predictor: PredictorParams::Tilde(p.clone()),
        initializer: LstmNetwork::zeros(2, 1, 1, 1),
        norm: lmirnn_core::data::Normalization::identity(2),
        input_names: vec!["u0".into()],
        output_names: vec!["y0".into()],
        sample_period: 1.0,
        gamma_sq: None,
    };
    let horizon = 2000usize;
    // frequency-sweep oracle: simulate sinusoids across frequencies and
    // take the largest output/input energy ratio
    let explicit = lmirnn_core::model::recover_explicit(&p).unwrap();
    let mut oracle = 0.0f64;
    for i in 0..=100 {
        let omega = std::f64::consts::PI * i as f64 / 100.0;
        let u = Matrix::from_fn(horizon, 1, |k, _| (omega * k as f64).cos());
        let trace = lmirnn_core::model::simulate(&explicit, &[0.0], &u).unwrap();
        let num: f64 = trace.outputs.data().iter().map(|v| v * v).sum();
        let den: f64 = u.data().iter().map(|v| v * v).sum();
        oracle = oracle.max(num / den);
    }
    assert!(
        (oracle - 4.0).abs() < 0.05,
        "frequency sweep should approach 4, got {oracle}"
    );
    // search from a small-amplitude base input with the stated defaults
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let rec = Matrix::from_fn(horizon + 6, 2, |_, j| {
        if j == 0 {
            0.003 * rng.gen_range(-1.0..=1.0)
        } else {
            0.0
        }
    });
    let ds = lmirnn_core::data::SequenceDataset {
        input_names: vec!["u0".into()],
        output_names: vec!["y0".into()],
        sample_period: 1.0,
        recordings: vec![rec],
    };
    let cfg = GainSearchConfig::gain_defaults(); // 2000 steps, lr 0.001
    let rep = worst_gain(&model, &ds, "oracle", 5, horizon, &cfg).unwrap();
    let rel = (rep.worst_gain - oracle).abs() / oracle;
    assert!(
        rel <= 0.10,
        "searched gain {} vs oracle {oracle} differ by {:.1}%",
        rep.worst_gain,
        rel * 100.0
    );
    println!(
        "acceptance 6 PASS: searched gain {:.4} within {:.2}% of frequency-sweep oracle {:.4}",
        rep.worst_gain,
        rel * 100.0,
        oracle
    );
}

/// Criterion 7 (reported, not hard-asserted): on matched budgets the
/// unconstrained LTI baseline reaches a validation RMSE no worse than the
/// constrained model while its searched incremental gain exceeds the
/// constrained bound. Printed per seed; violations of the expected
/// ordering are flagged for investigation.
#[test]
fn acceptance_07_tradeoff_trend() {
    let profile = SyntheticProfile {
        epsilon: 0.2,
        duration_train: 4000,
        duration_val: 1500,
        duration_test: 1500,
        duration_ood: 0,
        seed: 77,
        ..Default::default()
    };
    let splits = synthetic_splits::<f64>(&profile).unwrap();
    let dims = Dims::with_state(2, 2, 8, 8);
    let gamma_sq = 20.0;
    let mut rmse_ordering_failures = 0;
    let mut gain_pattern_failures = 0;
    for seed in [101u64, 202, 303] {
        let cfg = TrainConfig {
            epochs: 200,
            init_epochs: 200,
            batch_size: 16,
            seed,
            ..Default::default()
        };
        let constrained = train(
            ModelKind::Constrained,
            dims,
            Some(gamma_sq),
            &splits,
            &cfg,
            |_| {},
        )
        .unwrap();
        let unconstrained = train(ModelKind::LtiRnn, dims, None, &splits, &cfg, |_| {}).unwrap();
        let rc = rmse(&constrained.model, &splits.val, "val", 50, 300).unwrap();
        let ru = rmse(&unconstrained.model, &splits.val, "val", 50, 300).unwrap();
        let inc_cfg = GainSearchConfig {
            steps: 500,
            ..GainSearchConfig::incremental_defaults()
        };
        let gc = worst_incremental_gain(&constrained.model, &splits.val, "val", 50, 300, &inc_cfg)
            .unwrap();
        let gu = worst_incremental_gain(&unconstrained.model, &splits.val, "val", 50, 300, &inc_cfg)
            .unwrap();
        let rmse_ok = ru.mean_rmse <= rc.mean_rmse;
        let gain_ok = gc.worst_gain <= gamma_sq + 1e-9 && gu.worst_gain > gamma_sq;
        println!(
            "acceptance 7 seed {seed}: val mean RMSE unconstrained {:.4} vs constrained {:.4} ({}), incremental gain unconstrained {:.2} vs constrained {:.2} bound {gamma_sq} ({})",
            ru.mean_rmse,
            rc.mean_rmse,
            if rmse_ok { "expected order" } else { "ORDER VIOLATED" },
            gu.worst_gain,
            gc.worst_gain,
            if gain_ok { "expected pattern" } else { "PATTERN NOT OBSERVED" },
        );
        if !rmse_ok {
            rmse_ordering_failures += 1;
        }
        if !gain_ok {
            gain_pattern_failures += 1;
        }
        // the constrained side of the pattern is a certificate, not a
        // statistic: it must hold every time
        assert!(gc.worst_gain <= gamma_sq + 1e-9);
    }
    if rmse_ordering_failures == 3 {
        println!("acceptance 7 WARNING: RMSE ordering failed on all seeds; investigate");
    }
    println!(
        "acceptance 7 PASS (reported): {}/3 seeds with expected RMSE ordering, {}/3 with expected gain pattern",
        3 - rmse_ordering_failures,
        3 - gain_pattern_failures
    );
}

/// Criterion 8: schedule and pipeline arithmetic pinned to their
/// closed-form definitions and documented constants.
#[test]
fn acceptance_08_schedule_and_pipeline_arithmetic() {
    // pinned hyperparameter defaults
    let cfg = TrainConfig::default();
    assert_eq!(cfg.learning_rate, 0.0025);
    assert_eq!(cfg.batch_size, 128);
    assert_eq!(cfg.epochs, 2000);
    assert_eq!(cfg.seq_len_pred, 50);
    assert_eq!(cfg.seq_len_init, 50);
    assert_eq!(cfg.init_epochs, 400);
    assert_eq!(cfg.nu0, 0.001);
    assert_eq!(cfg.nu_decay_factor, 10.0);
    assert_eq!(cfg.nu_decay_every, 100);
    assert_eq!(cfg.backtrack_steps, 100);
    assert_eq!(DEFAULT_EVAL_HORIZON, 900);
    assert_eq!(DEFAULT_EVAL_WARMUP, 50);
    let g = GainSearchConfig::gain_defaults();
    assert_eq!((g.steps, g.learning_rate), (2000, 0.001));
    let gi = GainSearchConfig::incremental_defaults();
    assert_eq!((gi.steps, gi.learning_rate), (1000, 0.001));
    // nu schedule: nu(epoch) = nu0 / factor^floor(epoch/every); after 250
    // epochs the weight is 0.001/100
    assert_eq!(nu_at(&cfg, 250), 0.001 / 100.0);
    for epoch in 0..1000 {
        assert_eq!(nu_at(&cfg, epoch), 0.001 / 10f64.powi((epoch / 100) as i32));
    }
    // window count formula
    let mk = |len: usize| lmirnn_core::data::SequenceDataset::<f64> {
        input_names: vec!["u".into()],
        output_names: vec!["y".into()],
        sample_period: 1.0,
        recordings: vec![Matrix::from_fn(len, 2, |k, j| (k + j) as f64)],
    };
    for (len, ti, tp, stride) in [(101, 50, 50, 50), (150, 50, 50, 1), (400, 50, 50, 50)] {
        let ws = make_windows(&mk(len), ti, tp, stride);
        assert_eq!(ws.windows.len(), (len - ti - tp - 1) / stride + 1);
    }
    // split ratios at recording granularity
    let pool = lmirnn_core::data::SequenceDataset::<f64> {
        input_names: vec!["u".into()],
        output_names: vec!["y".into()],
        sample_period: 1.0,
        recordings: (0..10).map(|r| Matrix::from_fn(120, 2, |k, _| (r * 1000 + k) as f64)).collect(),
    };
    let s = lmirnn_core::data::split_and_normalize(&pool, (0.6, 0.1, 0.3), 3).unwrap();
    assert_eq!(
        (s.train.recordings.len(), s.val.recordings.len(), s.test.recordings.len()),
        (6, 1, 3)
    );
    // RMSE arithmetic: single scalar sequence with errors (3, 4)
    let dims = Dims::with_state(1, 1, 2, 2);
    let model = Model {
        kind: ModelKind::LtiRnn,
        dims,
        predictor: PredictorParams::Tilde(TildeParams::zero_blocks(dims, 1.0)),
        initializer: LstmNetwork::zeros(2, 2, 1, 1),
        norm: lmirnn_core::data::Normalization::identity(2),
        input_names: vec!["u0".into()],
        output_names: vec!["y0".into()],
        sample_period: 1.0,
        gamma_sq: None,
    };
    let mut rec = Matrix::<f64>::zeros(8, 2);
    rec.set(6, 1, 3.0);
    rec.set(7, 1, 4.0);
    let ds = lmirnn_core::data::SequenceDataset {
        input_names: vec!["u0".into()],
        output_names: vec!["y0".into()],
        sample_period: 1.0,
        recordings: vec![rec],
    };
    let rep = rmse(&model, &ds, "t", 5, 2).unwrap();
    assert!((rep.per_channel_rmse[0] - 12.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(rep.mean_rmse, rep.per_channel_rmse[0]);
    println!("acceptance 8 PASS: schedules, window counts, split ratios and RMSE arithmetic exact");
}

/// Criterion 9: identical seed and config give byte-identical logs,
/// checkpoints and reports.
#[test]
fn acceptance_09_reproducibility() {
    let profile = SyntheticProfile {
        epsilon: 0.2,
        duration_train: 2500,
        duration_val: 1200,
        duration_test: 1200,
        duration_ood: 0,
        seed: 5,
        ..Default::default()
    };
    let run = || {
        let splits = synthetic_splits::<f64>(&profile).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            init_epochs: 30,
            batch_size: 32,
            seed: 99,
            ..Default::default()
        };
        let mut log_bytes = Vec::new();
        let result = train(
            ModelKind::Constrained,
            Dims::with_state(2, 2, 4, 4),
            Some(20.0),
            &splits,
            &cfg,
            |rec| {
                log_bytes.extend_from_slice(serde_json::to_string(rec).unwrap().as_bytes());
                log_bytes.push(b'\n');
            },
        )
        .unwrap();
        let ckpt =
            serde_json::to_string(&lmirnn_core::checkpoint::model_to_doc(&result.model)).unwrap();
        let metrics = rmse(&result.model, &splits.val, "val", 50, 200).unwrap();
        let gain = worst_gain(
            &result.model,
            &splits.val,
            "val",
            50,
            200,
            &GainSearchConfig {
                steps: 50,
                ..GainSearchConfig::gain_defaults()
            },
        )
        .unwrap();
        (
            log_bytes,
            ckpt,
            serde_json::to_string(&metrics).unwrap(),
            serde_json::to_string(&gain).unwrap(),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a.0, b.0, "training logs differ");
    assert_eq!(a.1, b.1, "checkpoints differ");
    assert_eq!(a.2, b.2, "metrics reports differ");
    assert_eq!(a.3, b.3, "gain reports differ");
    println!("acceptance 9 PASS: logs, checkpoints and reports byte-identical across two runs");
}
