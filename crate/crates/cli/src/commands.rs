//! Subcommand implementations tying the pipeline together.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lmirnn_core::checkpoint;
use lmirnn_core::constraints::{feasibility_margin, feasible, verify_dissipation, verify_incremental};
use lmirnn_core::data::{
    load_csv, normalize_presplit, split_and_normalize, synthetic_raw, write_recording_csv,
    SequenceDataset,
};
use lmirnn_core::error::{Error, Result};
use lmirnn_core::evaluation::{
    compare_models, rmse, worst_gain, worst_incremental_gain, GainReport, GainSearchConfig,
    MetricsReport, ModelSummary,
};
use lmirnn_core::model::ModelKind;
use lmirnn_core::numkit::Matrix;
use lmirnn_core::trainer::{train, TrainOutcome};
use lmirnn_core::{Model64, Splits};

use crate::config::{save_config, DatasetConfig, RunConfig};

/// Exit codes: 0 success, 1 usage/config, 2 data, 3 feasibility or
/// certification failure, 4 training stopped by line search.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CERT: i32 = 3;
pub const EXIT_STOPPED: i32 = 4;

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Data { .. } | Error::Io(_) | Error::NonFinite { .. } => EXIT_DATA,
        Error::NotPositiveDefinite { .. } | Error::Infeasible(_) | Error::Singular { .. } => {
            EXIT_CERT
        }
        _ => EXIT_USAGE,
    }
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn build_splits(cfg: &RunConfig) -> Result<Splits> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { profile } => {
            let (train, val, test, ood) = synthetic_raw::<f64>(profile)?;
            normalize_presplit(train, val, test, ood)
        }
        DatasetConfig::Csv {
            schema,
            train,
            val,
            test,
            ood,
        } => {
            let t = load_csv::<f64>(train, schema)?;
            let v = load_csv::<f64>(val, schema)?;
            let s = load_csv::<f64>(test, schema)?;
            let o = if ood.is_empty() {
                None
            } else {
                Some(load_csv::<f64>(ood, schema)?)
            };
            normalize_presplit(t, v, s, o)
        }
        DatasetConfig::CsvPool {
            schema,
            paths,
            ratios,
            split_seed,
        } => {
            let ds = load_csv::<f64>(paths, schema)?;
            split_and_normalize(&ds, *ratios, *split_seed)
        }
    }
}

fn pick_split<'a>(splits: &'a Splits, name: &str) -> Result<&'a SequenceDataset<f64>> {
    match name {
        "train" => Ok(&splits.train),
        "val" | "validation" => Ok(&splits.val),
        "test" => Ok(&splits.test),
        "ood" => splits
            .ood
            .as_ref()
            .ok_or_else(|| Error::Config("this dataset has no OOD split".into())),
        other => Err(Error::Config(format!(
            "unknown split '{other}' (expected train|val|test|ood)"
        ))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerateManifest {
    format_version: u32,
    seed: u64,
    profile: lmirnn_core::data::SyntheticProfile,
    schema: lmirnn_core::data::CsvSchema,
    files: Vec<String>,
}

pub fn cmd_generate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<i32> {
    let DatasetConfig::Synthetic { profile } = &cfg.dataset else {
        return Err(Error::Config(
            "generate requires a synthetic dataset profile".into(),
        ));
    };
    // validate (and simulate) before any file is written
    let (train, val, test, ood) = synthetic_raw::<f64>(profile)?;
    let dir = out_dir.unwrap_or(&cfg.output_dir).to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut dump = |name: &str, ds: &SequenceDataset<f64>| -> Result<()> {
        let path = dir.join(format!("{name}.csv"));
        write_recording_csv(&path, &ds.input_names, &ds.output_names, &ds.recordings[0])?;
        files.push(format!("{name}.csv"));
        Ok(())
    };
    dump("train", &train)?;
    dump("val", &val)?;
    dump("test", &test)?;
    if let Some(o) = &ood {
        dump("ood", o)?;
    }
    let manifest = GenerateManifest {
        format_version: 1,
        seed: profile.seed,
        profile: profile.clone(),
        schema: lmirnn_core::data::CsvSchema {
            inputs: train.input_names.clone(),
            outputs: train.output_names.clone(),
            sample_period: train.sample_period,
        },
        files,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    println!("wrote {} file(s) to {}", manifest.files.len() + 1, dir.display());
    Ok(EXIT_OK)
}

pub fn cmd_train(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<i32> {
    let kind = cfg.model_kind()?;
    let dims = cfg.dims.to_dims();
    let splits = build_splits(cfg)?;
    let dir = out_dir.unwrap_or(&cfg.output_dir).to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.effective_seed();
    let log_path = dir.join("train_log.jsonl");
    let log_file = std::fs::File::create(&log_path)?;
    let mut log_writer = std::io::BufWriter::new(log_file);
    let result = train(kind, dims, cfg.gamma_sq, &splits, &train_cfg, |record| {
        let line = serde_json::to_string(record).expect("log record serializes");
        writeln!(log_writer, "{line}").expect("training log writable");
    })?;
    log_writer.flush()?;
    let init_log_path = dir.join("init_log.jsonl");
    {
        let f = std::fs::File::create(&init_log_path)?;
        let mut w = std::io::BufWriter::new(f);
        for rec in &result.init_log {
            writeln!(w, "{}", serde_json::to_string(rec)?)?;
        }
        w.flush()?;
    }
    checkpoint::save(&result.model, &dir.join("checkpoint.json"))?;
    save_config(cfg, &dir.join("config_used.json"))?;
    write_json(&result.outcome, &dir.join("outcome.json"))?;
    match result.outcome {
        TrainOutcome::Completed => {
            println!(
                "training completed ({} epochs); checkpoint at {}",
                result.log.len(),
                dir.join("checkpoint.json").display()
            );
            Ok(EXIT_OK)
        }
        TrainOutcome::StoppedByLineSearch { epoch } => {
            println!(
                "training stopped by line search at epoch {epoch}; last feasible checkpoint at {}",
                dir.join("checkpoint.json").display()
            );
            Ok(EXIT_STOPPED)
        }
    }
}

fn load_model(path: &Path) -> Result<Model64> {
    checkpoint::load::<f64>(path)
}

fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("channel,rmse\n");
    for (name, v) in report.channel_names.iter().zip(&report.per_channel_rmse) {
        out.push_str(&format!("{name},{v}\n"));
    }
    out.push_str(&format!("mean,{}\n", report.mean_rmse));
    out
}

pub fn cmd_evaluate(
    checkpoint_path: &Path,
    cfg: &RunConfig,
    split: &str,
    horizon: Option<usize>,
    t_init: Option<usize>,
    output: Option<&Path>,
) -> Result<i32> {
    let model = load_model(checkpoint_path)?;
    let splits = build_splits(cfg)?;
    let ds = pick_split(&splits, split)?;
    let horizon = horizon.unwrap_or(cfg.eval.horizon);
    let t_init = t_init.unwrap_or(cfg.eval.t_init);
    let report = rmse(&model, ds, split, t_init, horizon)?;
    if report.truncated {
        eprintln!(
            "warning: horizon {horizon} exceeds the available sequence length; truncated to {}",
            report.horizon
        );
    }
    let base = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_report_dir(checkpoint_path).join(format!("metrics_{split}.json")));
    write_json(&report, &base)?;
    std::fs::write(base.with_extension("csv"), metrics_csv(&report))?;
    println!(
        "split {split} horizon {}: mean RMSE {:.6} ({} sequences); report at {}",
        report.horizon,
        report.mean_rmse,
        report.sequence_count,
        base.display()
    );
    Ok(EXIT_OK)
}

fn default_report_dir(checkpoint_path: &Path) -> PathBuf {
    checkpoint_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub struct GainArgs {
    pub mode: String,
    pub steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub use_adam: bool,
    pub horizon: Option<usize>,
    pub t_init: Option<usize>,
    pub seed: u64,
}

pub fn cmd_gain_search(
    checkpoint_path: &Path,
    cfg: &RunConfig,
    split: &str,
    args: &GainArgs,
    output: Option<&Path>,
) -> Result<i32> {
    let incremental = match args.mode.as_str() {
        "gain" => false,
        "incremental" => true,
        other => {
            return Err(Error::Config(format!(
                "unknown gain-search mode '{other}' (expected gain|incremental)"
            )))
        }
    };
    let model = load_model(checkpoint_path)?;
    let splits = build_splits(cfg)?;
    let ds = pick_split(&splits, split)?;
    let mut search = if incremental {
        GainSearchConfig::incremental_defaults()
    } else {
        GainSearchConfig::gain_defaults()
    };
    if let Some(s) = args.steps {
        search.steps = s;
    }
    if let Some(lr) = args.learning_rate {
        search.learning_rate = lr;
    }
    search.use_adam = args.use_adam;
    search.seed = args.seed;
    let horizon = args.horizon.unwrap_or(cfg.eval.horizon);
    let t_init = args.t_init.unwrap_or(cfg.eval.t_init);
    let report = if incremental {
        worst_incremental_gain(&model, ds, split, t_init, horizon, &search)?
    } else {
        worst_gain(&model, ds, split, t_init, horizon, &search)?
    };
    let name = if incremental {
        format!("gain_incremental_{split}.json")
    } else {
        format!("gain_{split}.json")
    };
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_report_dir(checkpoint_path).join(name));
    write_json(&report, &path)?;
    let bound = report
        .gamma_sq_configured
        .map(|g| format!(" (configured bound {g})"))
        .unwrap_or_default();
    println!(
        "worst {} over {split}: {:.6}{bound}; report at {}",
        report.mode,
        report.worst_gain,
        path.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    format_version: u32,
    checkpoint: String,
    gamma_sq: f64,
    negative_definite: bool,
    feasibility_margin: f64,
    sequences: usize,
    sequence_length: usize,
    seed: u64,
    step_violations: usize,
    worst_step_slack: f64,
    bound_violations: usize,
    worst_bound_slack: f64,
    incremental_pairs: usize,
    incremental_violations: usize,
    worst_incremental_slack: f64,
    passed: bool,
}

pub fn cmd_certify(
    checkpoint_path: &Path,
    sequences: usize,
    length: usize,
    seed: u64,
    output: Option<&Path>,
) -> Result<i32> {
    use rand::{Rng, SeedableRng};
    let model = load_model(checkpoint_path)?;
    if model.kind != ModelKind::Constrained {
        return Err(Error::Config(format!(
            "certification applies only to constrained models; this checkpoint is '{}'",
            model.kind.name()
        )));
    }
    let p = model
        .tilde_params()
        .expect("constrained checkpoints carry tilde parameters");
    let nd = feasible(p, 0.0);
    let margin = if nd { feasibility_margin(p)? } else { 0.0 };
    let dims = model.dims;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut step_violations = 0usize;
    let mut bound_violations = 0usize;
    let mut worst_step = f64::NEG_INFINITY;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut inc_violations = 0usize;
    let mut worst_inc = f64::NEG_INFINITY;
    let mut pairs = 0usize;
    if nd {
        for s in 0..sequences {
            let x0: Vec<f64> = (0..dims.n_x).map(|_| 0.5 * rng.gen_range(-1.0..=1.0)).collect();
            let u = Matrix::from_fn(length, dims.n_u, |_, _| rng.gen_range(-1.0..=1.0));
            let rep = verify_dissipation(p, &x0, &u, false)?;
            step_violations += rep.step_violations;
            worst_step = worst_step.max(rep.worst_step_slack);
            if !rep.bound_holds {
                bound_violations += 1;
            }
            worst_bound = worst_bound.max(rep.bound_slack);
            if s % 2 == 1 {
                // pair consecutive sequences with a shared initial state
                let u_b = Matrix::from_fn(length, dims.n_u, |_, _| rng.gen_range(-1.0..=1.0));
                let inc = verify_incremental(p, &x0, &u, &u_b)?;
                pairs += 1;
                if !inc.bound_holds {
                    inc_violations += 1;
                }
                worst_inc = worst_inc.max(inc.bound_slack);
            }
        }
    }
    let passed =
        nd && step_violations == 0 && bound_violations == 0 && inc_violations == 0;
    let report = CertifyReport {
        format_version: 1,
        checkpoint: checkpoint_path.display().to_string(),
        gamma_sq: model.gamma_sq.unwrap_or(f64::NAN),
        negative_definite: nd,
        feasibility_margin: margin,
        sequences,
        sequence_length: length,
        seed,
        step_violations,
        worst_step_slack: worst_step,
        bound_violations,
        worst_bound_slack: worst_bound,
        incremental_pairs: pairs,
        incremental_violations: inc_violations,
        worst_incremental_slack: worst_inc,
        passed,
    };
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_report_dir(checkpoint_path).join("certify.json"));
    write_json(&report, &path)?;
    if passed {
        println!(
            "certificate holds: constraint negative definite (margin {margin:.3e}), no violations over {sequences} sequences; report at {}",
            path.display()
        );
        Ok(EXIT_OK)
    } else {
        println!(
            "certification FAILED: negative_definite={nd}, step_violations={step_violations}, bound_violations={bound_violations}, incremental_violations={inc_violations}; report at {}",
            path.display()
        );
        Ok(EXIT_CERT)
    }
}

pub fn cmd_compare(
    run_dirs: &[PathBuf],
    split: &str,
    output: &Path,
    csv: Option<&Path>,
    plot_data: Option<&Path>,
) -> Result<i32> {
    let mut entries = Vec::new();
    for dir in run_dirs {
        let metrics_path = dir.join(format!("metrics_{split}.json"));
        let metrics: MetricsReport = serde_json::from_str(
            &std::fs::read_to_string(&metrics_path).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", metrics_path.display()))
            })?,
        )?;
        let load_gain = |name: String| -> Result<Option<GainReport>> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(serde_json::from_str(&std::fs::read_to_string(&p)?)?))
            } else {
                Ok(None)
            }
        };
        let gain = load_gain(format!("gain_{split}.json"))?;
        let gain_incremental = load_gain(format!("gain_incremental_{split}.json"))?;
        let gamma_sq = {
            let ckpt = dir.join("checkpoint.json");
            if ckpt.exists() {
                load_model(&ckpt).ok().and_then(|m| m.gamma_sq)
            } else {
                None
            }
        };
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        entries.push(ModelSummary {
            name,
            metrics,
            gain,
            gain_incremental,
            gamma_sq,
        });
    }
    let table = compare_models(&entries)?;
    write_json(&table, output)?;
    if let Some(p) = csv {
        std::fs::write(p, table.to_csv())?;
    }
    if let Some(p) = plot_data {
        std::fs::write(p, table.plot_data_csv())?;
    }
    println!("compared {} model(s); table at {}", table.rows.len(), output.display());
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct LeaderboardRow {
    run: String,
    kind: String,
    n_z: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_sq: Option<f64>,
    val_mean_rmse: f64,
    outcome: String,
}

pub fn cmd_grid(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<i32> {
    let kind = cfg.model_kind()?;
    let n_z_values = if cfg.grid.n_z.is_empty() {
        vec![cfg.dims.n_z]
    } else {
        cfg.grid.n_z.clone()
    };
    let gamma_values: Vec<Option<f64>> = if kind.is_constrained() {
        if cfg.grid.gamma_sq.is_empty() {
            vec![cfg.gamma_sq]
        } else {
            cfg.grid.gamma_sq.iter().copied().map(Some).collect()
        }
    } else {
        vec![None]
    };
    let base_dir = out_dir.unwrap_or(&cfg.output_dir).to_path_buf();
    std::fs::create_dir_all(&base_dir)?;
    let mut rows = Vec::new();
    for &n_z in &n_z_values {
        for &gamma in &gamma_values {
            let run_name = match gamma {
                Some(g) => format!("{}_nz{}_g{}", kind.name(), n_z, g),
                None => format!("{}_nz{}", kind.name(), n_z),
            };
            let run_dir = base_dir.join(&run_name);
            let mut sub = cfg.clone();
            sub.dims.n_z = n_z;
            sub.dims.n_x = cfg.dims.n_x.map(|_| n_z);
            sub.gamma_sq = gamma;
            sub.grid = Default::default();
            sub.output_dir = run_dir.clone();
            sub.validate()?;
            println!("=== grid run {run_name}");
            let code = cmd_train(&sub, Some(&run_dir))?;
            let outcome = if code == EXIT_STOPPED {
                "stopped_by_line_search"
            } else {
                "completed"
            };
            let model = load_model(&run_dir.join("checkpoint.json"))?;
            let splits = build_splits(&sub)?;
            let report = rmse(&model, &splits.val, "val", sub.eval.t_init, sub.eval.horizon)?;
            write_json(&report, &run_dir.join("metrics_val.json"))?;
            rows.push(LeaderboardRow {
                run: run_name,
                kind: kind.name().to_string(),
                n_z,
                gamma_sq: gamma,
                val_mean_rmse: report.mean_rmse,
                outcome: outcome.to_string(),
            });
        }
    }
    rows.sort_by(|a, b| a.val_mean_rmse.partial_cmp(&b.val_mean_rmse).unwrap());
    write_json(&rows, &base_dir.join("leaderboard.json"))?;
    let mut csv = String::from("run,kind,n_z,gamma_sq,val_mean_rmse,outcome\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.run,
            r.kind,
            r.n_z,
            r.gamma_sq.map(|g| g.to_string()).unwrap_or_default(),
            r.val_mean_rmse,
            r.outcome
        ));
    }
    std::fs::write(base_dir.join("leaderboard.csv"), csv)?;
    println!(
        "grid finished: {} runs; leaderboard at {}",
        rows.len(),
        base_dir.join("leaderboard.csv").display()
    );
    Ok(EXIT_OK)
}
