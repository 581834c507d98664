//! Command implementations behind the `hybeam` binary: dataset generation,
//! training, evaluation, classical baselines, the 2x2 ablation grid, and
//! CSV report merging. Every command is reproducible from (config, seed)
//! and writes into one artifact directory named by config hash and seed.

use crate::baselines::{train_mlp, MlpModel};
use crate::channel::{gen_dataset, Dataset, Split};
use crate::config::{ModelKind, RunConfig};
use crate::eval::{baseline_rows, run_experiment, ModelHandle, ResultRow, CSV_HEADER};
use crate::hgnn::{train, HgnnModel, TrainReport};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Creates the run directory and writes the resolved config into it.
pub fn prepare_run_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    Ok(dir)
}

fn dataset_stem(dir: &Path, split: Split) -> PathBuf {
    match split {
        Split::Train => dir.join("dataset_train"),
        Split::Test => dir.join("dataset_test"),
    }
}

/// Generates and writes the train/test datasets of a run.
pub fn cmd_gen_data(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let dir = prepare_run_dir(config)?;
    let train_set = gen_dataset(&config.scenario, config.training.train_samples, Split::Train)?;
    train_set.save(&dataset_stem(&dir, Split::Train))?;
    let test_set = gen_dataset(&config.scenario, config.training.test_samples, Split::Test)?;
    test_set.save(&dataset_stem(&dir, Split::Test))?;
    Ok(dir)
}

/// Loads the run's datasets, generating them first if absent.
pub fn ensure_datasets(config: &RunConfig) -> Result<(Dataset, Dataset, PathBuf)> {
    let dir = config.run_dir();
    let train_stem = dataset_stem(&dir, Split::Train);
    if !train_stem.with_extension("json").exists() {
        cmd_gen_data(config)?;
    }
    let train_set = Dataset::load(&train_stem)?;
    let test_set = Dataset::load(&dataset_stem(&dir, Split::Test))?;
    Ok((train_set, test_set, dir))
}

pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub report: TrainReport,
}

/// Trains the configured model (HGNN or MLP), writing a checkpoint and the
/// learning-curve CSV into the run directory.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_set, test_set, dir) = ensure_datasets(config)?;
    let params = config.train_params();
    let stem = dir.join("checkpoint");
    let report = match config.model.kind {
        ModelKind::Hgnn => {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::channel::derive_seed(
                config.training.seed,
                &[0x696e6974],
            ));
            let mut model = HgnnModel::new(config.hgnn_config(), &mut rng)?;
            let report = train(&mut model, &train_set, &test_set, &params)?;
            model.save(&stem)?;
            report
        }
        ModelKind::Mlp => {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::channel::derive_seed(
                config.training.seed,
                &[0x696e6974],
            ));
            let mut model = MlpModel::new(
                &config.scenario,
                &config.model.mlp_hidden,
                config.model.dropout,
                &mut rng,
            );
            let report = train_mlp(&mut model, &train_set, &test_set, &params)?;
            model.save(&stem)?;
            report
        }
    };
    fs::write(dir.join("curve.csv"), report.to_csv())?;
    Ok(TrainOutcome { run_dir: dir.clone(), checkpoint: stem, report })
}

fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Evaluates the trained checkpoint under the configured experiment kind
/// and writes `results_<kind>.csv`.
pub fn cmd_eval(config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let dir = config.run_dir();
    let stem = dir.join("checkpoint");
    if !stem.with_extension("json").exists() {
        return Err(Error::Input(format!(
            "missing checkpoint {} (run `hybeam train` first)",
            stem.display()
        )));
    }
    let (_, test_set, _) = ensure_datasets(config)?;
    let kind = config.experiment.kind.as_str();
    let kind = if kind == "ablation" || kind == "nbar_sweep" { "basic" } else { kind };
    let label = config.method_label();
    let rows = match config.model.kind {
        ModelKind::Hgnn => {
            let mut model = HgnnModel::load(&stem)?;
            run_experiment(
                kind,
                &label,
                ModelHandle::Hgnn(&mut model),
                &test_set,
                &config.experiment.snr_db,
                config.experiment.phase_error_deg,
                &config.experiment.scalability_ues,
                config.training.seed,
            )?
        }
        ModelKind::Mlp => {
            let model = MlpModel::load(&stem)?;
            run_experiment(
                kind,
                &label,
                ModelHandle::Mlp(&model),
                &test_set,
                &config.experiment.snr_db,
                config.experiment.phase_error_deg,
                &config.experiment.scalability_ues,
                config.training.seed,
            )?
        }
    };
    write_rows(&dir.join(format!("results_{kind}.csv")), &rows)?;
    Ok(rows)
}

/// Runs the classical baselines (WMMSE, MO-AltMin, PC-AltMin (LS)) on the
/// run's test set and writes `results_baseline_<kind>.csv`.
pub fn cmd_baseline(config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let (_, test_set, dir) = ensure_datasets(config)?;
    let kind = config.experiment.kind.as_str();
    let kind = if kind == "snr_sweep" { "snr_sweep" } else { "basic" };
    let rows = baseline_rows(kind, &test_set, &config.experiment.snr_db, config.training.seed)?;
    write_rows(&dir.join(format!("results_baseline_{kind}.csv")), &rows)?;
    Ok(rows)
}

/// Trains and evaluates the 2x2 {attention} x {residual} grid, writing
/// exactly four ablation rows.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.model.kind != ModelKind::Hgnn {
        return Err(Error::Input("ablation applies to the HGNN model".into()));
    }
    let (train_set, test_set, dir) = ensure_datasets(config)?;
    let params = config.train_params();
    let mut rows = Vec::with_capacity(4);
    for (attention, residual) in [(true, true), (true, false), (false, true), (false, false)] {
        let mut hc = config.hgnn_config();
        hc.attention = attention;
        hc.residual = residual;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::channel::derive_seed(
            config.training.seed,
            &[0x696e6974],
        ));
        let mut model = HgnnModel::new(hc, &mut rng)?;
        let start = std::time::Instant::now();
        let report = train(&mut model, &train_set, &test_set, &params)?;
        let variant = format!(
            "{}{}{}",
            config.method_label(),
            if attention { "+att" } else { "-att" },
            if residual { "+res" } else { "-res" },
        );
        let mut row = crate::eval::run_experiment(
            "basic",
            &variant,
            ModelHandle::Hgnn(&mut model),
            &test_set,
            &[],
            0.0,
            &[],
            config.training.seed,
        )?
        .pop()
        .expect("basic emits one row");
        row.experiment = "ablation".into();
        row.wallclock_s = start.elapsed().as_secs_f64();
        row.mean_sum_se = report.final_test_sum_se();
        rows.push(row);
    }
    write_rows(&dir.join("results_ablation.csv"), &rows)?;
    Ok(rows)
}

/// Merges every `results*.csv` under the output directory into
/// `merged.csv` plus per-(experiment, method) x/y series files. Never
/// recomputes metrics; duplicate keys with diverging values are an error.
pub fn cmd_report(out_dir: &Path) -> Result<PathBuf> {
    let mut rows: BTreeMap<String, ResultRow> = BTreeMap::new();
    let mut stack = vec![out_dir.to_path_buf()];
    let mut found_any = false;
    while let Some(dir) = stack.pop() {
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
            if !(name.starts_with("results") && name.ends_with(".csv")) {
                continue;
            }
            found_any = true;
            let text = fs::read_to_string(&path)?;
            for line in text.lines().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let row = ResultRow::from_csv(line)?;
                let key = row.key();
                if let Some(existing) = rows.get(&key) {
                    if (existing.mean_sum_se - row.mean_sum_se).abs() > 1e-9 {
                        return Err(Error::Input(format!(
                            "diverging duplicate result for key {key}: {} vs {}",
                            existing.mean_sum_se, row.mean_sum_se
                        )));
                    }
                } else {
                    rows.insert(key, row);
                }
            }
        }
    }
    if !found_any {
        return Err(Error::Input(format!(
            "no results*.csv found under {}",
            out_dir.display()
        )));
    }
    let merged: Vec<ResultRow> = rows.into_values().collect();
    let merged_path = out_dir.join("merged.csv");
    write_rows(&merged_path, &merged)?;
    // plot-ready series: x depends on the experiment kind
    let series_dir = out_dir.join("series");
    fs::create_dir_all(&series_dir)?;
    let mut series: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for row in &merged {
        let x = match row.experiment.as_str() {
            "snr_sweep" => row.snr_db,
            "nbar_sweep" => row.n_bar as f64,
            "scalability" => row.i_sum as f64,
            _ => row.seed as f64,
        };
        series
            .entry((row.experiment.clone(), row.method.clone()))
            .or_default()
            .push((x, row.mean_sum_se));
    }
    for ((experiment, method), mut points) in series {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let safe_method: String = method
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let mut text = String::from("x,mean_sum_se\n");
        for (x, y) in points {
            text.push_str(&format!("{x:.6},{y:.12e}\n"));
        }
        fs::write(series_dir.join(format!("series_{experiment}_{safe_method}.csv")), text)?;
    }
    Ok(merged_path)
}
