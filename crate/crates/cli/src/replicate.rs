//! Generate → train → spot → evaluate → plot over a grid of pooling methods
//! and window lengths, ending in one comparison table.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use graphspot::data::TrackedMatch;
use graphspot::evaluator::{format_table, EvalOptions, EvalReport};
use graphspot::plotting::TraceSettings;
use graphspot::pooling::PoolingMethod;
use graphspot::synthetic::GeneratorConfig;
use graphspot::trainer::{fit, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::commands::{
    cmd_generate, cmd_plot, curve_path, evaluate_files, history_path, load_match, match_files,
    predictions_path, spot_to_files, write_report, GenerateConfig, PlotRequest, SpotSettings,
};
use crate::error::CliError;
use crate::manifest::{ManifestBuilder, RunManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    /// Seeds both the dataset and every training run; `train.seed` is
    /// overwritten with it.
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub generator: GeneratorConfig,
    /// Base training settings. Pooling rows vary `method`; window rows use
    /// `window_method` and vary `window_s`.
    pub train: TrainConfig,
    pub methods: Vec<PoolingMethod>,
    pub window_method: PoolingMethod,
    pub windows_s: Vec<f64>,
    /// Spotting threshold for the evaluated predictions. Zero keeps every
    /// NMS peak so the precision/recall sweep sees the whole curve.
    pub eval_conf_threshold: f64,
    pub nms_window_s: f64,
    /// Tolerance of the precision/recall figure.
    pub pr_delta_s: f64,
    /// Worker threads; 0 means one per available core. Results do not
    /// depend on it, so manifests leave it out.
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 5,
            n_val: 2,
            n_test: 2,
            generator: GeneratorConfig::default(),
            train: TrainConfig {
                max_epochs: Some(30),
                ..TrainConfig::default()
            },
            methods: PoolingMethod::ALL.to_vec(),
            window_method: "netvlad++".parse().expect("valid method"),
            windows_s: (1..=12).map(|i| 5.0 * i as f64).collect(),
            eval_conf_threshold: 0.0,
            nms_window_s: graphspot::spotter::DEFAULT_NMS_WINDOW_S,
            pr_delta_s: 10.0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowGroup {
    Pooling,
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub group: RowGroup,
    pub label: String,
    pub method: PoolingMethod,
    pub window_s: f64,
    pub run_dir: String,
    pub map: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub rows: Vec<RowResult>,
    pub table: String,
    pub manifest: RunManifest,
}

impl ReplicateOutcome {
    pub fn map_of(&self, group: RowGroup, label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.label == label)
            .map(|r| r.map)
    }
}

/// One distinct training run; several table rows may share it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RunKey {
    method: PoolingMethod,
    window_s: f64,
}

impl RunKey {
    fn slug(&self) -> String {
        format!("{}_T{}", self.method, self.window_s)
    }
}

struct RunResult {
    report: EvalReport,
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
    outputs: Vec<PathBuf>,
    train_s: f64,
}

struct Splits {
    train: Vec<TrackedMatch>,
    val: Vec<TrackedMatch>,
    test_files: Vec<PathBuf>,
    test: Vec<TrackedMatch>,
}

fn run_one(
    key: RunKey,
    config: &ReplicateConfig,
    data: &Splits,
    out_dir: &Path,
) -> Result<RunResult, CliError> {
    let dir = out_dir.join("runs").join(key.slug());
    let train_config = TrainConfig {
        method: key.method,
        window_s: key.window_s,
        seed: config.seed,
        ..config.train.clone()
    };
    let clock = Instant::now();
    let (model, history) = fit(&data.train, &data.val, &train_config)?;
    let train_s = clock.elapsed().as_secs_f64();
    log::info!(
        "{}: {} epochs in {:.0} s, best val loss {:.4}",
        key.slug(),
        history.epochs.len(),
        train_s,
        history.best_val_loss
    );
    std::fs::create_dir_all(&dir)?;
    let checkpoint = dir.join("model.json");
    model.save(&checkpoint)?;
    let hist = history_path(&checkpoint);
    let mut text = Vec::new();
    history.write_csv(&mut text)?;
    std::fs::write(&hist, text)?;
    let mut outputs = vec![checkpoint, hist];

    let settings = SpotSettings {
        window_s: None,
        conf_threshold: config.eval_conf_threshold,
        nms_window_s: config.nms_window_s,
    };
    let mut pred_files = Vec::new();
    for (file, m) in data.test_files.iter().zip(&data.test) {
        let (curve_out, preds_out) = (curve_path(&dir, file), predictions_path(&dir, file));
        spot_to_files(&model, m, &settings, &curve_out, &preds_out)?;
        outputs.push(curve_out);
        outputs.push(preds_out.clone());
        pred_files.push(preds_out);
    }
    let report = evaluate_files(&pred_files, &data.test_files, EvalOptions::default())?;
    let report_path = dir.join("report.json");
    write_report(&report, &report_path)?;
    outputs.push(report_path);
    Ok(RunResult {
        report,
        epochs: history.epochs.len(),
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        outputs,
        train_s,
    })
}

/// Runs every key on a pool of `threads` workers. Results come back in key
/// order regardless of which worker finished first.
fn run_all(
    keys: &[RunKey],
    config: &ReplicateConfig,
    data: &Splits,
    out_dir: &Path,
    threads: usize,
) -> Vec<Result<RunResult, CliError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult, CliError>>>> =
        Mutex::new((0..keys.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, keys.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&key) = keys.get(i) else { break };
                let result = run_one(key, config, data, out_dir);
                slots.lock().expect("no worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every run was claimed"))
        .collect()
}

fn validate(config: &ReplicateConfig) -> Result<(), CliError> {
    if config.n_train == 0 || config.n_val == 0 || config.n_test == 0 {
        return Err(CliError::usage(
            "replicate needs at least one train, val and test match",
        ));
    }
    if config.methods.is_empty() && config.windows_s.is_empty() {
        return Err(CliError::usage(
            "replicate needs at least one method or window",
        ));
    }
    if !graphspot::evaluator::default_deltas().contains(&config.pr_delta_s) {
        return Err(CliError::usage(format!(
            "pr_delta_s {} is not an evaluated tolerance",
            config.pr_delta_s
        )));
    }
    let keys = config
        .methods
        .iter()
        .map(|&m| (m, config.train.window_s))
        .chain(config.windows_s.iter().map(|&w| (config.window_method, w)));
    for (method, window_s) in keys {
        TrainConfig {
            method,
            window_s,
            ..config.train.clone()
        }
        .validate()?;
    }
    Ok(())
}

pub fn cmd_replicate(
    config: &ReplicateConfig,
    out_dir: &Path,
) -> Result<ReplicateOutcome, CliError> {
    let mut builder = ManifestBuilder::new("replicate", out_dir.join("replicate.manifest.json"));
    let mut rows = Vec::new();
    let mut table = String::new();
    let outcome = replicate_body(config, out_dir, &mut builder, &mut rows, &mut table);
    let manifest = builder.finish(&outcome)?;
    outcome?;
    Ok(ReplicateOutcome {
        rows,
        table,
        manifest,
    })
}

fn replicate_body(
    config: &ReplicateConfig,
    out_dir: &Path,
    mb: &mut ManifestBuilder,
    rows: &mut Vec<RowResult>,
    table: &mut String,
) -> Result<(), CliError> {
    mb.config(config);
    mb.seed(config.seed);
    validate(config)?;

    let data_dir = out_dir.join("data");
    let generated = cmd_generate(
        &GenerateConfig {
            seed: config.seed,
            n_train: config.n_train,
            n_val: config.n_val,
            n_test: config.n_test,
            generator: config.generator.clone(),
        },
        &data_dir,
    )?;
    for f in &generated.outputs {
        mb.output(data_dir.join(&f.path));
    }
    let load = |split: &str| -> Result<(Vec<PathBuf>, Vec<TrackedMatch>), CliError> {
        let files = match_files(&data_dir.join(split))?;
        let matches = files
            .iter()
            .map(|f| load_match(f))
            .collect::<Result<_, _>>()?;
        Ok((files, matches))
    };
    let (_, train) = load("train")?;
    let (_, val) = load("val")?;
    let (test_files, test) = load("test")?;
    let data = Splits {
        train,
        val,
        test_files,
        test,
    };
    mb.lap("generate");

    let mut planned: Vec<(RowGroup, String, RunKey)> = Vec::new();
    for &method in &config.methods {
        let key = RunKey {
            method,
            window_s: config.train.window_s,
        };
        planned.push((RowGroup::Pooling, method.label(), key));
    }
    for &window_s in &config.windows_s {
        let key = RunKey {
            method: config.window_method,
            window_s,
        };
        planned.push((RowGroup::Window, format!("T = {window_s} s"), key));
    }
    let mut keys: Vec<RunKey> = Vec::new();
    for (_, _, k) in &planned {
        if !keys.contains(k) {
            keys.push(*k);
        }
    }
    let threads = if config.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.threads
    };
    log::info!("{} training runs on {} threads", keys.len(), threads);
    let mut results = Vec::new();
    for (key, result) in keys
        .iter()
        .zip(run_all(&keys, config, &data, out_dir, threads))
    {
        let r = result?;
        r.outputs.iter().for_each(|p| mb.output(p));
        mb.add_timing(&format!("train/{}", key.slug()), r.train_s);
        results.push(r);
    }
    mb.lap("runs");

    for (group, label, key) in &planned {
        let i = keys
            .iter()
            .position(|k| k == key)
            .expect("planned key was run");
        let r = &results[i];
        rows.push(RowResult {
            group: *group,
            label: label.clone(),
            method: key.method,
            window_s: key.window_s,
            run_dir: format!("runs/{}", key.slug()),
            map: r.report.map,
            epochs: r.epochs,
            best_epoch: r.best_epoch,
            best_val_loss: r.best_val_loss,
        });
    }
    for (group, title) in [
        (
            RowGroup::Pooling,
            format!("Pooling methods, T = {} s", config.train.window_s),
        ),
        (
            RowGroup::Window,
            format!("Window lengths, {}", config.window_method.label()),
        ),
    ] {
        let group_rows: Vec<(String, &EvalReport)> = planned
            .iter()
            .filter(|(g, _, _)| *g == group)
            .map(|(_, label, key)| {
                let i = keys
                    .iter()
                    .position(|k| k == key)
                    .expect("planned key was run");
                (label.clone(), &results[i].report)
            })
            .collect();
        if group_rows.is_empty() {
            continue;
        }
        table.push_str(&title);
        table.push('\n');
        table.push_str(&format_table(&group_rows));
        table.push('\n');
    }
    let table_path = out_dir.join("table.txt");
    std::fs::write(&table_path, table.as_bytes())?;
    mb.output(&table_path);
    let summary_path = out_dir.join("summary.json");
    let mut summary = serde_json::to_string_pretty(&rows).expect("rows serialize");
    summary.push('\n');
    std::fs::write(&summary_path, summary)?;
    mb.output(&summary_path);

    // Figures for the headline run: the configured method at the base window.
    let headline = RunKey {
        method: config.window_method,
        window_s: config.train.window_s,
    };
    if keys.contains(&headline) {
        let run_dir = out_dir.join("runs").join(headline.slug());
        let plot_dir = out_dir.join("plots");
        let pr_out = plot_dir.join("pr.svg");
        cmd_plot(
            &PlotRequest::Pr {
                report: run_dir.join("report.json"),
                delta_s: config.pr_delta_s,
            },
            None,
            &pr_out,
        )?;
        let trace_out = plot_dir.join("confidence.svg");
        cmd_plot(
            &PlotRequest::Confidence {
                curve: curve_path(&run_dir, &data.test_files[0]),
                ground_truth: data.test_files[0].clone(),
                settings: TraceSettings {
                    nms_window_s: config.nms_window_s,
                    ..TraceSettings::default()
                },
            },
            None,
            &trace_out,
        )?;
        mb.output(pr_out);
        mb.output(trace_out);
        mb.lap("plot");
    }
    Ok(())
}
