use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use graphspot::data::{EventClass, TrackedMatch};
use graphspot::evaluator::{
    default_deltas, evaluate, format_table, EvalOptions, EvalReport, MatchEval,
};
use graphspot::plotting::{self, TraceSettings};
use graphspot::spotter::{
    read_predictions_csv, score_match, spot, write_predictions_csv, ConfidenceCurve,
    DEFAULT_CONF_THRESHOLD, DEFAULT_NMS_WINDOW_S,
};
use graphspot::synthetic::{generate_dataset, GeneratorConfig};
use graphspot::trainer::{fit, SpottingModel, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{ManifestBuilder, RunManifest};

/// Reads a JSON config, or the defaults when no path is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))
}

/// Match files (`*.jsonl`) directly inside `dir`, sorted by name.
pub fn match_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("io: {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!(
            "no match files (*.jsonl) in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub fn load_match(path: &Path) -> Result<TrackedMatch, CliError> {
    TrackedMatch::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let f =
        File::create(path).map_err(|e| CliError::data(format!("io: {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn manifest_path(primary: &Path, command: &str) -> PathBuf {
    let dir = primary.parent().unwrap_or(Path::new(""));
    dir.join(format!("{command}.manifest.json"))
}

/// Runs `body`, then writes the manifest whatever the outcome.
fn with_manifest<F>(mut builder: ManifestBuilder, body: F) -> Result<RunManifest, CliError>
where
    F: FnOnce(&mut ManifestBuilder) -> Result<(), CliError>,
{
    let outcome = body(&mut builder);
    let manifest = builder.finish(&outcome)?;
    outcome.map(|()| manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Per-match settings; the per-match seed is derived from `seed`.
    pub generator: GeneratorConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 5,
            n_val: 2,
            n_test: 2,
            generator: GeneratorConfig::default(),
        }
    }
}

pub fn cmd_generate(config: &GenerateConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    let builder = ManifestBuilder::new("generate", out_dir.join("generate.manifest.json"));
    with_manifest(builder, |mb| {
        mb.config(config);
        mb.seed(config.seed);
        let paths = generate_dataset(
            out_dir,
            config.seed,
            config.n_train,
            config.n_val,
            config.n_test,
            &config.generator,
        )?;
        for p in paths.train.iter().chain(&paths.val).chain(&paths.test) {
            mb.output(p);
        }
        mb.lap("generate");
        log::info!(
            "wrote {} train, {} val, {} test matches to {}",
            paths.train.len(),
            paths.val.len(),
            paths.test.len(),
            out_dir.display()
        );
        Ok(())
    })
}

pub struct TrainArgs<'a> {
    pub config: &'a TrainConfig,
    pub train_dir: &'a Path,
    pub val_dir: &'a Path,
    pub out: &'a Path,
}

/// Training history goes next to the checkpoint: `model.json` gets
/// `model.history.csv`.
pub fn history_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("history.csv")
}

pub fn cmd_train(args: &TrainArgs<'_>) -> Result<RunManifest, CliError> {
    let builder = ManifestBuilder::new("train", manifest_path(args.out, "train"));
    with_manifest(builder, |mb| {
        mb.config(args.config);
        mb.seed(args.config.seed);
        args.config.validate()?;
        let mut load_dir = |dir: &Path| -> Result<Vec<TrackedMatch>, CliError> {
            let files = match_files(dir)?;
            files.iter().for_each(|f| mb.input(f));
            files.iter().map(|f| load_match(f)).collect()
        };
        let train = load_dir(args.train_dir)?;
        let val = load_dir(args.val_dir)?;
        mb.lap("load");
        let (model, history) = fit(&train, &val, args.config)?;
        mb.lap("fit");
        log::info!(
            "{} epochs, best val loss {:.4} at epoch {}",
            history.epochs.len(),
            history.best_val_loss,
            history.best_epoch
        );
        model.save(args.out)?;
        mb.output(args.out);
        let hist = history_path(args.out);
        let mut w = create(&hist)?;
        history.write_csv(&mut w)?;
        w.flush()?;
        mb.output(&hist);
        mb.lap("save");
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpotSettings {
    /// Overrides the checkpoint's window length.
    pub window_s: Option<f64>,
    pub conf_threshold: f64,
    pub nms_window_s: f64,
}

impl Default for SpotSettings {
    fn default() -> Self {
        Self {
            window_s: None,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            nms_window_s: DEFAULT_NMS_WINDOW_S,
        }
    }
}

pub fn curve_path(out_dir: &Path, match_file: &Path) -> PathBuf {
    out_dir.join(format!("{}.curve.csv", file_stem(match_file)))
}

pub fn predictions_path(out_dir: &Path, match_file: &Path) -> PathBuf {
    out_dir.join(format!("{}.predictions.csv", file_stem(match_file)))
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "match".into())
}

/// Scores and spots one match, writing its curve and prediction CSVs.
pub fn spot_to_files(
    model: &SpottingModel,
    m: &TrackedMatch,
    settings: &SpotSettings,
    curve_out: &Path,
    preds_out: &Path,
) -> Result<(), CliError> {
    let curve = score_match(model, m)?;
    let preds = spot(&curve, settings.conf_threshold, settings.nms_window_s)?;
    let mut w = create(curve_out)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(preds_out)?;
    write_predictions_csv(&preds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_spot(
    checkpoint: &Path,
    matches: &[PathBuf],
    settings: &SpotSettings,
    out_dir: &Path,
) -> Result<RunManifest, CliError> {
    let builder = ManifestBuilder::new("spot", out_dir.join("spot.manifest.json"));
    with_manifest(builder, |mb| {
        mb.config(settings);
        if matches.is_empty() {
            return Err(CliError::usage(
                "--match: at least one match file is required",
            ));
        }
        if !(0.0..=1.0).contains(&settings.conf_threshold) {
            return Err(CliError::usage(format!(
                "--conf-threshold {} is outside [0, 1]",
                settings.conf_threshold
            )));
        }
        if !(settings.nms_window_s >= 0.0) {
            return Err(CliError::usage(format!(
                "--nms-window-s {} must be non-negative",
                settings.nms_window_s
            )));
        }
        mb.input(checkpoint);
        let mut model = SpottingModel::load(checkpoint)?;
        if let Some(w) = settings.window_s {
            let probe = TrainConfig {
                window_s: w,
                fps: model.config.fps,
                method: model.config.method,
                clusters: model.config.clusters,
                ..TrainConfig::default()
            };
            probe
                .validate()
                .map_err(|e| CliError::usage(format!("--window-s: {e}")))?;
            model.config.window_s = w;
        }
        mb.lap("load");
        for file in matches {
            mb.input(file);
            let m = load_match(file)?;
            let (curve_out, preds_out) =
                (curve_path(out_dir, file), predictions_path(out_dir, file));
            spot_to_files(&model, &m, settings, &curve_out, &preds_out)?;
            mb.output(curve_out);
            mb.output(preds_out);
        }
        mb.lap("spot");
        Ok(())
    })
}

pub fn read_predictions(
    path: &Path,
) -> Result<Vec<graphspot::spotter::SpottingPrediction>, CliError> {
    let f = File::open(path).map_err(|e| CliError::data(format!("io: {}: {e}", path.display())))?;
    read_predictions_csv(BufReader::new(f))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Evaluates prediction files against ground-truth match files paired by
/// position.
pub fn evaluate_files(
    predictions: &[PathBuf],
    ground_truth: &[PathBuf],
    options: EvalOptions,
) -> Result<EvalReport, CliError> {
    if predictions.is_empty() || predictions.len() != ground_truth.len() {
        return Err(CliError::usage(format!(
            "--predictions and --ground-truth must pair up, got {} and {}",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let preds: Vec<_> = predictions
        .iter()
        .map(|p| read_predictions(p))
        .collect::<Result<_, _>>()?;
    let gts: Vec<TrackedMatch> = ground_truth
        .iter()
        .map(|p| load_match(p))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<MatchEval<'_>> = preds
        .iter()
        .zip(&gts)
        .map(|(p, g)| MatchEval {
            predictions: p,
            ground_truth: g,
        })
        .collect();
    Ok(evaluate(&pairs, &default_deltas(), options)?)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<(), CliError> {
    let mut text = report.to_json();
    text.push('\n');
    write_text(path, &text)
}

pub fn load_report(path: &Path) -> Result<EvalReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("io: {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Writes the report JSON and a text table next to it, and returns the
/// table.
pub fn cmd_eval(
    predictions: &[PathBuf],
    ground_truth: &[PathBuf],
    options: EvalOptions,
    out: &Path,
) -> Result<(RunManifest, String), CliError> {
    let builder = ManifestBuilder::new("eval", manifest_path(out, "eval"));
    let mut table = String::new();
    let manifest = with_manifest(builder, |mb| {
        mb.config(&options);
        predictions
            .iter()
            .chain(ground_truth)
            .for_each(|p| mb.input(p));
        let report = evaluate_files(predictions, ground_truth, options)?;
        mb.lap("evaluate");
        write_report(&report, out)?;
        mb.output(out);
        table = format_table(&[("mAP".to_string(), &report)]);
        for note in &report.notes {
            table.push_str(note);
            table.push('\n');
        }
        let table_out = out.with_extension("txt");
        write_text(&table_out, &table)?;
        mb.output(table_out);
        Ok(())
    })?;
    Ok((manifest, table))
}

pub fn parse_classes(list: &str) -> Result<Vec<EventClass>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<EventClass>()
                .map_err(|e| CliError::usage(format!("--classes: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotRequest {
    /// Precision/recall panels from an evaluation report.
    Pr { report: PathBuf, delta_s: f64 },
    /// Confidence traces from a curve CSV, with ground truth marked.
    Confidence {
        curve: PathBuf,
        ground_truth: PathBuf,
        settings: TraceSettings,
    },
}

pub fn cmd_plot(
    request: &PlotRequest,
    classes: Option<&[EventClass]>,
    out: &Path,
) -> Result<RunManifest, CliError> {
    let builder = ManifestBuilder::new("plot", manifest_path(out, "plot"));
    with_manifest(builder, |mb| {
        let svg = match request {
            PlotRequest::Pr { report, delta_s } => {
                mb.config(
                    &serde_json::json!({ "kind": "pr", "delta_s": delta_s, "classes": classes }),
                );
                mb.input(report);
                plotting::render_pr(&load_report(report)?, *delta_s, classes)?
            }
            PlotRequest::Confidence {
                curve,
                ground_truth,
                settings,
            } => {
                mb.config(&serde_json::json!({
                    "kind": "confidence",
                    "conf_threshold": settings.threshold,
                    "nms_window_s": settings.nms_window_s,
                    "classes": classes,
                }));
                mb.input(curve);
                mb.input(ground_truth);
                let f = File::open(curve)
                    .map_err(|e| CliError::data(format!("io: {}: {e}", curve.display())))?;
                let c = ConfidenceCurve::read_csv(BufReader::new(f))
                    .map_err(|e| CliError::data(format!("{}: {e}", curve.display())))?;
                let m = load_match(ground_truth)?;
                plotting::render_confidence(&c, &plotting::event_times(&m), *settings, classes)?
            }
        };
        write_text(out, &svg)?;
        mb.output(out);
        mb.lap("plot");
        Ok(())
    })
}
