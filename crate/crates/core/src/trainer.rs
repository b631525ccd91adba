//! Chunk classifier (frame encoder, temporal pooling, linear head with
//! sigmoid) and its training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_training_chunks, DataError, TrackedMatch, WindowChunk, NUM_CLASSES};
use crate::encoder::{self, BnScope, EncoderError, GcnEncoder, GraphBatch, Mode, EMBED_DIM};
use crate::graph::{build_graph, FrameGraph, GraphConfig, DEFAULT_EDGE_THRESHOLD_M};
use crate::numeric::{
    xavier_uniform, Adam, AdamConfig, NumericError, ParamBinder, ParamStore, PlateauConfig,
    PlateauScheduler, Tape, Tensor, Var,
};
use crate::pooling::{self, PoolingError, PoolingMethod, DEFAULT_ALPHA_INIT, DEFAULT_CLUSTERS};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("EmptyDataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Pooling(#[from] PoolingError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn default_stride_s() -> Option<f64> {
    None
}

/// Training configuration; every field has a default so `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window_s: f64,
    pub fps: f64,
    /// Training window stride; one frame when absent.
    #[serde(default = "default_stride_s", skip_serializing_if = "Option::is_none")]
    pub stride_s: Option<f64>,
    pub method: PoolingMethod,
    /// Total cluster count (split evenly between halves for `++`).
    pub clusters: usize,
    pub alpha_init: f64,
    pub lr0: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub lr_stop: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Hard cap on epochs in addition to the scheduler stop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    /// Weight positive targets by the negative/positive ratio per class.
    pub class_weighting: bool,
    pub bn_scope: BnScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            fps: 2.0,
            stride_s: None,
            method: "netvlad++".parse().expect("valid method"),
            clusters: DEFAULT_CLUSTERS,
            alpha_init: DEFAULT_ALPHA_INIT,
            lr0: 1e-3,
            patience: 10,
            lr_factor: 0.1,
            lr_stop: 1e-8,
            batch_size: 32,
            seed: 0,
            max_epochs: None,
            class_weighting: false,
            bn_scope: BnScope::PerBatch,
        }
    }
}

impl TrainConfig {
    pub fn effective_stride_s(&self) -> f64 {
        self.stride_s.unwrap_or(1.0 / self.fps)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("window_s", self.window_s),
            ("fps", self.fps),
            ("stride_s", self.effective_stride_s()),
            ("alpha_init", self.alpha_init),
            ("lr0", self.lr0),
            ("lr_factor", self.lr_factor),
            ("lr_stop", self.lr_stop),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrainError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(TrainError::Config(
                "batch_size and patience must be positive".into(),
            ));
        }
        if self.method.base.uses_clusters() {
            let ok = if self.method.split {
                self.clusters >= 2 && self.clusters.is_multiple_of(2)
            } else {
                self.clusters >= 1
            };
            if !ok {
                return Err(TrainError::Config(format!(
                    "cluster count {} does not suit {}",
                    self.clusters, self.method
                )));
            }
        }
        if self.method.split && crate::data::frames_for(self.window_s, self.fps) < 2 {
            return Err(TrainError::Config(
                "split pooling needs at least 2 frames per window".into(),
            ));
        }
        Ok(())
    }
}

/// Architecture settings stored alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_s: f64,
    pub fps: f64,
    pub method: PoolingMethod,
    pub clusters: usize,
    pub bn_scope: BnScope,
    pub edge_threshold_m: f64,
}

impl From<&TrainConfig> for ModelConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            window_s: c.window_s,
            fps: c.fps,
            method: c.method,
            clusters: c.clusters,
            bn_scope: c.bn_scope,
            edge_threshold_m: DEFAULT_EDGE_THRESHOLD_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottingModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// A match at the model's frame rate with its frame graphs.
pub struct PreparedMatch {
    pub tracked: TrackedMatch,
    pub graphs: Vec<FrameGraph>,
}

impl PreparedMatch {
    pub fn new(m: &TrackedMatch, fps: f64, edge_threshold_m: f64) -> Result<Self, DataError> {
        let tracked = m.resample(fps)?;
        let mut gc = GraphConfig::new(tracked.pitch_length_m, tracked.pitch_width_m);
        gc.edge_threshold_m = edge_threshold_m;
        let graphs = tracked.frames.iter().map(|f| build_graph(f, &gc)).collect();
        Ok(Self { tracked, graphs })
    }
}

impl SpottingModel {
    pub fn init(config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = encoder::init_params(&mut rng);
        let pool = pooling::init_params(
            &mut rng,
            config.method,
            EMBED_DIM,
            config.clusters,
            config.alpha_init,
        )?;
        for (k, v) in pool.iter() {
            params.insert(k, v.clone());
        }
        let desc = config.method.output_dim(EMBED_DIM, config.clusters);
        params.insert(
            "head.weight",
            xavier_uniform(&mut rng, desc, NUM_CLASSES, &[desc, NUM_CLASSES]),
        );
        params.insert("head.bias", Tensor::zeros(&[NUM_CLASSES]));
        Ok(Self {
            config: config.into(),
            params,
        })
    }

    pub fn encoder(&self) -> GcnEncoder {
        GcnEncoder {
            bn_scope: self.config.bn_scope,
        }
    }

    /// Names of parameters updated by the optimizer.
    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| !n.ends_with("running_mean") && !n.ends_with("running_var"))
            .map(str::to_string)
            .collect()
    }

    pub fn frames_per_window(&self) -> usize {
        crate::data::frames_for(self.config.window_s, self.config.fps)
    }

    pub fn prepare(&self, m: &TrackedMatch) -> Result<PreparedMatch, DataError> {
        PreparedMatch::new(m, self.config.fps, self.config.edge_threshold_m)
    }

    /// Pooling and head on `(B, N, 32)` embeddings, giving `(B, 12)`
    /// probabilities.
    pub fn head_forward(
        &self,
        tape: &mut Tape,
        binder: &mut ParamBinder<'_>,
        embeddings: Var,
    ) -> Result<Var, TrainError> {
        let desc = pooling::pool(tape, binder, self.config.method, embeddings)?;
        let w = binder.get(tape, "head.weight")?;
        let b = binder.get(tape, "head.bias")?;
        let logits = tape.matmul(desc, w)?;
        let logits = tape.add(logits, b)?;
        Ok(tape.sigmoid(logits))
    }

    /// Full forward pass over chunks of one match.
    pub fn forward_chunks(
        &self,
        tape: &mut Tape,
        binder: &mut ParamBinder<'_>,
        graphs: &[FrameGraph],
        chunks: &[&WindowChunk],
        mode: Mode,
    ) -> Result<(Var, Vec<encoder::BnObservation>), TrainError> {
        let n = self.frames_per_window();
        if chunks.iter().any(|c| c.frame_refs.len() != n) {
            return Err(TrainError::Config(
                "chunk length does not match the model window".into(),
            ));
        }
        // overlapping windows share frames; encode each distinct frame once
        let mut unique: Vec<usize> = chunks
            .iter()
            .flat_map(|c| c.frame_refs.iter().copied())
            .collect();
        unique.sort_unstable();
        unique.dedup();
        let refs: Vec<&FrameGraph> = unique.iter().map(|&r| &graphs[r]).collect();
        let batch = GraphBatch::new(&refs)?;
        let (emb, obs) = self.encoder().forward(tape, binder, &batch, mode)?;
        let index: Vec<usize> = chunks
            .iter()
            .flat_map(|c| {
                c.frame_refs
                    .iter()
                    .map(|r| unique.binary_search(r).expect("present"))
            })
            .collect();
        let emb = tape.gather_rows(emb, &index)?;
        let emb = tape.reshape(emb, &[chunks.len(), n, EMBED_DIM])?;
        Ok((self.head_forward(tape, binder, emb)?, obs))
    }

    /// Probabilities for one chunk.
    pub fn forward_chunk(
        &self,
        graphs: &[FrameGraph],
        chunk: &WindowChunk,
        mode: Mode,
    ) -> Result<[f64; NUM_CLASSES], TrainError> {
        let mut tape = Tape::new();
        let mut binder = ParamBinder::new(&self.params, false);
        let (p, _) = self.forward_chunks(&mut tape, &mut binder, graphs, &[chunk], mode)?;
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(tape.value(p).values());
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        serde_json::to_string(self).map_err(|e| NumericError::Checkpoint(e.to_string()).into())
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        let config: ModelConfig = serde_json::from_value(v["config"].clone())
            .map_err(|e| NumericError::Checkpoint(format!("config: {e}")))?;
        let params = ParamStore::from_json(&v["params"].to_string())?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Summed binary cross-entropy over classes, averaged over the batch rows,
/// with probabilities clamped to `[1e-7, 1 - 1e-7]`. `pos_weight` scales
/// the positive term per class.
pub fn bce_loss(
    tape: &mut Tape,
    probs: Var,
    labels: &Tensor,
    pos_weight: Option<&[f64]>,
) -> Result<Var, NumericError> {
    let rows = tape.shape(probs)[0].max(1) as f64;
    let p = tape.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = match pos_weight {
        Some(w) => {
            let cols = w.len();
            let scaled = labels
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| v * w[i % cols])
                .collect();
            Tensor::new(labels.shape().to_vec(), scaled)?
        }
        None => labels.clone(),
    };
    let y = tape.constant(y);
    let not_y = tape.constant(labels.map(|v| 1.0 - v));
    let one = tape.constant(Tensor::scalar(1.0));
    let log_p = tape.log(p);
    let q = tape.sub(one, p)?;
    let log_q = tape.log(q);
    let pos = tape.mul(y, log_p)?;
    let neg = tape.mul(not_y, log_q)?;
    let total = tape.add(pos, neg)?;
    let s = tape.sum_all(total);
    Ok(tape.scale(s, -1.0 / rows))
}

/// Loss value of a plain probability vector against a label, for reporting.
pub fn bce_value(probs: &[f64], labels: &[f64]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,lr")?;
        for r in &self.epochs {
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
        }
        Ok(())
    }
}

struct ChunkSet {
    matches: Vec<PreparedMatch>,
    /// `(match position, chunk)`
    chunks: Vec<(usize, WindowChunk)>,
}

impl ChunkSet {
    fn build(
        model: &SpottingModel,
        matches: &[TrackedMatch],
        stride_s: f64,
    ) -> Result<Self, TrainError> {
        let mut prepared = Vec::with_capacity(matches.len());
        let mut chunks = Vec::new();
        for (i, m) in matches.iter().enumerate() {
            let p = model.prepare(m)?;
            for c in make_training_chunks(&p.tracked, model.config.window_s, stride_s)? {
                chunks.push((i, c));
            }
            prepared.push(p);
        }
        Ok(Self {
            matches: prepared,
            chunks,
        })
    }

    /// Splits each match's chunks into runs of `size` consecutive windows,
    /// starting at a random offset, and shuffles the runs.
    fn batches<R: rand::Rng>(&self, rng: &mut R, size: usize) -> Vec<(usize, Vec<&WindowChunk>)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.chunks.len() {
            let m = self.chunks[start].0;
            let end = start
                + self.chunks[start..]
                    .iter()
                    .take_while(|(g, _)| *g == m)
                    .count();
            let mut cut = start + rng.random_range(0..size.min(end - start));
            if cut == start {
                cut += size;
            }
            let mut lo = start;
            while lo < end {
                let hi = cut.min(end);
                out.push((m, self.chunks[lo..hi].iter().map(|(_, c)| c).collect()));
                lo = hi;
                cut += size;
            }
            start = end;
        }
        out.shuffle(rng);
        out
    }

    /// Consecutive runs of `size` windows in order.
    fn in_order(&self, size: usize) -> Vec<(usize, Vec<&WindowChunk>)> {
        let mut out: Vec<(usize, Vec<&WindowChunk>)> = Vec::new();
        for (m, c) in &self.chunks {
            match out.last_mut() {
                Some((g, v)) if g == m && v.len() < size => v.push(c),
                _ => out.push((*m, vec![c])),
            }
        }
        out
    }
}

fn labels_tensor(chunks: &[&WindowChunk]) -> Tensor {
    let values = chunks.iter().flat_map(|c| c.label_vector()).collect();
    Tensor::new(vec![chunks.len(), NUM_CLASSES], values).expect("sized")
}

/// Mean per-chunk loss over a chunk set in eval mode.
fn evaluate_loss(
    model: &SpottingModel,
    set: &ChunkSet,
    batch_size: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (m, chunks) in set.in_order(batch_size) {
        let mut tape = Tape::new();
        let mut binder = ParamBinder::new(&model.params, false);
        let (p, _) = model.forward_chunks(
            &mut tape,
            &mut binder,
            &set.matches[m].graphs,
            &chunks,
            Mode::Eval,
        )?;
        for (row, c) in tape.value(p).values().chunks(NUM_CLASSES).zip(&chunks) {
            total += bce_value(row, &c.label_vector());
        }
    }
    Ok(total / set.chunks.len() as f64)
}

fn positive_weights(set: &ChunkSet) -> Vec<f64> {
    let n = set.chunks.len() as f64;
    (0..NUM_CLASSES)
        .map(|c| {
            let pos = set.chunks.iter().filter(|(_, ch)| ch.label[c]).count() as f64;
            if pos > 0.0 {
                (n - pos) / pos
            } else {
                1.0
            }
        })
        .collect()
}

/// Trains a model and returns the parameters with the lowest validation
/// loss together with the per-epoch history.
pub fn fit(
    train: &[TrackedMatch],
    val: &[TrackedMatch],
    config: &TrainConfig,
) -> Result<(SpottingModel, TrainHistory), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("no training matches"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyDataset("no validation matches"));
    }
    let mut model = SpottingModel::init(config)?;
    let stride = config.effective_stride_s();
    let train_set = ChunkSet::build(&model, train, stride)?;
    let val_set = ChunkSet::build(&model, val, stride)?;
    if train_set.chunks.is_empty() {
        return Err(TrainError::EmptyDataset(
            "training matches are shorter than one window",
        ));
    }
    if val_set.chunks.is_empty() {
        return Err(TrainError::EmptyDataset(
            "validation matches are shorter than one window",
        ));
    }
    let pos_weight = config.class_weighting.then(|| positive_weights(&train_set));
    let names = model.trainable_names();
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr0,
        ..AdamConfig::default()
    });
    let mut scheduler = PlateauScheduler::new(PlateauConfig {
        initial_lr: config.lr0,
        factor: config.lr_factor,
        patience: config.patience,
        min_lr_stop: config.lr_stop,
    });
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4500);
    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        ..TrainHistory::default()
    };
    let mut best = model.params.clone();
    let encoder = model.encoder();
    let mut epoch = 0;
    loop {
        epoch += 1;
        let mut train_total = 0.0;
        for (m, chunks) in train_set.batches(&mut shuffle_rng, config.batch_size) {
            let mut tape = Tape::new();
            let mut binder = ParamBinder::new(&model.params, true);
            let (p, observations) = model.forward_chunks(
                &mut tape,
                &mut binder,
                &train_set.matches[m].graphs,
                &chunks,
                Mode::Train,
            )?;
            let loss = bce_loss(&mut tape, p, &labels_tensor(&chunks), pos_weight.as_deref())?;
            let value = tape.value(loss).values()[0];
            if !value.is_finite() {
                return Err(NumericError::NonFinite { value }.into());
            }
            train_total += value * chunks.len() as f64;
            tape.backward(loss)?;
            let grads = binder.grads(&tape);
            drop(binder);
            adam.step(&mut model.params, &grads, names.iter().map(String::as_str))?;
            encoder.update_running_stats(&mut model.params, &observations)?;
        }
        let train_loss = train_total / train_set.chunks.len() as f64;
        let val_loss = evaluate_loss(&model, &val_set, config.batch_size)?;
        let lr_used = adam.config.lr;
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.params.clone();
        }
        let (lr, stop) = scheduler.step(val_loss)?;
        adam.set_lr(lr);
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr_used:e}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: lr_used,
        });
        if stop || config.max_epochs.is_some_and(|cap| epoch >= cap) {
            break;
        }
    }
    model.params = best;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EntityKind, EntityObservation, TrackedFrame};

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::full(&[1, NUM_CLASSES], 0.5));
        let y = Tensor::new(vec![1, NUM_CLASSES], [0.0, 1.0].repeat(6)).unwrap();
        let l = bce_loss(&mut tape, p, &y, None).unwrap();
        assert!((tape.value(l).values()[0] - 12.0 * 2f64.ln()).abs() < 1e-12);

        let mut tape = Tape::new();
        let p = tape.constant(y.clone());
        let l = bce_loss(&mut tape, p, &y, None).unwrap();
        let expected = -12.0 * (1.0 - PROB_CLAMP).ln();
        assert!((tape.value(l).values()[0] - expected).abs() < 1e-15);
        assert!((bce_value(y.values(), y.values()) - expected).abs() < 1e-15);
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let c: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(c.method.to_string(), "netvlad++");
        assert_eq!(c.effective_stride_s(), 0.5);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"windw_s": 3}"#).is_err());
    }

    #[test]
    fn config_rejects_bad_clusters() {
        let c = TrainConfig {
            clusters: 5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    fn toy_match(n: u64) -> TrackedMatch {
        TrackedMatch {
            match_id: "toy".into(),
            pitch_length_m: 105.0,
            pitch_width_m: 68.0,
            fps: 2.0,
            frames: (0..n)
                .map(|i| TrackedFrame {
                    frame_index: i,
                    entities: (0..4)
                        .map(|k| EntityObservation {
                            kind: if k < 2 {
                                EntityKind::TeamA
                            } else {
                                EntityKind::TeamB
                            },
                            x_m: (i as f64 * 0.3 + k as f64 * 9.0).sin() * 30.0,
                            y_m: k as f64 * 6.0 - 9.0,
                        })
                        .collect(),
                })
                .collect(),
            events: vec![],
        }
    }

    #[test]
    fn forward_chunk_outputs_probabilities() {
        let model = SpottingModel::init(&TrainConfig::default()).unwrap();
        let p = model.prepare(&toy_match(40)).unwrap();
        let chunks = make_training_chunks(&p.tracked, 10.0, 5.0).unwrap();
        let a = model
            .forward_chunk(&p.graphs, &chunks[0], Mode::Eval)
            .unwrap();
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        let b = model
            .forward_chunk(&p.graphs, &chunks[0], Mode::Eval)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_identical() {
        let model = SpottingModel::init(&TrainConfig::default()).unwrap();
        let back = SpottingModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let p = model.prepare(&toy_match(30)).unwrap();
        let chunks = make_training_chunks(&p.tracked, 10.0, 5.0).unwrap();
        let a = model
            .forward_chunk(&p.graphs, &chunks[1], Mode::Eval)
            .unwrap();
        let b = back
            .forward_chunk(&p.graphs, &chunks[1], Mode::Eval)
            .unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn fit_rejects_empty_sets() {
        let c = TrainConfig::default();
        assert!(matches!(
            fit(&[], &[toy_match(30)], &c),
            Err(TrainError::EmptyDataset(_))
        ));
        assert!(matches!(
            fit(&[toy_match(30)], &[], &c),
            Err(TrainError::EmptyDataset(_))
        ));
    }

    #[test]
    fn fit_runs_and_is_deterministic() {
        let mut m = toy_match(60);
        m.events.push(crate::data::EventAnnotation {
            class: crate::data::EventClass::Goal,
            frame_index: 30,
        });
        let c = TrainConfig {
            max_epochs: Some(3),
            clusters: 4,
            ..TrainConfig::default()
        };
        let (a, ha) = fit(&[m.clone()], &[m.clone()], &c).unwrap();
        let (b, hb) = fit(&[m.clone()], &[m], &c).unwrap();
        assert_eq!(ha.epochs.len(), 3);
        assert_eq!(ha, hb);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
