//! Graph convolutional frame encoder.
//!
//! `relu(bn1(gcn1))` → `relu(bn2(gcn2))` → linear → mean over nodes, with
//! widths 5 → 64 → 64 → 32. Graphs are processed in stacked form: all nodes
//! of all graphs in one matrix, with a block-diagonal propagation matrix.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FrameGraph, FEATURE_DIM};
use crate::numeric::{
    xavier_uniform, BlockDiagonal, NumericError, ParamBinder, ParamStore, Segments, Tape, Tensor,
    Var,
};

pub const HIDDEN1: usize = 64;
pub const HIDDEN2: usize = 64;
pub const EMBED_DIM: usize = 32;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("EmptyBatch: batch norm in train mode needs at least one row")]
    EmptyBatch,
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Which rows share batch-norm statistics in train mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BnScope {
    /// Statistics over the nodes of each graph separately. Positions are
    /// re-centered per frame, which hides where on the pitch a formation
    /// sits.
    PerGraph,
    /// Statistics over all nodes of all graphs in the forward call.
    #[default]
    PerBatch,
}

/// Batch statistics observed in one train-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnObservation {
    pub layer: &'static str,
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

/// Initializes encoder parameters: Xavier-uniform weights, zero biases,
/// unit batch-norm scale and running variance.
pub fn init_params<R: Rng>(rng: &mut R) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert(
        "gcn1.weight",
        xavier_uniform(rng, FEATURE_DIM, HIDDEN1, &[FEATURE_DIM, HIDDEN1]),
    );
    p.insert("gcn1.bias", Tensor::zeros(&[HIDDEN1]));
    p.insert(
        "gcn2.weight",
        xavier_uniform(rng, HIDDEN1, HIDDEN2, &[HIDDEN1, HIDDEN2]),
    );
    p.insert("gcn2.bias", Tensor::zeros(&[HIDDEN2]));
    p.insert(
        "lin.weight",
        xavier_uniform(rng, HIDDEN2, EMBED_DIM, &[HIDDEN2, EMBED_DIM]),
    );
    p.insert("lin.bias", Tensor::zeros(&[EMBED_DIM]));
    for (bn, d) in [("bn1", HIDDEN1), ("bn2", HIDDEN2)] {
        p.insert(format!("{bn}.weight"), Tensor::full(&[d], 1.0));
        p.insert(format!("{bn}.bias"), Tensor::zeros(&[d]));
        p.insert(format!("{bn}.running_mean"), Tensor::zeros(&[d]));
        p.insert(format!("{bn}.running_var"), Tensor::full(&[d], 1.0));
    }
    p
}

/// Names of the encoder entries updated by gradient descent.
pub fn trainable_names() -> Vec<&'static str> {
    vec![
        "gcn1.weight",
        "gcn1.bias",
        "bn1.weight",
        "bn1.bias",
        "gcn2.weight",
        "gcn2.bias",
        "bn2.weight",
        "bn2.bias",
        "lin.weight",
        "lin.bias",
    ]
}

/// `Â · H · W + b` (pre-activation).
pub fn gcn_layer(
    tape: &mut Tape,
    h: Var,
    adj: &Arc<BlockDiagonal>,
    weight: Var,
    bias: Var,
) -> Result<Var, NumericError> {
    let ah = tape.propagate(adj, h)?;
    let ahw = tape.matmul(ah, weight)?;
    tape.add(ahw, bias)
}

/// Batch normalization over rows. In train mode each segment is
/// standardized with its own statistics and the (segment-averaged)
/// statistics are returned for the running-average update; in eval mode the
/// running statistics are used and nothing is returned.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm(
    tape: &mut Tape,
    h: Var,
    gamma: Var,
    beta: Var,
    running_mean: &Tensor,
    running_var: &Tensor,
    segments: &Arc<Segments>,
    mode: Mode,
) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>), EncoderError> {
    match mode {
        Mode::Train => {
            if segments.total_rows() == 0 {
                return Err(EncoderError::EmptyBatch);
            }
            let (out, means, vars) = tape.segment_norm(h, gamma, beta, segments, BN_EPS)?;
            let d = tape.shape(h)[1];
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            let mut used = 0usize;
            for ((&(_, n), m), v) in segments.ranges().iter().zip(&means).zip(&vars) {
                if n == 0 {
                    continue;
                }
                used += 1;
                let correction = if n > 1 {
                    n as f64 / (n - 1) as f64
                } else {
                    1.0
                };
                for c in 0..d {
                    mean[c] += m[c];
                    var[c] += v[c] * correction;
                }
            }
            mean.iter_mut().for_each(|x| *x /= used as f64);
            var.iter_mut().for_each(|x| *x /= used as f64);
            Ok((out, Some((mean, var))))
        }
        Mode::Eval => {
            let d = running_mean.len();
            let shift = tape.constant(Tensor::new(vec![d], running_mean.values().to_vec())?);
            let inv = tape.constant(Tensor::new(
                vec![d],
                running_var
                    .values()
                    .iter()
                    .map(|v| 1.0 / (v + BN_EPS).sqrt())
                    .collect(),
            )?);
            let centered = tape.sub(h, shift)?;
            let normed = tape.mul(centered, inv)?;
            let scaled = tape.mul(normed, gamma)?;
            Ok((tape.add(scaled, beta)?, None))
        }
    }
}

/// Stacked node features and propagation blocks for a set of graphs.
pub struct GraphBatch {
    pub features: Tensor,
    pub adjacency: Arc<BlockDiagonal>,
    pub per_graph: Arc<Segments>,
    pub empty: Vec<bool>,
}

impl GraphBatch {
    pub fn new(graphs: &[&FrameGraph]) -> Result<Self, NumericError> {
        let total: usize = graphs.iter().map(|g| g.n_nodes).sum();
        let mut features = Vec::with_capacity(total * FEATURE_DIM);
        let mut blocks = Vec::with_capacity(graphs.len());
        for g in graphs {
            features.extend_from_slice(&g.features);
            blocks.push((g.n_nodes, g.norm_adjacency.clone()));
        }
        let adjacency = BlockDiagonal::new(blocks)?;
        let per_graph = Arc::new(adjacency.segments().clone());
        Ok(Self {
            features: Tensor::new(vec![total, FEATURE_DIM], features)?,
            adjacency: Arc::new(adjacency),
            per_graph,
            empty: graphs.iter().map(|g| g.n_nodes == 0).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.empty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GcnEncoder {
    pub bn_scope: BnScope,
}

impl GcnEncoder {
    /// Encodes every graph of `batch`, giving a `n_graphs × 32` matrix.
    /// Empty graphs map to the zero vector.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &mut ParamBinder<'_>,
        batch: &GraphBatch,
        mode: Mode,
    ) -> Result<(Var, Vec<BnObservation>), EncoderError> {
        let store = params.store();
        let bn_segments = match self.bn_scope {
            BnScope::PerGraph => Arc::clone(&batch.per_graph),
            BnScope::PerBatch => Arc::new(Segments::single(batch.per_graph.total_rows())),
        };
        let train_with_nodes = mode == Mode::Train && bn_segments.total_rows() > 0;
        let bn_mode = if mode == Mode::Train && !train_with_nodes {
            // every graph empty: nothing to normalize
            Mode::Eval
        } else {
            mode
        };
        let mut observations = Vec::new();
        let mut h = tape.constant(batch.features.clone());
        for (gcn, bn) in [("gcn1", "bn1"), ("gcn2", "bn2")] {
            let w = params.get(tape, &format!("{gcn}.weight"))?;
            let b = params.get(tape, &format!("{gcn}.bias"))?;
            let pre = gcn_layer(tape, h, &batch.adjacency, w, b)?;
            let gamma = params.get(tape, &format!("{bn}.weight"))?;
            let beta = params.get(tape, &format!("{bn}.bias"))?;
            let (normed, stats) = batch_norm(
                tape,
                pre,
                gamma,
                beta,
                store.get(&format!("{bn}.running_mean"))?,
                store.get(&format!("{bn}.running_var"))?,
                &bn_segments,
                bn_mode,
            )?;
            if let Some((mean, var_unbiased)) = stats {
                observations.push(BnObservation {
                    layer: bn,
                    mean,
                    var_unbiased,
                });
            }
            h = tape.relu(normed);
        }
        // mean(H·W + b) = mean(H)·W + b, so the readout runs before the
        // linear layer.
        let pooled = tape.segment_mean(h, &batch.per_graph)?;
        let w = params.get(tape, "lin.weight")?;
        let b = params.get(tape, "lin.bias")?;
        let lin = tape.matmul(pooled, w)?;
        let mut out = tape.add(lin, b)?;
        if batch.empty.iter().any(|&e| e) {
            let mask = Tensor::new(
                vec![batch.len(), 1],
                batch
                    .empty
                    .iter()
                    .map(|&e| if e { 0.0 } else { 1.0 })
                    .collect(),
            )?;
            let mask = tape.constant(mask);
            out = tape.mul(out, mask)?;
        }
        Ok((out, observations))
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn update_running_stats(
        &self,
        store: &mut ParamStore,
        observations: &[BnObservation],
    ) -> Result<(), NumericError> {
        for obs in observations {
            for (suffix, fresh) in [
                ("running_mean", &obs.mean),
                ("running_var", &obs.var_unbiased),
            ] {
                let t = store.get_mut(&format!("{}.{suffix}", obs.layer))?;
                for (r, f) in t.values_mut().iter_mut().zip(fresh) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * f;
                }
            }
        }
        Ok(())
    }

    /// Encodes a single graph without touching running statistics.
    pub fn encode_frame(
        &self,
        params: &ParamStore,
        graph: &FrameGraph,
        mode: Mode,
    ) -> Result<FrameEmbedding, EncoderError> {
        let batch = GraphBatch::new(&[graph])?;
        let mut tape = Tape::new();
        let mut binder = ParamBinder::new(params, false);
        let (out, _) = self.forward(&mut tape, &mut binder, &batch, mode)?;
        let mut values = [0.0; EMBED_DIM];
        values.copy_from_slice(tape.value(out).values());
        Ok(FrameEmbedding {
            values,
            empty_graph: graph.n_nodes == 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub values: [f64; EMBED_DIM],
    /// Set when the frame had no nodes and the zero embedding was used.
    pub empty_graph: bool,
}
