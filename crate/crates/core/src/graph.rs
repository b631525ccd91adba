//! Per-frame proximity graphs.
//!
//! Each entity becomes a node with features `[x_norm, y_norm, team_a,
//! team_b, ball]`; two nodes are joined when they are closer than the edge
//! threshold. Propagation uses `D̃^(-1/2) (A + I) D̃^(-1/2)`.

use serde::{Deserialize, Serialize};

use crate::data::{EntityKind, TrackedFrame};

pub const FEATURE_DIM: usize = 5;
pub const DEFAULT_EDGE_THRESHOLD_M: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub pitch_length_m: f64,
    pub pitch_width_m: f64,
    /// Nodes strictly closer than this are connected.
    pub edge_threshold_m: f64,
}

impl GraphConfig {
    pub fn new(pitch_length_m: f64, pitch_width_m: f64) -> Self {
        Self {
            pitch_length_m,
            pitch_width_m,
            edge_threshold_m: DEFAULT_EDGE_THRESHOLD_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGraph {
    pub n_nodes: usize,
    /// Row-major `n_nodes × 5`.
    pub features: Vec<f64>,
    /// Unordered pairs `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
    /// Row-major `n_nodes × n_nodes`.
    pub norm_adjacency: Vec<f64>,
}

/// Maps pitch coordinates (origin at center) into `[-0.5, 0.5]²`.
pub fn normalize_position(
    x_m: f64,
    y_m: f64,
    pitch_length_m: f64,
    pitch_width_m: f64,
) -> (f64, f64) {
    (
        (x_m / pitch_length_m).clamp(-0.5, 0.5),
        (y_m / pitch_width_m).clamp(-0.5, 0.5),
    )
}

/// Symmetric degree normalization of a 0/1 adjacency that already contains
/// self-loops: `a_uv / sqrt(deg_u · deg_v)`.
pub fn degree_normalize(adjacency: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(adjacency.len(), n * n);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| {
            let deg: f64 = adjacency[u * n..(u + 1) * n].iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            out[u * n + v] = adjacency[u * n + v] * inv_sqrt[u] * inv_sqrt[v];
        }
    }
    out
}

pub fn build_graph(frame: &TrackedFrame, config: &GraphConfig) -> FrameGraph {
    let n = frame.entities.len();
    let mut features = Vec::with_capacity(n * FEATURE_DIM);
    for e in &frame.entities {
        let (x, y) = normalize_position(e.x_m, e.y_m, config.pitch_length_m, config.pitch_width_m);
        let one_hot = match e.kind {
            EntityKind::TeamA => [1.0, 0.0, 0.0],
            EntityKind::TeamB => [0.0, 1.0, 0.0],
            EntityKind::Ball => [0.0, 0.0, 1.0],
        };
        features.extend_from_slice(&[x, y]);
        features.extend_from_slice(&one_hot);
    }
    let mut edges = Vec::new();
    let mut adjacency = vec![0.0; n * n];
    for u in 0..n {
        adjacency[u * n + u] = 1.0;
        for v in u + 1..n {
            let (a, b) = (&frame.entities[u], &frame.entities[v]);
            let dist = (a.x_m - b.x_m).hypot(a.y_m - b.y_m);
            if dist < config.edge_threshold_m {
                edges.push((u, v));
                adjacency[u * n + v] = 1.0;
                adjacency[v * n + u] = 1.0;
            }
        }
    }
    FrameGraph {
        n_nodes: n,
        features,
        edges,
        norm_adjacency: degree_normalize(&adjacency, n),
    }
}

impl FrameGraph {
    /// Debug dump `{nodes, edges, features}`.
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.n_nodes,
            "edges": self.edges,
            "features": self.features.chunks(FEATURE_DIM).collect::<Vec<_>>(),
        })
    }
}
