//! Temporal pooling of per-frame embeddings into one window descriptor.
//!
//! Inputs are batched as `(B, N, D)`: `B` windows of `N` frames each. The
//! split variants pool the frames before the window center and the frames
//! from the center on with separate parameters and concatenate the results.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{NumericError, ParamBinder, ParamStore, Tape, Tensor, Var};

pub const DEFAULT_CLUSTERS: usize = 64;
pub const CENTER_INIT_SCALE: f64 = 0.1;
pub const DEFAULT_ALPHA_INIT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolingError {
    #[error("EmptyWindow: pooling needs at least {needed} frame(s), got {got}")]
    EmptyWindow { needed: usize, got: usize },
    #[error("unknown pooling method {0:?}")]
    UnknownMethod(String),
    #[error("cluster count {0} is invalid for this method")]
    BadClusterCount(usize),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMethod {
    Avg,
    Max,
    #[serde(rename = "netvlad")]
    NetVlad,
    #[serde(rename = "netrvlad")]
    NetRvlad,
}

impl BaseMethod {
    pub fn uses_clusters(self) -> bool {
        matches!(self, BaseMethod::NetVlad | BaseMethod::NetRvlad)
    }
}

/// A base pooling method, optionally split around the window center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolingMethod {
    pub base: BaseMethod,
    pub split: bool,
}

impl PoolingMethod {
    pub const ALL: [PoolingMethod; 8] = [
        PoolingMethod::new(BaseMethod::Avg, false),
        PoolingMethod::new(BaseMethod::Avg, true),
        PoolingMethod::new(BaseMethod::Max, false),
        PoolingMethod::new(BaseMethod::Max, true),
        PoolingMethod::new(BaseMethod::NetRvlad, false),
        PoolingMethod::new(BaseMethod::NetRvlad, true),
        PoolingMethod::new(BaseMethod::NetVlad, false),
        PoolingMethod::new(BaseMethod::NetVlad, true),
    ];

    pub const fn new(base: BaseMethod, split: bool) -> Self {
        Self { base, split }
    }

    /// Display label, e.g. `NetVLAD++`.
    pub fn label(self) -> String {
        let base = match self.base {
            BaseMethod::Avg => "AVG",
            BaseMethod::Max => "MAX",
            BaseMethod::NetVlad => "NetVLAD",
            BaseMethod::NetRvlad => "NetRVLAD",
        };
        if self.split {
            format!("{base}++")
        } else {
            base.to_string()
        }
    }

    /// Length of the pooled descriptor for `dim`-wide frame embeddings and
    /// `clusters` total clusters.
    pub fn output_dim(self, dim: usize, clusters: usize) -> usize {
        let halves = if self.split { 2 } else { 1 };
        if self.base.uses_clusters() {
            dim * clusters
        } else {
            dim * halves
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            BaseMethod::Avg => "avg",
            BaseMethod::Max => "max",
            BaseMethod::NetVlad => "netvlad",
            BaseMethod::NetRvlad => "netrvlad",
        };
        write!(f, "{base}{}", if self.split { "++" } else { "" })
    }
}

impl FromStr for PoolingMethod {
    type Err = PoolingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (stem, split) = match lower.strip_suffix("++") {
            Some(stem) => (stem, true),
            None => (lower.as_str(), false),
        };
        let base = match stem {
            "avg" => BaseMethod::Avg,
            "max" => BaseMethod::Max,
            "netvlad" => BaseMethod::NetVlad,
            "netrvlad" => BaseMethod::NetRvlad,
            _ => return Err(PoolingError::UnknownMethod(s.to_string())),
        };
        Ok(Self { base, split })
    }
}

impl Serialize for PoolingMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PoolingMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index of the first frame of the "after" half of an `n`-frame window
/// with `before_s` seconds of past and `after_s` seconds of future context.
pub fn split_index(n: usize, before_s: f64, after_s: f64) -> usize {
    ((n as f64) * before_s / (before_s + after_s)).floor() as usize
}

/// Initializes cluster parameters: centers `~ 0.1·N(0, 1)`, then
/// `w_k = 2α c_k` and `b_k = -α‖c_k‖²`.
pub fn init_cluster_params<R: Rng>(
    rng: &mut R,
    clusters: usize,
    dim: usize,
    alpha: f64,
    with_centers: bool,
) -> ParamStore {
    let centers: Vec<f64> = (0..clusters * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            CENTER_INIT_SCALE * z
        })
        .collect();
    cluster_params_from_centers(&centers, clusters, dim, alpha, with_centers)
}

/// Builds `weight`, `bias` (and `centers`) from explicit centers.
pub fn cluster_params_from_centers(
    centers: &[f64],
    clusters: usize,
    dim: usize,
    alpha: f64,
    with_centers: bool,
) -> ParamStore {
    assert_eq!(centers.len(), clusters * dim);
    let weight = centers.iter().map(|c| 2.0 * alpha * c).collect();
    let bias = centers
        .chunks(dim)
        .map(|c| -alpha * c.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let mut p = ParamStore::new();
    p.insert(
        "weight",
        Tensor::new(vec![clusters, dim], weight).expect("sized"),
    );
    p.insert("bias", Tensor::vector(bias));
    if with_centers {
        p.insert(
            "centers",
            Tensor::new(vec![clusters, dim], centers.to_vec()).expect("sized"),
        );
    }
    p
}

/// Pooling parameters for `method`, named `pool.*` or
/// `pool.before.*` / `pool.after.*`.
pub fn init_params<R: Rng>(
    rng: &mut R,
    method: PoolingMethod,
    dim: usize,
    clusters: usize,
    alpha: f64,
) -> Result<ParamStore, PoolingError> {
    let mut out = ParamStore::new();
    if !method.base.uses_clusters() {
        return Ok(out);
    }
    let with_centers = method.base == BaseMethod::NetVlad;
    if method.split {
        if clusters < 2 || !clusters.is_multiple_of(2) {
            return Err(PoolingError::BadClusterCount(clusters));
        }
        for half in ["pool.before.", "pool.after."] {
            out.merge_prefixed(
                half,
                init_cluster_params(rng, clusters / 2, dim, alpha, with_centers),
            );
        }
    } else {
        if clusters == 0 {
            return Err(PoolingError::BadClusterCount(clusters));
        }
        out.merge_prefixed(
            "pool.",
            init_cluster_params(rng, clusters, dim, alpha, with_centers),
        );
    }
    Ok(out)
}

pub fn avg_pool(tape: &mut Tape, x: Var) -> Result<Var, PoolingError> {
    check_frames(tape, x, 1)?;
    Ok(tape.mean(x, 1)?)
}

pub fn max_pool(tape: &mut Tape, x: Var) -> Result<Var, PoolingError> {
    check_frames(tape, x, 1)?;
    Ok(tape.max(x, 1)?)
}

/// Soft assignment `softmax_k(w_k·x_i + b_k)`, shape `(B, N, K)`.
pub fn soft_assign(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var, PoolingError> {
    let shape = tape.shape(x).to_vec();
    let wshape = tape.shape(weight).to_vec();
    if shape.len() != 3 || wshape.len() != 2 || wshape[1] != shape[2] {
        return Err(NumericError::ShapeMismatch {
            op: "soft_assign",
            left: shape,
            right: wshape,
        }
        .into());
    }
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    let k = wshape[0];
    let flat = tape.reshape(x, &[b * n, d])?;
    let logits = tape.matmul_t(flat, weight, false, true)?;
    let logits = tape.add(logits, bias)?;
    let logits = tape.reshape(logits, &[b, n, k])?;
    Ok(tape.softmax(logits, 2)?)
}

/// VLAD aggregation over soft assignments, with residuals to `centers`
/// when given and raw features otherwise. Output `(B, K·D)`, each cluster
/// block L2-normalized and then the whole vector L2-normalized.
pub fn vlad(
    tape: &mut Tape,
    x: Var,
    weight: Var,
    bias: Var,
    centers: Option<Var>,
) -> Result<Var, PoolingError> {
    check_frames(tape, x, 1)?;
    let shape = tape.shape(x).to_vec();
    let (b, d) = (shape[0], shape[2]);
    let k = tape.shape(weight)[0];
    let a = soft_assign(tape, x, weight, bias)?;
    // (B, K, D) = Aᵀ X
    let mut v = tape.batch_matmul_t(a, x, true, false)?;
    if let Some(c) = centers {
        let mass = tape.sum(a, 1)?;
        let mass = tape.reshape(mass, &[b, k, 1])?;
        let shift = tape.mul(mass, c)?;
        v = tape.sub(v, shift)?;
    }
    let v = tape.l2_normalize(v, 2)?;
    let v = tape.reshape(v, &[b, k * d])?;
    Ok(tape.l2_normalize(v, 1)?)
}

/// Applies the configured method to `x` of shape `(B, N, D)`.
pub fn pool(
    tape: &mut Tape,
    params: &mut ParamBinder<'_>,
    method: PoolingMethod,
    x: Var,
) -> Result<Var, PoolingError> {
    if !method.split {
        return pool_base(tape, params, method.base, "pool.", x);
    }
    let n = tape.shape(x)[1];
    check_frames(tape, x, 2)?;
    let s = split_index(n, 1.0, 1.0);
    if s == 0 || s == n {
        return Err(PoolingError::EmptyWindow { needed: 2, got: n });
    }
    let before = tape.slice(x, 1, 0, s)?;
    let after = tape.slice(x, 1, s, n - s)?;
    let vb = pool_base(tape, params, method.base, "pool.before.", before)?;
    let va = pool_base(tape, params, method.base, "pool.after.", after)?;
    Ok(tape.concat(&[vb, va], 1)?)
}

fn pool_base(
    tape: &mut Tape,
    params: &mut ParamBinder<'_>,
    base: BaseMethod,
    prefix: &str,
    x: Var,
) -> Result<Var, PoolingError> {
    match base {
        BaseMethod::Avg => avg_pool(tape, x),
        BaseMethod::Max => max_pool(tape, x),
        BaseMethod::NetVlad | BaseMethod::NetRvlad => {
            let w = params.get(tape, &format!("{prefix}weight"))?;
            let b = params.get(tape, &format!("{prefix}bias"))?;
            let c = if base == BaseMethod::NetVlad {
                Some(params.get(tape, &format!("{prefix}centers"))?)
            } else {
                None
            };
            vlad(tape, x, w, b, c)
        }
    }
}

fn check_frames(tape: &Tape, x: Var, needed: usize) -> Result<(), PoolingError> {
    let shape = tape.shape(x);
    if shape.len() != 3 {
        return Err(NumericError::BadAxis {
            op: "pool",
            axis: 1,
            shape: shape.to_vec(),
        }
        .into());
    }
    if shape[1] < needed {
        return Err(PoolingError::EmptyWindow {
            needed,
            got: shape[1],
        });
    }
    Ok(())
}

/// Pools one `N × D` window outside of any training graph.
pub fn pool_window(
    params: &ParamStore,
    method: PoolingMethod,
    window: &Tensor,
) -> Result<Vec<f64>, PoolingError> {
    let shape = window.shape();
    if shape.len() != 2 {
        return Err(NumericError::BadAxis {
            op: "pool_window",
            axis: 1,
            shape: shape.to_vec(),
        }
        .into());
    }
    let mut tape = Tape::new();
    let x = tape.constant(window.clone().reshaped(vec![1, shape[0], shape[1]])?);
    let mut binder = ParamBinder::new(params, false);
    let out = pool(&mut tape, &mut binder, method, x)?;
    Ok(tape.value(out).values().to_vec())
}
