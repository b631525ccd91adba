//! Sliding-window inference, thresholding and temporal non-maximum
//! suppression.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_inference_chunks, DataError, EventClass, TrackedMatch, NUM_CLASSES};
use crate::encoder::{GraphBatch, Mode, EMBED_DIM};
use crate::numeric::{NumericError, ParamBinder, Tape, Tensor};
use crate::trainer::{SpottingModel, TrainError};

pub const DEFAULT_NMS_WINDOW_S: f64 = 30.0;
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.2;
const ENCODE_BATCH: usize = 512;
const WINDOW_BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum SpotError {
    #[error("FormatError at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("confidence threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<NumericError> for SpotError {
    fn from(e: NumericError) -> Self {
        SpotError::Train(e.into())
    }
}

/// Per-frame class probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceCurve {
    pub times_s: Vec<f64>,
    pub probs: Vec<[f64; NUM_CLASSES]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpottingPrediction {
    pub class: EventClass,
    pub time_s: f64,
    pub confidence: f64,
}

/// Scores every frame of `m` with a window centered on it.
pub fn score_match(model: &SpottingModel, m: &TrackedMatch) -> Result<ConfidenceCurve, SpotError> {
    let prepared = model.prepare(m)?;
    let n_frames = prepared.graphs.len();
    if n_frames == 0 {
        return Err(DataError::EmptyMatch.into());
    }
    let encoder = model.encoder();
    let mut embeddings = Vec::with_capacity(n_frames * EMBED_DIM);
    for block in prepared.graphs.chunks(ENCODE_BATCH) {
        let refs: Vec<_> = block.iter().collect();
        let batch = GraphBatch::new(&refs)?;
        let mut tape = Tape::new();
        let mut binder = ParamBinder::new(&model.params, false);
        let (out, _) = encoder
            .forward(&mut tape, &mut binder, &batch, Mode::Eval)
            .map_err(TrainError::from)?;
        embeddings.extend_from_slice(tape.value(out).values());
    }
    let chunks = make_inference_chunks(&prepared.tracked, model.config.window_s)?;
    let n = model.frames_per_window();
    let mut curve = ConfidenceCurve::default();
    for group in chunks.chunks(WINDOW_BATCH) {
        let mut stacked = Vec::with_capacity(group.len() * n * EMBED_DIM);
        for c in group {
            for &r in &c.frame_refs {
                stacked.extend_from_slice(&embeddings[r * EMBED_DIM..(r + 1) * EMBED_DIM]);
            }
        }
        let mut tape = Tape::new();
        let mut binder = ParamBinder::new(&model.params, false);
        let x = tape.constant(Tensor::new(vec![group.len(), n, EMBED_DIM], stacked)?);
        let p = model.head_forward(&mut tape, &mut binder, x)?;
        for (c, row) in group.iter().zip(tape.value(p).values().chunks(NUM_CLASSES)) {
            let frame = &prepared.tracked.frames[c.center_ref];
            curve
                .times_s
                .push(prepared.tracked.time_of(frame.frame_index));
            let mut probs = [0.0; NUM_CLASSES];
            probs.copy_from_slice(row);
            curve.probs.push(probs);
        }
    }
    Ok(curve)
}

/// Greedy 1-D suppression: keep the most confident remaining point (the
/// earlier one on ties) and drop every point strictly closer than
/// `window_s` to it.
pub fn nms_1d(points: &[(f64, f64)], window_s: f64) -> Vec<(f64, f64)> {
    let mut order: Vec<(f64, f64)> = points.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for p in order {
        if kept.iter().all(|k| (k.0 - p.0).abs() >= window_s) {
            kept.push(p);
        }
    }
    kept
}

/// Thresholds each class trace and applies NMS. Predictions are ordered by
/// class, then time.
pub fn spot(
    curve: &ConfidenceCurve,
    conf_threshold: f64,
    nms_window_s: f64,
) -> Result<Vec<SpottingPrediction>, SpotError> {
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(SpotError::BadThreshold(conf_threshold));
    }
    let mut out = Vec::new();
    for class in EventClass::ALL {
        let c = class.index();
        let points: Vec<(f64, f64)> = curve
            .times_s
            .iter()
            .zip(&curve.probs)
            .filter(|(_, p)| p[c] >= conf_threshold)
            .map(|(&t, p)| (t, p[c]))
            .collect();
        let mut kept = nms_1d(&points, nms_window_s);
        kept.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.extend(
            kept.into_iter()
                .map(|(time_s, confidence)| SpottingPrediction {
                    class,
                    time_s,
                    confidence,
                }),
        );
    }
    Ok(out)
}

impl ConfidenceCurve {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time_s")?;
        for class in EventClass::ALL {
            write!(w, ",{}", class.name())?;
        }
        writeln!(w)?;
        for (t, p) in self.times_s.iter().zip(&self.probs) {
            write!(w, "{t}")?;
            for v in p {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SpotError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let expected: Vec<String> = std::iter::once("time_s".to_string())
            .chain(EventClass::ALL.iter().map(|c| c.name().to_string()))
            .collect();
        if header
            .trim()
            .split(',')
            .ne(expected.iter().map(String::as_str))
        {
            return Err(format_error(
                1,
                "expected header time_s followed by the 12 class names",
            ));
        }
        let mut curve = ConfidenceCurve::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields = parse_floats(&line, i + 2)?;
            if fields.len() != NUM_CLASSES + 1 {
                return Err(format_error(i + 2, "expected 13 columns"));
            }
            curve.times_s.push(fields[0]);
            let mut p = [0.0; NUM_CLASSES];
            p.copy_from_slice(&fields[1..]);
            curve.probs.push(p);
        }
        Ok(curve)
    }
}

fn format_error(line: usize, message: impl Into<String>) -> SpotError {
    SpotError::Format {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: &str, lineno: usize) -> Result<Vec<f64>, SpotError> {
    line.trim()
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| format_error(lineno, format!("{f:?}: {e}")))
        })
        .collect()
}

pub fn write_predictions_csv<W: Write>(
    preds: &[SpottingPrediction],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "class,time_s,confidence")?;
    for p in preds {
        writeln!(w, "{},{},{}", p.class.name(), p.time_s, p.confidence)?;
    }
    Ok(())
}

pub fn read_predictions_csv<R: BufRead>(r: R) -> Result<Vec<SpottingPrediction>, SpotError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "class,time_s,confidence" {
        return Err(format_error(1, "expected header class,time_s,confidence"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let (class, rest) = line
            .split_once(',')
            .ok_or_else(|| format_error(lineno, "expected 3 columns"))?;
        let class: EventClass = class
            .trim()
            .parse()
            .map_err(|e: DataError| format_error(lineno, e.to_string()))?;
        let nums = parse_floats(rest, lineno)?;
        if nums.len() != 2 {
            return Err(format_error(lineno, "expected 3 columns"));
        }
        out.push(SpottingPrediction {
            class,
            time_s: nums[0],
            confidence: nums[1],
        });
    }
    Ok(out)
}
