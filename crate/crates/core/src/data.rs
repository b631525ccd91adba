//! Match, frame and event data model, its JSON-lines file format, and the
//! windowed chunk views used for training and inference.
//!
//! File layout: one header object, then one object per frame, then one
//! object per event:
//!
//! ```text
//! {"match_id":"m0","pitch_length_m":105.0,"pitch_width_m":68.0,"fps":2.0}
//! {"frame":0,"entities":[{"kind":"A","x":-10.5,"y":3.25},{"kind":"ball","x":0.0,"y":0.0}]}
//! {"event":"goal","frame":0}
//! ```
//!
//! Coordinates are meters with the origin at the pitch center and `x` along
//! the long side.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack (meters) allowed outside the pitch lines.
pub const PITCH_SLACK_M: f64 = 5.0;
pub const MAX_ENTITIES: usize = 30;
pub const NUM_CLASSES: usize = 12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("MalformedRecord at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("InvariantViolation: {invariant}{}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    InvariantViolation {
        invariant: String,
        frame: Option<u64>,
    },
    #[error("MissingHeader: first line must be the match header")]
    MissingHeader,
    #[error("BadRate: target {target} fps is not in (0, {source_fps}]")]
    BadRate { target: f64, source_fps: f64 },
    #[error("EmptyMatch: match has no frames")]
    EmptyMatch,
    #[error("unknown event class {0:?}")]
    UnknownClass(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The twelve annotated event classes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Out,
    Stop,
    Goal,
    GoalKick,
    CornerKick,
    ThrowIn,
    Offside,
    Foul,
    YellowCard,
    RedCard,
    GoalChance,
    Shot,
}

impl EventClass {
    pub const ALL: [EventClass; NUM_CLASSES] = [
        EventClass::Out,
        EventClass::Stop,
        EventClass::Goal,
        EventClass::GoalKick,
        EventClass::CornerKick,
        EventClass::ThrowIn,
        EventClass::Offside,
        EventClass::Foul,
        EventClass::YellowCard,
        EventClass::RedCard,
        EventClass::GoalChance,
        EventClass::Shot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Out => "out",
            EventClass::Stop => "stop",
            EventClass::Goal => "goal",
            EventClass::GoalKick => "goal_kick",
            EventClass::CornerKick => "corner_kick",
            EventClass::ThrowIn => "throw_in",
            EventClass::Offside => "offside",
            EventClass::Foul => "foul",
            EventClass::YellowCard => "yellow_card",
            EventClass::RedCard => "red_card",
            EventClass::GoalChance => "goal_chance",
            EventClass::Shot => "shot",
        }
    }

    /// Column title used in result tables.
    pub fn title(self) -> &'static str {
        match self {
            EventClass::Out => "Out",
            EventClass::Stop => "Stop",
            EventClass::Goal => "Goal",
            EventClass::GoalKick => "Goal kick",
            EventClass::CornerKick => "Corner kick",
            EventClass::ThrowIn => "Throw in",
            EventClass::Offside => "Offside",
            EventClass::Foul => "Foul",
            EventClass::YellowCard => "Yellow card",
            EventClass::RedCard => "Red card",
            EventClass::GoalChance => "Goal chance",
            EventClass::Shot => "Shot",
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DataError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    TeamA,
    TeamB,
    Ball,
}

impl EntityKind {
    fn code(self) -> &'static str {
        match self {
            EntityKind::TeamA => "A",
            EntityKind::TeamB => "B",
            EntityKind::Ball => "ball",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityObservation {
    pub kind: EntityKind,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub frame_index: u64,
    pub entities: Vec<EntityObservation>,
}

impl TrackedFrame {
    pub fn has_ball(&self) -> bool {
        self.entities.iter().any(|e| e.kind == EntityKind::Ball)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventAnnotation {
    pub class: EventClass,
    pub frame_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedMatch {
    pub match_id: String,
    pub pitch_length_m: f64,
    pub pitch_width_m: f64,
    pub fps: f64,
    pub frames: Vec<TrackedFrame>,
    pub events: Vec<EventAnnotation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    match_id: String,
    pitch_length_m: f64,
    pitch_width_m: f64,
    fps: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    kind: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u64,
    entities: Vec<EntityRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    event: String,
    frame: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BodyRecord {
    Frame(FrameRecord),
    Event(EventRecord),
}

fn violation(invariant: impl Into<String>, frame: Option<u64>) -> DataError {
    DataError::InvariantViolation {
        invariant: invariant.into(),
        frame,
    }
}

impl TrackedMatch {
    /// Timestamp (seconds) of a frame index.
    pub fn time_of(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn last_frame_index(&self) -> Option<u64> {
        self.frames.last().map(|f| f.frame_index)
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Checks every data-model invariant.
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.pitch_length_m > 0.0 && self.pitch_width_m > 0.0) {
            return Err(violation(
                "pitch dimensions must be strictly positive",
                None,
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(violation("fps must be strictly positive", None));
        }
        let half_l = self.pitch_length_m / 2.0 + PITCH_SLACK_M;
        let half_w = self.pitch_width_m / 2.0 + PITCH_SLACK_M;
        let mut prev: Option<u64> = None;
        for frame in &self.frames {
            let fi = Some(frame.frame_index);
            if prev.is_some_and(|p| frame.frame_index <= p) {
                return Err(violation("frame indices must be strictly increasing", fi));
            }
            prev = fi;
            if frame.entities.len() > MAX_ENTITIES {
                return Err(violation(
                    format!("at most {MAX_ENTITIES} entities per frame"),
                    fi,
                ));
            }
            let balls = frame
                .entities
                .iter()
                .filter(|e| e.kind == EntityKind::Ball)
                .count();
            if balls > 1 {
                return Err(violation("at most one ball per frame", fi));
            }
            for e in &frame.entities {
                if !(e.x_m.is_finite() && e.y_m.is_finite()) {
                    return Err(violation("entity coordinates must be finite", fi));
                }
                if e.x_m.abs() > half_l || e.y_m.abs() > half_w {
                    return Err(violation(
                        "entity position outside pitch bounds plus slack",
                        fi,
                    ));
                }
            }
        }
        let last = self.last_frame_index();
        for ev in &self.events {
            if last.is_none_or(|l| ev.frame_index > l) {
                return Err(violation(
                    format!("event {} lies beyond the last frame", ev.class),
                    Some(ev.frame_index),
                ));
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, DataError> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(DataError::MissingHeader),
                Some((_, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str::<HeaderRecord>(&line)
                        .map_err(|_| DataError::MissingHeader)?;
                }
            }
        };
        let mut m = TrackedMatch {
            match_id: header.match_id,
            pitch_length_m: header.pitch_length_m,
            pitch_width_m: header.pitch_width_m,
            fps: header.fps,
            frames: Vec::new(),
            events: Vec::new(),
        };
        let mut dropped_referees = 0usize;
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: BodyRecord =
                serde_json::from_str(&line).map_err(|e| DataError::MalformedRecord {
                    line: lineno,
                    message: e.to_string(),
                })?;
            match record {
                BodyRecord::Frame(fr) => {
                    if !m.events.is_empty() {
                        return Err(DataError::MalformedRecord {
                            line: lineno,
                            message: "frame record after event records".into(),
                        });
                    }
                    let mut entities = Vec::with_capacity(fr.entities.len());
                    for e in fr.entities {
                        let kind = match e.kind.as_str() {
                            "A" => EntityKind::TeamA,
                            "B" => EntityKind::TeamB,
                            "ball" => EntityKind::Ball,
                            "referee" => {
                                dropped_referees += 1;
                                continue;
                            }
                            other => {
                                return Err(DataError::MalformedRecord {
                                    line: lineno,
                                    message: format!("unknown entity kind {other:?}"),
                                })
                            }
                        };
                        entities.push(EntityObservation {
                            kind,
                            x_m: e.x,
                            y_m: e.y,
                        });
                    }
                    m.frames.push(TrackedFrame {
                        frame_index: fr.frame,
                        entities,
                    });
                }
                BodyRecord::Event(ev) => {
                    let class =
                        ev.event
                            .parse::<EventClass>()
                            .map_err(|_| DataError::MalformedRecord {
                                line: lineno,
                                message: format!("unknown event class {:?}", ev.event),
                            })?;
                    m.events.push(EventAnnotation {
                        class,
                        frame_index: ev.frame,
                    });
                }
            }
        }
        if dropped_referees > 0 {
            log::warn!(
                "{}: dropped {dropped_referees} referee observations",
                m.match_id
            );
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    /// Writes the canonical JSON-lines form.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        let header = HeaderRecord {
            match_id: self.match_id.clone(),
            pitch_length_m: self.pitch_length_m,
            pitch_width_m: self.pitch_width_m,
            fps: self.fps,
        };
        let to_io = |e: serde_json::Error| DataError::Io(e.into());
        serde_json::to_writer(&mut w, &header).map_err(to_io)?;
        w.write_all(b"\n")?;
        for frame in &self.frames {
            let rec = FrameRecord {
                frame: frame.frame_index,
                entities: frame
                    .entities
                    .iter()
                    .map(|e| EntityRecord {
                        kind: e.kind.code().to_string(),
                        x: e.x_m,
                        y: e.y_m,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(to_io)?;
            w.write_all(b"\n")?;
        }
        for ev in &self.events {
            let rec = EventRecord {
                event: ev.class.name().to_string(),
                frame: ev.frame_index,
            };
            serde_json::to_writer(&mut w, &rec).map_err(to_io)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Downsamples to `target_fps`. Sample `i` takes the source frame
    /// nearest to time `i / target_fps` and is renumbered `i`; each event
    /// moves to the nearest kept frame.
    pub fn resample(&self, target_fps: f64) -> Result<TrackedMatch, DataError> {
        if !(target_fps > 0.0) || target_fps > self.fps {
            return Err(DataError::BadRate {
                target: target_fps,
                source_fps: self.fps,
            });
        }
        if target_fps == self.fps {
            return Ok(self.clone());
        }
        let ratio = self.fps / target_fps;
        let Some(last) = self.last_frame_index() else {
            return Ok(TrackedMatch {
                fps: target_fps,
                frames: Vec::new(),
                events: Vec::new(),
                ..self.clone()
            });
        };
        let n_samples = (last as f64 / ratio).floor() as u64 + 1;
        let kept_source = |i: u64| -> u64 { (i as f64 * ratio).round() as u64 };
        let mut frames = Vec::with_capacity(n_samples as usize);
        for i in 0..n_samples {
            let want = kept_source(i);
            let pos = nearest_frame(&self.frames, want);
            frames.push(TrackedFrame {
                frame_index: i,
                entities: self.frames[pos].entities.clone(),
            });
        }
        let events = self
            .events
            .iter()
            .map(|ev| {
                let guess = (ev.frame_index as f64 / ratio).round() as i64;
                let best = (guess - 1..=guess + 1)
                    .filter(|&i| i >= 0 && (i as u64) < n_samples)
                    .min_by_key(|&i| (kept_source(i as u64).abs_diff(ev.frame_index), i))
                    .unwrap_or(0) as u64;
                EventAnnotation {
                    class: ev.class,
                    frame_index: best,
                }
            })
            .collect();
        Ok(TrackedMatch {
            match_id: self.match_id.clone(),
            pitch_length_m: self.pitch_length_m,
            pitch_width_m: self.pitch_width_m,
            fps: target_fps,
            frames,
            events,
        })
    }
}

/// Position of the frame whose index is closest to `want` (earlier on ties).
fn nearest_frame(frames: &[TrackedFrame], want: u64) -> usize {
    match frames.binary_search_by_key(&want, |f| f.frame_index) {
        Ok(p) => p,
        Err(0) => 0,
        Err(p) if p == frames.len() => p - 1,
        Err(p) => {
            let lo = want - frames[p - 1].frame_index;
            let hi = frames[p].frame_index - want;
            if hi < lo {
                p
            } else {
                p - 1
            }
        }
    }
}

/// A run of frames with its multi-label target.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowChunk {
    pub match_id: String,
    /// First covered frame index.
    pub start_frame: u64,
    /// One past the last covered frame index.
    pub end_frame: u64,
    /// Positions into `TrackedMatch::frames`, in temporal order. Inference
    /// chunks repeat the first or last frame at the match boundaries.
    pub frame_refs: Vec<usize>,
    /// Position of the frame the chunk's prediction is attributed to.
    pub center_ref: usize,
    pub label: [bool; NUM_CLASSES],
}

impl WindowChunk {
    pub fn label_vector(&self) -> [f64; NUM_CLASSES] {
        self.label.map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Number of frames covered by a window of `seconds` at `fps` (at least 1).
pub fn frames_for(seconds: f64, fps: f64) -> usize {
    ((seconds * fps).round() as usize).max(1)
}

fn label_for(m: &TrackedMatch, start_frame: u64, end_frame: u64) -> [bool; NUM_CLASSES] {
    let mut label = [false; NUM_CLASSES];
    for ev in &m.events {
        if ev.frame_index >= start_frame && ev.frame_index < end_frame {
            label[ev.class.index()] = true;
        }
    }
    label
}

/// Strided training windows; the trailing partial window is dropped.
pub fn make_training_chunks(
    m: &TrackedMatch,
    window_s: f64,
    stride_s: f64,
) -> Result<Vec<WindowChunk>, DataError> {
    if m.frames.is_empty() {
        return Err(DataError::EmptyMatch);
    }
    let w = frames_for(window_s, m.fps);
    let s = frames_for(stride_s, m.fps);
    let n = m.frames.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start + w <= n {
        let start_frame = m.frames[start].frame_index;
        let end_frame = m.frames[start + w - 1].frame_index + 1;
        chunks.push(WindowChunk {
            match_id: m.match_id.clone(),
            start_frame,
            end_frame,
            frame_refs: (start..start + w).collect(),
            center_ref: start + w / 2,
            label: label_for(m, start_frame, end_frame),
        });
        start += s;
    }
    Ok(chunks)
}

/// One window per frame, centered on it (the center frame opens the second
/// half), with positions clamped to the match boundaries.
pub fn make_inference_chunks(
    m: &TrackedMatch,
    window_s: f64,
) -> Result<Vec<WindowChunk>, DataError> {
    if m.frames.is_empty() {
        return Err(DataError::EmptyMatch);
    }
    let w = frames_for(window_s, m.fps);
    let n = m.frames.len() as i64;
    let half = (w / 2) as i64;
    Ok((0..n)
        .map(|c| {
            let start = c - half;
            let frame_refs: Vec<usize> = (start..start + w as i64)
                .map(|p| p.clamp(0, n - 1) as usize)
                .collect();
            let start_frame = m.frames[frame_refs[0]].frame_index;
            let end_frame = m.frames[*frame_refs.last().unwrap()].frame_index + 1;
            WindowChunk {
                match_id: m.match_id.clone(),
                start_frame,
                end_frame,
                frame_refs,
                center_ref: c as usize,
                label: label_for(m, start_frame, end_frame),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn player(x: f64, y: f64) -> EntityObservation {
        EntityObservation {
            kind: EntityKind::TeamA,
            x_m: x,
            y_m: y,
        }
    }

    pub(crate) fn simple_match(n_frames: u64, fps: f64) -> TrackedMatch {
        TrackedMatch {
            match_id: "t".into(),
            pitch_length_m: 105.0,
            pitch_width_m: 68.0,
            fps,
            frames: (0..n_frames)
                .map(|i| TrackedFrame {
                    frame_index: i,
                    entities: vec![player(i as f64 * 0.01, 0.0)],
                })
                .collect(),
            events: Vec::new(),
        }
    }

    const SMALL: &str = concat!(
        r#"{"match_id":"m1","pitch_length_m":105.0,"pitch_width_m":68.0,"fps":2.0}"#,
        "\n",
        r#"{"frame":0,"entities":[{"kind":"A","x":1.5,"y":-2.0},{"kind":"ball","x":0.0,"y":0.0}]}"#,
        "\n",
        r#"{"frame":1,"entities":[{"kind":"B","x":-3.25,"y":10.0}]}"#,
        "\n",
        r#"{"frame":2,"entities":[]}"#,
        "\n",
        r#"{"event":"goal","frame":1}"#,
        "\n"
    );

    #[test]
    fn loads_small_file_and_roundtrips() {
        let m = TrackedMatch::read_from(SMALL.as_bytes()).unwrap();
        assert_eq!(m.frames.len(), 3);
        assert_eq!(m.events.len(), 1);
        assert_eq!(m.events[0].class, EventClass::Goal);
        assert_eq!(String::from_utf8(m.to_bytes()).unwrap(), SMALL);
    }

    #[test]
    fn event_beyond_last_frame_is_rejected() {
        let text = SMALL.replace(
            r#"{"event":"goal","frame":1}"#,
            r#"{"event":"goal","frame":3}"#,
        );
        let err = TrackedMatch::read_from(text.as_bytes()).unwrap_err();
        assert!(
            matches!(err, DataError::InvariantViolation { frame: Some(3), .. }),
            "{err}"
        );
    }

    #[test]
    fn two_balls_rejected() {
        let text = SMALL.replace(
            r#"{"frame":2,"entities":[]}"#,
            r#"{"frame":2,"entities":[{"kind":"ball","x":0.0,"y":0.0},{"kind":"ball","x":1.0,"y":0.0}]}"#,
        );
        let err = TrackedMatch::read_from(text.as_bytes()).unwrap_err();
        assert!(
            matches!(err, DataError::InvariantViolation { frame: Some(2), .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_header_and_malformed_lines() {
        assert!(matches!(
            TrackedMatch::read_from("".as_bytes()),
            Err(DataError::MissingHeader)
        ));
        assert!(matches!(
            TrackedMatch::read_from(r#"{"frame":0,"entities":[]}"#.as_bytes()),
            Err(DataError::MissingHeader)
        ));
        let text = SMALL.replace(r#"{"frame":2,"entities":[]}"#, r#"{"frame":2,"entities":"#);
        match TrackedMatch::read_from(text.as_bytes()) {
            Err(DataError::MalformedRecord { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frames_after_events_rejected() {
        let text = format!("{SMALL}{}\n", r#"{"frame":3,"entities":[]}"#);
        assert!(matches!(
            TrackedMatch::read_from(text.as_bytes()),
            Err(DataError::MalformedRecord { line: 6, .. })
        ));
    }

    #[test]
    fn referees_are_dropped() {
        let text = SMALL.replace(
            r#"{"kind":"B","x":-3.25,"y":10.0}"#,
            r#"{"kind":"B","x":-3.25,"y":10.0},{"kind":"referee","x":0.0,"y":1.0}"#,
        );
        let m = TrackedMatch::read_from(text.as_bytes()).unwrap();
        assert_eq!(m.frames[1].entities.len(), 1);
    }

    #[test]
    fn out_of_bounds_and_ordering_invariants() {
        let mut m = simple_match(3, 2.0);
        m.frames[1].entities[0].x_m = 60.0;
        assert!(m.validate().is_err());
        let mut m = simple_match(3, 2.0);
        m.frames[2].frame_index = 1;
        assert!(m.validate().is_err());
    }

    #[test]
    fn resample_fifteen_to_two() {
        let m = simple_match(15 * 60, 15.0);
        let r = m.resample(2.0).unwrap();
        let rate = r.frames.len() as f64 / 60.0;
        assert!((rate - 2.0).abs() <= 0.1, "rate {rate}");
        assert_eq!(r.fps, 2.0);
        // kept source frames alternate gaps of 7 and 8
        let kept: Vec<f64> = r.frames.iter().map(|f| f.entities[0].x_m / 0.01).collect();
        for w in kept.windows(2) {
            let gap = (w[1] - w[0]).round() as i64;
            assert!(gap == 7 || gap == 8, "gap {gap}");
        }
    }

    #[test]
    fn resample_identity_and_idempotent() {
        let m = simple_match(40, 6.0);
        assert_eq!(m.resample(6.0).unwrap(), m);
        let r = m.resample(2.0).unwrap();
        assert_eq!(r.resample(2.0).unwrap(), r);
        assert!(m.resample(0.0).is_err());
        assert!(m.resample(7.0).is_err());
    }

    #[test]
    fn resample_remaps_event_to_nearest_kept_frame() {
        let mut m = simple_match(50, 14.0);
        m.events.push(EventAnnotation {
            class: EventClass::Foul,
            frame_index: 14,
        });
        m.events.push(EventAnnotation {
            class: EventClass::Shot,
            frame_index: 17,
        });
        let r = m.resample(2.0).unwrap();
        // k = 7: kept source frames 0, 7, 14, 21, ...
        assert_eq!(r.events[0].frame_index, 2);
        assert_eq!(r.events[1].frame_index, 2);
        assert_eq!(r.frames[2].entities[0], m.frames[14].entities[0]);
    }

    #[test]
    fn training_chunk_counts_and_labels() {
        let mut m = simple_match(120, 2.0);
        m.events.push(EventAnnotation {
            class: EventClass::Goal,
            frame_index: 30,
        });
        m.events.push(EventAnnotation {
            class: EventClass::Goal,
            frame_index: 35,
        });
        let chunks = make_training_chunks(&m, 10.0, 10.0).unwrap();
        assert_eq!(chunks.len(), 6);
        assert!(chunks.iter().all(|c| c.frame_refs.len() == 20));
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.label[EventClass::Goal.index()], i == 1);
            assert_eq!(c.label.iter().filter(|&&b| b).count(), usize::from(i == 1));
        }
        assert!(matches!(
            make_training_chunks(&simple_match(0, 2.0), 10.0, 10.0),
            Err(DataError::EmptyMatch)
        ));
    }

    #[test]
    fn inference_chunks_clamp_and_center() {
        let m = simple_match(100, 2.0);
        let chunks = make_inference_chunks(&m, 10.0).unwrap();
        assert_eq!(chunks.len(), 100);
        assert_eq!(chunks[0].frame_refs[..10], [0; 10]);
        assert_eq!(chunks[0].frame_refs[10..], (0..10).collect::<Vec<_>>()[..]);
        // the chunk whose window starts at frame 10 is centered on frame 20
        let c = chunks
            .iter()
            .find(|c| c.frame_refs[0] == 10 && c.frame_refs[1] == 11)
            .unwrap();
        assert_eq!(c.center_ref, 20);
        assert_eq!(chunks[99].frame_refs[19], 99);
    }
}
