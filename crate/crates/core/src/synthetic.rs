//! Synthetic matches with planted event signatures.
//!
//! Two teams of eleven hold a formation that drifts smoothly around the
//! pitch. Around every event the players flicker, frame by frame, between
//! two set formations for a few seconds, then between two other formations
//! for a few seconds after it. Classes come in pairs that use the same four
//! formations in opposite order, so telling them apart needs the temporal
//! order.
//!
//! The background also holds near misses of real signatures. A pure decoy
//! holds only one formation of each flickering pair. A sparse decoy shows
//! every formation of a signature, but for a single frame each. Telling
//! these from events needs both the mix of formations within a half and how
//! often each one shows up.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    DataError, EntityKind, EntityObservation, EventAnnotation, EventClass, TrackedFrame,
    TrackedMatch, NUM_CLASSES, PITCH_SLACK_M,
};

pub const PLAYERS_PER_TEAM: usize = 11;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub fps: f64,
    /// Events to plant per class, in class order.
    pub events_per_class: [usize; NUM_CLASSES],
    pub pitch_length_m: f64,
    pub pitch_width_m: f64,
    pub ball_coverage_fraction: f64,
    pub noise_std_m: f64,
    /// Minimum spacing between planted events.
    pub min_event_gap_s: f64,
    /// How long a signature lasts on either side of the event time.
    pub signature_half_s: f64,
    /// Near-miss decoys per minute.
    pub decoys_per_minute: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 480.0,
            fps: 2.0,
            events_per_class: [1; NUM_CLASSES],
            pitch_length_m: 105.0,
            pitch_width_m: 68.0,
            ball_coverage_fraction: 0.12,
            noise_std_m: 0.3,
            min_event_gap_s: 30.0,
            signature_half_s: 3.0,
            decoys_per_minute: 1.5,
        }
    }
}

/// Set formations used to draw signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formation {
    CenterHuddle,
    TopSideline,
    RightCorner,
    LeftBox,
    KickoffGrid,
    OffsideLines,
}

impl Formation {
    pub const ALL: [Formation; 6] = [
        Formation::CenterHuddle,
        Formation::TopSideline,
        Formation::RightCorner,
        Formation::LeftBox,
        Formation::KickoffGrid,
        Formation::OffsideLines,
    ];

    /// Target position of player `i` (team A first), on a 105 × 68 pitch.
    fn position(self, i: usize) -> (f64, f64) {
        let team_b = i >= PLAYERS_PER_TEAM;
        let j = i % PLAYERS_PER_TEAM;
        let golden = |k: usize, r0: f64, r1: f64, cx: f64, cy: f64| {
            let a = k as f64 * 2.399_963;
            let r = r0 + (r1 - r0) * (k as f64 / 21.0).sqrt();
            (cx + r * a.cos(), cy + r * a.sin())
        };
        match self {
            Formation::CenterHuddle => golden(i, 1.0, 7.0, 0.0, 0.0),
            Formation::TopSideline => {
                let x = -25.0 + 5.0 * j as f64;
                (x, if team_b { 22.0 } else { 31.0 })
            }
            Formation::RightCorner => golden(i, 1.5, 11.0, 41.0, 23.0),
            Formation::LeftBox => golden(i, 1.5, 13.0, -40.0, 0.0),
            Formation::KickoffGrid => {
                let col = (j % 4) as f64;
                let row = (j / 4) as f64;
                let x = -45.0 + 12.0 * col;
                let y = -24.0 + 24.0 * row;
                if team_b {
                    (-x, -y)
                } else {
                    (x, y)
                }
            }
            Formation::OffsideLines => {
                let y = -30.0 + 6.0 * j as f64;
                (if team_b { 24.0 } else { 14.0 }, y)
            }
        }
    }
}

/// The formations alternated before and after an event of `class`.
pub fn signature(class: EventClass) -> ([Formation; 2], [Formation; 2]) {
    use Formation::*;
    let (before, after) = match class {
        EventClass::Out => ([TopSideline, OffsideLines], [KickoffGrid, CenterHuddle]),
        EventClass::Goal => ([LeftBox, OffsideLines], [CenterHuddle, RightCorner]),
        EventClass::CornerKick => ([RightCorner, TopSideline], [KickoffGrid, OffsideLines]),
        EventClass::Offside => ([CenterHuddle, TopSideline], [LeftBox, KickoffGrid]),
        EventClass::YellowCard => ([TopSideline, LeftBox], [RightCorner, OffsideLines]),
        EventClass::GoalChance => ([CenterHuddle, LeftBox], [RightCorner, KickoffGrid]),
        other => {
            let (b, a) = signature(partner(other));
            return (a, b);
        }
    };
    (before, after)
}

/// The class whose signature runs the same formations in reverse.
pub fn partner(class: EventClass) -> EventClass {
    use EventClass::*;
    match class {
        Out => Stop,
        Stop => Out,
        Goal => GoalKick,
        GoalKick => Goal,
        CornerKick => ThrowIn,
        ThrowIn => CornerKick,
        Offside => Foul,
        Foul => Offside,
        YellowCard => RedCard,
        RedCard => YellowCard,
        GoalChance => Shot,
        Shot => GoalChance,
    }
}

/// Smooth scalar signal in `[-1, 1]` built from a few slow sinusoids.
struct Drift {
    terms: Vec<(f64, f64)>,
}

impl Drift {
    fn new<R: Rng>(rng: &mut R, min_period_s: f64, max_period_s: f64) -> Self {
        let terms = (0..3)
            .map(|_| {
                let period = rng.random_range(min_period_s..max_period_s);
                (2.0 * PI / period, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        Self { terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(w, p)| (w * t + p).sin())
            .sum::<f64>()
            / self.terms.len() as f64
    }
}

fn base_formation(i: usize) -> (f64, f64) {
    const LAYOUT: [(f64, f64); PLAYERS_PER_TEAM] = [
        (-48.0, 0.0),
        (-32.0, -22.0),
        (-34.0, -8.0),
        (-34.0, 8.0),
        (-32.0, 22.0),
        (-14.0, -20.0),
        (-16.0, -6.0),
        (-16.0, 6.0),
        (-14.0, 20.0),
        (-3.0, -8.0),
        (-3.0, 8.0),
    ];
    let (x, y) = LAYOUT[i % PLAYERS_PER_TEAM];
    if i >= PLAYERS_PER_TEAM {
        (-x + 2.0, -y)
    } else {
        (x, y)
    }
}

/// Sorted event times at least `gap` apart inside `[margin, duration - margin]`.
fn place_times<R: Rng>(
    rng: &mut R,
    n: usize,
    duration: f64,
    margin: f64,
    gap: f64,
) -> Result<Vec<f64>, GeneratorError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let slack = duration - 2.0 * margin - (n - 1) as f64 * gap;
    if slack < 0.0 {
        return Err(GeneratorError::Config(format!(
            "{n} events spaced {gap} s apart do not fit in {duration} s"
        )));
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=slack)).collect();
    u.sort_by(f64::total_cmp);
    Ok(u.iter()
        .enumerate()
        .map(|(i, v)| margin + v + i as f64 * gap)
        .collect())
}

pub fn generate_match(
    config: &GeneratorConfig,
    match_id: &str,
) -> Result<TrackedMatch, GeneratorError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_frames = (config.duration_s * config.fps).round() as usize;
    let half = config.signature_half_s;
    let margin = half + 1.0;

    let mut classes: Vec<EventClass> = EventClass::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, config.events_per_class[c.index()]))
        .collect();
    classes.shuffle(&mut rng);
    let times = place_times(
        &mut rng,
        classes.len(),
        config.duration_s,
        margin,
        config.min_event_gap_s,
    )?;

    let half_frames = ((half * config.fps).round() as usize).max(1);
    // formation forced on each frame, if any
    let mut planted: Vec<Option<Formation>> = vec![None; n_frames];
    let mut paint = |frame: i64, formation: Formation| {
        if frame >= 0 && (frame as usize) < n_frames {
            planted[frame as usize] = Some(formation);
        }
    };
    let mut events = Vec::new();
    for (&class, &t) in classes.iter().zip(&times) {
        let frame = ((t * config.fps).round() as u64).min(n_frames as u64 - 1);
        let (before, after) = signature(class);
        for k in 0..half_frames as i64 {
            paint(frame as i64 - 1 - k, before[k as usize % 2]);
            paint(frame as i64 + k, after[k as usize % 2]);
        }
        events.push(EventAnnotation {
            class,
            frame_index: frame,
        });
    }
    let n_decoys = (config.decoys_per_minute * config.duration_s / 60.0).round() as usize;
    let clear = 4.0 * half;
    let mut centers: Vec<f64> = events
        .iter()
        .map(|e| e.frame_index as f64 / config.fps)
        .collect();
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_decoys && attempts < 100 * (n_decoys + 1) {
        attempts += 1;
        let frame = rng.random_range(0..n_frames) as i64;
        let t = frame as f64 / config.fps;
        if centers.iter().any(|&c| (c - t).abs() < clear) {
            continue;
        }
        centers.push(t);
        placed += 1;
        let class = *EventClass::ALL.choose(&mut rng).expect("non-empty");
        let (before, after) = signature(class);
        if rng.random_bool(0.5) {
            let (b, a) = (
                before[rng.random_range(0..2)],
                after[rng.random_range(0..2)],
            );
            for k in 0..half_frames as i64 {
                paint(frame - 1 - k, b);
                paint(frame + k, a);
            }
        } else {
            for (side, pair) in [(-1i64, before), (1, after)] {
                let mut slots: Vec<i64> = (0..half_frames as i64).collect();
                slots.shuffle(&mut rng);
                for (&slot, formation) in slots.iter().zip(pair) {
                    paint(
                        if side < 0 {
                            frame - 1 - slot
                        } else {
                            frame + slot
                        },
                        formation,
                    );
                }
            }
        }
    }

    let block_x = Drift::new(&mut rng, 40.0, 160.0);
    let block_y = Drift::new(&mut rng, 30.0, 120.0);
    let wander: Vec<(Drift, Drift)> = (0..2 * PLAYERS_PER_TEAM)
        .map(|_| {
            (
                Drift::new(&mut rng, 8.0, 40.0),
                Drift::new(&mut rng, 8.0, 40.0),
            )
        })
        .collect();
    let noise =
        Normal::new(0.0, config.noise_std_m).map_err(|e| GeneratorError::Config(e.to_string()))?;

    let n_ball = (config.ball_coverage_fraction * n_frames as f64).round() as usize;
    let mut ball_frames = vec![false; n_frames];
    let mut order: Vec<usize> = (0..n_frames).collect();
    order.shuffle(&mut rng);
    for &f in order.iter().take(n_ball) {
        ball_frames[f] = true;
    }

    let sx = config.pitch_length_m / 105.0;
    let sy = config.pitch_width_m / 68.0;
    let x_lim = config.pitch_length_m / 2.0 + PITCH_SLACK_M;
    let y_lim = config.pitch_width_m / 2.0 + PITCH_SLACK_M;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let t = f as f64 / config.fps;
        let (bx, by) = (22.0 * block_x.at(t), 10.0 * block_y.at(t));
        let mut entities = Vec::with_capacity(2 * PLAYERS_PER_TEAM + 1);
        for (i, (wx, wy)) in wander.iter().enumerate() {
            let (fx, fy) = base_formation(i);
            let (x, y) = match planted[f] {
                Some(formation) => formation.position(i),
                None => (fx + bx + 3.0 * wx.at(t), fy + by + 3.0 * wy.at(t)),
            };
            let x = (x * sx + noise.sample(&mut rng)).clamp(-x_lim, x_lim);
            let y = (y * sy + noise.sample(&mut rng)).clamp(-y_lim, y_lim);
            entities.push(EntityObservation {
                kind: if i < PLAYERS_PER_TEAM {
                    EntityKind::TeamA
                } else {
                    EntityKind::TeamB
                },
                x_m: x,
                y_m: y,
            });
        }
        if ball_frames[f] {
            let carrier = &entities[rng.random_range(0..entities.len())];
            let (x, y) = (
                (carrier.x_m + rng.random_range(-1.5..1.5)).clamp(-x_lim, x_lim),
                (carrier.y_m + rng.random_range(-1.5..1.5)).clamp(-y_lim, y_lim),
            );
            entities.push(EntityObservation {
                kind: EntityKind::Ball,
                x_m: x,
                y_m: y,
            });
        }
        frames.push(TrackedFrame {
            frame_index: f as u64,
            entities,
        });
    }
    events.sort_by_key(|e| (e.frame_index, e.class));
    let m = TrackedMatch {
        match_id: match_id.to_string(),
        pitch_length_m: config.pitch_length_m,
        pitch_width_m: config.pitch_width_m,
        fps: config.fps,
        frames,
        events,
    };
    m.validate()?;
    Ok(m)
}

fn validate(config: &GeneratorConfig) -> Result<(), GeneratorError> {
    let bad = |m: &str| Err(GeneratorError::Config(m.to_string()));
    if !(config.duration_s > 0.0 && config.fps > 0.0) {
        return bad("duration_s and fps must be positive");
    }
    if !(config.pitch_length_m > 0.0 && config.pitch_width_m > 0.0) {
        return bad("pitch dimensions must be positive");
    }
    if !(0.0..=1.0).contains(&config.ball_coverage_fraction) {
        return bad("ball_coverage_fraction must lie in [0, 1]");
    }
    if !(config.noise_std_m >= 0.0
        && config.signature_half_s > 0.0
        && config.min_event_gap_s >= 0.0)
    {
        return bad("noise, signature and gap settings must be non-negative");
    }
    if !(config.decoys_per_minute >= 0.0) {
        return bad("decoys_per_minute must be non-negative");
    }
    if (config.duration_s * config.fps).round() < 1.0 {
        return bad("match has no frames");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

/// Seed of the `index`-th match of a split.
pub fn match_seed(base_seed: u64, split: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a packed (split, index) tag
    let mut z = base_seed ^ (split << 32 | index).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `train/`, `val/` and `test/` directories of match files.
pub fn generate_dataset(
    out_dir: &Path,
    base_seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    config: &GeneratorConfig,
) -> Result<DatasetPaths, GeneratorError> {
    let mut paths = DatasetPaths {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (split, (name, n)) in [("train", n_train), ("val", n_val), ("test", n_test)]
        .into_iter()
        .enumerate()
    {
        let dir = out_dir.join(name);
        std::fs::create_dir_all(&dir)?;
        for i in 0..n {
            let cfg = GeneratorConfig {
                seed: match_seed(base_seed, split as u64, i as u64),
                ..config.clone()
            };
            let id = format!("{name}_{i:02}");
            let m = generate_match(&cfg, &id)?;
            let path = dir.join(format!("{id}.jsonl"));
            m.save(&path)?;
            match split {
                0 => paths.train.push(path),
                1 => paths.val.push(path),
                _ => paths.test.push(path),
            }
        }
    }
    Ok(paths)
}
