use graphspot::data::{
    make_training_chunks, EventAnnotation, EventClass, TrackedMatch, NUM_CLASSES,
};
use graphspot::spotter::{score_match, spot};
use graphspot::synthetic::{generate_match, GeneratorConfig};
use graphspot::trainer::{fit, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(seed: u64) -> TrackedMatch {
    generate_match(
        &GeneratorConfig {
            seed,
            ..GeneratorConfig::default()
        },
        &format!("m{seed}"),
    )
    .unwrap()
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        window_s: 5.0,
        clusters: 16,
        max_epochs: Some(epochs),
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_data_is_learned_within_twenty_epochs() {
    let (model, history) = fit(&[synthetic(1)], &[synthetic(2)], &quick_config(20)).unwrap();
    let chance = 12.0 * 2f64.ln();
    let first = &history.epochs[0];
    let last = history.epochs.last().unwrap();
    assert!(history.epochs.len() <= 20);
    assert!(last.train_loss < chance, "{}", last.train_loss);
    assert!(last.train_loss < first.train_loss);
    assert!(history.best_val_loss < first.val_loss);
    assert!(model.params.iter().all(|(_, t)| t.is_finite()));
}

/// Binary entropy summed over classes: the best loss any input-blind
/// predictor can reach on these labels.
fn label_entropy(m: &TrackedMatch, window_s: f64) -> f64 {
    let chunks = make_training_chunks(&m.resample(2.0).unwrap(), window_s, 0.5).unwrap();
    let n = chunks.len() as f64;
    (0..NUM_CLASSES)
        .map(|c| {
            let p = chunks.iter().filter(|ch| ch.label[c]).count() as f64 / n;
            if p == 0.0 || p == 1.0 {
                0.0
            } else {
                -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
            }
        })
        .sum()
}

/// A match without planted signatures whose events sit at random frames.
fn unsignalled(seed: u64) -> TrackedMatch {
    let mut m = generate_match(
        &GeneratorConfig {
            seed,
            events_per_class: [0; NUM_CLASSES],
            ..GeneratorConfig::default()
        },
        "noise",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = m.frames.len() as u64 - 1;
    for _ in 0..40 {
        m.events.push(EventAnnotation {
            class: EventClass::from_index(rng.random_range(0..NUM_CLASSES)).unwrap(),
            frame_index: rng.random_range(0..=last),
        });
    }
    m.events.sort_by_key(|e| e.frame_index);
    m
}

#[test]
fn labels_without_signal_stay_at_the_entropy_floor() {
    let val = unsignalled(12);
    let config = quick_config(10);
    let (_, history) = fit(&[unsignalled(11)], std::slice::from_ref(&val), &config).unwrap();
    let floor = label_entropy(&val, config.window_s);
    assert!(floor > 0.5);
    for e in &history.epochs {
        assert!(
            e.val_loss > 0.98 * floor,
            "epoch {}: {} vs floor {floor}",
            e.epoch,
            e.val_loss
        );
    }
}

#[test]
fn trained_model_spots_planted_events() {
    let config = TrainConfig {
        window_s: 5.0,
        max_epochs: Some(30),
        seed: 3,
        ..TrainConfig::default()
    };
    let train: Vec<TrackedMatch> = (30..35).map(synthetic).collect();
    let (model, _) = fit(&train, &[synthetic(23), synthetic(25)], &config).unwrap();
    let test = synthetic(24);
    let curve = score_match(&model, &test).unwrap();
    assert_eq!(curve.len(), test.resample(2.0).unwrap().frames.len());
    assert!(curve.probs.iter().flatten().all(|&p| p > 0.0 && p < 1.0));
    let preds = spot(&curve, 0.2, 30.0).unwrap();
    let mut found = 0;
    for ev in &test.events {
        let t = test.time_of(ev.frame_index);
        if preds
            .iter()
            .any(|p| p.class == ev.class && (p.time_s - t).abs() <= 15.0)
        {
            found += 1;
        }
    }
    assert!(
        found >= test.events.len() * 3 / 4,
        "{found} of {}",
        test.events.len()
    );
    let goal = test
        .events
        .iter()
        .find(|e| e.class == EventClass::Goal)
        .unwrap();
    let t = test.time_of(goal.frame_index);
    let peak = preds
        .iter()
        .filter(|p| p.class == EventClass::Goal)
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
        .unwrap();
    assert!(
        (peak.time_s - t).abs() <= 15.0,
        "goal at {t}, peak at {}",
        peak.time_s
    );
}
