//! The evaluator against a direct re-implementation of the metric
//! definition: for every threshold, filter, match greedily, count, then
//! interpolate and average.

use graphspot::data::{EventAnnotation, EventClass, TrackedFrame, TrackedMatch};
use graphspot::evaluator::{class_ap, default_deltas, evaluate, EvalOptions, MatchEval};
use graphspot::spotter::SpottingPrediction;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Instance = Vec<(Vec<(f64, f64)>, Vec<f64>)>;

/// TP count among `preds` (any order) for one match.
fn oracle_true_positives(preds: &[(f64, f64)], gts: &[f64], delta: f64) -> usize {
    let mut order: Vec<(f64, f64)> = preds.to_vec();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.partial_cmp(&b.0).unwrap())
    });
    let mut free: Vec<f64> = gts.to_vec();
    let mut tp = 0;
    for (t, _) in order {
        let candidate = free
            .iter()
            .enumerate()
            .filter(|(_, g)| (t - **g).abs() <= delta / 2.0)
            .min_by(|(_, a), (_, b)| {
                (t - **a)
                    .abs()
                    .partial_cmp(&(t - **b).abs())
                    .unwrap()
                    .then(a.partial_cmp(b).unwrap())
            })
            .map(|(j, _)| j);
        if let Some(j) = candidate {
            free.remove(j);
            tp += 1;
        }
    }
    tp
}

fn oracle_ap(instance: &Instance, delta: f64) -> f64 {
    let n_gt: usize = instance.iter().map(|(_, g)| g.len()).sum();
    // (precision, recall) at every threshold where something passes
    let mut points = Vec::new();
    for i in 1..=200 {
        let thr = i as f64 / 200.0;
        let mut tp = 0;
        let mut passing = 0;
        for (preds, gts) in instance {
            let kept: Vec<(f64, f64)> = preds.iter().copied().filter(|p| p.1 >= thr).collect();
            passing += kept.len();
            tp += oracle_true_positives(&kept, gts, delta);
        }
        if passing > 0 {
            let recall = if n_gt == 0 {
                0.0
            } else {
                tp as f64 / n_gt as f64
            };
            points.push((tp as f64 / passing as f64, recall));
        }
    }
    let mut sum = 0.0;
    for k in 0..=10 {
        let r = k as f64 / 10.0;
        sum += points
            .iter()
            .filter(|(_, rec)| *rec >= r - 1e-12)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
    }
    sum / 11.0
}

fn oracle_average(aps: &[f64], deltas: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..deltas.len() {
        area += (deltas[i] - deltas[i - 1]) * (aps[i] + aps[i - 1]) / 2.0;
    }
    area / (deltas[deltas.len() - 1] - deltas[0])
}

/// Times on a half-second grid and confidences partly on the threshold
/// grid, so distance ties, boundary hits and threshold hits all occur.
fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_matches = rng.random_range(1..=3);
    let mut total_preds = rng.random_range(0..=20);
    let mut total_gts = rng.random_range(0..=10);
    (0..n_matches)
        .map(|m| {
            let last = m + 1 == n_matches;
            let np = if last {
                total_preds
            } else {
                rng.random_range(0..=total_preds)
            };
            let ng = if last {
                total_gts
            } else {
                rng.random_range(0..=total_gts)
            };
            total_preds -= np;
            total_gts -= ng;
            let preds = (0..np)
                .map(|_| {
                    let t = rng.random_range(0..240) as f64 * 0.5;
                    let c = if rng.random_bool(0.5) {
                        rng.random_range(1..=200) as f64 / 200.0
                    } else {
                        rng.random_range(0.0..1.0)
                    };
                    (t, c)
                })
                .collect();
            let gts = (0..ng)
                .map(|_| rng.random_range(0..240) as f64 * 0.5)
                .collect();
            (preds, gts)
        })
        .collect()
}

#[test]
fn class_ap_matches_the_definition_and_grows_with_tolerance() {
    let deltas = default_deltas();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1500 {
        let instance = random_instance(&mut rng);
        let refs: Vec<(&[(f64, f64)], &[f64])> =
            instance.iter().map(|(p, g)| (&p[..], &g[..])).collect();
        let (aps, mean) = class_ap(&refs, &deltas).unwrap();
        let expected: Vec<f64> = deltas.iter().map(|&d| oracle_ap(&instance, d)).collect();
        for (i, (a, e)) in aps.iter().zip(&expected).enumerate() {
            assert!(
                (a - e).abs() < 1e-9,
                "case {case} δ={}: {a} vs {e}\n{instance:?}",
                deltas[i]
            );
        }
        assert!(
            (mean - oracle_average(&expected, &deltas)).abs() < 1e-9,
            "case {case}"
        );
        for w in aps.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12,
                "case {case}: AP fell from {} to {}\n{instance:?}",
                w[0],
                w[1]
            );
        }
    }
}

fn as_match(gts: &[(EventClass, u64)]) -> TrackedMatch {
    TrackedMatch {
        match_id: "m".into(),
        pitch_length_m: 105.0,
        pitch_width_m: 68.0,
        fps: 2.0,
        frames: (0..400)
            .map(|i| TrackedFrame {
                frame_index: i,
                entities: vec![],
            })
            .collect(),
        events: gts
            .iter()
            .map(|&(class, frame_index)| EventAnnotation { class, frame_index })
            .collect(),
    }
}

fn class_strategy() -> impl Strategy<Value = EventClass> {
    (0usize..12).prop_map(|i| EventClass::from_index(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn report_ignores_prediction_and_event_order(
        gts in prop::collection::vec((class_strategy(), 0u64..400), 1..15),
        preds in prop::collection::vec((class_strategy(), 0.0f64..200.0, 0.0f64..1.0), 0..40),
        seed in any::<u64>(),
    ) {
        let preds: Vec<SpottingPrediction> = preds
            .into_iter()
            .map(|(class, time_s, confidence)| SpottingPrediction { class, time_s, confidence })
            .collect();
        let m = as_match(&gts);
        let report = evaluate(&[MatchEval { predictions: &preds, ground_truth: &m }], &default_deltas(), EvalOptions::default()).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p2 = preds.clone();
        let mut g2 = gts.clone();
        for i in (1..p2.len()).rev() {
            p2.swap(i, rng.random_range(0..=i));
        }
        for i in (1..g2.len()).rev() {
            g2.swap(i, rng.random_range(0..=i));
        }
        let m2 = as_match(&g2);
        let again = evaluate(&[MatchEval { predictions: &p2, ground_truth: &m2 }], &default_deltas(), EvalOptions::default()).unwrap();
        prop_assert_eq!(report.to_json(), again.to_json());
    }

    #[test]
    fn echoing_the_ground_truth_scores_one(
        gts in prop::collection::vec((class_strategy(), 0u64..400), 1..15),
    ) {
        let m = as_match(&gts);
        let preds: Vec<SpottingPrediction> = gts
            .iter()
            .map(|&(class, f)| SpottingPrediction { class, time_s: m.time_of(f), confidence: 1.0 })
            .collect();
        let report = evaluate(&[MatchEval { predictions: &preds, ground_truth: &m }], &default_deltas(), EvalOptions::default()).unwrap();
        prop_assert!((report.map - 1.0).abs() < 1e-12);
        for c in &report.classes {
            prop_assert_eq!(c.excluded, c.n_gt == 0);
            if c.n_gt > 0 {
                prop_assert!((c.average_ap - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn no_predictions_scores_zero() {
    let m = as_match(&[(EventClass::Goal, 10), (EventClass::Foul, 200)]);
    let report = evaluate(
        &[MatchEval {
            predictions: &[],
            ground_truth: &m,
        }],
        &default_deltas(),
        EvalOptions::default(),
    )
    .unwrap();
    assert_eq!(report.map, 0.0);
    assert!(report.classes.iter().all(|c| c.average_ap == 0.0));
    let with_zero = evaluate(
        &[MatchEval {
            predictions: &[],
            ground_truth: &m,
        }],
        &default_deltas(),
        EvalOptions {
            include_zero_gt_classes: true,
        },
    )
    .unwrap();
    assert_eq!(with_zero.classes.iter().filter(|c| c.excluded).count(), 0);
    assert_eq!(report.classes.iter().filter(|c| c.excluded).count(), 10);
}
