use graphspot::data::{
    frames_for, make_inference_chunks, make_training_chunks, EntityKind, EntityObservation,
    EventAnnotation, EventClass, TrackedFrame, TrackedMatch, NUM_CLASSES,
};
use proptest::prelude::*;

fn entity() -> impl Strategy<Value = EntityObservation> {
    (any::<bool>(), -55.0f64..55.0, -38.0f64..38.0).prop_map(|(a, x, y)| EntityObservation {
        kind: if a {
            EntityKind::TeamA
        } else {
            EntityKind::TeamB
        },
        x_m: x,
        y_m: y,
    })
}

/// A valid match: strictly increasing (possibly gapped) frame indices,
/// at most one ball per frame, events inside the frame range.
fn tracked_match(max_frames: usize, contiguous: bool) -> impl Strategy<Value = TrackedMatch> {
    let gap = if contiguous { 1u64..2 } else { 1u64..4 };
    (
        prop::collection::vec(
            (
                gap,
                prop::collection::vec(entity(), 0..5),
                prop::option::of((-50.0f64..50.0, -30.0f64..30.0)),
            ),
            1..max_frames,
        ),
        prop::collection::vec((0usize..NUM_CLASSES, 0.0f64..1.0), 0..8),
        prop::sample::select(vec![2.0, 5.0, 15.0, 25.0]),
    )
        .prop_map(|(frames, events, fps)| {
            let mut index = 0;
            let frames: Vec<TrackedFrame> = frames
                .into_iter()
                .enumerate()
                .map(|(i, (step, mut entities, ball))| {
                    if i > 0 {
                        index += step;
                    }
                    if let Some((x, y)) = ball {
                        entities.push(EntityObservation {
                            kind: EntityKind::Ball,
                            x_m: x,
                            y_m: y,
                        });
                    }
                    TrackedFrame {
                        frame_index: index,
                        entities,
                    }
                })
                .collect();
            let last = frames.last().unwrap().frame_index;
            let events = events
                .into_iter()
                .map(|(c, at)| EventAnnotation {
                    class: EventClass::from_index(c).unwrap(),
                    frame_index: (at * last as f64).round() as u64,
                })
                .collect();
            TrackedMatch {
                match_id: "prop".into(),
                pitch_length_m: 105.0,
                pitch_width_m: 68.0,
                fps,
                frames,
                events,
            }
        })
}

fn labels_by_scan(m: &TrackedMatch, start: u64, end: u64) -> [bool; NUM_CLASSES] {
    let mut l = [false; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        l[c] = m
            .events
            .iter()
            .any(|e| e.class.index() == c && e.frame_index >= start && e.frame_index < end);
    }
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn files_roundtrip_byte_for_byte(m in tracked_match(40, false)) {
        let bytes = m.to_bytes();
        let back = TrackedMatch::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn training_chunk_count_and_labels(
        m in tracked_match(120, true),
        window_frames in 1usize..30,
        stride_frames in 1usize..30,
    ) {
        let window_s = window_frames as f64 / m.fps;
        let stride_s = stride_frames as f64 / m.fps;
        prop_assert_eq!(frames_for(window_s, m.fps), window_frames);
        let chunks = make_training_chunks(&m, window_s, stride_s).unwrap();
        let n = m.frames.len();
        let expected = if n >= window_frames { (n - window_frames) / stride_frames + 1 } else { 0 };
        prop_assert_eq!(chunks.len(), expected);
        for (i, c) in chunks.iter().enumerate() {
            let first = i * stride_frames;
            prop_assert_eq!(&c.frame_refs, &(first..first + window_frames).collect::<Vec<_>>());
            prop_assert_eq!(c.label, labels_by_scan(&m, c.start_frame, c.end_frame));
        }
    }

    #[test]
    fn inference_chunks_one_per_frame_with_clamped_windows(
        m in tracked_match(80, true),
        window_frames in 1usize..25,
    ) {
        let window_s = window_frames as f64 / m.fps;
        let chunks = make_inference_chunks(&m, window_s).unwrap();
        let n = m.frames.len();
        prop_assert_eq!(chunks.len(), n);
        for (pos, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.center_ref, pos);
            prop_assert_eq!(c.frame_refs.len(), window_frames);
            for (j, &r) in c.frame_refs.iter().enumerate() {
                let want = pos as i64 - (window_frames / 2) as i64 + j as i64;
                prop_assert_eq!(r as i64, want.clamp(0, n as i64 - 1));
            }
            prop_assert_eq!(c.label, labels_by_scan(&m, c.start_frame, c.end_frame));
        }
    }

    #[test]
    fn resampling_is_idempotent_and_events_go_to_the_nearest_kept_frame(
        m in tracked_match(150, true),
        divisor in 1usize..9,
    ) {
        let target = m.fps / divisor as f64;
        let once = m.resample(target).unwrap();
        prop_assert_eq!(once.resample(target).unwrap(), once.clone());
        once.validate().unwrap();
        let ratio = m.fps / target;
        let kept: Vec<u64> = once.frames.iter().map(|f| (f.frame_index as f64 * ratio).round() as u64).collect();
        for (before, after) in m.events.iter().zip(&once.events) {
            prop_assert_eq!(before.class, after.class);
            let best = kept.iter().map(|k| k.abs_diff(before.frame_index)).min().unwrap();
            prop_assert_eq!(kept[after.frame_index as usize].abs_diff(before.frame_index), best);
        }
    }
}
