use graphspot::data::{EntityKind, EntityObservation, TrackedFrame};
use graphspot::encoder::{init_params, BnScope, GcnEncoder, Mode, EMBED_DIM};
use graphspot::graph::{build_graph, FrameGraph, GraphConfig, FEATURE_DIM};
use graphspot::numeric::ParamStore;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LENGTH: f64 = 105.0;
const WIDTH: f64 = 68.0;

fn entity() -> impl Strategy<Value = EntityObservation> {
    (0u8..3, -57.5f64..57.5, -39.0f64..39.0).prop_map(|(k, x, y)| EntityObservation {
        kind: match k {
            0 => EntityKind::TeamA,
            1 => EntityKind::TeamB,
            _ => EntityKind::Ball,
        },
        x_m: x,
        y_m: y,
    })
}

/// Up to `max` entities with at most one ball.
fn frame(max: usize) -> impl Strategy<Value = TrackedFrame> {
    prop::collection::vec(entity(), 0..=max).prop_map(|mut entities| {
        let mut seen_ball = false;
        for e in &mut entities {
            if e.kind == EntityKind::Ball {
                if seen_ball {
                    e.kind = EntityKind::TeamA;
                }
                seen_ball = true;
            }
        }
        TrackedFrame {
            frame_index: 0,
            entities,
        }
    })
}

fn permuted(frame: &TrackedFrame, perm: &[usize]) -> TrackedFrame {
    TrackedFrame {
        frame_index: frame.frame_index,
        entities: perm.iter().map(|&i| frame.entities[i]).collect(),
    }
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

fn frame_and_perm(max: usize) -> impl Strategy<Value = (TrackedFrame, Vec<usize>)> {
    frame(max).prop_flat_map(|f| {
        let n = f.entities.len();
        (Just(f), permutation(n))
    })
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

fn params(seed: u64) -> ParamStore {
    let mut p = init_params(&mut ChaCha8Rng::seed_from_u64(seed));
    // non-trivial running statistics so eval mode is not an identity
    for bn in ["bn1", "bn2"] {
        for (i, v) in p
            .get_mut(&format!("{bn}.running_mean"))
            .unwrap()
            .values_mut()
            .iter_mut()
            .enumerate()
        {
            *v = 0.05 * ((i % 7) as f64 - 3.0);
        }
        for (i, v) in p
            .get_mut(&format!("{bn}.running_var"))
            .unwrap()
            .values_mut()
            .iter_mut()
            .enumerate()
        {
            *v = 0.5 + 0.1 * (i % 5) as f64;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_follow_the_distance_rule(f in frame(23)) {
        let g = build_graph(&f, &GraphConfig::new(LENGTH, WIDTH));
        let n = f.entities.len();
        let mut expected = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let (a, b) = (f.entities[u], f.entities[v]);
                if ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2)).sqrt() < 25.0 {
                    expected.push((u, v));
                }
            }
        }
        let mut got = g.edges.clone();
        got.sort_unstable();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn features_are_bounded_and_one_hot(f in frame(30)) {
        let g = build_graph(&f, &GraphConfig::new(LENGTH, WIDTH));
        prop_assert_eq!(g.features.len(), g.n_nodes * FEATURE_DIM);
        for row in g.features.chunks(FEATURE_DIM) {
            prop_assert!(row[0].abs() <= 0.5 && row[1].abs() <= 0.5);
            prop_assert_eq!(row[2..].iter().sum::<f64>(), 1.0);
            prop_assert!(row[2..].iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_spectrum_in_unit_interval(f in frame(23)) {
        let g = build_graph(&f, &GraphConfig::new(LENGTH, WIDTH));
        let n = g.n_nodes;
        let a = &g.norm_adjacency;
        for u in 0..n {
            for v in 0..n {
                prop_assert_eq!(a[u * n + v], a[v * n + u]);
            }
        }
        for ev in symmetric_eigenvalues(a, n) {
            prop_assert!(ev.abs() <= 1.0 + 1e-9, "{}", ev);
        }
    }

    #[test]
    fn graphs_are_permutation_equivariant((f, perm) in frame_and_perm(23)) {
        let cfg = GraphConfig::new(LENGTH, WIDTH);
        let g = build_graph(&f, &cfg);
        let h = build_graph(&permuted(&f, &perm), &cfg);
        let n = g.n_nodes;
        for (i, &pi) in perm.iter().enumerate() {
            prop_assert_eq!(
                &h.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM],
                &g.features[pi * FEATURE_DIM..(pi + 1) * FEATURE_DIM]
            );
            for (j, &pj) in perm.iter().enumerate() {
                prop_assert_eq!(h.norm_adjacency[i * n + j], g.norm_adjacency[pi * n + pj]);
            }
        }
    }

    #[test]
    fn embeddings_ignore_node_order(
        (f, perm) in frame_and_perm(23),
        seed in 0u64..4,
        per_graph in any::<bool>(),
        train in any::<bool>(),
    ) {
        let cfg = GraphConfig::new(LENGTH, WIDTH);
        let p = params(seed);
        let enc = GcnEncoder { bn_scope: if per_graph { BnScope::PerGraph } else { BnScope::PerBatch } };
        let mode = if train { Mode::Train } else { Mode::Eval };
        let a = enc.encode_frame(&p, &build_graph(&f, &cfg), mode).unwrap();
        let b = enc.encode_frame(&p, &build_graph(&permuted(&f, &perm), &cfg), mode).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-6, "{} vs {}", x, y);
        }
    }

    #[test]
    fn embeddings_are_finite_for_any_frame_size(f in frame(30), train in any::<bool>()) {
        let g: FrameGraph = build_graph(&f, &GraphConfig::new(LENGTH, WIDTH));
        let mode = if train { Mode::Train } else { Mode::Eval };
        let e = GcnEncoder::default().encode_frame(&params(0), &g, mode).unwrap();
        prop_assert_eq!(e.values.len(), EMBED_DIM);
        prop_assert!(e.values.iter().all(|v| v.is_finite()));
        prop_assert_eq!(e.empty_graph, g.n_nodes == 0);
        if g.n_nodes == 0 {
            prop_assert!(e.values.iter().all(|&v| v == 0.0));
        }
    }
}
