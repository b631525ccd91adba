use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use graphspot::numeric::{
    grad_check, Adam, AdamConfig, BlockDiagonal, NumericError, ParamStore, Segments, Tape, Tensor,
    Var, GRAD_CHECK_EPS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Values in [-1, 1] whose magnitudes stay at least `gap` away from zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    uniform(rng, shape, -1.0, 1.0).map(|v| {
        if v.abs() < gap {
            v.signum() * gap + v
        } else {
            v
        }
    })
}

/// Values with pairwise gaps of at least 0.01, so max has a unique winner
/// under a 1e-4 perturbation.
fn well_spaced(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut slots: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64)
        .collect();
    for i in (1..n).rev() {
        slots.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), slots).unwrap()
}

/// `sum(out ⊙ r)` with a fixed random `r`, so every output element carries a
/// distinct weight.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var, NumericError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, tape.shape(out), -1.0, 1.0);
    let r = tape.constant(r);
    let p = tape.mul(out, r)?;
    Ok(tape.sum_all(p))
}

fn check<F>(f: F, x: &Tensor) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    grad_check(f, x, GRAD_CHECK_EPS).unwrap()
}

/// One gradient check of every primitive at shapes drawn from `rng`.
/// Returns the number of checks run.
fn check_all_ops(rng: &mut ChaCha8Rng) -> usize {
    let m = rng.random_range(1..5);
    let k = rng.random_range(1..5);
    let n = rng.random_range(1..5);
    let seed: u64 = rng.random();
    let mut count = 0;
    let mut expect = |name: &str, err: f64| {
        assert!(err < TOL, "{name} at ({m},{k},{n}): {err}");
        count += 1;
    };

    let a = uniform(rng, &[m, k], -1.0, 1.0);
    let b = uniform(rng, &[k, n], -1.0, 1.0);
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let (av, bv) = (
            if ta { transpose(&a) } else { a.clone() },
            if tb { transpose(&b) } else { b.clone() },
        );
        let bc = bv.clone();
        expect(
            "matmul lhs",
            check(
                |t, x| {
                    let c = t.constant(bc.clone());
                    let o = t.matmul_t(x, c, ta, tb)?;
                    weighted_sum(t, o, seed)
                },
                &av,
            ),
        );
        let ac = av.clone();
        expect(
            "matmul rhs",
            check(
                |t, x| {
                    let c = t.constant(ac.clone());
                    let o = t.matmul_t(c, x, ta, tb)?;
                    weighted_sum(t, o, seed)
                },
                &bv,
            ),
        );
    }

    let batch = rng.random_range(1..4);
    let a3 = uniform(rng, &[batch, k, m], -1.0, 1.0);
    let b3 = uniform(rng, &[batch, k, n], -1.0, 1.0);
    let b3c = b3.clone();
    expect(
        "batch_matmul lhs",
        check(
            |t, x| {
                let c = t.constant(b3c.clone());
                let o = t.batch_matmul_t(x, c, true, false)?;
                weighted_sum(t, o, seed)
            },
            &a3,
        ),
    );
    let a3c = a3.clone();
    expect(
        "batch_matmul rhs",
        check(
            |t, x| {
                let c = t.constant(a3c.clone());
                let o = t.batch_matmul_t(c, x, true, false)?;
                weighted_sum(t, o, seed)
            },
            &b3,
        ),
    );

    // broadcasting binary ops, both operands
    let x = uniform(rng, &[m, n], -1.0, 1.0);
    let row = uniform(rng, &[n], 0.5, 1.5);
    type Bin = fn(&mut Tape, Var, Var) -> Result<Var, NumericError>;
    let ops: [(&str, Bin); 3] = [("add", Tape::add), ("sub", Tape::sub), ("mul", Tape::mul)];
    for (name, op) in ops {
        let rc = row.clone();
        expect(
            name,
            check(
                |t, v| {
                    let c = t.constant(rc.clone());
                    let o = op(t, v, c)?;
                    weighted_sum(t, o, seed)
                },
                &x,
            ),
        );
        let xc = x.clone();
        expect(
            name,
            check(
                |t, v| {
                    let c = t.constant(xc.clone());
                    let o = op(t, c, v)?;
                    weighted_sum(t, o, seed)
                },
                &row,
            ),
        );
    }

    let x = off_zero(rng, &[m, n], 0.01);
    expect(
        "scale",
        check(
            |t, v| {
                let o = t.scale(v, -1.7);
                weighted_sum(t, o, seed)
            },
            &x,
        ),
    );
    expect(
        "relu",
        check(
            |t, v| {
                let o = t.relu(v);
                weighted_sum(t, o, seed)
            },
            &x,
        ),
    );
    expect(
        "sigmoid",
        check(
            |t, v| {
                let o = t.sigmoid(v);
                weighted_sum(t, o, seed)
            },
            &x,
        ),
    );
    expect(
        "exp",
        check(
            |t, v| {
                let o = t.exp(v);
                weighted_sum(t, o, seed)
            },
            &x,
        ),
    );
    let pos = uniform(rng, &[m, n], 0.2, 2.0);
    expect(
        "log",
        check(
            |t, v| {
                let o = t.log(v);
                weighted_sum(t, o, seed)
            },
            &pos,
        ),
    );
    // clamp bounds at ±0.5 with inputs kept 0.01 away from them
    let cl = uniform(rng, &[m, n], -1.0, 1.0).map(|v| {
        if (v.abs() - 0.5).abs() < 0.01 {
            v * 1.1
        } else {
            v
        }
    });
    expect(
        "clamp",
        check(
            |t, v| {
                let o = t.clamp(v, -0.5, 0.5);
                weighted_sum(t, o, seed)
            },
            &cl,
        ),
    );

    let x3 = uniform(rng, &[batch, m, n], -1.0, 1.0);
    for axis in 0..3 {
        expect(
            "softmax",
            check(
                |t, v| {
                    let o = t.softmax(v, axis)?;
                    weighted_sum(t, o, seed)
                },
                &x3,
            ),
        );
        expect(
            "sum",
            check(
                |t, v| {
                    let o = t.sum(v, axis)?;
                    weighted_sum(t, o, seed)
                },
                &x3,
            ),
        );
        expect(
            "mean",
            check(
                |t, v| {
                    let o = t.mean(v, axis)?;
                    weighted_sum(t, o, seed)
                },
                &x3,
            ),
        );
        let spaced = well_spaced(rng, &[batch, m, n]);
        expect(
            "max",
            check(
                |t, v| {
                    let o = t.max(v, axis)?;
                    weighted_sum(t, o, seed)
                },
                &spaced,
            ),
        );
        expect(
            "l2_normalize",
            check(
                |t, v| {
                    let o = t.l2_normalize(v, axis)?;
                    weighted_sum(t, o, seed)
                },
                &x3,
            ),
        );
    }
    expect(
        "mean_all",
        check(
            |t, v| {
                let o = t.mean_all(v);
                let s = t.sigmoid(o);
                Ok(t.sum_all(s))
            },
            &x3,
        ),
    );

    let other = uniform(rng, &[batch, m, 2], -1.0, 1.0);
    expect(
        "concat",
        check(
            |t, v| {
                let c = t.constant(other.clone());
                let o = t.concat(&[c, v, c], 2)?;
                weighted_sum(t, o, seed)
            },
            &x3,
        ),
    );
    let start = rng.random_range(0..n);
    let len = rng.random_range(1..=n - start);
    expect(
        "slice",
        check(
            |t, v| {
                let o = t.slice(v, 2, start, len)?;
                weighted_sum(t, o, seed)
            },
            &x3,
        ),
    );
    expect(
        "reshape",
        check(
            |t, v| {
                let o = t.reshape(v, &[batch * m, n])?;
                weighted_sum(t, o, seed)
            },
            &x3,
        ),
    );
    let index: Vec<usize> = (0..rng.random_range(1..8))
        .map(|_| rng.random_range(0..m))
        .collect();
    expect(
        "gather_rows",
        check(
            |t, v| {
                let o = t.gather_rows(v, &index)?;
                weighted_sum(t, o, seed)
            },
            &x,
        ),
    );

    // graph ops over a few random blocks
    let lengths: Vec<usize> = (0..rng.random_range(1..4))
        .map(|_| rng.random_range(1..5))
        .collect();
    let blocks: Vec<(usize, Vec<f64>)> = lengths
        .iter()
        .map(|&l| (l, uniform(rng, &[l, l], -1.0, 1.0).into_values()))
        .collect();
    let adj = Arc::new(BlockDiagonal::new(blocks).unwrap());
    let rows: usize = lengths.iter().sum();
    let h = uniform(rng, &[rows, n], -1.0, 1.0);
    expect(
        "propagate",
        check(
            |t, v| {
                let o = t.propagate(&adj, v)?;
                weighted_sum(t, o, seed)
            },
            &h,
        ),
    );
    let segs = Arc::new(Segments::from_lengths(lengths.iter().copied()));
    expect(
        "segment_mean",
        check(
            |t, v| {
                let o = t.segment_mean(v, &segs)?;
                weighted_sum(t, o, seed)
            },
            &h,
        ),
    );
    let gamma = uniform(rng, &[n], 0.5, 1.5);
    let beta = uniform(rng, &[n], -0.5, 0.5);
    let (gc, bc) = (gamma.clone(), beta.clone());
    expect(
        "segment_norm input",
        check(
            |t, v| {
                let g = t.constant(gc.clone());
                let b = t.constant(bc.clone());
                let (o, _, _) = t.segment_norm(v, g, b, &segs, 1e-5)?;
                weighted_sum(t, o, seed)
            },
            &h,
        ),
    );
    let hc = h.clone();
    expect(
        "segment_norm scale",
        check(
            |t, v| {
                let x = t.constant(hc.clone());
                let b = t.constant(beta.clone());
                let (o, _, _) = t.segment_norm(x, v, b, &segs, 1e-5)?;
                weighted_sum(t, o, seed)
            },
            &gamma,
        ),
    );
    count
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.at2(i, j);
        }
    }
    Tensor::new(vec![c, r], out).unwrap()
}

#[test]
fn every_primitive_passes_gradient_check_on_fifty_shapes() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = 0;
    for _ in 0..50 {
        checks += check_all_ops(&mut rng);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(checks >= 50 * 40, "{checks}");
    assert!(elapsed < 60.0, "{elapsed:.1} s");
}

#[test]
fn linear_functions_are_exact_to_roundoff() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(1..12);
        let x = uniform(&mut rng, &[n], -1.0, 1.0);
        let err = check(|t, v| weighted_sum(t, v, 9), &x);
        assert!(err < 1e-7, "{err}");
    }
}

#[test]
fn reused_tensor_gradients_accumulate() {
    // f = sum(x ⊙ x ⊙ x) uses x three times; df/dx = 3x²
    let x = Tensor::vector(vec![0.5, -1.5, 2.0]);
    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let sq = tape.mul(v, v).unwrap();
    let cube = tape.mul(sq, v).unwrap();
    let s = tape.sum_all(cube);
    tape.backward(s).unwrap();
    let g = tape.grad(v).unwrap().values().to_vec();
    for (gi, xi) in g.iter().zip(x.values()) {
        assert!((gi - 3.0 * xi * xi).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one(
        rows in 1usize..6,
        cols in 1usize..9,
        seed in any::<u64>(),
        spread in 0.1f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, &[rows, cols], -spread, spread);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let s = tape.softmax(v, 1).unwrap();
        for r in 0..rows {
            let total: f64 = tape.value(s).row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
        }
    }

    #[test]
    fn concat_then_slice_returns_the_parts_and_their_gradients(
        lens in prop::collection::vec(1usize..5, 1..5),
        rows in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<Tensor> = lens.iter().map(|&l| uniform(&mut rng, &[rows, l], -1.0, 1.0)).collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = parts.iter().map(|p| tape.param(p.clone())).collect();
        let joined = tape.concat(&vars, 1).unwrap();
        let mut offset = 0;
        let mut pieces = Vec::new();
        for (i, &l) in lens.iter().enumerate() {
            let s = tape.slice(joined, 1, offset, l).unwrap();
            prop_assert_eq!(tape.value(s), &parts[i]);
            let w = tape.constant(Tensor::full(&[rows, l], (i + 1) as f64));
            pieces.push(tape.mul(s, w).unwrap());
            offset += l;
        }
        let sums: Vec<Var> = pieces.iter().map(|&p| tape.sum_all(p)).collect();
        let mut total = sums[0];
        for &s in &sums[1..] {
            total = tape.add(total, s).unwrap();
        }
        tape.backward(total).unwrap();
        for (i, v) in vars.iter().enumerate() {
            prop_assert!(tape.grad(*v).unwrap().values().iter().all(|&g| g == (i + 1) as f64));
        }
    }

    #[test]
    fn first_adam_step_moves_each_parameter_by_lr_against_its_gradient_sign(
        values in prop::collection::vec(-5.0f64..5.0, 1..10),
        grads in prop::collection::vec(0.01f64..10.0, 1..10),
        signs in prop::collection::vec(any::<bool>(), 1..10),
        lr in 1e-4f64..1e-1,
    ) {
        let n = values.len().min(grads.len()).min(signs.len());
        let g: Vec<f64> = (0..n).map(|i| if signs[i] { grads[i] } else { -grads[i] }).collect();
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(values[..n].to_vec()));
        let mut gm = BTreeMap::new();
        gm.insert("p".to_string(), Tensor::vector(g.clone()));
        let mut adam = Adam::new(AdamConfig { lr, ..AdamConfig::default() });
        adam.step(&mut store, &gm, ["p"]).unwrap();
        prop_assert_eq!(adam.step_count(), 1);
        let after = store.get("p").unwrap().values();
        for i in 0..n {
            // m̂ = g, v̂ = g², so the step is lr·g / (|g| + 1e-8)
            let expected = values[i] - lr * g[i] / (g[i].abs() + 1e-8);
            prop_assert!((after[i] - expected).abs() < 1e-12);
        }
    }
}
