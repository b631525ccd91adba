use super::{NumericError, Tape, Tensor, Var};

pub const GRAD_CHECK_EPS: f64 = 1e-4;

/// Compares the tape gradient of a scalar function against central finite
/// differences and returns the largest elementwise relative error
/// `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
///
/// `f` must be differentiable at `x`: inputs sitting on a relu kink or a
/// max tie give meaningless results, so perturb them away first.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    let eval = |point: &Tensor| -> Result<f64, NumericError> {
        let mut tape = Tape::new();
        let v = tape.constant(point.clone());
        let out = f(&mut tape, v)?;
        tape.value(out)
            .item()
            .ok_or_else(|| NumericError::NotScalar {
                shape: tape.shape(out).to_vec(),
            })
    };

    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(v)
        .map(|g| g.values().to_vec())
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.values_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::vector(vec![0.3, -0.7, 1.1]);
        let err = grad_check(
            |t, v| {
                let w = t.constant(Tensor::vector(vec![2.0, -1.0, 0.5]));
                let p = t.mul(v, w)?;
                Ok(t.sum_all(p))
            },
            &x,
            GRAD_CHECK_EPS,
        )
        .unwrap();
        assert!(err < 1e-7, "err {err}");
    }

    #[test]
    fn sigmoid_of_affine() {
        let x = Tensor::new(vec![3, 1], vec![0.2, -0.4, 0.9]).unwrap();
        let err = grad_check(
            |t, v| {
                let w = t.constant(
                    Tensor::new(vec![2, 3], vec![0.5, -0.3, 0.8, 0.1, 0.7, -0.6]).unwrap(),
                );
                let y = t.matmul(w, v)?;
                let s = t.sigmoid(y);
                Ok(t.sum_all(s))
            },
            &x,
            GRAD_CHECK_EPS,
        )
        .unwrap();
        assert!(err < 1e-4, "err {err}");
    }
}
