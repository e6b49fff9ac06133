use super::{gemm, NumericsError, Result, Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let (n, d_in) = input.dims2(op)?;
    let (w_in, d_out) = weight.dims2(op)?;
    if w_in != d_in {
        return Err(NumericsError::ShapeMismatch {
            op,
            detail: format!("input width {d_in} but weight is {w_in}x{d_out}"),
        });
    }
    Ok((n, d_in, d_out))
}

/// Affine map `y = x W + b` over a batch `[n, d_in]`.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in, d_out) = check("dense_forward", input, weight)?;
    if bias.shape() != [d_out] {
        return Err(NumericsError::ShapeMismatch {
            op: "dense_forward",
            detail: format!("bias shape {:?}, expected [{d_out}]", bias.shape()),
        });
    }
    let mut out = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, d_in, d_out, input.data(), false, weight.data(), false, &mut out, true);
    Tensor::new(&[n, d_out], out)
}

pub fn dense_backward<T: Scalar>(
    upstream: &Tensor<T>,
    cached_input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, d_in, d_out) = check("dense_backward", cached_input, weight)?;
    if upstream.shape() != [n, d_out] {
        return Err(NumericsError::ShapeMismatch {
            op: "dense_backward",
            detail: format!("upstream {:?}, expected [{n}, {d_out}]", upstream.shape()),
        });
    }
    let dy = upstream.data();
    let mut dx = vec![T::zero(); n * d_in];
    gemm(n, d_out, d_in, dy, false, weight.data(), true, &mut dx, false);
    let mut dw = vec![T::zero(); d_in * d_out];
    gemm(d_in, n, d_out, cached_input.data(), true, dy, false, &mut dw, false);
    let mut db = vec![T::zero(); d_out];
    for row in dy.chunks_exact(d_out) {
        for (b, &v) in db.iter_mut().zip(row) {
            *b += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(&[n, d_in], dx)?,
        weight: Tensor::new(&[d_in, d_out], dw)?,
        bias: Tensor::new(&[d_out], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GradCheck;
    use crate::rng::SplitMix64;

    #[test]
    fn identity_and_bias_only() {
        let x = Tensor::new(&[1, 3], vec![1.0, -2.0, 3.5]).unwrap();
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(dense_forward(&x, &eye, &Tensor::zeros(&[3])).unwrap().data(), x.data());
        let b = Tensor::new(&[2], vec![0.25, -4.0]).unwrap();
        assert_eq!(dense_forward(&x, &Tensor::zeros(&[3, 2]), &b).unwrap().data(), b.data());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let x = Tensor::<f64>::zeros(&[1, 3]);
        assert!(dense_forward(&x, &Tensor::zeros(&[4, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(dense_forward(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn linear_layer_gradcheck_is_tight() {
        let mut rng = SplitMix64::new(12, 0);
        let x = Tensor::from_fn(&[3, 5], |_| rng.uniform(-1.0, 1.0));
        let w = Tensor::from_fn(&[5, 4], |_| rng.uniform(-1.0, 1.0));
        let b = Tensor::from_fn(&[4], |_| rng.uniform(-1.0, 1.0));
        let r = Tensor::from_fn(&[3, 4], |_| rng.uniform(-1.0, 1.0));
        let g = dense_backward(&r, &x, &w).unwrap();
        let mut check = GradCheck::new(1e-7);
        check.check_block("input", x.data(), g.input.data(), |i, v| {
            let mut xx = x.clone();
            xx.data_mut()[i] = v;
            dense_forward(&xx, &w, &b).unwrap().dot(&r)
        });
        check.check_block("weight", w.data(), g.weight.data(), |i, v| {
            let mut ww = w.clone();
            ww.data_mut()[i] = v;
            dense_forward(&x, &ww, &b).unwrap().dot(&r)
        });
        check.check_block("bias", b.data(), g.bias.data(), |i, v| {
            let mut bb = b.clone();
            bb.data_mut()[i] = v;
            dense_forward(&x, &w, &bb).unwrap().dot(&r)
        });
        let report = check.finish();
        assert!(report.passed, "{report}");
        assert!(report.worst_rel_error < 1e-7);
    }
}
