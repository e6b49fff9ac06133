use super::{NumericsError, Result, Scalar, Tensor};

/// Flat input offsets of the winning cell of every pooling window, plus the
/// input shape needed to rebuild the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolIndex {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties go to the first cell in row-major
/// scan order of the window.
pub fn maxpool2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndex)> {
    let (n, h, w, c) = input.dims4("maxpool2_forward")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NumericsError::ShapeMismatch {
            op: "maxpool2_forward",
            detail: format!("extents must be even, got {h}x{w}"),
        });
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * ho * wo * c);
    let mut argmax = Vec::with_capacity(n * ho * wo * c);
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = ((b * h + 2 * oy) * w + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::new(&[n, ho, wo, c], out)?,
        PoolIndex { input_shape: input.shape().to_vec(), argmax },
    ))
}

/// Routes each upstream gradient to the recorded argmax cell.
pub fn maxpool2_backward<T: Scalar>(upstream: &Tensor<T>, index: &PoolIndex) -> Result<Tensor<T>> {
    if upstream.len() != index.argmax.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "maxpool2_backward",
            detail: format!(
                "upstream has {} values, index has {}",
                upstream.len(),
                index.argmax.len()
            ),
        });
    }
    let mut dx = Tensor::zeros(&index.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in index.argmax.iter().zip(upstream.data()) {
        d[i] += g;
    }
    Ok(dx)
}
