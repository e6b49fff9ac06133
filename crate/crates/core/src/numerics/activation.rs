use super::{NumericsError, Result, Scalar, Tensor};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given the forward input; the derivative at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(upstream: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    same_len("relu_backward", upstream, input)?;
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Gradient of the sigmoid given its forward *output*.
pub fn sigmoid_backward<T: Scalar>(upstream: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    same_len("sigmoid_backward", upstream, output)?;
    let mut out = upstream.clone();
    for (g, &y) in out.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (T::one() - y);
    }
    Ok(out)
}

fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(NumericsError::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax_forward<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = axis_layout(x.shape(), axis)?;
    let mut y = x.clone();
    let d = y.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let mut max = d[at(0)];
            for k in 1..len {
                max = max.max(d[at(k)]);
            }
            let mut sum = T::zero();
            for k in 0..len {
                let e = (d[at(k)] - max).exp();
                d[at(k)] = e;
                sum += e;
            }
            for k in 0..len {
                d[at(k)] /= sum;
            }
        }
    }
    Ok(y)
}

/// Gradient of softmax along `axis` given its forward *output*:
/// `dx = y * (dy - sum(dy * y))`.
pub fn softmax_backward<T: Scalar>(upstream: &Tensor<T>, output: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    same_len("softmax_backward", upstream, output)?;
    let (outer, len, inner) = axis_layout(output.shape(), axis)?;
    let y = output.data();
    let mut dx = upstream.clone();
    let d = dx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| d[at(k)] * y[at(k)]).sum();
            for k in 0..len {
                d[at(k)] = y[at(k)] * (d[at(k)] - dot);
            }
        }
    }
    Ok(dx)
}

fn same_len<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}
