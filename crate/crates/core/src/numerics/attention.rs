use super::{gemm, softmax_backward, softmax_forward, NumericsError, Result, Scalar, Tensor};

/// Projection weights of single-head scaled dot-product self-attention.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn new(w_q: Tensor<T>, w_k: Tensor<T>, w_v: Tensor<T>) -> Result<Self> {
        let (dm, dk) = w_q.dims2("attention params")?;
        for w in [&w_k, &w_v] {
            if w.shape() != [dm, dk] {
                return Err(NumericsError::ShapeMismatch {
                    op: "attention params",
                    detail: format!("W_Q is {dm}x{dk} but found {:?}", w.shape()),
                });
            }
        }
        Ok(Self { w_q, w_k, w_v })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn d_k(&self) -> usize {
        self.w_q.shape()[1]
    }
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    pub tokens: Tensor<T>,
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    /// Row-stochastic attention matrix `[t, t]`.
    pub attention: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct AttentionGrads<T> {
    pub tokens: Tensor<T>,
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
}

fn project<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (t, dm) = x.dims2("self_attention")?;
    let dk = w.shape()[1];
    let mut out = vec![T::zero(); t * dk];
    gemm(t, dm, dk, x.data(), false, w.data(), false, &mut out, false);
    Tensor::new(&[t, dk], out)
}

/// `Q = X W_Q`, `K = X W_K`, `V = X W_V`, `A = softmax(Q K^T / sqrt(d_k))`, `Z = A V`.
///
/// `tokens` is `[t, d_model]`; output is `[t, d_k]`.
pub fn self_attention_forward<T: Scalar>(
    tokens: &Tensor<T>,
    params: &AttentionParams<T>,
) -> Result<(Tensor<T>, AttentionCache<T>)> {
    let (t, dm) = tokens.dims2("self_attention")?;
    if dm != params.d_model() {
        return Err(NumericsError::ShapeMismatch {
            op: "self_attention",
            detail: format!("tokens have width {dm}, weights expect d_model {}", params.d_model()),
        });
    }
    let dk = params.d_k();
    let q = project(tokens, &params.w_q)?;
    let k = project(tokens, &params.w_k)?;
    let v = project(tokens, &params.w_v)?;

    let mut scores = vec![T::zero(); t * t];
    gemm(t, dk, t, q.data(), false, k.data(), true, &mut scores, false);
    let scale = T::one() / T::of(dk as f64).sqrt();
    scores.iter_mut().for_each(|s| *s *= scale);
    let attention = softmax_forward(&Tensor::new(&[t, t], scores)?, 1)?;

    let mut z = vec![T::zero(); t * dk];
    gemm(t, t, dk, attention.data(), false, v.data(), false, &mut z, false);
    let cache = AttentionCache { tokens: tokens.clone(), q, k, v, attention };
    Ok((Tensor::new(&[t, dk], z)?, cache))
}

pub fn self_attention_backward<T: Scalar>(
    upstream: &Tensor<T>,
    cache: &AttentionCache<T>,
    params: &AttentionParams<T>,
) -> Result<AttentionGrads<T>> {
    let (t, dm) = cache.tokens.dims2("self_attention_backward")?;
    let dk = params.d_k();
    if upstream.shape() != [t, dk] {
        return Err(NumericsError::ShapeMismatch {
            op: "self_attention_backward",
            detail: format!("upstream {:?}, expected [{t}, {dk}]", upstream.shape()),
        });
    }
    let dz = upstream.data();
    let a = cache.attention.data();

    // dV = A^T dZ, dA = dZ V^T
    let mut dv = vec![T::zero(); t * dk];
    gemm(t, t, dk, a, true, dz, false, &mut dv, false);
    let mut da = vec![T::zero(); t * t];
    gemm(t, dk, t, dz, false, cache.v.data(), true, &mut da, false);

    let mut ds = softmax_backward(&Tensor::new(&[t, t], da)?, &cache.attention, 1)?.into_data();
    let scale = T::one() / T::of(dk as f64).sqrt();
    ds.iter_mut().for_each(|s| *s *= scale);

    // S = Q K^T: dQ = dS K, dK = dS^T Q
    let mut dq = vec![T::zero(); t * dk];
    gemm(t, t, dk, &ds, false, cache.k.data(), false, &mut dq, false);
    let mut dkey = vec![T::zero(); t * dk];
    gemm(t, t, dk, &ds, true, cache.q.data(), false, &mut dkey, false);

    let x = cache.tokens.data();
    let mut dwq = vec![T::zero(); dm * dk];
    gemm(dm, t, dk, x, true, &dq, false, &mut dwq, false);
    let mut dwk = vec![T::zero(); dm * dk];
    gemm(dm, t, dk, x, true, &dkey, false, &mut dwk, false);
    let mut dwv = vec![T::zero(); dm * dk];
    gemm(dm, t, dk, x, true, &dv, false, &mut dwv, false);

    let mut dx = vec![T::zero(); t * dm];
    gemm(t, dk, dm, &dq, false, params.w_q.data(), true, &mut dx, true);
    gemm(t, dk, dm, &dkey, false, params.w_k.data(), true, &mut dx, true);
    gemm(t, dk, dm, &dv, false, params.w_v.data(), true, &mut dx, true);

    Ok(AttentionGrads {
        tokens: Tensor::new(&[t, dm], dx)?,
        w_q: Tensor::new(&[dm, dk], dwq)?,
        w_k: Tensor::new(&[dm, dk], dwk)?,
        w_v: Tensor::new(&[dm, dk], dwv)?,
    })
}
