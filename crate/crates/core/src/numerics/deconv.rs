use super::{gemm, NumericsError, Result, Scalar, Tensor};

/// Output extent of a transposed convolution: `(input - 1) * stride + kernel`.
pub fn deconv_output_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input - 1) * stride + kernel
}

struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c_in: usize,
    k: usize,
    c_out: usize,
    ho: usize,
    wo: usize,
    stride: usize,
}

impl Geometry {
    fn new<T: Scalar>(op: &'static str, input: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<Self> {
        let (n, h, w, c_in) = input.dims4(op)?;
        let (kh, kw, kc, c_out) = kernel.dims4(op)?;
        if kh != kw {
            return Err(NumericsError::ShapeMismatch {
                op,
                detail: format!("kernel must be square, got {kh}x{kw}"),
            });
        }
        if kc != c_in {
            return Err(NumericsError::ShapeMismatch {
                op,
                detail: format!(
                    "input has {c_in} channels but kernel {:?} expects {kc}",
                    kernel.shape()
                ),
            });
        }
        if stride == 0 {
            return Err(NumericsError::InvalidArgument(format!("{op}: stride must be >= 1")));
        }
        Ok(Self {
            n,
            h,
            w,
            c_in,
            k: kh,
            c_out,
            ho: deconv_output_extent(h, kh, stride),
            wo: deconv_output_extent(w, kh, stride),
            stride,
        })
    }

    /// Columns per input pixel: one value per (ky, kx, c_out).
    fn span(&self) -> usize {
        self.k * self.k * self.c_out
    }

    fn pixels(&self) -> usize {
        self.n * self.h * self.w
    }

    /// Kernel `[k, k, c_in, c_out]` regrouped as a `c_in x (k*k*c_out)` matrix.
    fn regroup<T: Scalar>(&self, kernel: &[T]) -> Vec<T> {
        let mut m = vec![T::zero(); self.c_in * self.span()];
        for kk in 0..self.k * self.k {
            for c in 0..self.c_in {
                for o in 0..self.c_out {
                    m[c * self.span() + kk * self.c_out + o] = kernel[(kk * self.c_in + c) * self.c_out + o];
                }
            }
        }
        m
    }

    fn ungroup<T: Scalar>(&self, m: &[T]) -> Vec<T> {
        let mut kernel = vec![T::zero(); m.len()];
        for kk in 0..self.k * self.k {
            for c in 0..self.c_in {
                for o in 0..self.c_out {
                    kernel[(kk * self.c_in + c) * self.c_out + o] = m[c * self.span() + kk * self.c_out + o];
                }
            }
        }
        kernel
    }

    fn out_offset(&self, b: usize, y: usize, x: usize, ky: usize, kx: usize) -> usize {
        let oy = y * self.stride + ky;
        let ox = x * self.stride + kx;
        ((b * self.ho + oy) * self.wo + ox) * self.c_out
    }
}

/// Transposed convolution: every input pixel scatter-adds a copy of the
/// kernel, weighted by its channel values, at stride-spaced positions.
///
/// `input` is `[n, h, w, c_in]`, `kernel` is `[k, k, c_in, c_out]`, `bias`
/// is `[c_out]`. No output cropping. With the channel axes of the kernel
/// swapped, this is the exact adjoint of [`conv2d_forward`](super::conv2d_forward)
/// with zero padding.
pub fn deconv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new("deconv2d_forward", input, kernel, stride)?;
    if bias.shape() != [g.c_out] {
        return Err(NumericsError::ShapeMismatch {
            op: "deconv2d_forward",
            detail: format!("bias shape {:?}, expected [{}]", bias.shape(), g.c_out),
        });
    }
    let grouped = g.regroup(kernel.data());
    let mut cols = vec![T::zero(); g.pixels() * g.span()];
    gemm(g.pixels(), g.c_in, g.span(), input.data(), false, &grouped, false, &mut cols, false);

    let mut out = vec![T::zero(); g.n * g.ho * g.wo * g.c_out];
    for row in out.chunks_exact_mut(g.c_out) {
        row.copy_from_slice(bias.data());
    }
    for b in 0..g.n {
        for y in 0..g.h {
            for x in 0..g.w {
                let src = ((b * g.h + y) * g.w + x) * g.span();
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let dst = g.out_offset(b, y, x, ky, kx);
                        let s = src + (ky * g.k + kx) * g.c_out;
                        for o in 0..g.c_out {
                            out[dst + o] += cols[s + o];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[g.n, g.ho, g.wo, g.c_out], out)
}

/// Backward pass of [`deconv2d_forward`]; returns input, kernel and bias gradients.
pub fn deconv2d_backward<T: Scalar>(
    upstream: &Tensor<T>,
    cached_input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
) -> Result<super::ConvGrads<T>> {
    let g = Geometry::new("deconv2d_backward", cached_input, kernel, stride)?;
    let expected = [g.n, g.ho, g.wo, g.c_out];
    if upstream.shape() != expected {
        return Err(NumericsError::ShapeMismatch {
            op: "deconv2d_backward",
            detail: format!("upstream {:?}, forward output was {expected:?}", upstream.shape()),
        });
    }
    let dy = upstream.data();
    let mut dcols = vec![T::zero(); g.pixels() * g.span()];
    for b in 0..g.n {
        for y in 0..g.h {
            for x in 0..g.w {
                let dst = ((b * g.h + y) * g.w + x) * g.span();
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let src = g.out_offset(b, y, x, ky, kx);
                        let d = dst + (ky * g.k + kx) * g.c_out;
                        dcols[d..d + g.c_out].copy_from_slice(&dy[src..src + g.c_out]);
                    }
                }
            }
        }
    }

    let grouped = g.regroup(kernel.data());
    let mut dx = vec![T::zero(); g.pixels() * g.c_in];
    gemm(g.pixels(), g.span(), g.c_in, &dcols, false, &grouped, true, &mut dx, false);

    let mut dgrouped = vec![T::zero(); g.c_in * g.span()];
    gemm(g.c_in, g.pixels(), g.span(), cached_input.data(), true, &dcols, false, &mut dgrouped, false);

    let mut dbias = vec![T::zero(); g.c_out];
    for row in dy.chunks_exact(g.c_out) {
        for (b, &v) in dbias.iter_mut().zip(row) {
            *b += v;
        }
    }

    Ok(super::ConvGrads {
        input: Tensor::new(cached_input.shape(), dx)?,
        kernel: Tensor::new(kernel.shape(), g.ungroup(&dgrouped))?,
        bias: Tensor::new(&[g.c_out], dbias)?,
    })
}
