use super::{gemm, NumericsError, Result, Scalar, Tensor};

/// Output extent of a convolution along one axis, or `None` when the kernel
/// does not fit the padded input.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Gradients of a convolution with respect to its three operands.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
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
    pad: usize,
}

impl Geometry {
    fn new<T: Scalar>(
        op: &'static str,
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
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
        if let Some(b) = bias {
            if b.shape() != [c_out] {
                return Err(NumericsError::ShapeMismatch {
                    op,
                    detail: format!("bias shape {:?}, expected [{c_out}]", b.shape()),
                });
            }
        }
        if stride == 0 {
            return Err(NumericsError::InvalidArgument(format!("{op}: stride must be >= 1")));
        }
        let (ho, wo) = match (
            conv_output_extent(h, kh, stride, pad),
            conv_output_extent(w, kh, stride, pad),
        ) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => {
                return Err(NumericsError::ShapeMismatch {
                    op,
                    detail: format!("kernel {kh}x{kh} exceeds padded input {h}x{w} (pad {pad})"),
                })
            }
        };
        Ok(Self { n, h, w, c_in, k: kh, c_out, ho, wo, stride, pad })
    }

    fn patch(&self) -> usize {
        self.k * self.k * self.c_in
    }

    fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Unfolds every receptive field into one row of a `(n*ho*wo) x (k*k*c_in)` matrix.
    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let patch = self.patch();
        let mut cols = vec![T::zero(); self.rows() * patch];
        for b in 0..self.n {
            for oy in 0..self.ho {
                for ox in 0..self.wo {
                    let row = ((b * self.ho + oy) * self.wo + ox) * patch;
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let src = ((b * self.h + iy as usize) * self.w + ix as usize) * self.c_in;
                            let dst = row + (ky * self.k + kx) * self.c_in;
                            cols[dst..dst + self.c_in].copy_from_slice(&x[src..src + self.c_in]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds rows back onto the input grid.
    fn col2im<T: Scalar>(&self, cols: &[T]) -> Vec<T> {
        let patch = self.patch();
        let mut x = vec![T::zero(); self.n * self.h * self.w * self.c_in];
        for b in 0..self.n {
            for oy in 0..self.ho {
                for ox in 0..self.wo {
                    let row = ((b * self.ho + oy) * self.wo + ox) * patch;
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let dst = ((b * self.h + iy as usize) * self.w + ix as usize) * self.c_in;
                            let src = row + (ky * self.k + kx) * self.c_in;
                            for c in 0..self.c_in {
                                x[dst + c] += cols[src + c];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// 2-D convolution with zero padding and a per-output-channel bias.
///
/// `input` is `[n, h, w, c_in]`, `kernel` is `[k, k, c_in, c_out]`, `bias`
/// is `[c_out]`. Output is `[n, h', w', c_out]` with
/// `h' = (h + 2p - k) / stride + 1`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new("conv2d_forward", input, kernel, Some(bias), stride, padding)?;
    let cols = g.im2col(input.data());
    let mut out = vec![T::zero(); g.rows() * g.c_out];
    for row in out.chunks_exact_mut(g.c_out) {
        row.copy_from_slice(bias.data());
    }
    gemm(g.rows(), g.patch(), g.c_out, &cols, false, kernel.data(), false, &mut out, true);
    Tensor::new(&[g.n, g.ho, g.wo, g.c_out], out)
}

/// Backward pass of [`conv2d_forward`] given the forward input.
pub fn conv2d_backward<T: Scalar>(
    upstream: &Tensor<T>,
    cached_input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new("conv2d_backward", cached_input, kernel, None, stride, padding)?;
    let expected = [g.n, g.ho, g.wo, g.c_out];
    if upstream.shape() != expected {
        return Err(NumericsError::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!("upstream {:?}, forward output was {expected:?}", upstream.shape()),
        });
    }
    let cols = g.im2col(cached_input.data());
    let dy = upstream.data();

    let mut dkernel = vec![T::zero(); g.patch() * g.c_out];
    gemm(g.patch(), g.rows(), g.c_out, &cols, true, dy, false, &mut dkernel, false);

    let mut dbias = vec![T::zero(); g.c_out];
    for row in dy.chunks_exact(g.c_out) {
        for (b, &v) in dbias.iter_mut().zip(row) {
            *b += v;
        }
    }

    let mut dcols = vec![T::zero(); g.rows() * g.patch()];
    gemm(g.rows(), g.c_out, g.patch(), dy, false, kernel.data(), true, &mut dcols, false);
    let dx = g.col2im(&dcols);

    Ok(ConvGrads {
        input: Tensor::new(cached_input.shape(), dx)?,
        kernel: Tensor::new(kernel.shape(), dkernel)?,
        bias: Tensor::new(&[g.c_out], dbias)?,
    })
}
