use super::params::slot;
use super::{ModelError, ModelParams, PredictionOutput, Predictor, Result};
use crate::numerics::{
    conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward, dense_backward, dense_forward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, self_attention_backward,
    self_attention_forward, sigmoid_backward, sigmoid_forward, softmax_forward, AttentionCache, PoolIndex, Scalar,
    Tensor,
};
use crate::spacetime::Sample;

/// Stacked model inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    /// `[n, h, w, c]`; padded cells are forced to 0.
    pub x: Tensor<T>,
    /// `[n, wz_features]`.
    pub wz: Tensor<T>,
    /// `[n, h, w]`.
    pub mask: Tensor<T>,
    /// `[n, h, w]` normalised target speed.
    pub y_speed: Tensor<T>,
    pub y_incident: Vec<u8>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| ModelError::Input("empty batch".into()))?;
        let (h, w, c) = (first.height(), first.width(), first.x_image.channels);
        let nf = first.x_wz.values.len();
        let n = samples.len();
        let mut x = Vec::with_capacity(n * h * w * c);
        let mut wz = Vec::with_capacity(n * nf);
        let mut mask = Vec::with_capacity(n * h * w);
        let mut y = Vec::with_capacity(n * h * w);
        for s in samples {
            if (s.height(), s.width(), s.x_image.channels) != (h, w, c) {
                return Err(ModelError::Input(format!(
                    "sample {} is {}x{}x{}, batch is {h}x{w}x{c}",
                    s.id,
                    s.height(),
                    s.width(),
                    s.x_image.channels
                )));
            }
            for (cell, &m) in s.mask.iter().enumerate() {
                let live = m == 1.0;
                for ch in 0..c {
                    x.push(if live { T::of(s.x_image.data[cell * c + ch]) } else { T::zero() });
                }
                mask.push(if live { T::one() } else { T::zero() });
                y.push(if live { T::of(s.y_speed[cell]) } else { T::zero() });
            }
            wz.extend(s.x_wz.values.iter().map(|&v| T::of(v)));
        }
        Ok(Self {
            x: Tensor::new(&[n, h, w, c], x)?,
            wz: Tensor::new(&[n, nf], wz)?,
            mask: Tensor::new(&[n, h, w], mask)?,
            y_speed: Tensor::new(&[n, h, w], y)?,
            y_incident: samples.iter().map(|s| s.y_incident).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y_incident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_incident.is_empty()
    }
}

/// Raw batched outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput<T> {
    /// `[n, h, w]` in (0, 1).
    pub y_speed: Tensor<T>,
    /// `[n, 2]` softmax probabilities.
    pub probs: Tensor<T>,
}

impl<T: Scalar> BatchOutput<T> {
    pub fn split(&self) -> Vec<PredictionOutput> {
        let n = self.probs.shape()[0];
        let cells = self.y_speed.len() / n.max(1);
        (0..n)
            .map(|i| PredictionOutput {
                y_speed_hat: self.y_speed.data()[i * cells..(i + 1) * cells].iter().map(|v| v.as_f64()).collect(),
                p_incident: [self.probs.data()[2 * i].as_f64(), self.probs.data()[2 * i + 1].as_f64()],
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct ForwardCache<T> {
    x: Tensor<T>,
    wz: Tensor<T>,
    a1: Tensor<T>,
    pool1: PoolIndex,
    p1: Tensor<T>,
    a2: Tensor<T>,
    pool2: PoolIndex,
    t_pre: Tensor<T>,
    attention: Vec<AttentionCache<T>>,
    fused: Tensor<T>,
    dec: Tensor<T>,
    u1_pre: Tensor<T>,
    u1: Tensor<T>,
    y: Tensor<T>,
    h_pre: Tensor<T>,
    h: Tensor<T>,
}

/// The encoder-decoder with a slot for the activations of the last
/// training-mode forward pass.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub params: ModelParams<T>,
    cache: Option<ForwardCache<T>>,
}

fn rows<T: Scalar>(t: &Tensor<T>) -> usize {
    t.shape()[0]
}

/// Row-wise `[a | b]`.
fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, da) = (rows(a), a.len() / rows(a).max(1));
    let db = b.len() / n.max(1);
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * da..(i + 1) * da]);
        out.extend_from_slice(&b.data()[i * db..(i + 1) * db]);
    }
    Ok(Tensor::new(&[n, da + db], out)?)
}

fn split_cols<T: Scalar>(t: &Tensor<T>, left: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, d) = (t.shape()[0], t.shape()[1]);
    let mut a = Vec::with_capacity(n * left);
    let mut b = Vec::with_capacity(n * (d - left));
    for row in t.data().chunks_exact(d) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    Ok((Tensor::new(&[n, left], a)?, Tensor::new(&[n, d - left], b)?))
}

fn add_into<T: Scalar>(acc: &mut Tensor<T>, other: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self { params, cache: None }
    }

    pub fn attention_enabled(&self) -> bool {
        self.params.config.attention_enabled
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let c = &self.params.config;
        let n = batch.len();
        let expected = [n, c.height, c.width, c.in_channels];
        if batch.x.shape() != expected {
            return Err(ModelError::Input(format!(
                "input image {:?} does not fit the model canvas {expected:?}",
                batch.x.shape()
            )));
        }
        if batch.wz.shape() != [n, c.wz_features] {
            return Err(ModelError::Input(format!(
                "work-zone vector {:?}, expected [{n}, {}]",
                batch.wz.shape(),
                c.wz_features
            )));
        }
        Ok(())
    }

    fn attend(&self, fused_in: &Tensor<T>) -> Result<(Tensor<T>, Vec<AttentionCache<T>>)> {
        if !self.attention_enabled() {
            return Ok((fused_in.clone(), Vec::new()));
        }
        let c = &self.params.config;
        let attn = self.params.attention()?;
        let (t, dm) = (c.tokens(), c.d_model);
        let mut out = Vec::with_capacity(fused_in.len());
        let mut caches = Vec::with_capacity(rows(fused_in));
        for row in fused_in.data().chunks_exact(t * dm) {
            let tokens = Tensor::new(&[t, dm], row.to_vec())?;
            let (z, cache) = self_attention_forward(&tokens, &attn)?;
            out.extend_from_slice(z.data());
            caches.push(cache);
        }
        Ok((Tensor::new(fused_in.shape(), out)?, caches))
    }

    fn run(&self, batch: &Batch<T>) -> Result<(BatchOutput<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let c = &self.params.config;
        let p = &self.params.tensors;
        let n = batch.len();

        let a1 = conv2d_forward(&batch.x, &p[slot::CONV1_K], &p[slot::CONV1_B], 1, 1)?;
        let (p1, pool1) = maxpool2_forward(&relu_forward(&a1))?;
        let a2 = conv2d_forward(&p1, &p[slot::CONV2_K], &p[slot::CONV2_B], 1, 1)?;
        let (p2, pool2) = maxpool2_forward(&relu_forward(&a2))?;
        let img = p2.reshape(&[n, c.encoded_len()])?;

        let t_pre = dense_forward(&batch.wz, &p[slot::TAB_W], &p[slot::TAB_B])?;
        let tab = relu_forward(&t_pre);
        let fused_in = concat(&img, &tab)?;
        let (fused, attention) = self.attend(&fused_in)?;

        let dec = dense_forward(&fused, &p[slot::DEC_W], &p[slot::DEC_B])?
            .reshape(&[n, c.height / 4, c.width / 4, c.conv2_filters])?;
        let u1_pre = deconv2d_forward(&dec, &p[slot::DECONV1_K], &p[slot::DECONV1_B], 2)?;
        let u1 = relu_forward(&u1_pre);
        let u2 = deconv2d_forward(&u1, &p[slot::DECONV2_K], &p[slot::DECONV2_B], 2)?;
        let y = sigmoid_forward(&u2).reshape(&[n, c.height, c.width])?;

        let h_pre = dense_forward(&fused, &p[slot::INC1_W], &p[slot::INC1_B])?;
        let h = relu_forward(&h_pre);
        let logits = dense_forward(&h, &p[slot::INC2_W], &p[slot::INC2_B])?;
        let probs = softmax_forward(&logits, 1)?;

        let out = BatchOutput { y_speed: y.clone(), probs };
        let cache = ForwardCache {
            x: batch.x.clone(),
            wz: batch.wz.clone(),
            a1,
            pool1,
            p1,
            a2,
            pool2,
            t_pre,
            attention,
            fused,
            dec,
            u1_pre,
            u1,
            y,
            h_pre,
            h,
        };
        Ok((out, cache))
    }

    /// Inference; leaves the training cache untouched.
    pub fn predict(&self, batch: &Batch<T>) -> Result<BatchOutput<T>> {
        Ok(self.run(batch)?.0)
    }

    /// Forward pass that keeps the activations for [`Network::backward`].
    pub fn forward(&mut self, batch: &Batch<T>) -> Result<BatchOutput<T>> {
        let (out, cache) = self.run(batch)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Gradients of every parameter given the loss gradient w.r.t. the speed
    /// map `[n, h, w]` and w.r.t. the incident logits `[n, 2]`. Consumes the
    /// cached activations.
    pub fn backward(&mut self, d_speed: &Tensor<T>, d_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let cache = self.cache.take().ok_or(ModelError::Numerics(crate::numerics::NumericsError::MissingCache(
            "network backward",
        )))?;
        let c = &self.params.config;
        let p = &self.params.tensors;
        let n = rows(&cache.x);
        if d_speed.shape() != [n, c.height, c.width] || d_logits.shape() != [n, 2] {
            return Err(ModelError::Input(format!(
                "upstream gradients {:?} / {:?} do not match the cached batch of {n}",
                d_speed.shape(),
                d_logits.shape()
            )));
        }
        let mut grads: Vec<Tensor<T>> = p.iter().map(|t| Tensor::zeros(t.shape())).collect();

        // speed head
        let y = cache.y.clone().reshape(&[n, c.height, c.width, 1])?;
        let d_u2 = sigmoid_backward(&d_speed.clone().reshape(&[n, c.height, c.width, 1])?, &y)?;
        let g = deconv2d_backward(&d_u2, &cache.u1, &p[slot::DECONV2_K], 2)?;
        grads[slot::DECONV2_K] = g.kernel;
        grads[slot::DECONV2_B] = g.bias;
        let d_u1_pre = relu_backward(&g.input, &cache.u1_pre)?;
        let g = deconv2d_backward(&d_u1_pre, &cache.dec, &p[slot::DECONV1_K], 2)?;
        grads[slot::DECONV1_K] = g.kernel;
        grads[slot::DECONV1_B] = g.bias;
        let d_dec = g.input.reshape(&[n, c.encoded_len()])?;
        let g = dense_backward(&d_dec, &cache.fused, &p[slot::DEC_W])?;
        grads[slot::DEC_W] = g.weight;
        grads[slot::DEC_B] = g.bias;
        let mut d_fused = g.input;

        // incident head
        let g = dense_backward(d_logits, &cache.h, &p[slot::INC2_W])?;
        grads[slot::INC2_W] = g.weight;
        grads[slot::INC2_B] = g.bias;
        let d_h_pre = relu_backward(&g.input, &cache.h_pre)?;
        let g = dense_backward(&d_h_pre, &cache.fused, &p[slot::INC1_W])?;
        grads[slot::INC1_W] = g.weight;
        grads[slot::INC1_B] = g.bias;
        add_into(&mut d_fused, &g.input);

        // attention
        let d_fused_in = if self.attention_enabled() {
            let attn = self.params.attention()?;
            let (t, dm) = (c.tokens(), c.d_model);
            let mut d_in = Vec::with_capacity(d_fused.len());
            for (row, ac) in d_fused.data().chunks_exact(t * dm).zip(&cache.attention) {
                let g = self_attention_backward(&Tensor::new(&[t, dm], row.to_vec())?, ac, &attn)?;
                d_in.extend_from_slice(g.tokens.data());
                add_into(&mut grads[slot::ATTN_Q], &g.w_q);
                add_into(&mut grads[slot::ATTN_K], &g.w_k);
                add_into(&mut grads[slot::ATTN_V], &g.w_v);
            }
            Tensor::new(d_fused.shape(), d_in)?
        } else {
            d_fused
        };
        let (d_img, d_tab) = split_cols(&d_fused_in, c.encoded_len())?;

        // tabular encoder
        let d_t_pre = relu_backward(&d_tab, &cache.t_pre)?;
        let g = dense_backward(&d_t_pre, &cache.wz, &p[slot::TAB_W])?;
        grads[slot::TAB_W] = g.weight;
        grads[slot::TAB_B] = g.bias;

        // image encoder
        let d_p2 = d_img.reshape(&[n, c.height / 4, c.width / 4, c.conv2_filters])?;
        let d_a2 = relu_backward(&maxpool2_backward(&d_p2, &cache.pool2)?, &cache.a2)?;
        let g = conv2d_backward(&d_a2, &cache.p1, &p[slot::CONV2_K], 1, 1)?;
        grads[slot::CONV2_K] = g.kernel;
        grads[slot::CONV2_B] = g.bias;
        let d_a1 = relu_backward(&maxpool2_backward(&g.input, &cache.pool1)?, &cache.a1)?;
        let g = conv2d_backward(&d_a1, &cache.x, &p[slot::CONV1_K], 1, 1)?;
        grads[slot::CONV1_K] = g.kernel;
        grads[slot::CONV1_B] = g.bias;
        Ok(grads)
    }

    /// Image encoder output `[n, encoded_len]`.
    pub fn encode_image(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = &self.params.config;
        let p = &self.params.tensors;
        let (n, h, w, ch) = (x.shape()[0], x.shape().get(1), x.shape().get(2), x.shape().get(3));
        if x.rank() != 4 || (h, w, ch) != (Some(&c.height), Some(&c.width), Some(&c.in_channels)) {
            return Err(ModelError::Input(format!("image {:?} does not fit the model canvas", x.shape())));
        }
        let a1 = conv2d_forward(x, &p[slot::CONV1_K], &p[slot::CONV1_B], 1, 1)?;
        let (p1, _) = maxpool2_forward(&relu_forward(&a1))?;
        let a2 = conv2d_forward(&p1, &p[slot::CONV2_K], &p[slot::CONV2_B], 1, 1)?;
        let (p2, _) = maxpool2_forward(&relu_forward(&a2))?;
        Ok(p2.reshape(&[n, c.encoded_len()])?)
    }

    /// Tabular encoder output `[n, tabular_dim]`.
    pub fn encode_tabular(&self, wz: &Tensor<T>) -> Result<Tensor<T>> {
        let c = &self.params.config;
        if wz.rank() != 2 || wz.shape()[1] != c.wz_features {
            return Err(ModelError::Input(format!(
                "work-zone vector {:?}, expected [n, {}]",
                wz.shape(),
                c.wz_features
            )));
        }
        let p = &self.params.tensors;
        Ok(relu_forward(&dense_forward(wz, &p[slot::TAB_W], &p[slot::TAB_B])?))
    }

    /// Concatenation followed by token self-attention (identity when attention
    /// is disabled). Inputs are `[n, encoded_len]` and `[n, tabular_dim]`.
    pub fn fuse_and_attend(&self, img: &Tensor<T>, tab: &Tensor<T>) -> Result<Tensor<T>> {
        let fused = concat(img, tab)?;
        if fused.len() % self.params.config.d_model != 0 {
            return Err(ModelError::Input(format!(
                "fused length {} is not divisible into tokens of {}",
                fused.len(),
                self.params.config.d_model
            )));
        }
        Ok(self.attend(&fused)?.0)
    }

    /// Speed decoder `[n, fused_len] -> [n, h, w]`.
    pub fn decode_speed(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let c = &self.params.config;
        let p = &self.params.tensors;
        let n = rows(z);
        let dec = dense_forward(z, &p[slot::DEC_W], &p[slot::DEC_B])?
            .reshape(&[n, c.height / 4, c.width / 4, c.conv2_filters])?;
        let u1 = relu_forward(&deconv2d_forward(&dec, &p[slot::DECONV1_K], &p[slot::DECONV1_B], 2)?);
        let u2 = deconv2d_forward(&u1, &p[slot::DECONV2_K], &p[slot::DECONV2_B], 2)?;
        Ok(sigmoid_forward(&u2).reshape(&[n, c.height, c.width])?)
    }

    /// Incident head `[n, fused_len] -> [n, 2]` probabilities.
    pub fn decode_incident(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params.tensors;
        let h = relu_forward(&dense_forward(z, &p[slot::INC1_W], &p[slot::INC1_B])?);
        Ok(softmax_forward(&dense_forward(&h, &p[slot::INC2_W], &p[slot::INC2_B])?, 1)?)
    }
}
/// Samples per inference batch in [`Predictor::predict_all`].
const PREDICT_BATCH: usize = 16;

impl<T: Scalar> Predictor for Network<T> {
    fn name(&self) -> &str {
        if self.params.config.attention_enabled {
            "amcnn_ed"
        } else {
            "mcnn_ed"
        }
    }

    fn predict_sample(&self, sample: &Sample) -> Result<PredictionOutput> {
        let out = self.predict(&Batch::from_samples(&[sample])?)?;
        Ok(out.split().remove(0))
    }

    fn predict_all(&self, samples: &[Sample]) -> Result<Vec<PredictionOutput>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_BATCH) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            out.extend(self.predict(&Batch::from_samples(&refs)?)?.split());
        }
        Ok(out)
    }
}

