use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::{
    conv2d, conv_tap_range, ensure_finite, matmul, maxpool2, Matrix, Padding, Rng, Shape, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer variants with their parameters. Convolutions are always
/// same-padded with stride 1.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// `weight: [f, c, k, k]`, `bias: [1, 1, 1, f]`.
    Conv { weight: Tensor, bias: Tensor },
    Relu,
    MaxPool,
    Flatten,
    /// `weight: [1, 1, in, out]`, `bias: [1, 1, 1, out]`.
    Dense { weight: Tensor, bias: Tensor },
    /// Inverted dropout with drop probability `rate`.
    Dropout { rate: f32 },
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub trainable: bool,
    /// L2 coefficient applied to this layer's weight (not its bias).
    pub l2: f32,
}

/// What `backward` needs from the matching `forward` call.
#[derive(Clone, Debug)]
pub enum ForwardCache {
    Conv { input: Tensor },
    Relu { input: Tensor },
    MaxPool { input_shape: Shape, argmax: Vec<usize> },
    Flatten { input_shape: Shape },
    Dense { input: Tensor },
    /// `None` in eval mode.
    Dropout { mask: Option<Vec<f32>>, shape: Shape },
    Sigmoid { output: Tensor },
}

/// Parameter gradients, shaped like the layer's weight and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn bias_shape(len: usize) -> Shape {
    Shape::new(1, 1, 1, len)
}

impl Layer {
    fn plain(kind: LayerKind) -> Self {
        Layer { kind, trainable: true, l2: 0.0 }
    }

    pub fn conv(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weight.shape();
        if ws.h != ws.w || ws.h % 2 == 0 {
            return invalid(format!("conv kernel must be square with odd side, got {}x{}", ws.h, ws.w));
        }
        if bias.shape() != bias_shape(ws.n) {
            return shape_err(format!("conv bias must be {}, got {}", bias_shape(ws.n), bias.shape()));
        }
        Ok(Self::plain(LayerKind::Conv { weight, bias }))
    }

    pub fn dense(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ws = weight.shape();
        if ws.n != 1 || ws.c != 1 {
            return shape_err(format!("dense weight must be 1x1xINxOUT, got {ws}"));
        }
        if bias.shape() != bias_shape(ws.w) {
            return shape_err(format!("dense bias must be {}, got {}", bias_shape(ws.w), bias.shape()));
        }
        Ok(Self::plain(LayerKind::Dense { weight, bias }))
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn maxpool() -> Self {
        Self::plain(LayerKind::MaxPool)
    }

    pub fn flatten() -> Self {
        Self::plain(LayerKind::Flatten)
    }

    pub fn dropout(rate: f32) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return invalid(format!("dropout rate must be in [0, 1), got {rate}"));
        }
        Ok(Self::plain(LayerKind::Dropout { rate }))
    }

    pub fn sigmoid() -> Self {
        Self::plain(LayerKind::Sigmoid)
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn with_l2(mut self, lambda: f32) -> Self {
        self.l2 = lambda;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Sigmoid => "sigmoid",
        }
    }

    /// `(weight, bias)` for conv and dense layers.
    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match &self.kind {
            LayerKind::Conv { weight, bias } | LayerKind::Dense { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match &mut self.kind {
            LayerKind::Conv { weight, bias } | LayerKind::Dense { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }

    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, ForwardCache)> {
        match &self.kind {
            LayerKind::Conv { weight, bias } => {
                let y = conv2d(x, weight, bias.as_slice(), Padding::Same)?;
                Ok((y, ForwardCache::Conv { input: x.clone() }))
            }
            LayerKind::Relu => {
                let y = Tensor::from_parts(x.shape(), x.as_slice().iter().map(|&v| v.max(0.0)).collect());
                Ok((y, ForwardCache::Relu { input: x.clone() }))
            }
            LayerKind::MaxPool => {
                let pooled = maxpool2(x)?;
                Ok((pooled.output, ForwardCache::MaxPool { input_shape: x.shape(), argmax: pooled.argmax }))
            }
            LayerKind::Flatten => {
                let s = x.shape();
                let y = x.clone().reshape(Shape::new(s.n, 1, 1, s.sample_len()))?;
                Ok((y, ForwardCache::Flatten { input_shape: s }))
            }
            LayerKind::Dense { weight, bias } => {
                let s = x.shape();
                let ws = weight.shape();
                if s.sample_len() != ws.h {
                    return shape_err(format!("dense expects {} inputs per sample, got {}", ws.h, s.sample_len()));
                }
                let xm = Matrix::from_parts(s.n, ws.h, x.as_slice().to_vec());
                let wm = Matrix::from_parts(ws.h, ws.w, weight.as_slice().to_vec());
                let mut y = matmul(&xm, &wm)?.into_vec();
                for row in y.chunks_exact_mut(ws.w) {
                    for (v, &b) in row.iter_mut().zip(bias.as_slice()) {
                        *v = (f64::from(*v) + f64::from(b)) as f32;
                    }
                }
                ensure_finite(&y)?;
                let input = x.clone().reshape(Shape::new(s.n, 1, 1, ws.h))?;
                Ok((Tensor::from_parts(Shape::new(s.n, 1, 1, ws.w), y), ForwardCache::Dense { input }))
            }
            LayerKind::Dropout { rate } => match mode {
                Mode::Eval => Ok((x.clone(), ForwardCache::Dropout { mask: None, shape: x.shape() })),
                Mode::Train => {
                    let keep = 1.0 / (1.0 - f64::from(*rate));
                    let mask: Vec<f32> = (0..x.len())
                        .map(|_| if rng.uniform() < f64::from(*rate) { 0.0 } else { keep as f32 })
                        .collect();
                    let y = x.as_slice().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    Ok((
                        Tensor::from_parts(x.shape(), y),
                        ForwardCache::Dropout { mask: Some(mask), shape: x.shape() },
                    ))
                }
            },
            LayerKind::Sigmoid => {
                let y = Tensor::from_parts(x.shape(), x.as_slice().iter().map(|&v| sigmoid(v)).collect());
                Ok((y.clone(), ForwardCache::Sigmoid { output: y }))
            }
        }
    }

    /// Gradients with respect to the input and (for conv/dense) parameters.
    pub fn backward(&self, cache: &ForwardCache, dy: &Tensor) -> Result<(Tensor, Option<Grads>)> {
        let (dx, grads) = self.backward_with(cache, dy, true, true)?;
        Ok((dx.expect("dx requested"), grads))
    }

    /// Like [`Layer::backward`], skipping the input gradient and/or the
    /// parameter gradients when the caller does not need them.
    pub fn backward_with(
        &self,
        cache: &ForwardCache,
        dy: &Tensor,
        need_dx: bool,
        need_grads: bool,
    ) -> Result<(Option<Tensor>, Option<Grads>)> {
        let mismatch = |want: Shape| {
            Err(Error::Shape(format!("{} backward: dy is {}, expected {want}", self.name(), dy.shape())))
        };
        match (&self.kind, cache) {
            (LayerKind::Conv { weight, .. }, ForwardCache::Conv { input }) => {
                let want = Shape::new(input.shape().n, weight.shape().n, input.shape().h, input.shape().w);
                if dy.shape() != want {
                    return mismatch(want);
                }
                let dx = need_dx.then(|| conv_input_grad(weight, dy, input.shape()));
                let grads = need_grads.then(|| conv_param_grads(input, weight.shape(), dy));
                Ok((dx, grads))
            }
            (LayerKind::Relu, ForwardCache::Relu { input }) => {
                if dy.shape() != input.shape() {
                    return mismatch(input.shape());
                }
                let dx = input
                    .as_slice()
                    .iter()
                    .zip(dy.as_slice())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Some(Tensor::from_parts(dy.shape(), dx)), None))
            }
            (LayerKind::MaxPool, ForwardCache::MaxPool { input_shape, argmax }) => {
                let want = Shape::new(input_shape.n, input_shape.c, input_shape.h / 2, input_shape.w / 2);
                if dy.shape() != want {
                    return mismatch(want);
                }
                let mut dx = vec![0f32; input_shape.len()];
                for (&idx, &g) in argmax.iter().zip(dy.as_slice()) {
                    dx[idx] += g;
                }
                Ok((Some(Tensor::from_parts(*input_shape, dx)), None))
            }
            (LayerKind::Flatten, ForwardCache::Flatten { input_shape }) => {
                let want = Shape::new(input_shape.n, 1, 1, input_shape.sample_len());
                if dy.shape() != want {
                    return mismatch(want);
                }
                Ok((Some(dy.clone().reshape(*input_shape)?), None))
            }
            (LayerKind::Dense { weight, .. }, ForwardCache::Dense { input }) => {
                let ws = weight.shape();
                let n = input.shape().n;
                let want = Shape::new(n, 1, 1, ws.w);
                if dy.shape() != want {
                    return mismatch(want);
                }
                let dym = Matrix::from_parts(n, ws.w, dy.as_slice().to_vec());
                let dx = if need_dx {
                    let wt = Matrix::from_parts(ws.h, ws.w, weight.as_slice().to_vec()).transpose();
                    Some(Tensor::from_parts(Shape::new(n, 1, 1, ws.h), matmul(&dym, &wt)?.into_vec()))
                } else {
                    None
                };
                let grads = if need_grads {
                    let xt = Matrix::from_parts(n, ws.h, input.as_slice().to_vec()).transpose();
                    let dw = matmul(&xt, &dym)?.into_vec();
                    let mut db = vec![0f64; ws.w];
                    for row in dy.as_slice().chunks_exact(ws.w) {
                        for (acc, &g) in db.iter_mut().zip(row) {
                            *acc += f64::from(g);
                        }
                    }
                    Some(Grads {
                        weight: Tensor::from_parts(ws, dw),
                        bias: Tensor::from_parts(bias_shape(ws.w), db.iter().map(|&v| v as f32).collect()),
                    })
                } else {
                    None
                };
                Ok((dx, grads))
            }
            (LayerKind::Dropout { .. }, ForwardCache::Dropout { mask, shape }) => {
                if dy.shape() != *shape {
                    return mismatch(*shape);
                }
                let dx = match mask {
                    None => dy.clone(),
                    Some(mask) => Tensor::from_parts(
                        *shape,
                        dy.as_slice().iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                    ),
                };
                Ok((Some(dx), None))
            }
            (LayerKind::Sigmoid, ForwardCache::Sigmoid { output }) => {
                if dy.shape() != output.shape() {
                    return mismatch(output.shape());
                }
                let dx = output
                    .as_slice()
                    .iter()
                    .zip(dy.as_slice())
                    .map(|(&s, &g)| (f64::from(g) * f64::from(s) * (1.0 - f64::from(s))) as f32)
                    .collect();
                Ok((Some(Tensor::from_parts(dy.shape(), dx)), None))
            }
            _ => Err(Error::Shape(format!("{} backward given a cache from a different layer kind", self.name()))),
        }
    }
}

/// Largest `f32` strictly below 1.
const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;

/// Logistic function evaluated on the branch that cannot overflow, with
/// the result kept strictly inside `(0, 1)`.
pub fn sigmoid(x: f32) -> f32 {
    let x = f64::from(x);
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    (s as f32).clamp(f32::MIN_POSITIVE, BELOW_ONE)
}

/// Dot product with four independent `f64` lanes combined at the end, so
/// the summation order is fixed regardless of target.
#[inline]
fn conv_param_grads(input: &Tensor, ws: Shape, dy: &Tensor) -> Grads {
    let s = input.shape();
    let k = ws.h;
    let pad = (k - 1) / 2;
    let taps: Vec<_> = (0..k * k)
        .map(|t| conv_tap_range((s.h, s.w), (s.h, s.w), (t / k, t % k), pad))
        .collect();
    let mut dw = vec![0f64; ws.len()];
    let mut db = vec![0f64; ws.n];
    // per-column partial sums, reduced once per tap
    let mut cols = vec![0f64; s.w];
    for n in 0..s.n {
        for f in 0..ws.n {
            let g = dy.plane(n, f);
            db[f] += g.iter().map(|&v| f64::from(v)).sum::<f64>();
            for c in 0..s.c {
                let src = input.plane(n, c);
                let base = (f * ws.c + c) * k * k;
                for (t, tap) in taps.iter().enumerate() {
                    let Some(tap) = tap else { continue };
                    let cols = &mut cols[..tap.x1 - tap.x0];
                    cols.fill(0.0);
                    for y in tap.y0..tap.y1 {
                        let g_row = &g[y * s.w + tap.x0..y * s.w + tap.x1];
                        let row = tap.src_row(y) * s.w;
                        let src_row = &src[row + tap.src_col(tap.x0)..=row + tap.src_col(tap.x1 - 1)];
                        for ((acc, &a), &b) in cols.iter_mut().zip(g_row).zip(src_row) {
                            *acc += f64::from(a) * f64::from(b);
                        }
                    }
                    dw[base + t] += cols.iter().sum::<f64>();
                }
            }
        }
    }
    Grads {
        weight: Tensor::from_parts(ws, dw.iter().map(|&v| v as f32).collect()),
        bias: Tensor::from_parts(bias_shape(ws.n), db.iter().map(|&v| v as f32).collect()),
    }
}

fn conv_input_grad(weight: &Tensor, dy: &Tensor, input_shape: Shape) -> Tensor {
    let s = input_shape;
    let ws = weight.shape();
    let k = ws.h;
    let pad = (k - 1) / 2;
    let taps: Vec<_> = (0..k * k)
        .map(|t| conv_tap_range((s.h, s.w), (s.h, s.w), (t / k, t % k), pad))
        .collect();
    let wdata = weight.as_slice();
    let mut out = Vec::with_capacity(s.len());
    let mut acc = vec![0f64; s.w];
    for n in 0..s.n {
        for c in 0..s.c {
            for row_y in 0..s.h {
                acc.fill(0.0);
                for f in 0..ws.n {
                    let g = dy.plane(n, f);
                    let base = (f * ws.c + c) * k * k;
                    for (t, tap) in taps.iter().enumerate() {
                        let Some(tap) = tap else { continue };
                        // output row feeding input row `row_y` through this tap
                        let Some(y) = (row_y + pad).checked_sub(t / k).filter(|y| (tap.y0..tap.y1).contains(y)) else {
                            continue;
                        };
                        let wv = f64::from(wdata[base + t]);
                        let g_row = &g[y * s.w + tap.x0..y * s.w + tap.x1];
                        let dst = &mut acc[tap.src_col(tap.x0)..=tap.src_col(tap.x1 - 1)];
                        for (d, &v) in dst.iter_mut().zip(g_row) {
                            *d += wv * f64::from(v);
                        }
                    }
                }
                out.extend(acc.iter().map(|&v| v as f32));
            }
        }
    }
    Tensor::from_parts(s, out)
}
