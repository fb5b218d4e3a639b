use super::{ensure_finite, Matrix, Shape, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Spatial padding for [`conv2d`]. Stride is always 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2`; output keeps the input's height and width.
    Same,
    /// No padding; output is `(h - k + 1) x (w - k + 1)`.
    Valid,
}

impl Padding {
    pub(crate) fn amount(self, k: usize) -> usize {
        match self {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
        }
    }
}

/// Output rows/columns touched by one kernel tap, and the offset from an
/// output coordinate to the input coordinate it reads.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TapRange {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
    pub dy: isize,
    pub dx: isize,
}

impl TapRange {
    #[inline]
    pub fn src_row(&self, y: usize) -> usize {
        (y as isize + self.dy) as usize
    }

    #[inline]
    pub fn src_col(&self, x: usize) -> usize {
        (x as isize + self.dx) as usize
    }
}

/// Range of valid output positions for tap `(ky, kx)`, or `None` when the
/// tap never overlaps the input.
pub(crate) fn conv_tap_range(
    in_hw: (usize, usize),
    out_hw: (usize, usize),
    tap: (usize, usize),
    pad: usize,
) -> Option<TapRange> {
    let dy = tap.0 as isize - pad as isize;
    let dx = tap.1 as isize - pad as isize;
    let span = |d: isize, input: usize, output: usize| {
        let lo = (-d).max(0) as usize;
        let hi = (input as isize - d).clamp(0, output as isize) as usize;
        (lo, hi)
    };
    let (y0, y1) = span(dy, in_hw.0, out_hw.0);
    let (x0, x1) = span(dx, in_hw.1, out_hw.1);
    (y0 < y1 && x0 < x1).then_some(TapRange { y0, y1, x0, x1, dy, dx })
}

pub(crate) fn conv_output_hw(
    input: Shape,
    weights: Shape,
    bias_len: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if weights.h != weights.w {
        return shape_err(format!("kernel must be square, got {}x{}", weights.h, weights.w));
    }
    let k = weights.h;
    if k % 2 == 0 {
        return invalid(format!("kernel side must be odd, got {k}"));
    }
    if weights.c != input.c {
        return shape_err(format!(
            "weight channels {} do not match input channels {}",
            weights.c, input.c
        ));
    }
    if bias_len != weights.n {
        return shape_err(format!("bias length {bias_len} does not match {} filters", weights.n));
    }
    match padding {
        Padding::Same => Ok((input.h, input.w)),
        Padding::Valid => {
            if k > input.h || k > input.w {
                return shape_err(format!(
                    "kernel {k}x{k} larger than input {}x{} in valid mode",
                    input.h, input.w
                ));
            }
            Ok((input.h - k + 1, input.w - k + 1))
        }
    }
}

/// 2-D cross-correlation (no kernel flip) with stride 1.
///
/// `input` is `[n, c, h, w]`, `weights` is `[f, c, k, k]` with `k` odd and
/// `bias` has one entry per filter. Each output plane is accumulated in
/// `f64` in `(channel, ky, kx)` order, then the bias is added and the sum
/// rounded to `f32`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &[f32], padding: Padding) -> Result<Tensor> {
    let s = input.shape();
    let ws = weights.shape();
    let (out_h, out_w) = conv_output_hw(s, ws, bias.len(), padding)?;
    let k = ws.h;
    let pad = padding.amount(k);
    let taps: Vec<Option<TapRange>> = (0..k * k)
        .map(|t| conv_tap_range((s.h, s.w), (out_h, out_w), (t / k, t % k), pad))
        .collect();

    let mut out = Vec::with_capacity(s.n * ws.n * out_h * out_w);
    // one output row at a time keeps the accumulator in cache; the order of
    // additions per output element is still (channel, ky, kx)
    let mut acc = vec![0f64; out_w];
    let wdata = weights.as_slice();
    for n in 0..s.n {
        for f in 0..ws.n {
            let b = f64::from(bias[f]);
            for y in 0..out_h {
                acc.fill(0.0);
                for c in 0..s.c {
                    let src = input.plane(n, c);
                    let kernel = &wdata[(f * ws.c + c) * k * k..(f * ws.c + c + 1) * k * k];
                    for (t, tap) in taps.iter().enumerate() {
                        let Some(tap) = tap else { continue };
                        if y < tap.y0 || y >= tap.y1 {
                            continue;
                        }
                        let wv = f64::from(kernel[t]);
                        let row = tap.src_row(y) * s.w;
                        let src_seg = &src[row + tap.src_col(tap.x0)..=row + tap.src_col(tap.x1 - 1)];
                        for (d, &v) in acc[tap.x0..tap.x1].iter_mut().zip(src_seg) {
                            *d += wv * f64::from(v);
                        }
                    }
                }
                out.extend(acc.iter().map(|&a| (a + b) as f32));
            }
        }
    }
    ensure_finite(&out)?;
    Ok(Tensor::from_parts(Shape::new(s.n, ws.n, out_h, out_w), out))
}

/// Result of [`maxpool2`]: pooled values plus, for every output cell, the
/// flat index into the input tensor of the winning element.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Trailing odd rows/columns are dropped and
/// ties resolve to the smallest flat index.
pub fn maxpool2(input: &Tensor) -> Result<Pooled> {
    let s = input.shape();
    if s.h < 2 || s.w < 2 {
        return shape_err(format!("maxpool2 needs h, w >= 2, got {}x{}", s.h, s.w));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let data = input.as_slice();
    let mut output = Vec::with_capacity(s.n * s.c * oh * ow);
    let mut argmax = Vec::with_capacity(output.capacity());
    for plane in 0..s.n * s.c {
        let base = plane * s.h * s.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * s.w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + s.w, top + s.w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                output.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled { output: Tensor::from_parts(Shape::new(s.n, s.c, oh, ow), output), argmax })
}

/// Matrix product with `f64` accumulation, summed left to right over the
/// inner dimension.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return shape_err(format!(
            "matmul inner dimensions differ: {}x{} * {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ));
    }
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let mut out = Vec::with_capacity(m * p);
    let mut acc = vec![0f64; p];
    for i in 0..m {
        acc.fill(0.0);
        for kk in 0..k {
            let av = f64::from(ad[i * k + kk]);
            for (dst, &bv) in acc.iter_mut().zip(&bd[kk * p..(kk + 1) * p]) {
                *dst += av * f64::from(bv);
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    ensure_finite(&out)?;
    Ok(Matrix::from_parts(m, p, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::checkerboard;
    use crate::tensor::{random_fill, Init, Rng};

    /// Six nested loops, zero padding handled by bounds checks.
    fn reference_conv(input: &Tensor, weights: &Tensor, bias: &[f32], padding: Padding) -> Vec<f64> {
        let s = input.shape();
        let ws = weights.shape();
        let k = ws.h as isize;
        let pad = if padding == Padding::Same { (k - 1) / 2 } else { 0 };
        let oh = s.h as isize + 2 * pad - k + 1;
        let ow = s.w as isize + 2 * pad - k + 1;
        let mut out = Vec::new();
        for n in 0..s.n {
            for f in 0..ws.n {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut sum = f64::from(bias[f]);
                        for c in 0..s.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = y + ky - pad;
                                    let ix = x + kx - pad;
                                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                        continue;
                                    }
                                    sum += f64::from(weights.get(f, c, ky as usize, kx as usize))
                                        * f64::from(input.get(n, c, iy as usize, ix as usize));
                                }
                            }
                        }
                        out.push(sum);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scaling_identity_valid() {
        let x = Tensor::new(Shape::new(1, 1, 2, 2), vec![1., 2., 3., 4.]).unwrap();
        let w = Tensor::new(Shape::new(1, 1, 1, 1), vec![2.]).unwrap();
        let y = conv2d(&x, &w, &[0.], Padding::Valid).unwrap();
        assert_eq!(y.as_slice(), &[2., 4., 6., 8.]);
    }

    #[test]
    fn checkerboard_on_ones_counts_ones() {
        let x = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0).unwrap();
        let w = checkerboard(3).unwrap().to_kernel_tensor();
        let y = conv2d(&x, &w, &[0.], Padding::Valid).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(y.as_slice(), &[5.0]);
    }

    #[test]
    fn same_mode_matches_nested_loops() {
        let mut rng = Rng::new(11);
        let x = random_fill(&mut rng, Shape::new(1, 2, 8, 8), Init::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let w = random_fill(&mut rng, Shape::new(3, 2, 3, 3), Init::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let b = [0.1, -0.2, 0.3];
        let y = conv2d(&x, &w, &b, Padding::Same).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 8, 8));
        for (got, want) in y.as_slice().iter().zip(reference_conv(&x, &w, &b, Padding::Same)) {
            assert!((f64::from(*got) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_even_and_mismatched_kernels() {
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4)).unwrap();
        let even = Tensor::zeros(Shape::new(1, 1, 2, 2)).unwrap();
        assert!(conv2d(&x, &even, &[0.], Padding::Same).is_err());
        let wrong_c = Tensor::zeros(Shape::new(1, 2, 3, 3)).unwrap();
        assert!(conv2d(&x, &wrong_c, &[0.], Padding::Same).is_err());
        let big = Tensor::zeros(Shape::new(1, 1, 5, 5)).unwrap();
        assert!(conv2d(&x, &big, &[0.], Padding::Valid).is_err());
        let ok = Tensor::zeros(Shape::new(2, 1, 3, 3)).unwrap();
        assert!(conv2d(&x, &ok, &[0.], Padding::Same).is_err());
    }

    #[test]
    fn pool_picks_max_and_argmax() {
        let x = Tensor::new(Shape::new(1, 1, 2, 2), vec![1., 2., 3., 4.]).unwrap();
        let p = maxpool2(&x).unwrap();
        assert_eq!(p.output.as_slice(), &[4.]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn pool_floor_and_ties() {
        let x = Tensor::zeros(Shape::new(1, 1, 5, 5)).unwrap();
        let p = maxpool2(&x).unwrap();
        assert_eq!(p.output.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(p.argmax, vec![0, 2, 10, 12]);
        assert!(maxpool2(&Tensor::zeros(Shape::new(1, 1, 1, 4)).unwrap()).is_err());
    }

    #[test]
    fn pool_dominates_its_window() {
        let mut rng = Rng::new(3);
        let x = random_fill(&mut rng, Shape::new(1, 1, 6, 6), Init::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let p = maxpool2(&x).unwrap();
        for oy in 0..3 {
            for ox in 0..3 {
                let v = p.output.get(0, 0, oy, ox);
                for dy in 0..2 {
                    for dx in 0..2 {
                        assert!(v >= x.get(0, 0, 2 * oy + dy, 2 * ox + dx));
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_small_cases() {
        let m = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f32).unwrap();
        assert_eq!(matmul(&Matrix::identity(3).unwrap(), &m).unwrap(), m);
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[11.0]);
        assert!(matmul(&a, &a).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(5);
        let a = Matrix::new(4, 5, (0..20).map(|_| rng.uniform() as f32 * 2.0 - 1.0).collect()).unwrap();
        let b = Matrix::new(5, 3, (0..15).map(|_| rng.uniform() as f32 * 2.0 - 1.0).collect()).unwrap();
        let got = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0f64;
                for k in 0..5 {
                    s += f64::from(a.get(i, k)) * f64::from(b.get(k, j));
                }
                assert!((f64::from(got.get(i, j)) - s).abs() < 1e-6);
            }
        }
    }
}
