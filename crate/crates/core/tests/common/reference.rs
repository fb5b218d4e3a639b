//! Plain f64 nested-loop versions of every layer, written without reference
//! to the library internals. Shapes are `(n, c, h, w)` tuples.

pub type Dims = (usize, usize, usize, usize);

pub fn conv_same(x: &[f64], xd: Dims, w: &[f64], wd: Dims, b: &[f64]) -> Vec<f64> {
    let (n, c, h, wid) = xd;
    let (f, wc, k, _) = wd;
    assert_eq!(c, wc);
    let p = (k / 2) as isize;
    let mut out = vec![0.0; n * f * h * wid];
    for s in 0..n {
        for o in 0..f {
            for y in 0..h {
                for xx in 0..wid {
                    let mut acc = b[o];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - p;
                                let ix = xx as isize + kx as isize - p;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wid as isize {
                                    continue;
                                }
                                acc += w[((o * c + ch) * k + ky) * k + kx]
                                    * x[((s * c + ch) * h + iy as usize) * wid + ix as usize];
                            }
                        }
                    }
                    out[((s * f + o) * h + y) * wid + xx] = acc;
                }
            }
        }
    }
    out
}

/// `x: [n, inputs]`, `w: [inputs, outputs]` row-major.
pub fn dense(x: &[f64], n: usize, inputs: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let outputs = b.len();
    let mut out = vec![0.0; n * outputs];
    for s in 0..n {
        for o in 0..outputs {
            let mut acc = b[o];
            for i in 0..inputs {
                acc += x[s * inputs + i] * w[i * outputs + o];
            }
            out[s * outputs + o] = acc;
        }
    }
    out
}

/// 2x2 max pool with floor semantics; also returns the winning flat index
/// of each window (first maximum in row-major order).
pub fn maxpool(x: &[f64], xd: Dims) -> (Vec<f64>, Vec<usize>) {
    let (n, c, h, w) = xd;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for s in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((s * c + ch) * h + 2 * y + dy) * w + 2 * xx + dx;
                        if best == usize::MAX || x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy of `sigmoid(z)` against 0/1 targets, in the
/// overflow-free form `max(z, 0) - z y + ln(1 + e^-|z|)`.
pub fn sigmoid_bce(z: &[f64], y: &[f64]) -> f64 {
    let n = z.len() as f64;
    z.iter()
        .zip(y)
        .map(|(&zi, &yi)| zi.max(0.0) - zi * yi + (-zi.abs()).exp().ln_1p())
        .sum::<f64>()
        / n
}

pub fn l2(w: &[f64], lambda: f64) -> f64 {
    lambda * w.iter().map(|v| v * v).sum::<f64>()
}
