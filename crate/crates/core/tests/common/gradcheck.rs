//! Central finite-difference checks of every backward pass against the f64
//! reference forwards in `reference.rs`.

use gwavenet::model::{Network, NetworkConfig, TrainMode};
use gwavenet::nn::{bce_loss, l2_penalty, sigmoid, sigmoid_bce_logit_grad, ForwardCache, Layer, LayerKind, Mode};
use gwavenet::tensor::{Rng, Shape, Tensor};

use super::reference::{self as refr, Dims};

pub const STEP: f64 = 1e-3;

/// Instances per layer kind.
pub const INSTANCES: u64 = 20;

pub fn agrees(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= f64::max(1e-6, 1e-4 * analytic.abs().max(numeric.abs()))
}

pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut v = x.to_vec();
    v[i] = x[i] + STEP;
    let up = f(&v);
    v[i] = x[i] - STEP;
    let down = f(&v);
    (up - down) / (2.0 * STEP)
}

/// Compares every coordinate of `analytic` with the numeric gradient of
/// `f` at `x`; returns the number of coordinates compared.
pub fn compare(what: &str, analytic: &[f32], f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Result<usize, String> {
    if analytic.len() != x.len() {
        return Err(format!("{what}: {} analytic entries for {} inputs", analytic.len(), x.len()));
    }
    for i in 0..x.len() {
        let n = central_diff(f, x, i);
        let a = f64::from(analytic[i]);
        if !agrees(a, n) {
            return Err(format!("{what}[{i}]: analytic {a:e} vs numeric {n:e}"));
        }
    }
    Ok(x.len())
}

fn f64s(t: &[f32]) -> Vec<f64> {
    t.iter().map(|&v| f64::from(v)).collect()
}

fn dims(s: Shape) -> Dims {
    (s.n, s.c, s.h, s.w)
}

fn random(rng: &mut Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    let data = (0..shape.len()).map(|_| rng.range(lo, hi) as f32).collect();
    Tensor::new(shape, data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn upstream(rng: &mut Rng, shape: Shape) -> (Tensor, Vec<f64>) {
    let dy = random(rng, shape, -1.0, 1.0);
    let v = f64s(dy.as_slice());
    (dy, v)
}

pub fn conv(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let (n, c, f) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3));
    let k = [1, 3, 5][rng.below(3)];
    let (h, w) = (1 + rng.below(7), 1 + rng.below(7));
    let x = random(&mut rng, Shape::new(n, c, h, w), -1.0, 1.0);
    let wt = random(&mut rng, Shape::new(f, c, k, k), -1.0, 1.0);
    let b = random(&mut rng, Shape::new(1, 1, 1, f), -1.0, 1.0);
    let layer = Layer::conv(wt.clone(), b.clone()).map_err(|e| e.to_string())?;
    let (_, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, Shape::new(n, f, h, w));
    let (dx, grads) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    let grads = grads.ok_or("conv returned no parameter gradients")?;
    let (xv, wv, bv) = (f64s(x.as_slice()), f64s(wt.as_slice()), f64s(b.as_slice()));
    let (xd, wd) = (dims(x.shape()), dims(wt.shape()));
    let mut count = compare("conv dx", dx.as_slice(), &|p| dot(&g, &refr::conv_same(p, xd, &wv, wd, &bv)), &xv)?;
    count += compare("conv dW", grads.weight.as_slice(), &|p| dot(&g, &refr::conv_same(&xv, xd, p, wd, &bv)), &wv)?;
    count += compare("conv db", grads.bias.as_slice(), &|p| dot(&g, &refr::conv_same(&xv, xd, &wv, wd, p)), &bv)?;
    Ok(count)
}

pub fn dense(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let (n, inputs, outputs) = (1 + rng.below(4), 1 + rng.below(6), 1 + rng.below(5));
    let x = random(&mut rng, Shape::new(n, 1, 1, inputs), -1.0, 1.0);
    let wt = random(&mut rng, Shape::new(1, 1, inputs, outputs), -1.0, 1.0);
    let b = random(&mut rng, Shape::new(1, 1, 1, outputs), -1.0, 1.0);
    let layer = Layer::dense(wt.clone(), b.clone()).map_err(|e| e.to_string())?;
    let (_, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, Shape::new(n, 1, 1, outputs));
    let (dx, grads) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    let grads = grads.ok_or("dense returned no parameter gradients")?;
    let (xv, wv, bv) = (f64s(x.as_slice()), f64s(wt.as_slice()), f64s(b.as_slice()));
    let mut count = compare("dense dx", dx.as_slice(), &|p| dot(&g, &refr::dense(p, n, inputs, &wv, &bv)), &xv)?;
    count += compare("dense dW", grads.weight.as_slice(), &|p| dot(&g, &refr::dense(&xv, n, inputs, p, &bv)), &wv)?;
    count += compare("dense db", grads.bias.as_slice(), &|p| dot(&g, &refr::dense(&xv, n, inputs, &wv, p)), &bv)?;
    Ok(count)
}

pub fn maxpool(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let shape = Shape::new(1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(6), 2 + rng.below(6));
    // distinct values spaced well beyond the finite-difference step
    let mut ranks: Vec<usize> = (0..shape.len()).collect();
    rng.shuffle(&mut ranks);
    let x = Tensor::new(shape, ranks.iter().map(|&r| (r as f64 * 0.01 - 0.5) as f32).collect()).unwrap();
    let layer = Layer::maxpool();
    let (y, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, y.shape());
    let (dx, _) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    let xd = dims(shape);
    compare("maxpool dx", dx.as_slice(), &|p| dot(&g, &refr::maxpool(p, xd).0), &f64s(x.as_slice()))
}

pub fn relu(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let shape = Shape::new(1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(5), 1 + rng.below(5));
    let data = (0..shape.len())
        .map(|_| {
            let m = rng.range(0.05, 1.0);
            (if rng.uniform() < 0.5 { -m } else { m }) as f32
        })
        .collect();
    let x = Tensor::new(shape, data).unwrap();
    let layer = Layer::relu();
    let (_, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, shape);
    let (dx, _) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    compare("relu dx", dx.as_slice(), &|p| dot(&g, &refr::relu(p)), &f64s(x.as_slice()))
}

pub fn dropout(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let rate = rng.range(0.1, 0.7) as f32;
    let shape = Shape::new(1 + rng.below(3), 1, 1, 1 + rng.below(12));
    let x = random(&mut rng, shape, -1.0, 1.0);
    let layer = Layer::dropout(rate).map_err(|e| e.to_string())?;
    let (_, cache) = layer.forward(&x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
    let ForwardCache::Dropout { mask: Some(mask), .. } = &cache else {
        return Err("train-mode dropout cached no mask".into());
    };
    let mask = f64s(mask);
    let (dy, g) = upstream(&mut rng, shape);
    let (dx, _) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    let f = |p: &[f64]| dot(&g, &p.iter().zip(&mask).map(|(a, m)| a * m).collect::<Vec<_>>());
    compare("dropout dx", dx.as_slice(), &f, &f64s(x.as_slice()))
}

pub fn sigmoid_layer(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let shape = Shape::new(1 + rng.below(4), 1, 1, 1);
    let x = random(&mut rng, shape, -5.0, 5.0);
    let layer = Layer::sigmoid();
    let (_, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, shape);
    let (dx, _) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    let f = |p: &[f64]| dot(&g, &p.iter().map(|&z| refr::sigmoid(z)).collect::<Vec<_>>());
    compare("sigmoid dx", dx.as_slice(), &f, &f64s(x.as_slice()))
}

fn labels(rng: &mut Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect()
}

/// The fused logit gradient and the standalone probability gradient of BCE.
pub fn sigmoid_bce(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let n = 1 + rng.below(8);
    let z: Vec<f32> = (0..n).map(|_| rng.range(-4.0, 4.0) as f32).collect();
    let y = labels(&mut rng, n);
    let yv = f64s(&y);
    let p: Vec<f32> = z.iter().map(|&v| sigmoid(v)).collect();
    let fused = sigmoid_bce_logit_grad(&p, &y).map_err(|e| e.to_string())?;
    let mut count = compare("sigmoid+bce dz", &fused, &|zz| refr::sigmoid_bce(zz, &yv), &f64s(&z))?;

    // away from 0 and 1, where the third derivative would swamp the step
    let q: Vec<f32> = (0..n).map(|_| rng.range(0.2, 0.8) as f32).collect();
    let out = bce_loss(&q, &y).map_err(|e| e.to_string())?;
    let bce = |pp: &[f64]| {
        pp.iter().zip(&yv).map(|(&pi, &yi)| -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln())).sum::<f64>() / n as f64
    };
    count += compare("bce dp", &out.grad, &bce, &f64s(&q))?;
    Ok(count)
}

pub fn l2(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let shape = Shape::new(1 + rng.below(3), 1 + rng.below(2), 3, 3);
    let w = random(&mut rng, shape, -1.0, 1.0);
    let lambda = [1e-4f32, 0.01, 0.5][rng.below(3)];
    let (_, grad) = l2_penalty(&w, lambda).map_err(|e| e.to_string())?;
    compare("l2 dW", grad.as_slice(), &|p| refr::l2(p, f64::from(lambda)), &f64s(w.as_slice()))
}

pub fn flatten(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let shape = Shape::new(1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4));
    let x = random(&mut rng, shape, -1.0, 1.0);
    let layer = Layer::flatten();
    let (y, cache) = layer.forward(&x, Mode::Eval, &mut rng).map_err(|e| e.to_string())?;
    let (dy, g) = upstream(&mut rng, y.shape());
    let (dx, _) = layer.backward(&cache, &dy).map_err(|e| e.to_string())?;
    compare("flatten dx", dx.as_slice(), &|p| dot(&g, p), &f64s(x.as_slice()))
}

/// f64 forward of a whole network up to the logits, using `params` (weight
/// then bias of each parameter layer in order) and the dropout masks of a
/// recorded train-mode pass. Also returns the activation pattern (ReLU
/// signs and pool winners) so callers can discard steps that cross a kink.
fn network_ref(net: &Network, params: &[Vec<f64>], x: &[f64], xd: Dims, masks: &[Option<Vec<f64>>]) -> (Vec<f64>, Vec<usize>) {
    let mut cur = x.to_vec();
    let mut d = xd;
    let mut pattern = Vec::new();
    let mut p = 0;
    for (i, layer) in net.layers().iter().enumerate() {
        match &layer.kind {
            LayerKind::Conv { weight, .. } => {
                let wd = dims(weight.shape());
                cur = refr::conv_same(&cur, d, &params[p], wd, &params[p + 1]);
                d = (d.0, wd.0, d.2, d.3);
                p += 2;
            }
            LayerKind::Relu => {
                pattern.extend(cur.iter().map(|&v| usize::from(v > 0.0)));
                cur = refr::relu(&cur);
            }
            LayerKind::MaxPool => {
                let (out, arg) = refr::maxpool(&cur, d);
                pattern.extend(arg);
                cur = out;
                d = (d.0, d.1, d.2 / 2, d.3 / 2);
            }
            LayerKind::Flatten => d = (d.0, 1, 1, d.1 * d.2 * d.3),
            LayerKind::Dense { weight, .. } => {
                let (inputs, outputs) = (weight.shape().h, weight.shape().w);
                cur = refr::dense(&cur, d.0, inputs, &params[p], &params[p + 1]);
                d = (d.0, 1, 1, outputs);
                p += 2;
            }
            LayerKind::Dropout { .. } => {
                if let Some(m) = &masks[i] {
                    cur = cur.iter().zip(m).map(|(a, b)| a * b).collect();
                }
            }
            LayerKind::Sigmoid => break,
        }
    }
    (cur, pattern)
}

fn network_loss(net: &Network, params: &[Vec<f64>], x: &[f64], xd: Dims, masks: &[Option<Vec<f64>>], y: &[f64]) -> (f64, Vec<usize>) {
    let (z, pattern) = network_ref(net, params, x, xd, masks);
    let mut loss = refr::sigmoid_bce(&z, y);
    let mut p = 0;
    for layer in net.layers() {
        if layer.params().is_some() {
            if layer.l2 > 0.0 {
                loss += refr::l2(&params[p], f64::from(layer.l2));
            }
            p += 2;
        }
    }
    (loss, pattern)
}

/// End-to-end check of `backward_from_logits` plus the L2 term on a small
/// network, sampling parameter coordinates of every trainable layer.
pub fn network(seed: u64) -> Result<usize, String> {
    let mut rng = Rng::new(seed);
    let mode = [TrainMode::Trainable, TrainMode::NonTrainable, TrainMode::Kapt, TrainMode::Nckl][rng.below(4)];
    let k = [3, 5, 7, 9][rng.below(4)];
    let mut config = NetworkConfig::new(k, mode).with_conv_filters([2, 2, 2, 2, 2]).with_dense_hidden(3).with_input_size(64);
    // large enough for the penalty to show up in the check
    config.lambda_reg = 0.05;
    let net = Network::build(&config, seed).map_err(|e| e.to_string())?;
    let n = 2;
    // small inputs keep the logits out of the range where f32 clamps the sigmoid
    let x = random(&mut rng, Shape::new(n, 1, 64, 64), -0.01, 0.01);
    let y = vec![1.0f32, 0.0];
    let (p, caches) = net.forward(&x, Mode::Train, &mut rng).map_err(|e| e.to_string())?;
    if p.as_slice().iter().any(|&v| !(1e-4..=1.0 - 1e-4).contains(&v)) {
        return Err(format!("saturated output {:?}; pick smaller inputs", p.as_slice()));
    }
    let masks: Vec<Option<Vec<f64>>> = caches
        .iter()
        .map(|c| match c {
            ForwardCache::Dropout { mask: Some(m), .. } => Some(f64s(m)),
            _ => None,
        })
        .collect();
    let dl = sigmoid_bce_logit_grad(p.as_slice(), &y).map_err(|e| e.to_string())?;
    let grads = net
        .backward_from_logits(&caches, &Tensor::new(Shape::new(n, 1, 1, 1), dl).unwrap())
        .map_err(|e| e.to_string())?;

    let mut params = Vec::new();
    let mut analytic: Vec<Option<Vec<f64>>> = Vec::new();
    for (layer, g) in net.layers().iter().zip(&grads) {
        let Some((w, b)) = layer.params() else { continue };
        params.push(f64s(w.as_slice()));
        params.push(f64s(b.as_slice()));
        match (layer.trainable, g) {
            (true, Some(g)) => {
                let (_, l2g) = l2_penalty(w, layer.l2).map_err(|e| e.to_string())?;
                let gw = g.weight.as_slice().iter().zip(l2g.as_slice()).map(|(a, b)| f64::from(*a) + f64::from(*b)).collect();
                analytic.push(Some(gw));
                analytic.push(Some(f64s(g.bias.as_slice())));
            }
            (false, None) => {
                analytic.push(None);
                analytic.push(None);
            }
            (trainable, g) => return Err(format!("{} layer: trainable={trainable} but gradient present={}", layer.name(), g.is_some())),
        }
    }

    let xv = f64s(x.as_slice());
    let yv = f64s(&y);
    let xd = dims(x.shape());
    let (_, base) = network_loss(&net, &params, &xv, xd, &masks, &yv);
    let mut checked = 0;
    for (t, slot) in analytic.iter().enumerate() {
        let Some(a) = slot else { continue };
        for _ in 0..6 {
            let i = rng.below(a.len());
            let mut probe = params.clone();
            probe[t][i] += STEP;
            let (up, pu) = network_loss(&net, &probe, &xv, xd, &masks, &yv);
            probe[t][i] -= 2.0 * STEP;
            let (down, pd) = network_loss(&net, &probe, &xv, xd, &masks, &yv);
            if pu != base || pd != base {
                continue;
            }
            let num = (up - down) / (2.0 * STEP);
            if !agrees(a[i], num) {
                return Err(format!("network ({mode}, k={k}) param tensor {t}[{i}]: analytic {:e} vs numeric {num:e}", a[i]));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub type Check = fn(u64) -> Result<usize, String>;

pub const LAYER_CHECKS: [(&str, Check); 10] = [
    ("conv", conv),
    ("dense", dense),
    ("maxpool", maxpool),
    ("relu", relu),
    ("dropout", dropout),
    ("sigmoid", sigmoid_layer),
    ("sigmoid+bce", sigmoid_bce),
    ("l2", l2),
    ("flatten", flatten),
    ("network", network),
];

/// Runs every check on `INSTANCES` seeds; returns per-kind coordinate
/// counts or the first failure.
pub fn run_all() -> Result<Vec<(&'static str, usize)>, String> {
    let mut out = Vec::new();
    for (name, check) in LAYER_CHECKS {
        let mut total = 0;
        for seed in 0..INSTANCES {
            total += check(1000 + seed).map_err(|e| format!("{name} seed {seed}: {e}"))?;
        }
        out.push((name, total));
    }
    Ok(out)
}
