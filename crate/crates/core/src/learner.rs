//! The desk-scale SSL engine: a small MLP feature extractor with an
//! instance-level head and a cluster-level head, cross-entropy losses
//! (soft instance targets, hard cluster targets, confidence-threshold
//! consistency on weak/strong views), and SGD with momentum. Everything is
//! f64 and written so that central finite differences can verify every
//! gradient.

use std::path::Path;

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentationSpec, Strength};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::sampling::argmax_lowest;

/// Dense layer, `w` row-major with shape out_dim x in_dim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Xavier-uniform initialization.
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
            .collect();
        Linear {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    /// y = W x + b for a whole batch.
    fn forward(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols(), self.in_dim);
        let mut out = Mat::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            let row = x.row(r);
            let dst = out.row_mut(r);
            for o in 0..self.out_dim {
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                dst[o] = self.b[o] + wrow.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        out
    }

    /// Accumulates dW += dOut^T . input, db += column sums of dOut, and
    /// returns dInput = dOut . W.
    fn backward(&self, input: &Mat, d_out: &Mat, grad: &mut LinearGrad) -> Mat {
        let batch = input.rows();
        let mut d_in = Mat::zeros(batch, self.in_dim);
        for r in 0..batch {
            let x = input.row(r);
            let dz = d_out.row(r);
            let di = d_in.row_mut(r);
            for o in 0..self.out_dim {
                let g = dz[o];
                if g == 0.0 {
                    continue;
                }
                grad.b[o] += g;
                let wrow = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                let grow = &mut grad.w[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    grow[i] += g * x[i];
                    di[i] += g * wrow[i];
                }
            }
        }
        d_in
    }
}

/// Gradient (or momentum) storage for one layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearGrad {
    fn zeros_like(layer: &Linear) -> Self {
        LinearGrad {
            w: vec![0.0; layer.w.len()],
            b: vec![0.0; layer.b.len()],
        }
    }
}

/// Gradients for every parameter block of the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gradients {
    pub extractor: Vec<LinearGrad>,
    pub ins_head: LinearGrad,
    pub clu_head: LinearGrad,
}

impl Gradients {
    pub fn zeros_like(model: &ModelState) -> Self {
        Gradients {
            extractor: model.extractor.iter().map(LinearGrad::zeros_like).collect(),
            ins_head: LinearGrad::zeros_like(&model.ins_head),
            clu_head: LinearGrad::zeros_like(&model.clu_head),
        }
    }

    /// Elementwise accumulate.
    pub fn add(&mut self, other: &Gradients) {
        let add_block = |a: &mut LinearGrad, b: &LinearGrad| {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        };
        for (a, b) in self.extractor.iter_mut().zip(&other.extractor) {
            add_block(a, b);
        }
        add_block(&mut self.ins_head, &other.ins_head);
        add_block(&mut self.clu_head, &other.clu_head);
    }

    fn blocks(&self) -> Vec<(String, &LinearGrad)> {
        let mut out: Vec<(String, &LinearGrad)> = self
            .extractor
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("extractor layer {i}"), g))
            .collect();
        out.push(("instance head".into(), &self.ins_head));
        out.push(("cluster head".into(), &self.clu_head));
        out
    }

    /// Flat view in canonical block order (w then b per block), matching
    /// [`ModelState::get_param`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, g) in self.blocks() {
            out.extend_from_slice(&g.w);
            out.extend_from_slice(&g.b);
        }
        out
    }
}

/// Parameters of the extractor F plus the two heads, with per-parameter
/// momentum buffers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_l: usize,
    pub k: usize,
    /// Three layers: input -> hidden, hidden -> hidden, hidden -> embed.
    pub extractor: Vec<Linear>,
    /// embed -> n_l instance-level head.
    pub ins_head: Linear,
    /// embed -> k cluster-level head.
    pub clu_head: Linear,
    velocity: Gradients,
    pub step: u64,
}

struct ForwardCache {
    input: Mat,
    act1: Mat,
    act2: Mat,
    emb: Mat,
}

impl ModelState {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        n_l: usize,
        k: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = vec![
            Linear::new(input_dim, hidden_dim, &mut rng),
            Linear::new(hidden_dim, hidden_dim, &mut rng),
            Linear::new(hidden_dim, embed_dim, &mut rng),
        ];
        let ins_head = Linear::new(embed_dim, n_l, &mut rng);
        let clu_head = Linear::new(embed_dim, k, &mut rng);
        let velocity = Gradients {
            extractor: extractor.iter().map(LinearGrad::zeros_like).collect(),
            ins_head: LinearGrad::zeros_like(&ins_head),
            clu_head: LinearGrad::zeros_like(&clu_head),
        };
        ModelState {
            input_dim,
            hidden_dim,
            embed_dim,
            n_l,
            k,
            extractor,
            ins_head,
            clu_head,
            velocity,
            step: 0,
        }
    }

    /// A model with every weight and bias at zero (tests and edge cases).
    pub fn zeroed(input_dim: usize, hidden_dim: usize, embed_dim: usize, n_l: usize, k: usize) -> Self {
        let mut m = Self::new(input_dim, hidden_dim, embed_dim, n_l, k, 0);
        m.extractor = vec![
            Linear::zeros(input_dim, hidden_dim),
            Linear::zeros(hidden_dim, hidden_dim),
            Linear::zeros(hidden_dim, embed_dim),
        ];
        m.ins_head = Linear::zeros(embed_dim, n_l);
        m.clu_head = Linear::zeros(embed_dim, k);
        m
    }

    fn forward_extractor(&self, x: &Mat) -> Result<ForwardCache> {
        if x.cols() != self.input_dim {
            return Err(Error::DimMismatch(format!(
                "input width {} != model input_dim {}",
                x.cols(),
                self.input_dim
            )));
        }
        let act1 = self.extractor[0].forward(x).map(f64::tanh);
        let act2 = self.extractor[1].forward(&act1).map(f64::tanh);
        let emb = self.extractor[2].forward(&act2);
        Ok(ForwardCache {
            input: x.clone(),
            act1,
            act2,
            emb,
        })
    }

    /// Backpropagates d(loss)/d(embedding) through the extractor.
    fn backward_extractor(&self, cache: &ForwardCache, d_emb: &Mat, grads: &mut Gradients) {
        let d_act2 = self.extractor[2].backward(&cache.act2, d_emb, &mut grads.extractor[2]);
        let d_pre2 = tanh_backward(&d_act2, &cache.act2);
        let d_act1 = self.extractor[1].backward(&cache.act1, &d_pre2, &mut grads.extractor[1]);
        let d_pre1 = tanh_backward(&d_act1, &cache.act1);
        self.extractor[0].backward(&cache.input, &d_pre1, &mut grads.extractor[0]);
    }

    /// Embeddings F(x) for a batch.
    pub fn features(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward_extractor(x)?.emb)
    }

    /// Instance-head logits.
    pub fn instance_logits(&self, x: &Mat) -> Result<Mat> {
        Ok(self.ins_head.forward(&self.forward_extractor(x)?.emb))
    }

    /// Cluster-head logits.
    pub fn cluster_logits(&self, x: &Mat) -> Result<Mat> {
        Ok(self.clu_head.forward(&self.forward_extractor(x)?.emb))
    }

    /// Hard cluster assignments: argmax over the cluster head, ties toward
    /// the lowest index.
    pub fn predict_clusters(&self, x: &Mat) -> Result<Vec<usize>> {
        Ok(self
            .cluster_logits(x)?
            .iter_rows()
            .map(argmax_lowest)
            .collect())
    }

    /// Hard instance-level predictions: argmax over the instance head.
    pub fn predict_instances(&self, x: &Mat) -> Result<Vec<usize>> {
        Ok(self
            .instance_logits(x)?
            .iter_rows()
            .map(argmax_lowest)
            .collect())
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks()
            .iter()
            .map(|(_, l)| l.w.len() + l.b.len())
            .sum()
    }

    fn param_blocks(&self) -> Vec<(String, &Linear)> {
        let mut out: Vec<(String, &Linear)> = self
            .extractor
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("extractor layer {i}"), l))
            .collect();
        out.push(("instance head".into(), &self.ins_head));
        out.push(("cluster head".into(), &self.clu_head));
        out
    }

    /// Flat parameter access in canonical block order, for gradient checks.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for (_, l) in self.param_blocks() {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        let mut blocks: Vec<&mut Linear> = self.extractor.iter_mut().collect();
        blocks.push(&mut self.ins_head);
        blocks.push(&mut self.clu_head);
        for l in blocks {
            if idx < l.w.len() {
                l.w[idx] = value;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = value;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }
}

fn tanh_backward(d_act: &Mat, act: &Mat) -> Mat {
    let mut out = d_act.clone();
    for (d, a) in out.as_mut_slice().iter_mut().zip(act.as_slice()) {
        *d *= 1.0 - a * a;
    }
    out
}

/// Log-sum-exp over a logit row.
fn lse(row: &[f64]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let l = lse(row);
    row.iter().map(|&z| (z - l).exp()).collect()
}

/// Soft cross-entropy on the instance head: mean over the batch of
/// `H(softmax(G_ins(F(x))), y)`. Targets must be row-stochastic.
pub fn loss_instance(model: &ModelState, x: &Mat, y_soft: &Mat) -> Result<(f64, Gradients)> {
    let batch = x.rows();
    if y_soft.rows() != batch || y_soft.cols() != model.n_l {
        return Err(Error::DimMismatch(format!(
            "targets are {}x{}, expected {}x{}",
            y_soft.rows(),
            y_soft.cols(),
            batch,
            model.n_l
        )));
    }
    for (i, row) in y_soft.iter_rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(
                "y_soft",
                format!("target row {i} is not a probability vector (sum = {sum})"),
            ));
        }
    }

    let cache = model.forward_extractor(x)?;
    let logits = model.ins_head.forward(&cache.emb);
    let mut grads = Gradients::zeros_like(model);
    let mut d_logits = Mat::zeros(batch, model.n_l);
    let mut loss = 0.0;
    let inv_b = 1.0 / batch as f64;
    for r in 0..batch {
        let z = logits.row(r);
        let y = y_soft.row(r);
        let l = lse(z);
        loss += inv_b * (l - z.iter().zip(y).map(|(zi, yi)| zi * yi).sum::<f64>());
        let dz = d_logits.row_mut(r);
        for j in 0..model.n_l {
            dz[j] = ((z[j] - l).exp() - y[j]) * inv_b;
        }
    }
    let d_emb = model.ins_head.backward(&cache.emb, &d_logits, &mut grads.ins_head);
    model.backward_extractor(&cache, &d_emb, &mut grads);
    Ok((loss, grads))
}

/// Standard cross-entropy on the cluster head with hard labels.
pub fn loss_supervised(model: &ModelState, x: &Mat, labels: &[usize]) -> Result<(f64, Gradients)> {
    let batch = x.rows();
    if labels.len() != batch {
        return Err(Error::DimMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.k) {
        return Err(Error::invalid(
            "labels",
            format!("cluster label {bad} out of range (k = {})", model.k),
        ));
    }

    let cache = model.forward_extractor(x)?;
    let logits = model.clu_head.forward(&cache.emb);
    let mut grads = Gradients::zeros_like(model);
    let mut d_logits = Mat::zeros(batch, model.k);
    let mut loss = 0.0;
    let inv_b = 1.0 / batch as f64;
    for r in 0..batch {
        let z = logits.row(r);
        let l = lse(z);
        loss += inv_b * (l - z[labels[r]]);
        let dz = d_logits.row_mut(r);
        for j in 0..model.k {
            dz[j] = ((z[j] - l).exp() - if j == labels[r] { 1.0 } else { 0.0 }) * inv_b;
        }
    }
    let d_emb = model.clu_head.backward(&cache.emb, &d_logits, &mut grads.clu_head);
    model.backward_extractor(&cache, &d_emb, &mut grads);
    Ok((loss, grads))
}

/// Confidence-threshold consistency on the cluster head: the weak view
/// proposes a hard pseudo-label when its top probability reaches `tau`; the
/// strong view is trained toward it. Gradients flow only through the strong
/// view. Returns (loss, gradients, confident fraction).
pub fn loss_unsupervised(
    model: &ModelState,
    x_u: &Mat,
    aug: &AugmentationSpec,
    tau: f64,
    seed: u64,
) -> Result<(f64, Gradients, f64)> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("tau", format!("need 0 < tau < 1, got {tau}")));
    }
    aug.validate()?;
    let batch = x_u.rows();
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);

    let mut weak = Mat::zeros(batch, x_u.cols());
    let mut strong = Mat::zeros(batch, x_u.cols());
    for r in 0..batch {
        let ws = seed_rng.next_u64();
        let ss = seed_rng.next_u64();
        weak.row_mut(r).copy_from_slice(&augment(x_u.row(r), aug, Strength::Weak, ws));
        strong
            .row_mut(r)
            .copy_from_slice(&augment(x_u.row(r), aug, Strength::Strong, ss));
    }

    // Weak view: pseudo-labels, no gradient.
    let weak_logits = model.cluster_logits(&weak)?;
    let mut pseudo = Vec::with_capacity(batch);
    let mut confident = Vec::with_capacity(batch);
    for row in weak_logits.iter_rows() {
        let probs = softmax(row);
        let j = argmax_lowest(&probs);
        confident.push(probs[j] >= tau);
        pseudo.push(j);
    }
    let n_conf = confident.iter().filter(|&&c| c).count();
    let mask_rate = n_conf as f64 / batch as f64;
    if n_conf == 0 {
        return Ok((0.0, Gradients::zeros_like(model), 0.0));
    }

    // Strong view: cross-entropy toward the pseudo-labels, confident rows only.
    let cache = model.forward_extractor(&strong)?;
    let logits = model.clu_head.forward(&cache.emb);
    let mut grads = Gradients::zeros_like(model);
    let mut d_logits = Mat::zeros(batch, model.k);
    let mut loss = 0.0;
    let inv_c = 1.0 / n_conf as f64;
    for r in 0..batch {
        if !confident[r] {
            continue;
        }
        let z = logits.row(r);
        let l = lse(z);
        loss += inv_c * (l - z[pseudo[r]]);
        let dz = d_logits.row_mut(r);
        for j in 0..model.k {
            dz[j] = ((z[j] - l).exp() - if j == pseudo[r] { 1.0 } else { 0.0 }) * inv_c;
        }
    }
    let d_emb = model.clu_head.backward(&cache.emb, &d_logits, &mut grads.clu_head);
    model.backward_extractor(&cache, &d_emb, &mut grads);
    Ok((loss, grads, mask_rate))
}

/// SGD with momentum: `v <- momentum v + g; p <- p - lr v` for every
/// parameter. Rejects non-finite gradients, naming the parameter block.
pub fn step(model: &mut ModelState, grads: &Gradients, lr: f64, momentum: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::invalid("lr", format!("need lr > 0, got {lr}")));
    }
    for (name, g) in grads.blocks() {
        if g.w.iter().chain(&g.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient for {name}")));
        }
    }

    fn update_slice(p: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, momentum: f64) {
        for ((p, g), v) in p.iter_mut().zip(g).zip(v) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
    for i in 0..model.extractor.len() {
        let layer = &mut model.extractor[i];
        let vel = &mut model.velocity.extractor[i];
        update_slice(&mut layer.w, &grads.extractor[i].w, &mut vel.w, lr, momentum);
        update_slice(&mut layer.b, &grads.extractor[i].b, &mut vel.b, lr, momentum);
    }
    update_slice(&mut model.ins_head.w, &grads.ins_head.w, &mut model.velocity.ins_head.w, lr, momentum);
    update_slice(&mut model.ins_head.b, &grads.ins_head.b, &mut model.velocity.ins_head.b, lr, momentum);
    update_slice(&mut model.clu_head.w, &grads.clu_head.w, &mut model.velocity.clu_head.w, lr, momentum);
    update_slice(&mut model.clu_head.b, &grads.clu_head.b, &mut model.velocity.clu_head.b, lr, momentum);
    model.step += 1;

    for (name, l) in model.param_blocks() {
        if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameters of {name} after step")));
        }
    }
    Ok(())
}

/// Per-iteration loss decomposition. `total` is the plain sum of the three
/// terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossReport {
    pub l_ins: f64,
    pub l_sup: f64,
    pub l_unsup: f64,
    pub total: f64,
    pub unsup_mask_rate: f64,
}

impl LossReport {
    pub fn new(l_ins: f64, l_sup: f64, l_unsup: f64, unsup_mask_rate: f64) -> Self {
        LossReport {
            l_ins,
            l_sup,
            l_unsup,
            total: l_ins + l_sup + l_unsup,
            unsup_mask_rate,
        }
    }
}

/// Writes the model (parameters, momentum buffers, step counter) as JSON:
/// named blocks of arrays.
pub fn save_checkpoint(model: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string(model)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a checkpoint and validates the declared widths against the stored
/// arrays.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let text = std::fs::read_to_string(path)?;
    let model: ModelState = serde_json::from_str(&text)?;
    let check = |name: &str, l: &Linear, in_dim: usize, out_dim: usize| -> Result<()> {
        if l.in_dim != in_dim || l.out_dim != out_dim || l.w.len() != in_dim * out_dim || l.b.len() != out_dim {
            return Err(Error::DimMismatch(format!(
                "checkpoint block `{name}` has inconsistent shape"
            )));
        }
        Ok(())
    };
    if model.extractor.len() != 3 {
        return Err(Error::DimMismatch("checkpoint extractor must have 3 layers".into()));
    }
    check("extractor.0", &model.extractor[0], model.input_dim, model.hidden_dim)?;
    check("extractor.1", &model.extractor[1], model.hidden_dim, model.hidden_dim)?;
    check("extractor.2", &model.extractor[2], model.hidden_dim, model.embed_dim)?;
    check("ins_head", &model.ins_head, model.embed_dim, model.n_l)?;
    check("clu_head", &model.clu_head, model.embed_dim, model.k)?;
    Ok(model)
}
