//! Small double-precision model for checking the combined training objective.
//!
//! A shared trunk maps conditioning features to a hidden vector `h`. Two
//! heads read it:
//!
//! * a language head, trained with teacher-forced cross-entropy over the
//!   language-action vocabulary: `g_j = tanh(h + E[prev_j])`,
//!   `logits_j = W_o g_j + b_o`;
//! * a flow head predicting a velocity from `[sg(h), x_τ, τ]` through two
//!   tanh layers.
//!
//! `sg` is a stop-gradient: the flow loss never reaches trunk parameters, so
//! the trunk is trained by the language loss alone (knowledge insulation).
//! The combined loss is `L = L_FM + λ·L_CE`.

mod train;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub use train::{
    train_toy, MetricsRecord, ToyConfig, ToyTask, TrainError, TrainOutcome, MAX_PARAMS,
};

/// `x_τ = (1 − τ)·z + τ·a`, elementwise.
pub fn interpolate(z: &[f64], a: &[f64], tau: f64) -> Vec<f64> {
    z.iter()
        .zip(a)
        .map(|(z, a)| (1.0 - tau) * z + tau * a)
        .collect()
}

/// Fixed-step explicit Euler integration of `dx/dτ = v(x, τ)` from τ = 0 to 1,
/// evaluating the field at `τ_k = k / steps`.
pub fn euler_integrate(
    z: &[f64],
    steps: usize,
    field: impl FnMut(&[f64], f64) -> Vec<f64>,
) -> Vec<f64> {
    euler_path(z, steps, field).pop().unwrap_or_default()
}

/// Like [`euler_integrate`] but returns every state, starting with `z`.
pub fn euler_path(
    z: &[f64],
    steps: usize,
    mut field: impl FnMut(&[f64], f64) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let steps = steps.max(1);
    let dt = 1.0 / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = z.to_vec();
    path.push(x.clone());
    for k in 0..steps {
        let v = field(&x, k as f64 / steps as f64);
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        path.push(x.clone());
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyDims {
    pub cond: usize,
    pub hidden: usize,
    pub vocab: usize,
    pub action: usize,
    pub flow_hidden: usize,
}

impl ToyDims {
    fn flow_input(&self) -> usize {
        self.hidden + self.action + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Trunk,
    LanguageHead,
    FlowHead,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    w1: Range<usize>,
    b1: Range<usize>,
    emb: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    w4: Range<usize>,
    b4: Range<usize>,
    w3: Range<usize>,
    b3: Range<usize>,
}

impl Layout {
    fn new(d: &ToyDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Self {
            w1: take(d.hidden * d.cond),
            b1: take(d.hidden),
            // One extra embedding row is unused so token ids index directly.
            emb: take(d.vocab * d.hidden),
            wo: take(d.vocab * d.hidden),
            bo: take(d.vocab),
            w2: take(d.flow_hidden * d.flow_input()),
            b2: take(d.flow_hidden),
            w4: take(d.flow_hidden * d.flow_hidden),
            b4: take(d.flow_hidden),
            w3: take(d.action * d.flow_hidden),
            b3: take(d.action),
        }
    }

    fn len(&self) -> usize {
        self.b3.end
    }

    fn trunk(&self) -> Range<usize> {
        self.w1.start..self.b1.end
    }

    fn language(&self) -> Range<usize> {
        self.emb.start..self.bo.end
    }

    fn flow(&self) -> Range<usize> {
        self.w2.start..self.b3.end
    }
}

/// One training batch. Token sequences are targets only; the first input
/// token is always `<bos>` and each later input is the previous target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowBatch {
    pub cond: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub lang_targets: Vec<Vec<usize>>,
}

impl FlowBatch {
    pub fn len(&self) -> usize {
        self.cond.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cond.is_empty()
    }

    pub fn is_consistent(&self, dims: &ToyDims) -> bool {
        let n = self.cond.len();
        self.actions.len() == n
            && self.noise.len() == n
            && self.tau.len() == n
            && self.lang_targets.len() == n
            && self.cond.iter().all(|c| c.len() == dims.cond)
            && self.actions.iter().all(|a| a.len() == dims.action)
            && self.noise.iter().all(|z| z.len() == dims.action)
            && self.lang_targets.iter().flatten().all(|&t| t < dims.vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub fm: f64,
    pub ce: f64,
    pub combined: f64,
}

/// Relative weights of the two terms during backpropagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub fm: f64,
    pub ce: f64,
}

impl LossWeights {
    pub fn combined(lambda: f64) -> Self {
        Self {
            fm: 1.0,
            ce: lambda,
        }
    }

    pub const FM_ONLY: Self = Self { fm: 1.0, ce: 0.0 };
    pub const CE_ONLY: Self = Self { fm: 0.0, ce: 1.0 };
}

/// Parameters live in one flat vector in the order
/// `W1 b1 | E Wo bo | W2 b2 W4 b4 W3 b3` (trunk, language head, flow head),
/// matrices row-major with one row per output unit.
///
/// * `h = tanh(W1·cond + b1)`
/// * `g_j = tanh(h + E[prev_j])`, `logits_j = Wo·g_j + bo`
/// * `q1 = tanh(W2·[h; x; τ] + b2)`, `q2 = tanh(W4·q1 + b4)`, `v = W3·q2 + b3`
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    dims: ToyDims,
    layout: Layout,
    params: Vec<f64>,
}

fn tanh_layer(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(r, bias)| {
        let row = &w[r * cols..(r + 1) * cols];
        (bias + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()).tanh()
    }));
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            bias + w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(w, x)| w * x)
                .sum::<f64>()
        })
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl ToyModel {
    /// Initializes weights from N(0, 1/fan_in); biases start at zero.
    pub fn new(dims: ToyDims, rng: &mut impl Rng) -> Self {
        let layout = Layout::new(&dims);
        let mut params = vec![0.0; layout.len()];
        let mut fill = |range: Range<usize>, fan_in: usize| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                let g: f64 = StandardNormal.sample(rng);
                *p = g * scale;
            }
        };
        fill(layout.w1.clone(), dims.cond);
        fill(layout.emb.clone(), dims.hidden);
        fill(layout.wo.clone(), dims.hidden);
        fill(layout.w2.clone(), dims.flow_input());
        fill(layout.w4.clone(), dims.flow_hidden);
        fill(layout.w3.clone(), dims.flow_hidden);
        Self {
            dims,
            layout,
            params,
        }
    }

    /// Model with every parameter zero.
    pub fn zeros(dims: ToyDims) -> Self {
        let layout = Layout::new(&dims);
        let params = vec![0.0; layout.len()];
        Self {
            dims,
            layout,
            params,
        }
    }

    pub fn dims(&self) -> &ToyDims {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn group_range(&self, group: ParamGroup) -> Range<usize> {
        match group {
            ParamGroup::Trunk => self.layout.trunk(),
            ParamGroup::LanguageHead => self.layout.language(),
            ParamGroup::FlowHead => self.layout.flow(),
        }
    }

    pub fn group_of(&self, index: usize) -> ParamGroup {
        if self.layout.trunk().contains(&index) {
            ParamGroup::Trunk
        } else if self.layout.language().contains(&index) {
            ParamGroup::LanguageHead
        } else {
            ParamGroup::FlowHead
        }
    }

    /// Flow-head output bias; used to build constant fields in tests.
    pub fn flow_bias_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.b3.clone()]
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn p(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    /// Trunk features `h` for one conditioning vector.
    pub fn features(&self, cond: &[f64]) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.dims.hidden);
        tanh_layer(
            self.p(&self.layout.w1),
            self.p(&self.layout.b1),
            cond,
            &mut h,
        );
        h
    }

    pub fn batch_features(&self, batch: &FlowBatch) -> Vec<Vec<f64>> {
        batch.cond.iter().map(|c| self.features(c)).collect()
    }

    fn flow_input(features: &[f64], x: &[f64], tau: f64) -> Vec<f64> {
        let mut inp = Vec::with_capacity(features.len() + x.len() + 1);
        inp.extend_from_slice(features);
        inp.extend_from_slice(x);
        inp.push(tau);
        inp
    }

    /// Flow-head velocity at `(x, τ)` given trunk features.
    pub fn velocity(&self, features: &[f64], x: &[f64], tau: f64) -> Vec<f64> {
        let inp = Self::flow_input(features, x, tau);
        let mut q1 = Vec::with_capacity(self.dims.flow_hidden);
        let mut q2 = Vec::with_capacity(self.dims.flow_hidden);
        tanh_layer(
            self.p(&self.layout.w2),
            self.p(&self.layout.b2),
            &inp,
            &mut q1,
        );
        tanh_layer(
            self.p(&self.layout.w4),
            self.p(&self.layout.b4),
            &q1,
            &mut q2,
        );
        affine(self.p(&self.layout.w3), self.p(&self.layout.b3), &q2)
    }

    /// Integrates the learned field from noise `z` with `steps` Euler steps.
    pub fn euler_sample(&self, z: &[f64], cond: &[f64], steps: usize) -> Vec<f64> {
        let h = self.features(cond);
        euler_integrate(z, steps, |x, tau| self.velocity(&h, x, tau))
    }

    /// Language-head logits for every position of a teacher-forced sequence.
    pub fn lang_logits(&self, features: &[f64], targets: &[usize]) -> Vec<Vec<f64>> {
        let hd = self.dims.hidden;
        let emb = self.p(&self.layout.emb);
        let mut prev = crate::langact::vocab::BOS;
        let mut g = vec![0.0; hd];
        let mut out = Vec::with_capacity(targets.len());
        for &y in targets {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = (features[i] + emb[prev * hd + i]).tanh();
            }
            out.push(affine(self.p(&self.layout.wo), self.p(&self.layout.bo), &g));
            prev = y;
        }
        out
    }

    /// Mean flow-matching loss `E‖v(x_τ, τ) − (a − z)‖²` with the flow head
    /// reading the supplied features.
    pub fn fm_loss_with_features(&self, batch: &FlowBatch, features: &[Vec<f64>]) -> f64 {
        let total: f64 = (0..batch.len())
            .map(|i| {
                let x = interpolate(&batch.noise[i], &batch.actions[i], batch.tau[i]);
                let v = self.velocity(&features[i], &x, batch.tau[i]);
                v.iter()
                    .zip(batch.actions[i].iter().zip(&batch.noise[i]))
                    .map(|(v, (a, z))| (v - (a - z)).powi(2))
                    .sum::<f64>()
            })
            .sum();
        total / batch.len() as f64
    }

    pub fn fm_loss(&self, batch: &FlowBatch) -> f64 {
        self.fm_loss_with_features(batch, &self.batch_features(batch))
    }

    /// Mean token-level negative log-likelihood.
    pub fn ce_loss(&self, batch: &FlowBatch) -> f64 {
        let mut nll = 0.0;
        let mut count = 0usize;
        for (cond, targets) in batch.cond.iter().zip(&batch.lang_targets) {
            let h = self.features(cond);
            for (logits, &y) in self.lang_logits(&h, targets).iter().zip(targets) {
                nll += log_sum_exp(logits) - logits[y];
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            nll / count as f64
        }
    }

    pub fn losses(&self, batch: &FlowBatch, lambda: f64) -> Losses {
        let fm = self.fm_loss(batch);
        let ce = self.ce_loss(batch);
        Losses {
            fm,
            ce,
            combined: fm + lambda * ce,
        }
    }

    pub fn combined_loss(&self, batch: &FlowBatch, lambda: f64) -> f64 {
        self.losses(batch, lambda).combined
    }

    /// Gradient of `weights.fm·L_FM + weights.ce·L_CE` with the stop-gradient
    /// between trunk and flow head. Returns the unweighted losses alongside.
    pub fn backward(&self, batch: &FlowBatch, weights: LossWeights) -> (Losses, Vec<f64>) {
        let d = &self.dims;
        let l = &self.layout;
        let mut grad = vec![0.0; self.params.len()];
        let n = batch.len() as f64;
        let n_tokens: usize = batch.lang_targets.iter().map(Vec::len).sum();

        let mut fm_total = 0.0;
        let mut nll_total = 0.0;
        let w2 = self.p(&l.w2);
        let w3 = self.p(&l.w3);
        let w4 = self.p(&l.w4);
        let wo = self.p(&l.wo);
        let emb = self.p(&l.emb);

        for i in 0..batch.len() {
            let h = self.features(&batch.cond[i]);

            // Flow head.
            let tau = batch.tau[i];
            let x = interpolate(&batch.noise[i], &batch.actions[i], tau);
            let inp = Self::flow_input(&h, &x, tau);
            let fh = d.flow_hidden;
            let mut q1 = Vec::with_capacity(fh);
            let mut q2 = Vec::with_capacity(fh);
            tanh_layer(w2, self.p(&l.b2), &inp, &mut q1);
            tanh_layer(w4, self.p(&l.b4), &q1, &mut q2);
            let v = affine(w3, self.p(&l.b3), &q2);
            let mut dv = vec![0.0; d.action];
            for j in 0..d.action {
                let r = v[j] - (batch.actions[i][j] - batch.noise[i][j]);
                fm_total += r * r;
                dv[j] = weights.fm * 2.0 * r / n;
            }
            if weights.fm != 0.0 {
                let mut dq2 = vec![0.0; fh];
                for j in 0..d.action {
                    grad[l.b3.start + j] += dv[j];
                    for k in 0..fh {
                        grad[l.w3.start + j * fh + k] += dv[j] * q2[k];
                        dq2[k] += w3[j * fh + k] * dv[j];
                    }
                }
                let mut dq1 = vec![0.0; fh];
                for k in 0..fh {
                    let dpre = dq2[k] * (1.0 - q2[k] * q2[k]);
                    grad[l.b4.start + k] += dpre;
                    for c in 0..fh {
                        grad[l.w4.start + k * fh + c] += dpre * q1[c];
                        dq1[c] += w4[k * fh + c] * dpre;
                    }
                }
                let cols = d.flow_input();
                for k in 0..fh {
                    let dpre = dq1[k] * (1.0 - q1[k] * q1[k]);
                    grad[l.b2.start + k] += dpre;
                    for c in 0..cols {
                        grad[l.w2.start + k * cols + c] += dpre * inp[c];
                    }
                }
                // Stop-gradient: nothing flows from here into `h`.
            }

            // Language head with teacher forcing.
            let targets = &batch.lang_targets[i];
            let mut dh = vec![0.0; d.hidden];
            let scale = if n_tokens == 0 {
                0.0
            } else {
                weights.ce / n_tokens as f64
            };
            let mut prev = crate::langact::vocab::BOS;
            let mut g = vec![0.0; d.hidden];
            for &y in targets {
                for k in 0..d.hidden {
                    g[k] = (h[k] + emb[prev * d.hidden + k]).tanh();
                }
                let logits = affine(wo, self.p(&l.bo), &g);
                let lse = log_sum_exp(&logits);
                nll_total += lse - logits[y];
                if scale != 0.0 {
                    let mut dg = vec![0.0; d.hidden];
                    for (t, logit) in logits.iter().enumerate() {
                        let p = (logit - lse).exp();
                        let dl = scale * (p - if t == y { 1.0 } else { 0.0 });
                        grad[l.bo.start + t] += dl;
                        let row = t * d.hidden;
                        for k in 0..d.hidden {
                            grad[l.wo.start + row + k] += dl * g[k];
                            dg[k] += wo[row + k] * dl;
                        }
                    }
                    for k in 0..d.hidden {
                        let dpre = dg[k] * (1.0 - g[k] * g[k]);
                        grad[l.emb.start + prev * d.hidden + k] += dpre;
                        dh[k] += dpre;
                    }
                }
                prev = y;
            }

            // Trunk: reached only through the language head.
            if scale != 0.0 {
                let cond = &batch.cond[i];
                for k in 0..d.hidden {
                    let dpre = dh[k] * (1.0 - h[k] * h[k]);
                    grad[l.b1.start + k] += dpre;
                    for c in 0..d.cond {
                        grad[l.w1.start + k * d.cond + c] += dpre * cond[c];
                    }
                }
            }
        }

        let fm = fm_total / n;
        let ce = if n_tokens == 0 {
            0.0
        } else {
            nll_total / n_tokens as f64
        };
        (
            Losses {
                fm,
                ce,
                combined: weights.fm * fm + weights.ce * ce,
            },
            grad,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ToyDims {
        ToyDims {
            cond: 2,
            hidden: 4,
            vocab: 7,
            action: 3,
            flow_hidden: 5,
        }
    }

    fn batch(rng: &mut ChaCha8Rng, d: &ToyDims, n: usize) -> FlowBatch {
        let mut normal =
            |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut *rng)).collect() };
        let cond = (0..n).map(|_| normal(d.cond)).collect();
        let actions = (0..n).map(|_| normal(d.action)).collect();
        let noise = (0..n).map(|_| normal(d.action)).collect();
        let tau = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let lang_targets = (0..n).map(|i| vec![2 + i % 5, 3, 1]).collect();
        FlowBatch {
            cond,
            actions,
            noise,
            tau,
            lang_targets,
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let z = [0.3, -1.0];
        let a = [2.0, 5.0];
        assert_eq!(interpolate(&z, &a, 0.0), z.to_vec());
        assert_eq!(interpolate(&z, &a, 1.0), a.to_vec());
        assert_eq!(interpolate(&[0.0], &[4.0], 0.25), vec![1.0]);
    }

    #[test]
    fn zero_field_leaves_noise() {
        let z = [0.4, -2.0];
        assert_eq!(
            euler_integrate(&z, 7, |x, _| vec![0.0; x.len()]),
            z.to_vec()
        );
    }

    #[test]
    fn decaying_field_approaches_exp() {
        let x = euler_integrate(&[1.0], 1000, |x, _| vec![-x[0]]);
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn zero_model_fm_loss() {
        let d = dims();
        let m = ToyModel::zeros(d);
        let mut b = batch(&mut ChaCha8Rng::seed_from_u64(1), &d, 4);
        b.actions = b.noise.clone();
        assert_eq!(m.fm_loss(&b), 0.0);
    }

    #[test]
    fn constant_field_fm_loss() {
        let d = dims();
        let mut m = ToyModel::zeros(d);
        m.flow_bias_mut().copy_from_slice(&[1.0, -2.0, 0.5]);
        let mut b = batch(&mut ChaCha8Rng::seed_from_u64(2), &d, 3);
        let u = [0.25, 0.0, -1.0];
        for (a, z) in b.actions.iter_mut().zip(&b.noise) {
            for j in 0..3 {
                a[j] = z[j] + u[j];
            }
        }
        let expected = (1.0f64 - 0.25).powi(2) + 4.0 + 1.5f64.powi(2);
        assert!((m.fm_loss(&b) - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let d = dims();
        let m = ToyModel::zeros(d);
        let b = batch(&mut ChaCha8Rng::seed_from_u64(3), &d, 2);
        assert!((m.ce_loss(&b) - (d.vocab as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_sum() {
        let d = dims();
        let m = ToyModel::new(d, &mut ChaCha8Rng::seed_from_u64(4));
        let b = batch(&mut ChaCha8Rng::seed_from_u64(5), &d, 3);
        let l = m.losses(&b, 0.0);
        assert_eq!(l.combined, l.fm);
        let l = m.losses(&b, 1.0);
        assert_eq!(l.combined, l.fm + l.ce);
        let (bl, _) = m.backward(&b, LossWeights::combined(0.8));
        assert!((bl.fm - l.fm).abs() < 1e-12 && (bl.ce - l.ce).abs() < 1e-12);
    }

    #[test]
    fn group_ranges_partition_params() {
        let m = ToyModel::zeros(dims());
        let t = m.group_range(ParamGroup::Trunk);
        let c = m.group_range(ParamGroup::LanguageHead);
        let f = m.group_range(ParamGroup::FlowHead);
        assert_eq!(t.start, 0);
        assert_eq!(t.end, c.start);
        assert_eq!(c.end, f.start);
        assert_eq!(f.end, m.num_params());
        assert_eq!(m.group_of(0), ParamGroup::Trunk);
        assert_eq!(m.group_of(m.num_params() - 1), ParamGroup::FlowHead);
    }
}
