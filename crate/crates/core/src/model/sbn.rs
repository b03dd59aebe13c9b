//! Sigmoid belief network with a layered Bernoulli inference network.
//!
//! Generative model, top to bottom: `z_L ~ Bernoulli(σ(prior))`,
//! `z_ℓ | z_{ℓ+1} ~ Bernoulli(σ(W_ℓ z_{ℓ+1} + b_ℓ))`, with `z_0 = x` the
//! observed pixels. The inference network mirrors it upward:
//! `z_{ℓ+1} | z_ℓ ~ Bernoulli(σ(V_ℓ z_ℓ + c_ℓ))`.
//!
//! Gradients of the inference network use the score function with a
//! leave-one-out baseline over `S` samples per data point.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::eval::ImportanceSampler;
use crate::math::{
    add_outer, add_transpose_matvec, affine, bernoulli_entropy_logit, bernoulli_log_prob,
    bernoulli_log_prob_and_residual, logit, sigmoid,
};
use crate::optim::{GradientEstimate, Objective};
use crate::params::{Layout, ParamVector, SliceKind};
use crate::proximity::{
    eval_statistic, statistic_vjp, ProximityStatistic, StatisticKind, StatisticValue,
};
use crate::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Good,
    Bad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbnShape {
    pub visible: usize,
    /// Latent layer sizes from the bottom (closest to `x`) to the top.
    pub hidden: Vec<usize>,
}

impl SbnShape {
    /// Sizes of all layers, visible first.
    fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.visible)
            .chain(self.hidden.iter().copied())
            .collect()
    }

    pub fn latent_units(&self) -> usize {
        self.hidden.iter().sum()
    }
}

#[derive(Clone, Debug)]
struct LayerIndex {
    gen_w: std::ops::Range<usize>,
    gen_b: std::ops::Range<usize>,
    inf_w: std::ops::Range<usize>,
    inf_b: std::ops::Range<usize>,
}

/// Network structure and parameter offsets. Parameters themselves live in a
/// [`ParamVector`] built from [`Sbn::layout`].
#[derive(Clone, Debug)]
pub struct Sbn {
    pub shape: SbnShape,
    /// Prior success probability used by the KL statistic.
    pub pi: f64,
    layout: Arc<Layout>,
    prior: std::ops::Range<usize>,
    layers: Vec<LayerIndex>,
    latent_layout: Arc<Layout>,
}

/// One posterior sample with everything needed for its gradients.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `z_1 … z_L` as 0/1 values.
    pub z: Vec<Vec<f64>>,
    /// Inference-network logits of each latent layer.
    pub q_logits: Vec<Vec<f64>>,
    pub log_q: f64,
}

impl Sbn {
    pub fn new(shape: SbnShape, pi: f64) -> Result<Self> {
        if shape.visible == 0 || shape.hidden.is_empty() || shape.hidden.contains(&0) {
            return Err(Error::Config(
                "SBN layer sizes must be ≥ 1 with at least one latent layer".into(),
            ));
        }
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Config(format!("prior π={pi} outside (0, 1)")));
        }
        let sizes = shape.sizes();
        let top = *sizes.last().expect("nonempty");
        let mut layout = Layout::new();
        layout.push("gen.prior", SliceKind::Bias, top, 1);
        for l in 0..shape.hidden.len() {
            layout.push(
                format!("gen.w{l}"),
                SliceKind::Unconstrained,
                sizes[l],
                sizes[l + 1],
            );
            layout.push(format!("gen.b{l}"), SliceKind::Bias, sizes[l], 1);
        }
        for l in 0..shape.hidden.len() {
            layout.push(
                format!("inf.w{l}"),
                SliceKind::WeightMatrix,
                sizes[l + 1],
                sizes[l],
            );
            layout.push(format!("inf.b{l}"), SliceKind::Bias, sizes[l + 1], 1);
        }
        let range = |name: &str| layout.get(name).expect("just pushed").range();
        let prior = range("gen.prior");
        let layers = (0..shape.hidden.len())
            .map(|l| LayerIndex {
                gen_w: range(&format!("gen.w{l}")),
                gen_b: range(&format!("gen.b{l}")),
                inf_w: range(&format!("inf.w{l}")),
                inf_b: range(&format!("inf.b{l}")),
            })
            .collect();
        let latent_layout = Arc::new(Layout::new().with(
            "q",
            SliceKind::BernoulliLogit { prior: pi },
            shape.latent_units(),
            1,
        ));
        Ok(Self {
            shape,
            pi,
            layout: Arc::new(layout),
            prior,
            layers,
            latent_layout,
        })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn depth(&self) -> usize {
        self.shape.hidden.len()
    }

    /// Initial parameters. Good: prior π = 0.5 and normalized (Glorot)
    /// uniform generative weights. Bad: prior π = `self.pi` (e.g. 0.001) and
    /// every generative weight equal to `bad_weight`. The inference network
    /// always gets the normalized initialization and all biases start at 0.
    pub fn init_params<R: Rng + ?Sized>(
        &self,
        init: Init,
        bad_weight: f64,
        rng: &mut R,
    ) -> ParamVector {
        let mut p = ParamVector::zeros(self.layout.clone());
        let sizes = self.shape.sizes();
        let v = p.values_mut();
        let prior_logit = match init {
            Init::Good => 0.0,
            Init::Bad => logit(self.pi),
        };
        v[self.prior.clone()]
            .iter_mut()
            .for_each(|x| *x = prior_logit);
        for (l, idx) in self.layers.iter().enumerate() {
            let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("bound > 0");
            match init {
                Init::Good => v[idx.gen_w.clone()]
                    .iter_mut()
                    .for_each(|x| *x = dist.sample(rng)),
                Init::Bad => v[idx.gen_w.clone()]
                    .iter_mut()
                    .for_each(|x| *x = bad_weight),
            }
            v[idx.inf_w.clone()]
                .iter_mut()
                .for_each(|x| *x = dist.sample(rng));
        }
        p
    }

    /// `log p(x, z)` for latent layers `z = [z_1, …, z_L]`.
    pub fn log_joint(&self, params: &ParamVector, z: &[Vec<f64>], x: &[f64]) -> Result<f64> {
        check_len("latent layers", self.depth(), z.len())?;
        check_len("visible units", self.shape.visible, x.len())?;
        for (layer, size) in z.iter().zip(&self.shape.hidden) {
            check_len("latent layer", *size, layer.len())?;
        }
        Ok(self.log_joint_and_grad(params, z, x, 0.0, None))
    }

    /// `log p(x, z)`, adding `scale · ∇_θ log p(x, z)` into `grad` when given.
    fn log_joint_and_grad(
        &self,
        params: &ParamVector,
        z: &[Vec<f64>],
        x: &[f64],
        scale: f64,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let v = params.values();
        let top = &z[self.depth() - 1];
        let mut lp = 0.0;
        for (j, (&zi, &a)) in top.iter().zip(&v[self.prior.clone()]).enumerate() {
            let (l, r) = bernoulli_log_prob_and_residual(zi, a);
            lp += l;
            if let Some(g) = grad.as_deref_mut() {
                g[self.prior.start + j] += scale * r;
            }
        }
        let mut resid = Vec::new();
        for (l, idx) in self.layers.iter().enumerate() {
            let target: &[f64] = if l == 0 { x } else { &z[l - 1] };
            resid.resize(target.len(), 0.0);
            affine(
                &v[idx.gen_w.clone()],
                &v[idx.gen_b.clone()],
                &z[l],
                &mut resid,
            );
            for (r, &t) in resid.iter_mut().zip(target) {
                let (lpi, ri) = bernoulli_log_prob_and_residual(t, *r);
                lp += lpi;
                *r = ri;
            }
            if let Some(g) = grad.as_deref_mut() {
                add_outer(&mut g[idx.gen_w.clone()], &resid, &z[l], scale);
                for (gb, &r) in g[idx.gen_b.clone()].iter_mut().zip(&resid) {
                    *gb += scale * r;
                }
            }
        }
        lp
    }

    /// `log q(z | x)`.
    pub fn log_q(&self, params: &ParamVector, z: &[Vec<f64>], x: &[f64]) -> Result<f64> {
        check_len("latent layers", self.depth(), z.len())?;
        let v = params.values();
        let mut lq = 0.0;
        let mut logits = Vec::new();
        for (l, idx) in self.layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &z[l - 1] };
            logits.resize(self.shape.hidden[l], 0.0);
            affine(
                &v[idx.inf_w.clone()],
                &v[idx.inf_b.clone()],
                input,
                &mut logits,
            );
            lq += z[l]
                .iter()
                .zip(&logits)
                .map(|(&t, &a)| bernoulli_log_prob(t, a))
                .sum::<f64>();
        }
        Ok(lq)
    }

    /// Draws `z ~ q(· | x)` layer by layer.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        params: &ParamVector,
        x: &[f64],
        rng: &mut R,
    ) -> Sample {
        let idx = &self.layers[0];
        let v = params.values();
        let mut a0 = vec![0.0; self.shape.hidden[0]];
        affine(&v[idx.inf_w.clone()], &v[idx.inf_b.clone()], x, &mut a0);
        self.sample_from_first_logits(params, a0, rng)
    }

    /// Like [`Sbn::sample_posterior`] with the first latent layer's logits precomputed.
    fn sample_from_first_logits<R: Rng + ?Sized>(
        &self,
        params: &ParamVector,
        a0: Vec<f64>,
        rng: &mut R,
    ) -> Sample {
        let v = params.values();
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        let mut q_logits: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        let mut log_q = 0.0;
        for l in 0..self.depth() {
            let a = if l == 0 {
                a0.clone()
            } else {
                let idx = &self.layers[l];
                let mut a = vec![0.0; self.shape.hidden[l]];
                affine(
                    &v[idx.inf_w.clone()],
                    &v[idx.inf_b.clone()],
                    &z[l - 1],
                    &mut a,
                );
                a
            };
            let zl: Vec<f64> = a
                .iter()
                .map(|&ai| {
                    if rng.random::<f64>() < sigmoid(ai) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            log_q += zl
                .iter()
                .zip(&a)
                .map(|(&t, &ai)| bernoulli_log_prob(t, ai))
                .sum::<f64>();
            z.push(zl);
            q_logits.push(a);
        }
        Sample { z, q_logits, log_q }
    }

    /// Adds `weight · ∇_φ log q(z | x)` for the layers `from..L` into `grad`.
    fn add_log_q_grad(
        &self,
        sample: &Sample,
        x: &[f64],
        weight: f64,
        from: usize,
        grad: &mut [f64],
    ) {
        if weight == 0.0 {
            return;
        }
        let mut delta = Vec::new();
        for l in from..self.depth() {
            let idx = &self.layers[l];
            let input: &[f64] = if l == 0 { x } else { &sample.z[l - 1] };
            delta.clear();
            delta.extend(
                sample.z[l]
                    .iter()
                    .zip(&sample.q_logits[l])
                    .map(|(&t, &a)| t - sigmoid(a)),
            );
            add_outer(&mut grad[idx.inf_w.clone()], &delta, input, weight);
            for (g, &d) in grad[idx.inf_b.clone()].iter_mut().zip(&delta) {
                *g += weight * d;
            }
        }
    }

    /// Adds `weight · ∇_φ H(q(z_ℓ | z_{ℓ-1}))` summed over layers, holding the
    /// sampled inputs fixed.
    fn add_entropy_pathwise_grad(&self, sample: &Sample, x: &[f64], weight: f64, grad: &mut [f64]) {
        let mut delta = Vec::new();
        for (l, idx) in self.layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &sample.z[l - 1] };
            delta.clear();
            delta.extend(sample.q_logits[l].iter().map(|&a| {
                let p = sigmoid(a);
                -a * p * (1.0 - p)
            }));
            add_outer(&mut grad[idx.inf_w.clone()], &delta, input, weight);
            for (g, &d) in grad[idx.inf_b.clone()].iter_mut().zip(&delta) {
                *g += weight * d;
            }
        }
    }

    /// Deterministic upward pass propagating probabilities instead of
    /// samples; returns the logits of every latent layer, concatenated.
    pub fn mean_logits(&self, params: &ParamVector, x: &[f64]) -> Vec<f64> {
        let v = params.values();
        let mut out = Vec::with_capacity(self.shape.latent_units());
        let mut input = x.to_vec();
        for (l, idx) in self.layers.iter().enumerate() {
            let mut a = vec![0.0; self.shape.hidden[l]];
            affine(&v[idx.inf_w.clone()], &v[idx.inf_b.clone()], &input, &mut a);
            input = a.iter().map(|&ai| sigmoid(ai)).collect();
            out.extend_from_slice(&a);
        }
        out
    }

    /// Backpropagates a cotangent on [`Sbn::mean_logits`] into `grad`.
    fn add_mean_logits_vjp(&self, params: &ParamVector, x: &[f64], cot: &[f64], grad: &mut [f64]) {
        let v = params.values();
        // forward, keeping layer inputs
        let mut inputs: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut offsets = vec![0usize];
        for (l, idx) in self.layers.iter().enumerate() {
            let mut a = vec![0.0; self.shape.hidden[l]];
            affine(
                &v[idx.inf_w.clone()],
                &v[idx.inf_b.clone()],
                &inputs[l],
                &mut a,
            );
            offsets.push(offsets[l] + a.len());
            inputs.push(a.iter().map(|&ai| sigmoid(ai)).collect());
        }
        let mut g_a: Vec<f64> = cot[offsets[self.depth() - 1]..offsets[self.depth()]].to_vec();
        for l in (0..self.depth()).rev() {
            let idx = &self.layers[l];
            add_outer(&mut grad[idx.inf_w.clone()], &g_a, &inputs[l], 1.0);
            for (g, &d) in grad[idx.inf_b.clone()].iter_mut().zip(&g_a) {
                *g += d;
            }
            if l > 0 {
                let mut g_p = vec![0.0; inputs[l].len()];
                add_transpose_matvec(&v[idx.inf_w.clone()], &g_a, &mut g_p);
                let below = &cot[offsets[l - 1]..offsets[l]];
                g_a = g_p
                    .iter()
                    .zip(&inputs[l])
                    .zip(below)
                    .map(|((gp, p), c)| gp * p * (1.0 - p) + c)
                    .collect();
            }
        }
    }
}

/// Control variate used by [`score_gradient`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    LeaveOneOut,
    None,
}

/// Estimated ELBO and its gradient over a batch.
#[derive(Clone, Debug)]
pub struct SbnGradient {
    pub elbo: f64,
    pub entropy: f64,
    pub grad: Vec<f64>,
    pub entropy_grad: Option<Vec<f64>>,
}

fn loo_weights(signal: &[f64], baseline: Baseline) -> Vec<f64> {
    match baseline {
        Baseline::None => signal.to_vec(),
        Baseline::LeaveOneOut => {
            let s = signal.len() as f64;
            let total: f64 = signal.iter().sum();
            signal
                .iter()
                .map(|&l| l - (total - l) / (s - 1.0))
                .collect()
        }
    }
}

/// Score-function ELBO gradient with a leave-one-out baseline over `samples`
/// draws per data point, averaged over `batch`.
pub fn score_gradient_loo(
    sbn: &Sbn,
    params: &ParamVector,
    batch: &[&[f64]],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<SbnGradient> {
    score_gradient(
        sbn,
        params,
        batch,
        samples,
        Baseline::LeaveOneOut,
        false,
        rng,
    )
}

pub fn score_gradient(
    sbn: &Sbn,
    params: &ParamVector,
    batch: &[&[f64]],
    samples: usize,
    baseline: Baseline,
    with_entropy_grad: bool,
    rng: &mut SeededRng,
) -> Result<SbnGradient> {
    if samples < 2 && baseline == Baseline::LeaveOneOut {
        return Err(Error::Config(format!(
            "leave-one-out baseline needs at least 2 samples, got {samples}"
        )));
    }
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grad = vec![0.0; params.len()];
    let mut h_grad = with_entropy_grad.then(|| vec![0.0; params.len()]);
    let scale = 1.0 / (batch.len() * samples) as f64;
    let mut elbo = 0.0;
    let mut entropy = 0.0;
    let mut signal = vec![0.0; samples];
    let mut h_signal = vec![0.0; samples];
    let mut draws = Vec::with_capacity(samples);
    for x in batch {
        check_len("visible units", sbn.shape.visible, x.len())?;
        draws.clear();
        let idx0 = &sbn.layers[0];
        let mut a0 = vec![0.0; sbn.shape.hidden[0]];
        affine(
            &params.values()[idx0.inf_w.clone()],
            &params.values()[idx0.inf_b.clone()],
            x,
            &mut a0,
        );
        for s in 0..samples {
            let sample = sbn.sample_from_first_logits(params, a0.clone(), rng);
            let lp = sbn.log_joint_and_grad(params, &sample.z, x, scale, Some(&mut grad));
            signal[s] = lp - sample.log_q;
            h_signal[s] = sample
                .q_logits
                .iter()
                .flatten()
                .map(|&a| bernoulli_entropy_logit(a))
                .sum();
            draws.push(sample);
        }
        elbo += signal.iter().sum::<f64>() / samples as f64;
        entropy += h_signal.iter().sum::<f64>() / samples as f64;
        let w = loo_weights(&signal, baseline);
        // first layer: Σ_s w_s (z_s − σ(a)) ⊗ x in one outer product, as σ(a) is shared
        let mut delta0 = vec![0.0; sbn.shape.hidden[0]];
        for (sample, &ws) in draws.iter().zip(&w) {
            for (d, (&t, &a)) in delta0
                .iter_mut()
                .zip(sample.z[0].iter().zip(&sample.q_logits[0]))
            {
                *d += ws * (t - sigmoid(a));
            }
        }
        add_outer(&mut grad[idx0.inf_w.clone()], &delta0, x, scale);
        for (g, &d) in grad[idx0.inf_b.clone()].iter_mut().zip(&delta0) {
            *g += scale * d;
        }
        for (sample, &ws) in draws.iter().zip(&w) {
            sbn.add_log_q_grad(sample, x, scale * ws, 1, &mut grad);
        }
        if let Some(hg) = h_grad.as_mut() {
            let wh = loo_weights(&h_signal, baseline);
            for (sample, &ws) in draws.iter().zip(&wh) {
                sbn.add_entropy_pathwise_grad(sample, x, scale, hg);
                sbn.add_log_q_grad(sample, x, scale * ws, 0, hg);
            }
        }
    }
    let n = batch.len() as f64;
    Ok(SbnGradient {
        elbo: elbo / n,
        entropy: entropy / n,
        grad,
        entropy_grad: h_grad,
    })
}

/// `(1/S) Σ_s [log p(x, z_s) − log q(z_s | x)]`, `z_s ~ q`.
pub fn sbn_elbo_mc(
    sbn: &Sbn,
    params: &ParamVector,
    x: &[f64],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config(
            "ELBO estimate needs at least one sample".into(),
        ));
    }
    let mut total = 0.0;
    for _ in 0..samples {
        let s = sbn.sample_posterior(params, x, rng);
        total += sbn.log_joint(params, &s.z, x)? - s.log_q;
    }
    Ok(total / samples as f64)
}

/// A trained network viewed as an importance-sampling proposal.
pub struct SbnPosterior<'a> {
    pub sbn: &'a Sbn,
    pub params: &'a ParamVector,
}

impl ImportanceSampler for SbnPosterior<'_> {
    fn log_weight(&self, x: &[f64], rng: &mut SeededRng) -> f64 {
        let s = self.sbn.sample_posterior(self.params, x, rng);
        self.sbn
            .log_joint(self.params, &s.z, x)
            .expect("shapes checked by caller")
            - s.log_q
    }
}

/// Batch-averaged statistic of the per-datapoint variational Bernoulli
/// parameters produced by the inference network.
pub struct AmortizedStatistic<'a> {
    pub sbn: &'a Sbn,
    pub batch: Vec<&'a [f64]>,
    pub kind: StatisticKind,
}

impl AmortizedStatistic<'_> {
    fn latent_params(&self, params: &ParamVector, x: &[f64]) -> ParamVector {
        ParamVector::from_values(
            self.sbn.latent_layout.clone(),
            self.sbn.mean_logits(params, x),
        )
        .expect("mean pass has one logit per latent unit")
    }
}

impl ProximityStatistic for AmortizedStatistic<'_> {
    fn eval(&self, params: &ParamVector) -> Result<StatisticValue> {
        if self.batch.is_empty() {
            return Err(Error::Config(
                "amortized statistic evaluated before any batch was drawn".into(),
            ));
        }
        let mut acc: Option<Vec<f64>> = None;
        for x in &self.batch {
            let f = eval_statistic(self.kind, &self.latent_params(params, x))?;
            match acc.as_mut() {
                None => acc = Some(f.0),
                Some(a) => a.iter_mut().zip(&f.0).for_each(|(a, b)| *a += b),
            }
        }
        let n = self.batch.len() as f64;
        let mut out = acc.expect("nonempty batch");
        out.iter_mut().for_each(|v| *v /= n);
        Ok(StatisticValue(out))
    }

    fn vjp(&self, params: &ParamVector, cotangent: &StatisticValue) -> Result<Vec<f64>> {
        let n = self.batch.len() as f64;
        let scaled = StatisticValue(cotangent.0.iter().map(|c| c / n).collect());
        let mut grad = vec![0.0; params.len()];
        for x in &self.batch {
            let latent = self.latent_params(params, x);
            let g_logits = statistic_vjp(self.kind, &latent, &scaled)?;
            self.sbn
                .add_mean_logits_vjp(params, x, &g_logits, &mut grad);
        }
        Ok(grad)
    }
}

/// Minibatch score-function objective over a binary dataset.
pub struct SbnObjective<'a> {
    pub sbn: &'a Sbn,
    pub data: &'a [Vec<f64>],
    pub batch_size: usize,
    pub samples: usize,
    batch: Vec<usize>,
}

impl<'a> SbnObjective<'a> {
    pub fn new(sbn: &'a Sbn, data: &'a [Vec<f64>], batch_size: usize, samples: usize) -> Self {
        Self {
            sbn,
            data,
            batch_size,
            samples,
            batch: Vec::new(),
        }
    }
}

impl Objective for SbnObjective<'_> {
    fn estimate(
        &mut self,
        params: &ParamVector,
        with_entropy_grad: bool,
        rng: &mut SeededRng,
    ) -> Result<GradientEstimate> {
        if self.data.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        self.batch = (0..self.batch_size)
            .map(|_| rng.random_range(0..self.data.len()))
            .collect();
        let batch: Vec<&[f64]> = self
            .batch
            .iter()
            .map(|&i| self.data[i].as_slice())
            .collect();
        let g = score_gradient(
            self.sbn,
            params,
            &batch,
            self.samples,
            Baseline::LeaveOneOut,
            with_entropy_grad,
            rng,
        )?;
        Ok(GradientEstimate {
            elbo: g.elbo,
            entropy: g.entropy,
            grad: g.grad,
            entropy_grad: g.entropy_grad,
        })
    }

    fn statistic(&self, kind: StatisticKind) -> Box<dyn ProximityStatistic + '_> {
        Box::new(AmortizedStatistic {
            sbn: self.sbn,
            batch: self
                .batch
                .iter()
                .map(|&i| self.data[i].as_slice())
                .collect(),
            kind,
        })
    }
}
