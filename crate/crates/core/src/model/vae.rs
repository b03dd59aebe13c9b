//! Variational autoencoder with Gaussian latents and Bernoulli pixels.
//!
//! Encoder: `input → hidden → hidden` with rectifiers, then linear heads for
//! the latent mean and log standard deviation. Decoder: `latent → hidden →
//! hidden → pixel logits`. Gradients are computed by hand; the ELBO uses one
//! reparameterized sample and the analytic KL to `N(0, I)`.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{check_len, Error, Result};
use crate::eval::ImportanceSampler;
use crate::math::{add_outer, add_transpose_matvec, affine, bernoulli_log_prob, sigmoid};
use crate::optim::{GradientEstimate, Objective};
use crate::params::{Layout, ParamVector, SliceKind};
use crate::SeededRng;

pub const LOG_STD_BOUND: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VaeShape {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

#[derive(Clone, Debug)]
struct Dense {
    w: Range<usize>,
    b: Range<usize>,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug)]
pub struct Vae {
    pub shape: VaeShape,
    layout: Arc<Layout>,
    enc0: Dense,
    enc1: Dense,
    enc_mu: Dense,
    enc_sigma: Dense,
    dec0: Dense,
    dec1: Dense,
    dec2: Dense,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub mu: Vec<f64>,
    /// Raw (unclamped) log standard deviation.
    log_std_raw: Vec<f64>,
    pub log_std: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    pub logits: Vec<f64>,
    pub reconstruction: f64,
    pub kl: f64,
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn mask_relu(grad: &mut [f64], activation: &[f64]) {
    // derivative 0 at 0
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn first_non_finite(v: &[f64]) -> bool {
    v.iter().any(|x| !x.is_finite())
}

/// `rows × cols` matrix with orthonormal rows (`rows ≤ cols`) or columns.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "orthogonal_init needs positive dimensions, got {rows}×{cols}"
        )));
    }
    let (tall_rows, tall_cols) = if rows >= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let a = DMatrix::<f64>::from_fn(tall_rows, tall_cols, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the result is uniformly distributed
    for j in 0..tall_cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let w = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(w[(i, j)]);
        }
    }
    Ok(out)
}

impl Vae {
    pub fn new(shape: VaeShape) -> Result<Self> {
        if shape.input == 0 || shape.hidden == 0 || shape.latent == 0 {
            return Err(Error::Config(format!(
                "VAE sizes must be ≥ 1, got {shape:?}"
            )));
        }
        let VaeShape {
            input,
            hidden,
            latent,
        } = shape;
        let mut layout = Layout::new();
        let mut dense = |name: &str, kind: SliceKind, rows: usize, cols: usize| {
            layout.push(format!("{name}.w"), kind, rows, cols);
            layout.push(format!("{name}.b"), SliceKind::Bias, rows, 1);
            let w = layout.get(&format!("{name}.w")).expect("pushed").range();
            let b = layout.get(&format!("{name}.b")).expect("pushed").range();
            Dense { w, b, rows, cols }
        };
        let enc0 = dense("enc0", SliceKind::WeightMatrix, hidden, input);
        let enc1 = dense("enc1", SliceKind::WeightMatrix, hidden, hidden);
        let enc_mu = dense("enc_mu", SliceKind::WeightMatrix, latent, hidden);
        let enc_sigma = dense("enc_log_std", SliceKind::WeightMatrix, latent, hidden);
        let dec0 = dense("dec0", SliceKind::Unconstrained, hidden, latent);
        let dec1 = dense("dec1", SliceKind::Unconstrained, hidden, hidden);
        let dec2 = dense("dec2", SliceKind::Unconstrained, input, hidden);
        Ok(Self {
            shape,
            layout: Arc::new(layout),
            enc0,
            enc1,
            enc_mu,
            enc_sigma,
            dec0,
            dec1,
            dec2,
        })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Orthogonal encoder weights, normalized-uniform decoder weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = ParamVector::zeros(self.layout.clone());
        let v = p.values_mut();
        for d in [&self.enc0, &self.enc1, &self.enc_mu, &self.enc_sigma] {
            let w = orthogonal_init(d.rows, d.cols, rng).expect("sizes validated");
            v[d.w.clone()].copy_from_slice(&w);
        }
        for d in [&self.dec0, &self.dec1, &self.dec2] {
            let bound = (6.0 / (d.rows + d.cols) as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("bound > 0");
            v[d.w.clone()]
                .iter_mut()
                .for_each(|x| *x = dist.sample(rng));
        }
        p
    }

    fn dense(&self, d: &Dense, v: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.rows];
        affine(&v[d.w.clone()], &v[d.b.clone()], x, &mut out);
        out
    }

    /// Encoder pass: hidden activations, mean and raw log standard deviation.
    fn encode(&self, params: &ParamVector, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let v = params.values();
        let mut h1 = self.dense(&self.enc0, v, x);
        relu_in_place(&mut h1);
        let mut h2 = self.dense(&self.enc1, v, &h1);
        relu_in_place(&mut h2);
        let mu = self.dense(&self.enc_mu, v, &h2);
        let s = self.dense(&self.enc_sigma, v, &h2);
        (h1, h2, mu, s)
    }

    /// Decoder pass: hidden activations and pixel logits.
    fn decode(&self, params: &ParamVector, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let v = params.values();
        let mut g1 = self.dense(&self.dec0, v, z);
        relu_in_place(&mut g1);
        let mut g2 = self.dense(&self.dec1, v, &g1);
        relu_in_place(&mut g2);
        let logits = self.dense(&self.dec2, v, &g2);
        (g1, g2, logits)
    }

    /// Mean and clamped log standard deviation of `q(z | x)`.
    pub fn posterior(&self, params: &ParamVector, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (_, _, mu, s) = self.encode(params, x);
        (
            mu,
            s.iter()
                .map(|v| v.clamp(-LOG_STD_BOUND, LOG_STD_BOUND))
                .collect(),
        )
    }

    /// Pixel logits of `p(x | z)`.
    pub fn decoder_logits(&self, params: &ParamVector, z: &[f64]) -> Vec<f64> {
        self.decode(params, z).2
    }

    /// Forward pass with the given standard-normal noise `eps`.
    pub fn forward(&self, params: &ParamVector, x: &[f64], eps: &[f64]) -> Result<Forward> {
        check_len("VAE input", self.shape.input, x.len())?;
        check_len("VAE noise", self.shape.latent, eps.len())?;
        let (h1, h2, mu, log_std_raw) = self.encode(params, x);
        for (name, v) in [
            ("encoder layer 1", &h1),
            ("encoder layer 2", &h2),
            ("encoder mean", &mu),
            ("encoder log-std", &log_std_raw),
        ] {
            if first_non_finite(v) {
                return Err(Error::NonFinite(format!("{name} activations")));
            }
        }
        let log_std: Vec<f64> = log_std_raw
            .iter()
            .map(|v| v.clamp(-LOG_STD_BOUND, LOG_STD_BOUND))
            .collect();
        let z: Vec<f64> = mu
            .iter()
            .zip(&log_std)
            .zip(eps)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect();
        let (g1, g2, logits) = self.decode(params, &z);
        for (name, v) in [
            ("decoder layer 1", &g1),
            ("decoder layer 2", &g2),
            ("decoder logits", &logits),
        ] {
            if first_non_finite(v) {
                return Err(Error::NonFinite(format!("{name} activations")));
            }
        }
        let reconstruction: f64 = x
            .iter()
            .zip(&logits)
            .map(|(&xi, &a)| bernoulli_log_prob(xi, a))
            .sum();
        let kl: f64 = mu
            .iter()
            .zip(&log_std)
            .map(|(m, s)| 0.5 * (m * m + (2.0 * s).exp() - 1.0) - s)
            .sum();
        if !(reconstruction - kl).is_finite() {
            return Err(Error::NonFinite(format!(
                "ELBO (reconstruction {reconstruction}, KL {kl})"
            )));
        }
        Ok(Forward {
            h1,
            h2,
            mu,
            log_std_raw,
            log_std,
            eps: eps.to_vec(),
            z,
            g1,
            g2,
            logits,
            reconstruction,
            kl,
        })
    }

    fn add_dense_grad(
        &self,
        d: &Dense,
        delta: &[f64],
        input: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        add_outer(&mut grad[d.w.clone()], delta, input, scale);
        for (g, &dv) in grad[d.b.clone()].iter_mut().zip(delta) {
            *g += scale * dv;
        }
    }

    fn back_through(&self, d: &Dense, params: &ParamVector, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.cols];
        add_transpose_matvec(&params.values()[d.w.clone()], delta, &mut out);
        out
    }

    /// Backpropagates `(∂/∂μ, ∂/∂ log σ)` through the encoder; the log-std
    /// cotangent is zeroed where the clamp is active.
    #[allow(clippy::too_many_arguments)]
    fn encoder_backward(
        &self,
        params: &ParamVector,
        x: &[f64],
        fw: &Forward,
        d_mu: &[f64],
        d_log_std: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        let d_s: Vec<f64> = d_log_std
            .iter()
            .zip(&fw.log_std_raw)
            .map(|(&g, &s)| if s.abs() > LOG_STD_BOUND { 0.0 } else { g })
            .collect();
        self.add_dense_grad(&self.enc_mu, d_mu, &fw.h2, scale, grad);
        self.add_dense_grad(&self.enc_sigma, &d_s, &fw.h2, scale, grad);
        let mut d_h2 = self.back_through(&self.enc_mu, params, d_mu);
        for (a, b) in d_h2
            .iter_mut()
            .zip(self.back_through(&self.enc_sigma, params, &d_s))
        {
            *a += b;
        }
        mask_relu(&mut d_h2, &fw.h2);
        self.add_dense_grad(&self.enc1, &d_h2, &fw.h1, scale, grad);
        let mut d_h1 = self.back_through(&self.enc1, params, &d_h2);
        mask_relu(&mut d_h1, &fw.h1);
        self.add_dense_grad(&self.enc0, &d_h1, x, scale, grad);
    }

    /// Adds `scale · ∇ ELBO(x; ε)` into `grad` and returns the ELBO.
    pub fn add_elbo_grad(
        &self,
        params: &ParamVector,
        x: &[f64],
        eps: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<Forward> {
        let fw = self.forward(params, x, eps)?;
        let d_logits: Vec<f64> = x
            .iter()
            .zip(&fw.logits)
            .map(|(&xi, &a)| xi - sigmoid(a))
            .collect();
        self.add_dense_grad(&self.dec2, &d_logits, &fw.g2, scale, grad);
        let mut d_g2 = self.back_through(&self.dec2, params, &d_logits);
        mask_relu(&mut d_g2, &fw.g2);
        self.add_dense_grad(&self.dec1, &d_g2, &fw.g1, scale, grad);
        let mut d_g1 = self.back_through(&self.dec1, params, &d_g2);
        mask_relu(&mut d_g1, &fw.g1);
        self.add_dense_grad(&self.dec0, &d_g1, &fw.z, scale, grad);
        let d_z = self.back_through(&self.dec0, params, &d_g1);
        // z = μ + e^s ε ; −KL contributes −μ and 1 − e^{2s}
        let d_mu: Vec<f64> = d_z.iter().zip(&fw.mu).map(|(g, m)| g - m).collect();
        let d_s: Vec<f64> = d_z
            .iter()
            .zip(&fw.log_std)
            .zip(&fw.eps)
            .map(|((g, s), e)| g * e * s.exp() + 1.0 - (2.0 * s).exp())
            .collect();
        self.encoder_backward(params, x, &fw, &d_mu, &d_s, scale, grad);
        Ok(fw)
    }

    /// Adds `scale · ∇ H(q(z | x))` into `grad` and returns the entropy.
    pub fn add_entropy_grad(
        &self,
        params: &ParamVector,
        fw: &Forward,
        x: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let zeros = vec![0.0; self.shape.latent];
        let ones = vec![1.0; self.shape.latent];
        self.encoder_backward(params, x, fw, &zeros, &ones, scale, grad);
        gaussian_entropy(&fw.log_std)
    }

    /// `log p(x | z) + log N(z; 0, I) − log N(z; μ, σ²)` at `z = μ + σ ε`.
    pub fn log_weight_with_noise(
        &self,
        params: &ParamVector,
        x: &[f64],
        eps: &[f64],
    ) -> Result<f64> {
        let fw = self.forward(params, x, eps)?;
        let log_prior: f64 = fw.z.iter().map(|z| -0.5 * (z * z + (2.0 * PI).ln())).sum();
        let log_q: f64 = fw
            .eps
            .iter()
            .zip(&fw.log_std)
            .map(|(e, s)| -0.5 * (e * e + (2.0 * PI).ln()) - s)
            .sum();
        Ok(fw.reconstruction + log_prior - log_q)
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.shape.latent)
            .map(|_| StandardNormal.sample(rng))
            .collect()
    }
}

/// Entropy of a diagonal Gaussian from its log standard deviations.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|s| 0.5 * (2.0 * PI * std::f64::consts::E).ln() + s)
        .sum()
}

/// Single-sample reparameterized ELBO and gradient, averaged over `batch`.
pub fn vae_elbo_grad(
    vae: &Vae,
    params: &ParamVector,
    batch: &[&[f64]],
    rng: &mut SeededRng,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    let mut elbo = 0.0;
    for x in batch {
        let eps = vae.sample_noise(rng);
        let fw = vae.add_elbo_grad(params, x, &eps, scale, &mut grad)?;
        elbo += fw.reconstruction - fw.kl;
    }
    Ok((elbo * scale, grad))
}

pub struct VaePosterior<'a> {
    pub vae: &'a Vae,
    pub params: &'a ParamVector,
}

impl ImportanceSampler for VaePosterior<'_> {
    fn log_weight(&self, x: &[f64], rng: &mut SeededRng) -> f64 {
        let eps = self.vae.sample_noise(rng);
        self.vae
            .log_weight_with_noise(self.params, x, &eps)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Minibatch reparameterization objective over a binary dataset. The
/// proximity statistic is the layout-based one, so the orthogonal statistic
/// covers the encoder weight matrices only.
pub struct VaeObjective<'a> {
    pub vae: &'a Vae,
    pub data: &'a [Vec<f64>],
    pub batch_size: usize,
}

impl Objective for VaeObjective<'_> {
    fn estimate(
        &mut self,
        params: &ParamVector,
        with_entropy_grad: bool,
        rng: &mut SeededRng,
    ) -> Result<GradientEstimate> {
        if self.data.is_empty() || self.batch_size == 0 {
            return Err(Error::Config("empty training set or batch".into()));
        }
        let scale = 1.0 / self.batch_size as f64;
        let mut grad = vec![0.0; params.len()];
        let mut h_grad = with_entropy_grad.then(|| vec![0.0; params.len()]);
        let (mut elbo, mut entropy) = (0.0, 0.0);
        for _ in 0..self.batch_size {
            let x = &self.data[rng.random_range(0..self.data.len())];
            let eps = self.vae.sample_noise(rng);
            let fw = self.vae.add_elbo_grad(params, x, &eps, scale, &mut grad)?;
            elbo += fw.reconstruction - fw.kl;
            entropy += match h_grad.as_mut() {
                Some(hg) => self.vae.add_entropy_grad(params, &fw, x, scale, hg),
                None => gaussian_entropy(&fw.log_std),
            };
        }
        Ok(GradientEstimate {
            elbo: elbo * scale,
            entropy: entropy * scale,
            grad,
            entropy_grad: h_grad,
        })
    }
}
