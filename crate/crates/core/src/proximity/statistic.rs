//! Proximity statistics `f(λ)` and their vector–Jacobian products.
//!
//! Bernoulli factors are stored as logits and Gaussian scales as log standard
//! deviations, so every statistic here is a smooth function of unconstrained
//! reals.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{bernoulli_entropy_logit, logit, sigmoid};
use crate::params::{Layout, ParamVector, Slice, SliceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    Identity,
    Entropy,
    Kl,
    MeanVariance,
    Orthogonal,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Identity => "identity",
            StatisticKind::Entropy => "entropy",
            StatisticKind::Kl => "kl",
            StatisticKind::MeanVariance => "mean-variance",
            StatisticKind::Orthogonal => "orthogonal",
        }
    }
}

impl std::str::FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(StatisticKind::Identity),
            "entropy" => Ok(StatisticKind::Entropy),
            "kl" => Ok(StatisticKind::Kl),
            "mean-variance" | "mean_variance" | "meanvar" => Ok(StatisticKind::MeanVariance),
            "orthogonal" => Ok(StatisticKind::Orthogonal),
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

/// The image `f(λ)` of a statistic, flattened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue(pub Vec<f64>);

impl StatisticValue {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Anything that can act as `f` in the proximity constraint.
///
/// [`StatisticKind`] implements this directly from the parameter layout;
/// amortized models implement it by pushing parameters through a network.
pub trait ProximityStatistic {
    fn eval(&self, params: &ParamVector) -> Result<StatisticValue>;

    /// `cotangentᵀ ∂f/∂λ`, a vector the size of `params`.
    fn vjp(&self, params: &ParamVector, cotangent: &StatisticValue) -> Result<Vec<f64>>;
}

impl ProximityStatistic for StatisticKind {
    fn eval(&self, params: &ParamVector) -> Result<StatisticValue> {
        eval_statistic(*self, params)
    }

    fn vjp(&self, params: &ParamVector, cotangent: &StatisticValue) -> Result<Vec<f64>> {
        statistic_vjp(*self, params, cotangent)
    }
}

enum Factor<'a> {
    Bernoulli { slice: &'a Slice, prior: f64 },
    Gaussian { mean: &'a Slice, log_std: &'a Slice },
}

fn factors(layout: &Layout) -> Result<Vec<Factor<'_>>> {
    let pairs = layout.gaussian_pairs()?;
    let mut out = Vec::new();
    for s in layout.slices() {
        match s.kind {
            SliceKind::BernoulliLogit { prior } => out.push(Factor::Bernoulli { slice: s, prior }),
            SliceKind::GaussianMean => {
                let (mean, log_std) = pairs
                    .iter()
                    .find(|(m, _)| m.offset == s.offset)
                    .copied()
                    .expect("pairs built from the same layout");
                out.push(Factor::Gaussian { mean, log_std });
            }
            _ => {}
        }
    }
    Ok(out)
}

fn require_factors<'a>(kind: StatisticKind, layout: &'a Layout) -> Result<Vec<Factor<'a>>> {
    let f = factors(layout)?;
    let has_scale = layout
        .of_kind(|k| *k == SliceKind::GaussianLogStd)
        .next()
        .is_some();
    if f.is_empty() && !(kind == StatisticKind::Entropy && has_scale) {
        return Err(Error::Config(format!(
            "{} statistic needs at least one distribution slice in the layout",
            kind.name()
        )));
    }
    Ok(f)
}

fn weight_slices(layout: &Layout) -> Result<Vec<&Slice>> {
    let w: Vec<_> = layout.of_kind(|k| *k == SliceKind::WeightMatrix).collect();
    if w.is_empty() {
        return Err(Error::Config(
            "orthogonal statistic needs at least one weight-matrix slice".into(),
        ));
    }
    Ok(w)
}

/// Output dimension of `kind` for `layout`; depends only on the layout.
pub fn statistic_dim(kind: StatisticKind, layout: &Layout) -> Result<usize> {
    Ok(match kind {
        StatisticKind::Identity => layout.len(),
        StatisticKind::Entropy | StatisticKind::Kl => {
            require_factors(kind, layout)?;
            1
        }
        StatisticKind::MeanVariance => {
            let n: usize = require_factors(kind, layout)?
                .iter()
                .map(|f| match f {
                    Factor::Bernoulli { slice, .. } => slice.len(),
                    Factor::Gaussian { mean, .. } => mean.len(),
                })
                .sum();
            2 * n
        }
        StatisticKind::Orthogonal => weight_slices(layout)?.iter().map(|w| w.rows * w.rows).sum(),
    })
}

const HALF_LN_2PI_E: f64 = 0.5 * 2.837_877_066_409_345; // ½ ln(2πe)

pub fn eval_statistic(kind: StatisticKind, params: &ParamVector) -> Result<StatisticValue> {
    debug_assert!((HALF_LN_2PI_E - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-15);
    let layout = params.layout().as_ref();
    let v = params.values();
    let value = match kind {
        StatisticKind::Identity => v.to_vec(),
        StatisticKind::Entropy => {
            require_factors(kind, layout)?;
            let mut h = 0.0;
            for s in layout.slices() {
                match s.kind {
                    SliceKind::BernoulliLogit { .. } => {
                        h += v[s.range()]
                            .iter()
                            .map(|&a| bernoulli_entropy_logit(a))
                            .sum::<f64>();
                    }
                    SliceKind::GaussianLogStd => {
                        h += v[s.range()]
                            .iter()
                            .map(|&ls| HALF_LN_2PI_E + ls)
                            .sum::<f64>();
                    }
                    _ => {}
                }
            }
            vec![h]
        }
        StatisticKind::Kl => {
            let mut kl = 0.0;
            for f in require_factors(kind, layout)? {
                match f {
                    Factor::Bernoulli { slice, prior } => {
                        for &a in &v[slice.range()] {
                            kl += bernoulli_kl_logit(a, prior);
                        }
                    }
                    Factor::Gaussian { mean, log_std } => {
                        for (&m, &ls) in v[mean.range()].iter().zip(&v[log_std.range()]) {
                            kl += 0.5 * (m * m + (2.0 * ls).exp() - 1.0) - ls;
                        }
                    }
                }
            }
            vec![kl]
        }
        StatisticKind::MeanVariance => {
            let mut means = Vec::new();
            let mut vars = Vec::new();
            for f in require_factors(kind, layout)? {
                match f {
                    Factor::Bernoulli { slice, .. } => {
                        for &a in &v[slice.range()] {
                            let p = sigmoid(a);
                            means.push(p);
                            vars.push(p * (1.0 - p));
                        }
                    }
                    Factor::Gaussian { mean, log_std } => {
                        means.extend_from_slice(&v[mean.range()]);
                        vars.extend(v[log_std.range()].iter().map(|ls| (2.0 * ls).exp()));
                    }
                }
            }
            means.extend(vars);
            means
        }
        StatisticKind::Orthogonal => {
            let mut out = Vec::new();
            for w in weight_slices(layout)? {
                gram_into(&v[w.range()], w.rows, w.cols, &mut out);
            }
            out
        }
    };
    Ok(StatisticValue(value))
}

/// KL(Bernoulli(σ(a)) ‖ Bernoulli(prior)).
pub fn bernoulli_kl_logit(a: f64, prior: f64) -> f64 {
    let p = sigmoid(a);
    // ln p = -softplus(-a), ln(1-p) = -softplus(a)
    let ln_p = crate::math::log_sigmoid(a);
    let ln_q = crate::math::log_sigmoid(-a);
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (ln_p - prior.ln());
    }
    if p < 1.0 {
        kl += (1.0 - p) * (ln_q - (1.0 - prior).ln());
    }
    kl
}

fn gram_into(w: &[f64], rows: usize, cols: usize, out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + rows * rows, 0.0);
    for i in 0..rows {
        let wi = &w[i * cols..(i + 1) * cols];
        for j in i..rows {
            let wj = &w[j * cols..(j + 1) * cols];
            let g = crate::math::dot(wi, wj);
            out[start + i * rows + j] = g;
            out[start + j * rows + i] = g;
        }
    }
}

pub fn statistic_vjp(
    kind: StatisticKind,
    params: &ParamVector,
    cotangent: &StatisticValue,
) -> Result<Vec<f64>> {
    let layout = params.layout().as_ref();
    let v = params.values();
    let ct = cotangent.as_slice();
    check_len(
        "statistic cotangent",
        statistic_dim(kind, layout)?,
        ct.len(),
    )?;
    let mut grad = vec![0.0; v.len()];
    match kind {
        StatisticKind::Identity => grad.copy_from_slice(ct),
        StatisticKind::Entropy => {
            let c = ct[0];
            for s in layout.slices() {
                match s.kind {
                    SliceKind::BernoulliLogit { .. } => {
                        for i in s.range() {
                            // dH/da = −a σ(a)(1−σ(a))
                            let p = sigmoid(v[i]);
                            grad[i] = -c * v[i] * p * (1.0 - p);
                        }
                    }
                    SliceKind::GaussianLogStd => {
                        for i in s.range() {
                            grad[i] = c;
                        }
                    }
                    _ => {}
                }
            }
        }
        StatisticKind::Kl => {
            let c = ct[0];
            for f in factors(layout)? {
                match f {
                    Factor::Bernoulli { slice, prior } => {
                        let prior_logit = logit(prior);
                        for i in slice.range() {
                            let p = sigmoid(v[i]);
                            grad[i] = c * p * (1.0 - p) * (v[i] - prior_logit);
                        }
                    }
                    Factor::Gaussian { mean, log_std } => {
                        for (i, j) in mean.range().zip(log_std.range()) {
                            grad[i] = c * v[i];
                            grad[j] = c * ((2.0 * v[j]).exp() - 1.0);
                        }
                    }
                }
            }
        }
        StatisticKind::MeanVariance => {
            let half = ct.len() / 2;
            let (ct_mean, ct_var) = ct.split_at(half);
            let mut pos = 0;
            for f in factors(layout)? {
                match f {
                    Factor::Bernoulli { slice, .. } => {
                        for i in slice.range() {
                            let p = sigmoid(v[i]);
                            let dp = p * (1.0 - p);
                            grad[i] = ct_mean[pos] * dp + ct_var[pos] * dp * (1.0 - 2.0 * p);
                            pos += 1;
                        }
                    }
                    Factor::Gaussian { mean, log_std } => {
                        for (i, j) in mean.range().zip(log_std.range()) {
                            grad[i] = ct_mean[pos];
                            grad[j] = ct_var[pos] * 2.0 * (2.0 * v[j]).exp();
                            pos += 1;
                        }
                    }
                }
            }
        }
        StatisticKind::Orthogonal => {
            let mut offset = 0;
            for w in weight_slices(layout)? {
                let (rows, cols) = (w.rows, w.cols);
                let c = &ct[offset..offset + rows * rows];
                let wv = &v[w.range()];
                // d⟨C, WWᵀ⟩/dW = (C + Cᵀ) W
                for i in 0..rows {
                    let out = &mut grad[w.offset + i * cols..w.offset + (i + 1) * cols];
                    for j in 0..rows {
                        let sym = c[i * rows + j] + c[j * rows + i];
                        if sym == 0.0 {
                            continue;
                        }
                        for (o, &x) in out.iter_mut().zip(&wv[j * cols..(j + 1) * cols]) {
                            *o += sym * x;
                        }
                    }
                }
                offset += rows * rows;
            }
        }
    }
    Ok(grad)
}
