//! Small numerically careful scalar and dense-matrix helpers shared by the models.

/// Logistic sigmoid, written to avoid overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(p / (1 - p))`.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log-probability of a binary outcome under a Bernoulli with the given logit.
#[inline]
pub fn bernoulli_log_prob(value: f64, logit: f64) -> f64 {
    value * logit - softplus(logit)
}

/// `(ln Bernoulli(value; σ(logit)), value − σ(logit))` from a single exponential.
#[inline]
pub fn bernoulli_log_prob_and_residual(value: f64, logit: f64) -> (f64, f64) {
    let e = (-logit.abs()).exp();
    let softplus = logit.max(0.0) + e.ln_1p();
    let p = if logit >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (value * logit - softplus, value - p)
}

/// Entropy of Bernoulli(σ(a)) in nats, stable for any finite logit.
#[inline]
pub fn bernoulli_entropy_logit(a: f64) -> f64 {
    let p = sigmoid(a);
    // p·softplus(-a) + (1-p)·softplus(a)
    p * softplus(-a) + (1.0 - p) * softplus(a)
}

/// Entropy of Bernoulli(p) with the 0·ln 0 = 0 convention.
pub fn bernoulli_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// Stable `ln Σ exp(v)`. Returns `-inf` for an empty slice or all `-inf` inputs.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = W x + b` with `W` row-major `rows × cols`.
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Wᵀ g` with `W` row-major `g.len() × out.len()`.
pub fn add_transpose_matvec(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += gr * wv;
        }
    }
}

/// `dW += scale · g xᵀ` for row-major `dW`.
pub fn add_outer(dw: &mut [f64], g: &[f64], x: &[f64], scale: f64) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        let s = scale * gr;
        if s == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += s * xv;
        }
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        crate::error::check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}
