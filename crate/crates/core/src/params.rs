//! Flat parameter storage with a typed slice layout.
//!
//! Every optimizer in this crate works on one contiguous `Vec<f64>`. The
//! [`Layout`] records which ranges of that vector are Bernoulli logits,
//! Gaussian means, log standard deviations or weight matrices, which is all
//! the proximity statistics need to interpret the numbers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SliceKind {
    /// Logits of independent Bernoulli factors; `prior` is the model's prior
    /// success probability for the KL statistic.
    BernoulliLogit {
        prior: f64,
    },
    GaussianMean,
    GaussianLogStd,
    /// A weight matrix subject to the orthogonal statistic.
    WeightMatrix,
    Bias,
    Unconstrained,
}

impl SliceKind {
    pub fn is_distribution(&self) -> bool {
        matches!(
            self,
            SliceKind::BernoulliLogit { .. } | SliceKind::GaussianMean | SliceKind::GaussianLogStd
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub kind: SliceKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Disjoint slices covering `0..len`, in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    slices: Vec<Slice>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a `rows × cols` slice after the existing ones.
    pub fn push(
        &mut self,
        name: impl Into<String>,
        kind: SliceKind,
        rows: usize,
        cols: usize,
    ) -> &mut Self {
        let slice = Slice {
            name: name.into(),
            kind,
            offset: self.len,
            rows,
            cols,
        };
        self.len += slice.len();
        self.slices.push(slice);
        self
    }

    pub fn with(
        mut self,
        name: impl Into<String>,
        kind: SliceKind,
        rows: usize,
        cols: usize,
    ) -> Self {
        self.push(name, kind, rows, cols);
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn get(&self, name: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn of_kind<'a>(
        &'a self,
        pred: impl Fn(&SliceKind) -> bool + 'a,
    ) -> impl Iterator<Item = &'a Slice> + 'a {
        self.slices.iter().filter(move |s| pred(&s.kind))
    }

    /// Gaussian factors as (mean slice, log-std slice) pairs, matched by order of appearance.
    pub fn gaussian_pairs(&self) -> Result<Vec<(&Slice, &Slice)>> {
        let means: Vec<_> = self.of_kind(|k| *k == SliceKind::GaussianMean).collect();
        let scales: Vec<_> = self.of_kind(|k| *k == SliceKind::GaussianLogStd).collect();
        if means.len() != scales.len() {
            return Err(Error::Config(format!(
                "{} gaussian mean slices but {} log-std slices",
                means.len(),
                scales.len()
            )));
        }
        means
            .into_iter()
            .zip(scales)
            .map(|(m, s)| {
                check_len("gaussian factor pair", m.len(), s.len())?;
                Ok((m, s))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", layout.len(), values.len())?;
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        let s = self
            .layout
            .get(name)
            .unwrap_or_else(|| panic!("no slice named {name}"));
        &self.values[s.range()]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let range = self
            .layout
            .get(name)
            .unwrap_or_else(|| panic!("no slice named {name}"))
            .range();
        &mut self.values[range]
    }

    /// Replaces the values, keeping the layout. Rejects non-finite entries.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        check_len("parameter vector", self.values.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "parameter {i} became {} after update",
                values[i]
            )));
        }
        self.values = values;
        Ok(())
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.layout.clone(), values)
    }
}
