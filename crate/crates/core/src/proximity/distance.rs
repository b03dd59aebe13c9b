use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Distance between two statistic values. Both are minimized (at zero) when
/// the arguments coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    /// `½‖x − y‖²`.
    SquaredDifference,
    /// Coordinatewise `|x−y|` below 1 and `½(x−y)² + ½` beyond, summed.
    InverseHuber,
}

impl Distance {
    pub fn value(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Distance::SquaredDifference => squared_difference(x, y),
            Distance::InverseHuber => inverse_huber(x, y),
        }
    }

    /// Gradient in the second argument.
    pub fn grad(self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        distance_grad(self, x, y)
    }

    pub fn name(self) -> &'static str {
        match self {
            Distance::SquaredDifference => "squared-difference",
            Distance::InverseHuber => "inverse-huber",
        }
    }
}

impl std::str::FromStr for Distance {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-difference" | "square" => Ok(Distance::SquaredDifference),
            "inverse-huber" | "huber" => Ok(Distance::InverseHuber),
            other => Err(crate::Error::Config(format!("unknown distance `{other}`"))),
        }
    }
}

pub fn squared_difference(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("squared_difference", x.len(), y.len())?;
    Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

#[inline]
fn inverse_huber_scalar(diff: f64) -> f64 {
    let a = diff.abs();
    if a < 1.0 {
        a
    } else {
        0.5 * diff * diff + 0.5
    }
}

pub fn inverse_huber(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("inverse_huber", x.len(), y.len())?;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| inverse_huber_scalar(a - b))
        .sum())
}

pub fn distance_grad(distance: Distance, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_len("distance_grad", x.len(), y.len())?;
    Ok(match distance {
        Distance::SquaredDifference => x.iter().zip(y).map(|(a, b)| b - a).collect(),
        Distance::InverseHuber => x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let diff = b - a;
                if diff.abs() < 1.0 {
                    // sign(0) = 0 keeps the gradient zero at the minimum.
                    if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                } else {
                    diff
                }
            })
            .collect(),
    })
}
