use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    Constant,
    Exponential,
    Linear,
}

/// Decay of the constraint magnitude over a run of `total` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: DecayKind,
    pub gamma: f64,
    pub total: usize,
}

impl Schedule {
    pub fn constant(total: usize) -> Self {
        Self {
            kind: DecayKind::Constant,
            gamma: 1.0,
            total,
        }
    }

    pub fn exponential(gamma: f64, total: usize) -> Self {
        Self {
            kind: DecayKind::Exponential,
            gamma,
            total,
        }
    }

    pub fn linear(total: usize) -> Self {
        Self {
            kind: DecayKind::Linear,
            gamma: 1.0,
            total,
        }
    }

    /// Fraction of the initial magnitude left at iteration `t`, in `[0, 1]`.
    pub fn factor(&self, t: usize) -> f64 {
        let total = self.total.max(1);
        let t = if t > total {
            log::warn!("schedule queried at t={t} beyond T={total}; clamping");
            total
        } else {
            t
        };
        let frac = t as f64 / total as f64;
        match self.kind {
            DecayKind::Constant => 1.0,
            DecayKind::Exponential => {
                if self.gamma == 1.0 {
                    1.0
                } else {
                    self.gamma.powf(frac)
                }
            }
            DecayKind::Linear => 1.0 - frac,
        }
    }

    /// `k0 · γ^(t/T)` (exponential), `k0` (constant) or `k0 · (1 − t/T)` (linear).
    pub fn magnitude_at(&self, k0: f64, t: usize) -> f64 {
        k0 * self.factor(t)
    }

    /// Decay factor rescaled to hit exactly 0 at `t = T`: `(γ^(t/T) − γ) / (1 − γ)`
    /// for the exponential kind. Used for annealing temperatures, which must
    /// reach their endpoint.
    pub fn normalized_factor(&self, t: usize) -> f64 {
        match self.kind {
            DecayKind::Exponential if self.gamma < 1.0 => {
                (self.factor(t) - self.gamma) / (1.0 - self.gamma)
            }
            DecayKind::Exponential | DecayKind::Constant => {
                if t >= self.total {
                    0.0
                } else {
                    1.0
                }
            }
            DecayKind::Linear => self.factor(t),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(crate::Error::Config(format!(
                "decay rate {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.total == 0 {
            return Err(crate::Error::Config("schedule needs T ≥ 1".into()));
        }
        Ok(())
    }
}

/// Free-function form of [`Schedule::magnitude_at`].
pub fn magnitude_at(schedule: &Schedule, k0: f64, t: usize) -> f64 {
    schedule.magnitude_at(k0, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_endpoints() {
        let s = Schedule::exponential(1e-5, 1000);
        assert_eq!(s.magnitude_at(7.0, 0), 7.0);
        assert!((s.magnitude_at(7.0, 1000) - 7.0e-5).abs() < 1e-18);
    }

    #[test]
    fn unit_gamma_is_constant() {
        let e = Schedule::exponential(1.0, 50);
        let c = Schedule::constant(50);
        for t in 0..=50 {
            assert_eq!(e.magnitude_at(3.0, t), 3.0);
            assert_eq!(e.magnitude_at(3.0, t), c.magnitude_at(3.0, t));
        }
    }

    #[test]
    fn clamps_past_total() {
        let s = Schedule::linear(10);
        assert_eq!(s.magnitude_at(2.0, 15), 0.0);
        let e = Schedule::exponential(0.5, 10);
        assert_eq!(e.magnitude_at(2.0, 15), 1.0);
    }

    #[test]
    fn nonincreasing() {
        for s in [Schedule::exponential(1e-3, 100), Schedule::linear(100)] {
            let ks: Vec<f64> = (0..=100).map(|t| s.magnitude_at(5.0, t)).collect();
            assert!(ks.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn normalized_factor_reaches_zero() {
        let s = Schedule::exponential(1e-5, 200);
        assert!((s.normalized_factor(0) - 1.0).abs() < 1e-15);
        assert!(s.normalized_factor(200).abs() < 1e-15);
        assert_eq!(Schedule::constant(20).normalized_factor(20), 0.0);
    }
}
