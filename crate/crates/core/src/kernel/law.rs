//! Scalar latent laws (lifetimes, contact probabilities, connectivities).

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SimRng;

/// A nonnegative scalar random variable with known moments and Laplace
/// transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ScalarLaw {
    Constant { value: f64 },
    /// Takes the value 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl ScalarLaw {
    pub fn constant(value: f64) -> Self {
        ScalarLaw::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let ok = match self {
            ScalarLaw::Constant { value } => finite_nonneg(*value),
            ScalarLaw::Bernoulli { p } => (0.0..=1.0).contains(p),
            ScalarLaw::Uniform { low, high } => finite_nonneg(*low) && high.is_finite() && high >= low,
            ScalarLaw::Exponential { mean } => mean.is_finite() && *mean > 0.0,
            ScalarLaw::Gamma { shape, scale } => {
                shape.is_finite() && *shape > 0.0 && scale.is_finite() && *scale > 0.0
            }
            ScalarLaw::Discrete { values, probs } => {
                !values.is_empty()
                    && values.len() == probs.len()
                    && values.iter().all(|v| finite_nonneg(*v))
                    && probs.iter().all(|p| finite_nonneg(*p))
                    && (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid scalar law {self:?}")))
        }
    }

    /// Smallest and largest attainable values (the upper end may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match self {
            ScalarLaw::Constant { value } => (*value, *value),
            ScalarLaw::Bernoulli { p } => {
                if *p == 0.0 {
                    (0.0, 0.0)
                } else if *p == 1.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            }
            ScalarLaw::Uniform { low, high } => (*low, *high),
            ScalarLaw::Exponential { .. } | ScalarLaw::Gamma { .. } => (0.0, f64::INFINITY),
            ScalarLaw::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
                    (lo.min(*v), hi.max(*v))
                }),
        }
    }

    /// Validates the law and checks that it lives in `[0, 1]`.
    pub fn validate_probability(&self) -> Result<()> {
        self.validate()?;
        let (_, hi) = self.support();
        if hi > 1.0 {
            return Err(Error::invalid(format!(
                "contact probability law must be supported on [0,1]: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        let (lo, hi) = self.support();
        lo == hi
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Constant { value } => *value,
            ScalarLaw::Bernoulli { p } => *p,
            ScalarLaw::Uniform { low, high } => 0.5 * (low + high),
            ScalarLaw::Exponential { mean } => *mean,
            ScalarLaw::Gamma { shape, scale } => shape * scale,
            ScalarLaw::Discrete { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::Bernoulli { p } => p * (1.0 - p),
            ScalarLaw::Uniform { low, high } => (high - low).powi(2) / 12.0,
            ScalarLaw::Exponential { mean } => mean * mean,
            ScalarLaw::Gamma { shape, scale } => shape * scale * scale,
            ScalarLaw::Discrete { values, probs } => {
                let m = self.mean();
                values.iter().zip(probs).map(|(v, p)| p * (v - m).powi(2)).sum()
            }
        }
    }

    /// `E[exp(-t X)]` for `t >= 0`.
    pub fn laplace(&self, t: f64) -> f64 {
        match self {
            ScalarLaw::Constant { value } => (-t * value).exp(),
            ScalarLaw::Bernoulli { p } => 1.0 - p + p * (-t).exp(),
            ScalarLaw::Uniform { low, high } => {
                let width = high - low;
                let x = t * width;
                let ratio = if x < 1e-8 { 1.0 - 0.5 * x } else { -(-x).exp_m1() / x };
                (-t * low).exp() * ratio
            }
            ScalarLaw::Exponential { mean } => 1.0 / (1.0 + mean * t),
            ScalarLaw::Gamma { shape, scale } => (1.0 + scale * t).powf(-shape),
            ScalarLaw::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .map(|(v, p)| p * (-t * v).exp())
                .sum(),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            ScalarLaw::Constant { value } => *value,
            ScalarLaw::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ScalarLaw::Exponential { mean } => {
                // validated: mean > 0
                mean * Exp::new(1.0).expect("unit rate").sample(rng)
            }
            ScalarLaw::Gamma { shape, scale } => Gamma::new(*shape, *scale)
                .expect("validated gamma parameters")
                .sample(rng),
            ScalarLaw::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding in the cumulative sum
                *values.last().expect("nonempty support")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn laws() -> Vec<ScalarLaw> {
        vec![
            ScalarLaw::constant(0.7),
            ScalarLaw::Bernoulli { p: 0.3 },
            ScalarLaw::Uniform { low: 0.2, high: 0.9 },
            ScalarLaw::Exponential { mean: 2.0 },
            ScalarLaw::Gamma { shape: 2.5, scale: 0.4 },
            ScalarLaw::Discrete { values: vec![1.0, 3.0], probs: vec![0.5, 0.5] },
        ]
    }

    #[test]
    fn sample_moments_match_declared() {
        let mut rng = SimRng::seed_from_u64(11);
        let n = 200_000;
        for law in laws() {
            law.validate().unwrap();
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (law.variance() / n as f64).sqrt();
            assert!((m - law.mean()).abs() <= 4.0 * se + 1e-9, "{law:?}: mean {m}");
            assert!((v - law.variance()).abs() <= 0.03 * law.variance() + 1e-9, "{law:?}: var {v}");
            let t = 0.8;
            let lt = xs.iter().map(|x| (-t * x).exp()).sum::<f64>() / n as f64;
            assert!((lt - law.laplace(t)).abs() < 5e-3, "{law:?}: laplace {lt}");
        }
    }

    #[test]
    fn laplace_at_zero_is_one() {
        for law in laws() {
            assert!((law.laplace(0.0) - 1.0).abs() < 1e-15, "{law:?}");
        }
    }

    #[test]
    fn discrete_with_bad_mass_rejected() {
        let law = ScalarLaw::Discrete { values: vec![1.0], probs: vec![0.5] };
        assert!(law.validate().is_err());
        assert!(ScalarLaw::Exponential { mean: 1.0 }.validate_probability().is_err());
        assert!(ScalarLaw::Uniform { low: 0.0, high: 1.0 }.validate_probability().is_ok());
    }
}
