//! Local randomizers: budget splitting, the Laplace mechanism for bounded
//! feature vectors, and randomized response for binary values.
//!
//! Every sampler takes its random stream explicitly so that a run is a pure
//! function of its seed.

use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::Rng;

use crate::data::Label;
use crate::error::{invalid, Error, Result};

/// Sensitivity of one coordinate bounded to [−1, 1].
pub const COORDINATE_SENSITIVITY: f64 = 2.0;

/// A privacy parameter. Strictly positive; `+∞` means "no noise".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const INFINITE: Epsilon = Epsilon(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 {
            return Err(invalid(format!("epsilon must be > 0, got {value}")));
        }
        Ok(Epsilon(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Budget multiplied by a positive factor, e.g. 0.5 for an even split.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        Epsilon::new(self.0 * factor)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Epsilon::INFINITE),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| invalid(format!("not a number: {s:?}")))?;
                Epsilon::new(v)
            }
        }
    }
}

/// Allocation of the per-client budget between features, labels and the
/// evaluation bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub total: Epsilon,
    pub features: Epsilon,
    pub labels: Epsilon,
    pub evaluation: Epsilon,
}

impl PrivacyBudget {
    pub fn new(total: Epsilon, features: Epsilon, labels: Epsilon, evaluation: Epsilon) -> Result<Self> {
        if !features.is_infinite() && !labels.is_infinite() {
            let sum = features.value() + labels.value();
            if (sum - total.value()).abs() > 1e-12 * total.value().abs().max(1.0) {
                return Err(invalid(format!(
                    "feature and label budgets sum to {sum}, expected {total}"
                )));
            }
        }
        Ok(Self {
            total,
            features,
            labels,
            evaluation,
        })
    }

    /// Same allocation with a different evaluation budget.
    pub fn with_evaluation(mut self, evaluation: Epsilon) -> Self {
        self.evaluation = evaluation;
        self
    }

    /// Budget with every component infinite: no perturbation anywhere.
    pub fn unlimited() -> Self {
        Self {
            total: Epsilon::INFINITE,
            features: Epsilon::INFINITE,
            labels: Epsilon::INFINITE,
            evaluation: Epsilon::INFINITE,
        }
    }
}

/// Splits `epsilon` so that each of the `d` feature coordinates and the label
/// get an equal share: `ε_y = ε/(d+1)`, `ε_z = d·ε/(d+1)`. The evaluation
/// budget defaults to the full `ε`.
pub fn split_budget(epsilon: Epsilon, d: usize) -> Result<PrivacyBudget> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if epsilon.is_infinite() {
        return Ok(PrivacyBudget::unlimited());
    }
    let e = epsilon.value();
    let labels = e / (d as f64 + 1.0);
    let features = e - labels;
    PrivacyBudget::new(epsilon, Epsilon::new(features)?, Epsilon::new(labels)?, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    scale: f64,
}

impl LaplaceParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("laplace scale must be finite and > 0, got {scale}")));
        }
        Ok(Self { scale })
    }

    /// Per-coordinate scale `λ = dΔ/ε_z` for a `d`-vector in [−1,1]^d.
    /// `None` when the feature budget is infinite.
    pub fn for_features(d: usize, epsilon_z: Epsilon) -> Result<Option<Self>> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if epsilon_z.is_infinite() {
            return Ok(None);
        }
        Self::new(d as f64 * COORDINATE_SENSITIVITY / epsilon_z.value()).map(Some)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        if u < 0.5 {
            self.scale * (2.0 * u).ln()
        } else {
            -self.scale * (2.0 * (1.0 - u)).ln()
        }
    }
}

pub fn laplace_sample<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Result<f64> {
    Ok(LaplaceParams::new(scale)?.sample(rng))
}

/// Adds i.i.d. Laplace noise of scale `2d/ε_z` to every coordinate of a
/// vector bounded in [−1,1].
pub fn perturb_features<R: Rng + ?Sized>(z_star: &[f64], epsilon_z: Epsilon, rng: &mut R) -> Result<Vec<f64>> {
    if let Some((k, v)) = z_star.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
        return Err(invalid(format!(
            "coordinate {k} = {v} lies outside [-1, 1]; sensitivity bound violated"
        )));
    }
    match LaplaceParams::for_features(z_star.len(), epsilon_z)? {
        None => Ok(z_star.to_vec()),
        Some(lap) => Ok(z_star.iter().map(|&v| v + lap.sample(rng)).collect()),
    }
}

/// Probability that randomized response reports the true value,
/// `q = e^ε/(1+e^ε)`.
pub fn rr_keep_probability(epsilon: Epsilon) -> f64 {
    if epsilon.is_infinite() {
        1.0
    } else {
        1.0 / (1.0 + (-epsilon.value()).exp())
    }
}

/// Values randomized response can act on.
pub trait Binary: Copy {
    fn flip(self) -> Self;
}

impl Binary for bool {
    fn flip(self) -> Self {
        !self
    }
}

impl Binary for Label {
    fn flip(self) -> Self {
        self.flipped()
    }
}

pub fn randomized_response<T: Binary, R: Rng + ?Sized>(value: T, epsilon: Epsilon, rng: &mut R) -> T {
    if epsilon.is_infinite() {
        return value;
    }
    let q = rr_keep_probability(epsilon);
    if rng.gen::<f64>() < q {
        value
    } else {
        value.flip()
    }
}
