//! Client records and the two views the protocol distinguishes: the true
//! record a client keeps to itself, and the privatized pair it uploads.

use std::fmt;

use crate::error::{invalid, Result};

/// Binary class label, encoded as −1/+1 on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// Sign rule with ties resolved to the positive class.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn from_sign(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            _ => Err(invalid(format!("label must be -1 or 1, got {v}"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

/// A client's unperturbed record: rescaled features in [−1,1] and the true
/// label. Only evaluation feedback and test scoring may read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Client {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Client {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// What a training client uploads after local perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPair {
    pub features: Vec<f64>,
    pub label: Label,
}

impl PerturbedPair {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

/// Common access for training routines, which accept either view.
pub trait LabeledPoint {
    fn features(&self) -> &[f64];
    fn label(&self) -> Label;
}

impl LabeledPoint for Client {
    fn features(&self) -> &[f64] {
        &self.features
    }
    fn label(&self) -> Label {
        self.label
    }
}

impl LabeledPoint for PerturbedPair {
    fn features(&self) -> &[f64] {
        &self.features
    }
    fn label(&self) -> Label {
        self.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_sign_ties_to_positive() {
        assert_eq!(Label::from_score(0.3), Label::Positive);
        assert_eq!(Label::from_score(-0.3), Label::Negative);
        assert_eq!(Label::from_score(0.0), Label::Positive);
        assert_eq!(Label::from_score(-0.0), Label::Positive);
    }

    #[test]
    fn sign_round_trip() {
        for l in [Label::Positive, Label::Negative] {
            assert_eq!(Label::from_sign(l.sign() as i64).unwrap(), l);
            assert_eq!(l.flipped().flipped(), l);
        }
        assert!(Label::from_sign(0).is_err());
    }
}
