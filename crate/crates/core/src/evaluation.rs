//! Privatized accuracy feedback.
//!
//! Each evaluation client scores the classifier on its own unperturbed
//! record, then reports only the randomized-response version of the
//! "was it correct" bit. Debiasing the mean of those bits gives an unbiased
//! accuracy estimate.

use rand::Rng;

use crate::accounting::PrivacyAccountant;
use crate::classifiers::LinearClassifier;
use crate::data::Client;
use crate::error::{invalid, Result};
use crate::mechanisms::{randomized_response, rr_keep_probability, Epsilon};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyEstimate {
    pub n1: usize,
    /// Mean of the privatized bits.
    pub raw_mean: f64,
    /// `(r̂ + q − 1)/(2q − 1)`; deliberately not clipped to [0, 1].
    pub debiased: f64,
    pub epsilon_v: Epsilon,
    /// Upper bound on the variance of `debiased`.
    pub variance_bound: f64,
}

/// Inverse of the randomized-response expectation map,
/// `(r̂ + q − 1)/(2q − 1)`, written so that `r̂ = ½` maps to exactly ½.
pub fn debias(raw_mean: f64, q: f64) -> f64 {
    0.5 + (raw_mean - 0.5) / (2.0 * q - 1.0)
}

/// `((e^ε+1)/(e^ε−1))² / (4 n1)`, i.e. `coth²(ε/2)/(4 n1)`.
pub fn variance_bound(epsilon_v: Epsilon, n1: usize) -> f64 {
    let inflation = if epsilon_v.is_infinite() {
        1.0
    } else {
        1.0 / (0.5 * epsilon_v.value()).tanh()
    };
    inflation * inflation / (4.0 * n1 as f64)
}

pub fn estimate_accuracy(bits: &[bool], epsilon_v: Epsilon) -> Result<AccuracyEstimate> {
    if bits.is_empty() {
        return Err(invalid("cannot estimate accuracy from zero feedback bits"));
    }
    let n1 = bits.len();
    let raw_mean = bits.iter().filter(|&&b| b).count() as f64 / n1 as f64;
    let q = rr_keep_probability(epsilon_v);
    Ok(AccuracyEstimate {
        n1,
        raw_mean,
        debiased: debias(raw_mean, q),
        epsilon_v,
        variance_bound: variance_bound(epsilon_v, n1),
    })
}

/// The privatized correctness bit one evaluation client reports.
pub fn client_feedback<R: Rng + ?Sized>(
    clf: &LinearClassifier,
    client: &Client,
    epsilon_v: Epsilon,
    rng: &mut R,
) -> Result<bool> {
    let correct = clf.predict_label(&client.features)? == client.label;
    Ok(randomized_response(correct, epsilon_v, rng))
}

/// Queries every client once and aggregates.
pub fn evaluate_classifier<R: Rng + ?Sized>(
    clf: &LinearClassifier,
    clients: &[Client],
    epsilon_v: Epsilon,
    rng: &mut R,
) -> Result<AccuracyEstimate> {
    let bits = clients
        .iter()
        .map(|c| client_feedback(clf, c, epsilon_v, rng))
        .collect::<Result<Vec<_>>>()?;
    estimate_accuracy(&bits, epsilon_v)
}

/// Like [`evaluate_classifier`] over `pool[indices]`, charging each queried
/// client `epsilon_v` with the accountant.
pub fn evaluate_audited<R: Rng + ?Sized>(
    clf: &LinearClassifier,
    pool: &[Client],
    indices: &[usize],
    epsilon_v: Epsilon,
    accountant: &mut PrivacyAccountant,
    rng: &mut R,
) -> Result<AccuracyEstimate> {
    let mut bits = Vec::with_capacity(indices.len());
    for &i in indices {
        accountant.charge(i, epsilon_v)?;
        bits.push(client_feedback(clf, &pool[i], epsilon_v, rng)?);
    }
    estimate_accuracy(&bits, epsilon_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{FeatureSpace, Method};
    use crate::data::Label;
    use crate::rng::seeded;

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    fn identity_clf() -> LinearClassifier {
        LinearClassifier::new(Method::Logistic, 0.0, vec![1.0], FeatureSpace::Vector(1)).unwrap()
    }

    #[test]
    fn debias_example() {
        assert!((debias(0.7, 0.75) - 0.9).abs() < 1e-12);
        assert!((debias(0.42, 1.0) - 0.42).abs() < 1e-15);
    }

    #[test]
    fn tie_debiases_to_exactly_one_half() {
        for e in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let q = rr_keep_probability(Epsilon::new(e).unwrap());
            assert_eq!(debias(0.5, q), 0.5);
        }
        let bits: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        assert_eq!(estimate_accuracy(&bits, Epsilon::new(1.0).unwrap()).unwrap().debiased, 0.5);
    }

    #[test]
    fn debias_inverts_forward_map() {
        for i in 0..=20 {
            let r = i as f64 / 20.0;
            for j in 1..=20 {
                let q = 0.5 + j as f64 / 40.0;
                let forward = q * r + (1.0 - q) * (1.0 - r);
                assert!((debias(forward, q) - r).abs() < 1e-12, "r={r} q={q}");
            }
        }
    }

    #[test]
    fn variance_bound_example() {
        assert!((variance_bound(eps(3f64.ln()), 50) - 0.02).abs() < 1e-15);
        assert_eq!(variance_bound(Epsilon::INFINITE, 25), 0.01);
        let e = 1.0f64.exp();
        let expect = ((e + 1.0) / (e - 1.0)).powi(2) / 200.0;
        assert!((variance_bound(eps(1.0), 50) - expect).abs() < 1e-15);
    }

    #[test]
    fn estimate_rejects_empty() {
        assert!(estimate_accuracy(&[], eps(1.0)).is_err());
    }

    #[test]
    fn estimate_is_not_clipped() {
        let est = estimate_accuracy(&[true; 10], eps(1.0)).unwrap();
        assert_eq!(est.raw_mean, 1.0);
        assert!(est.debiased > 1.0);
        let est = estimate_accuracy(&[false; 10], eps(1.0)).unwrap();
        assert!(est.debiased < 0.0);
    }

    #[test]
    fn noiseless_feedback() {
        let clf = identity_clf();
        let mut rng = seeded(0);
        let right = Client::new(vec![0.5], Label::Positive);
        let wrong = Client::new(vec![0.5], Label::Negative);
        assert!(client_feedback(&clf, &right, Epsilon::INFINITE, &mut rng).unwrap());
        assert!(!client_feedback(&clf, &wrong, Epsilon::INFINITE, &mut rng).unwrap());
        let clients = vec![right.clone(); 30];
        let est = evaluate_classifier(&clf, &clients, Epsilon::INFINITE, &mut rng).unwrap();
        assert_eq!(est.debiased, 1.0);
        assert_eq!(est.n1, 30);
    }

    #[test]
    fn feedback_flip_rate() {
        let clf = identity_clf();
        let client = Client::new(vec![0.5], Label::Positive);
        let mut rng = seeded(10);
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| !client_feedback(&clf, &client, eps(3f64.ln()), &mut rng).unwrap())
            .count();
        let rate = flips as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((rate - 0.25).abs() < 3.0 * se, "flip rate {rate}");
    }

    #[test]
    fn coin_flip_classifier_estimates_half() {
        // Constant classifier on a balanced pool is right half the time.
        let clf = LinearClassifier::constant(Method::Logistic, Label::Positive, FeatureSpace::Vector(1));
        let clients: Vec<Client> = (0..20_000)
            .map(|i| Client::new(vec![0.0], if i % 2 == 0 { Label::Positive } else { Label::Negative }))
            .collect();
        let mut rng = seeded(2);
        let est = evaluate_classifier(&clf, &clients, eps(1.0), &mut rng).unwrap();
        assert!((est.debiased - 0.5).abs() < 3.0 * est.variance_bound.sqrt());
    }

    #[test]
    fn audited_evaluation_charges_once() {
        let clf = identity_clf();
        let pool: Vec<Client> = (0..10).map(|_| Client::new(vec![0.1], Label::Positive)).collect();
        let mut acc = PrivacyAccountant::new(10, eps(1.0));
        let mut rng = seeded(1);
        evaluate_audited(&clf, &pool, &[0, 2, 4], eps(1.0), &mut acc, &mut rng).unwrap();
        assert_eq!(acc.queries(2), 1);
        assert_eq!(acc.queries(1), 0);
        assert!(evaluate_audited(&clf, &pool, &[2], eps(1.0), &mut acc, &mut rng).is_err());
    }
}
