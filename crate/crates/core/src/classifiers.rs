//! Linear weak classifiers over coefficient vectors.
//!
//! A classifier is `f(z) = α + b·z`. For functional inputs `b` holds the basis
//! coefficients of the slope `β(t) = Σ b_k φ_k(t)`, so the same parameters
//! describe the functional rule `α + ∫ x β`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::{Label, LabeledPoint};
use crate::encoding::{reconstruct, BasisSpec, FunctionalSample};
use crate::error::{invalid, Error, Result};
use crate::output::fmt_f64;

/// Coordinate system of the classifier's input.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpace {
    /// Plain feature vectors of the given width.
    Vector(usize),
    /// Coefficients in a functional basis.
    Basis(BasisSpec),
}

impl FeatureSpace {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpace::Vector(d) => *d,
            FeatureSpace::Basis(spec) => spec.dim(),
        }
    }
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSpace::Vector(d) => write!(f, "vector:{d}"),
            FeatureSpace::Basis(spec) => write!(f, "{spec}"),
        }
    }
}

impl FromStr for FeatureSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("vector", d)) => d
                .parse()
                .map(FeatureSpace::Vector)
                .map_err(|_| invalid(format!("bad feature space {s:?}"))),
            _ => s.parse().map(FeatureSpace::Basis),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Logistic,
    LinearSvm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Logistic => "logistic",
            Method::LinearSvm => "linear-svm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Method::Logistic),
            "linear-svm" | "svm" => Ok(Method::LinearSvm),
            _ => Err(invalid(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    /// Newton steps for logistic regression (it usually stops far earlier),
    /// subgradient steps for the SVM.
    pub iterations: usize,
    /// ℓ2 penalty `λ` on the slope coefficients.
    pub regularization: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Logistic,
            iterations: 1000,
            regularization: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(invalid("regularization must be nonnegative"));
        }
        if self.method == Method::LinearSvm && self.regularization == 0.0 {
            return Err(invalid("linear SVM needs a positive regularization"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub method: Method,
    pub alpha: f64,
    pub b: Vec<f64>,
    pub space: FeatureSpace,
}

impl LinearClassifier {
    pub fn new(method: Method, alpha: f64, b: Vec<f64>, space: FeatureSpace) -> Result<Self> {
        if b.len() != space.dim() {
            return Err(invalid(format!(
                "{} slope coefficients for a space of dimension {}",
                b.len(),
                space.dim()
            )));
        }
        Ok(Self {
            method,
            alpha,
            b,
            space,
        })
    }

    pub fn constant(method: Method, label: Label, space: FeatureSpace) -> Self {
        let d = space.dim();
        Self {
            method,
            alpha: label.sign(),
            b: vec![0.0; d],
            space,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `α + b·z`.
    pub fn predict_score(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.b.len() {
            return Err(invalid(format!(
                "input has dimension {}, classifier expects {}",
                z.len(),
                self.b.len()
            )));
        }
        Ok(self.alpha + dot(&self.b, z))
    }

    /// Sign of the score, with a zero score mapped to +1.
    pub fn predict_label(&self, z: &[f64]) -> Result<Label> {
        self.predict_score(z).map(Label::from_score)
    }

    pub fn negate(&self) -> Self {
        Self {
            method: self.method,
            alpha: -self.alpha,
            b: self.b.iter().map(|v| -v).collect(),
            space: self.space.clone(),
        }
    }

    /// Slope function `β(t) = Σ b_k φ_k(t)` on `times`.
    pub fn slope_function(&self, times: &[f64]) -> Result<FunctionalSample> {
        match &self.space {
            FeatureSpace::Basis(spec) => reconstruct(&self.b, spec, times),
            FeatureSpace::Vector(_) => Err(invalid("vector classifiers have no slope function")),
        }
    }

    /// Flat record `method, space, alpha, b_1..b_d` used when classifiers are
    /// exchanged between servers or written to result files.
    pub fn to_record(&self) -> Vec<String> {
        let mut rec = vec![self.method.to_string(), self.space.to_string(), fmt_f64(self.alpha)];
        rec.extend(self.b.iter().map(|v| fmt_f64(*v)));
        rec
    }

    pub fn from_record<S: AsRef<str>>(record: &[S]) -> Result<Self> {
        if record.len() < 3 {
            return Err(Error::Schema(format!(
                "classifier record needs at least 3 fields, got {}",
                record.len()
            )));
        }
        let method: Method = record[0].as_ref().parse()?;
        let space: FeatureSpace = record[1].as_ref().parse()?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Schema(format!("not a number in classifier record: {s:?}")))
        };
        let alpha = num(record[2].as_ref())?;
        let b = record[3..]
            .iter()
            .map(|s| num(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        LinearClassifier::new(method, alpha, b, space).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_csv_line(&self) -> String {
        self.to_record().join(",")
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        Self::from_record(&fields)
    }
}

/// Anything that labels a coefficient vector.
pub trait Predictor {
    fn predict(&self, z: &[f64]) -> Result<Label>;
}

impl Predictor for LinearClassifier {
    fn predict(&self, z: &[f64]) -> Result<Label> {
        self.predict_label(z)
    }
}

/// Weighted combination `(Σ w_b α_b, Σ w_b b_b)`; its score is the weighted
/// sum of the members' scores.
pub fn combine(clfs: &[LinearClassifier], weights: &[f64]) -> Result<LinearClassifier> {
    let first = clfs.first().ok_or_else(|| invalid("cannot combine an empty set"))?;
    if clfs.len() != weights.len() {
        return Err(invalid(format!(
            "{} classifiers but {} weights",
            clfs.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("weights sum to {total}, expected 1")));
    }
    if let Some(c) = clfs.iter().find(|c| c.space != first.space) {
        return Err(invalid(format!(
            "cannot combine classifiers over {} and {}",
            first.space, c.space
        )));
    }
    let mut alpha = 0.0;
    let mut b = vec![0.0; first.dim()];
    for (c, &w) in clfs.iter().zip(weights) {
        alpha += w * c.alpha;
        for (acc, v) in b.iter_mut().zip(&c.b) {
            *acc += w * v;
        }
    }
    LinearClassifier::new(first.method, alpha, b, first.space.clone())
}

pub fn train<P: LabeledPoint>(data: &[P], space: &FeatureSpace, config: &TrainConfig) -> Result<LinearClassifier> {
    config.validate()?;
    if data.len() < 2 {
        return Err(invalid(format!("need at least 2 training samples, got {}", data.len())));
    }
    let d = space.dim();
    if let Some(p) = data.iter().find(|p| p.features().len() != d) {
        return Err(invalid(format!(
            "sample of dimension {} in a {d}-dimensional training set",
            p.features().len()
        )));
    }
    let first = data[0].label();
    if data.iter().all(|p| p.label() == first) {
        return Ok(LinearClassifier::constant(config.method, first, space.clone()));
    }
    let (alpha, b) = match config.method {
        Method::Logistic => fit_logistic(data, d, config),
        Method::LinearSvm => fit_svm(data, d, config),
    };
    LinearClassifier::new(config.method, alpha, b, space.clone())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `(λ/2)‖b‖²`; `params = [α, b…]`.
pub fn logistic_objective<P: LabeledPoint>(data: &[P], params: &[f64], reg: f64) -> f64 {
    let (alpha, b) = (params[0], &params[1..]);
    let loss: f64 = data
        .iter()
        .map(|p| softplus(-p.label().sign() * (alpha + dot(b, p.features()))))
        .sum();
    loss / data.len() as f64 + 0.5 * reg * dot(b, b)
}

pub fn logistic_gradient<P: LabeledPoint>(data: &[P], params: &[f64], reg: f64, grad: &mut [f64]) {
    let (alpha, b) = (params[0], &params[1..]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = data.len() as f64;
    for p in data {
        let y = p.label().sign();
        let coef = -y * sigmoid(-y * (alpha + dot(b, p.features()))) / n;
        grad[0] += coef;
        for (g, x) in grad[1..].iter_mut().zip(p.features()) {
            *g += coef * x;
        }
    }
    for (g, bk) in grad[1..].iter_mut().zip(b) {
        *g += reg * bk;
    }
}

fn hessian<P: LabeledPoint>(data: &[P], params: &[f64], reg: f64) -> DMatrix<f64> {
    let k = params.len();
    let mut h = DMatrix::zeros(k, k);
    let mut x = vec![1.0; k];
    for p in data {
        x[1..].copy_from_slice(p.features());
        let s = sigmoid(params[0] + dot(&params[1..], &x[1..]));
        let w = s * (1.0 - s);
        for i in 0..k {
            for j in 0..=i {
                h[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let n = data.len() as f64;
    for i in 0..k {
        for j in 0..i {
            h[(i, j)] /= n;
            h[(j, i)] = h[(i, j)];
        }
        h[(i, i)] /= n;
        if i > 0 {
            h[(i, i)] += reg;
        }
    }
    h
}

// Damped Newton with a backtracking line search. A tiny ridge keeps the
// system solvable when the data are separable and `λ = 0`.
fn fit_logistic<P: LabeledPoint>(data: &[P], d: usize, config: &TrainConfig) -> (f64, Vec<f64>) {
    let reg = config.regularization;
    let mut params = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    let mut value = logistic_objective(data, &params, reg);
    for _ in 0..config.iterations {
        logistic_gradient(data, &params, reg, &mut grad);
        if grad.iter().all(|g| g.abs() < 1e-12) {
            break;
        }
        let mut h = hessian(data, &params, reg);
        for i in 0..=d {
            h[(i, i)] += 1e-10;
        }
        let Some(chol) = h.cholesky() else { break };
        let dir = chol.solve(&DVector::from_column_slice(&grad));
        let slope = dot(&grad, dir.as_slice());
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(dir.iter()).map(|(p, s)| p - t * s).collect();
            let v = logistic_objective(data, &trial, reg);
            if v <= value - 1e-4 * t * slope {
                improved = value - v > 1e-15 * value.abs().max(1.0);
                params = trial;
                value = v;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let alpha = params[0];
    params.remove(0);
    (alpha, params)
}

// Full-batch Pegasos: hinge subgradient with step 1/(λt) and projection onto
// the ball of radius 1/√λ. The intercept is an extra constant feature.
fn fit_svm<P: LabeledPoint>(data: &[P], d: usize, config: &TrainConfig) -> (f64, Vec<f64>) {
    let lambda = config.regularization;
    let n = data.len() as f64;
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut step = vec![0.0; d + 1];
    for t in 1..=config.iterations {
        let eta = 1.0 / (lambda * t as f64);
        step.iter_mut().for_each(|s| *s = 0.0);
        for p in data {
            let y = p.label().sign();
            let margin = y * (w[0] + dot(&w[1..], p.features()));
            if margin < 1.0 {
                step[0] += y;
                for (s, x) in step[1..].iter_mut().zip(p.features()) {
                    *s += y * x;
                }
            }
        }
        let shrink = 1.0 - eta * lambda;
        for (wk, sk) in w.iter_mut().zip(&step) {
            *wk = shrink * *wk + eta * sk / n;
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
    }
    let alpha = w[0];
    w.remove(0);
    (alpha, w)
}
