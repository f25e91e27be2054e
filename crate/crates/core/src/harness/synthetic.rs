//! Synthetic functional covariates and logistic labels.
//!
//! `X(t) = Σ_{j≤50} ξ_j ζ_j φ_j(t)` with `ξ_j ~ U(−√3, √3)`,
//! `ζ_j = (−1)^{j+1}/j` and the cosine basis. Labels follow
//! `P(Y = 1) = logistic(α0 + ∫ X β)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Client, Label};
use crate::encoding::{rescale, trapezoid, uniform_grid, BasisSpec, FunctionalSample, Projector, RescaleKind};
use crate::error::{invalid, Result};

pub const SERIES_TERMS: usize = 50;
pub const GRID_POINTS: usize = 256;
pub const DEFAULT_ALPHA0: f64 = 0.1;
const XI_BOUND: f64 = 1.732_050_807_568_877_2;

fn zeta(j: usize) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign / j as f64
}

/// How the slope function `β` is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SlopeKind {
    /// `β = Σ γ_j (−1)^{j+1} j^{−2} φ_j` with the given `γ`.
    FixedSeries(Vec<f64>),
    /// As above with `γ_j` drawn i.i.d. uniform on `[low, high]` per realization.
    UniformSeries { low: f64, high: f64 },
    /// Zero-mean Gaussian process with kernel `exp(−rate |s − t|)`.
    GaussianProcess { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSpec {
    pub kind: SlopeKind,
    pub alpha0: f64,
}

impl SlopeSpec {
    /// `γ_j = 4` for every term, `α0 = 0.1`.
    pub fn reference() -> Self {
        Self {
            kind: SlopeKind::FixedSeries(vec![4.0; SERIES_TERMS]),
            alpha0: DEFAULT_ALPHA0,
        }
    }

    pub fn zero(alpha0: f64) -> Self {
        Self {
            kind: SlopeKind::FixedSeries(vec![0.0; SERIES_TERMS]),
            alpha0,
        }
    }

    pub fn uniform_series(low: f64, high: f64) -> Self {
        Self {
            kind: SlopeKind::UniformSeries { low, high },
            alpha0: DEFAULT_ALPHA0,
        }
    }

    pub fn gaussian_process(rate: f64) -> Self {
        Self {
            kind: SlopeKind::GaussianProcess { rate },
            alpha0: DEFAULT_ALPHA0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SlopeKind::FixedSeries(g) if g.len() != SERIES_TERMS => Err(invalid(format!(
                "slope series needs {SERIES_TERMS} terms, got {}",
                g.len()
            ))),
            SlopeKind::UniformSeries { low, high } if !(low <= high) => {
                Err(invalid(format!("empty slope range [{low}, {high}]")))
            }
            SlopeKind::GaussianProcess { rate } if !(*rate > 0.0) => {
                Err(invalid(format!("kernel rate must be positive, got {rate}")))
            }
            _ if !self.alpha0.is_finite() => Err(invalid("intercept must be finite")),
            _ => Ok(()),
        }
    }

    /// Draws one slope function on `grid`. Fixed series use no randomness.
    pub fn realize<R: Rng + ?Sized>(&self, grid: &[f64], rng: &mut R) -> Result<Slope> {
        self.validate()?;
        let series = |gammas: &[f64]| -> Vec<f64> {
            grid.iter()
                .map(|&t| {
                    gammas
                        .iter()
                        .enumerate()
                        .map(|(i, g)| {
                            let j = i + 1;
                            g * zeta(j) / j as f64 * fourier(j, t)
                        })
                        .sum()
                })
                .collect()
        };
        let values = match &self.kind {
            SlopeKind::FixedSeries(g) => series(g),
            SlopeKind::UniformSeries { low, high } => {
                let g: Vec<f64> = (0..SERIES_TERMS)
                    .map(|_| if low == high { *low } else { rng.gen_range(*low..*high) })
                    .collect();
                series(&g)
            }
            SlopeKind::GaussianProcess { rate } => {
                // Exponential kernel on a grid is an exact AR(1) recursion.
                let mut values = Vec::with_capacity(grid.len());
                let mut prev: f64 = rng.sample(StandardNormal);
                values.push(prev);
                for w in grid.windows(2) {
                    let rho = (-rate * (w[1] - w[0])).exp();
                    let e: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + (1.0 - rho * rho).sqrt() * e;
                    values.push(prev);
                }
                values
            }
        };
        Ok(Slope {
            values,
            alpha0: self.alpha0,
        })
    }
}

/// `φ_1 = 1`, `φ_j = √2 cos((j − 1)πt)`.
fn fourier(j: usize, t: f64) -> f64 {
    if j == 1 {
        1.0
    } else {
        std::f64::consts::SQRT_2 * ((j - 1) as f64 * std::f64::consts::PI * t).cos()
    }
}

/// A realized slope on the generator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Slope {
    pub values: Vec<f64>,
    pub alpha0: f64,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Covariate basis on the grid plus the encoder used by clients.
#[derive(Debug, Clone)]
pub struct Generator {
    grid: Vec<f64>,
    /// `ζ_j φ_j` on the grid, one row per term.
    terms: Vec<Vec<f64>>,
    projector: Projector,
    rescale: RescaleKind,
    /// Projection of each row of `terms`.
    images: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(basis: &BasisSpec, rescale: RescaleKind) -> Result<Self> {
        let grid = uniform_grid(GRID_POINTS);
        let terms: Vec<Vec<f64>> = (1..=SERIES_TERMS)
            .map(|j| grid.iter().map(|&t| zeta(j) * fourier(j, t)).collect())
            .collect();
        let projector = Projector::new(basis, &grid)?;
        let images = terms
            .iter()
            .map(|row| projector.project_values(row).map(|c| c.into_inner()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            terms,
            projector,
            rescale,
            images,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn basis(&self) -> &BasisSpec {
        self.projector.spec()
    }

    pub fn rescale_kind(&self) -> RescaleKind {
        self.rescale
    }

    fn draw_xi<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
        (0..SERIES_TERMS).map(|_| rng.gen_range(-XI_BOUND..XI_BOUND)).collect()
    }

    fn curve(&self, xi: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; self.grid.len()];
        for (x, row) in xi.iter().zip(&self.terms) {
            for (v, p) in values.iter_mut().zip(row) {
                *v += x * p;
            }
        }
        values
    }

    /// One covariate curve on the grid.
    pub fn generate_covariate<R: Rng + ?Sized>(&self, rng: &mut R) -> FunctionalSample {
        let xi = Self::draw_xi(rng);
        FunctionalSample::new(self.grid.clone(), self.curve(&xi)).expect("grid is valid")
    }

    /// Projected and rescaled client features for a curve.
    pub fn encode(&self, x: &FunctionalSample) -> Result<Vec<f64>> {
        let c = self.projector.project(x)?;
        Ok(rescale(&c, self.rescale).into_inner())
    }

    pub fn population<'a>(&'a self, slope: &'a Slope) -> Result<Population<'a>> {
        if slope.values.len() != self.grid.len() {
            return Err(invalid(format!(
                "slope has {} grid values, generator grid has {}",
                slope.values.len(),
                self.grid.len()
            )));
        }
        let inner = self
            .terms
            .iter()
            .map(|row| {
                let prod: Vec<f64> = row.iter().zip(&slope.values).map(|(a, b)| a * b).collect();
                trapezoid(&self.grid, &prod)
            })
            .collect();
        Ok(Population {
            generator: self,
            slope,
            inner,
        })
    }
}

/// `α0 + ∫ x β` by the trapezoid rule on the sample's grid.
pub fn classification_function(x: &FunctionalSample, slope: &Slope) -> Result<f64> {
    if x.len() != slope.values.len() {
        return Err(invalid("curve and slope are on different grids"));
    }
    let prod: Vec<f64> = x.values().iter().zip(&slope.values).map(|(a, b)| a * b).collect();
    Ok(slope.alpha0 + trapezoid(x.times(), &prod))
}

/// Draws `Y = +1` with probability `logistic(α0 + ∫ x β)`.
pub fn generate_label<R: Rng + ?Sized>(x: &FunctionalSample, slope: &Slope, rng: &mut R) -> Result<Label> {
    let p = logistic(classification_function(x, slope)?);
    Ok(if rng.gen::<f64>() < p { Label::Positive } else { Label::Negative })
}

/// A generator paired with one slope. Because projection and integration are
/// linear, each client costs `O(50·d)` instead of touching the grid.
#[derive(Debug, Clone)]
pub struct Population<'a> {
    generator: &'a Generator,
    slope: &'a Slope,
    /// `ζ_j ∫ φ_j β`.
    inner: Vec<f64>,
}

impl Population<'_> {
    fn from_xi<R: Rng + ?Sized>(&self, xi: &[f64], rng: &mut R) -> Client {
        let d = self.generator.images[0].len();
        let mut coef = vec![0.0; d];
        let mut f = self.slope.alpha0;
        for ((x, img), w) in xi.iter().zip(&self.generator.images).zip(&self.inner) {
            for (c, v) in coef.iter_mut().zip(img) {
                *c += x * v;
            }
            f += x * w;
        }
        let label = if rng.gen::<f64>() < logistic(f) {
            Label::Positive
        } else {
            Label::Negative
        };
        Client::new(rescale(&coef, self.generator.rescale).into_inner(), label)
    }

    pub fn draw_client<R: Rng + ?Sized>(&self, rng: &mut R) -> Client {
        let xi = Generator::draw_xi(rng);
        self.from_xi(&xi, rng)
    }

    /// Same draw as [`Population::draw_client`] computed through the explicit
    /// curve, projection and quadrature.
    pub fn draw_client_explicit<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Client> {
        let x = self.generator.generate_covariate(rng);
        let label = generate_label(&x, self.slope, rng)?;
        Ok(Client::new(self.generator.encode(&x)?, label))
    }

    pub fn draw_clients<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Client> {
        (0..n).map(|_| self.draw_client(rng)).collect()
    }

    /// Monte Carlo estimate of `½ + E|η(X) − ½|`.
    pub fn bayes_accuracy<R: Rng + ?Sized>(&self, n_mc: usize, rng: &mut R) -> Result<f64> {
        bayes_accuracy_inner(n_mc, rng, |xi| {
            self.slope.alpha0 + xi.iter().zip(&self.inner).map(|(x, w)| x * w).sum::<f64>()
        })
    }

    /// Monte Carlo estimate of `P(Y = 1)`.
    pub fn positive_rate<R: Rng + ?Sized>(&self, n_mc: usize, rng: &mut R) -> f64 {
        let n = n_mc.max(1);
        let hits = (0..n)
            .filter(|_| self.draw_client(rng).label == Label::Positive)
            .count();
        hits as f64 / n as f64
    }
}

fn bayes_accuracy_inner<R: Rng + ?Sized>(n_mc: usize, rng: &mut R, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    if n_mc < 1000 {
        return Err(invalid(format!("need at least 1000 Monte Carlo draws, got {n_mc}")));
    }
    let total: f64 = (0..n_mc)
        .map(|_| (logistic(f(&Generator::draw_xi(rng))) - 0.5).abs())
        .sum();
    Ok(0.5 + total / n_mc as f64)
}

/// Bayes accuracy of the logistic model with `slope`, integrating each fresh
/// curve on the grid.
pub fn bayes_accuracy<R: Rng + ?Sized>(slope: &Slope, n_mc: usize, rng: &mut R) -> Result<f64> {
    if slope.values.len() != GRID_POINTS {
        return Err(invalid("slope must live on the generator grid"));
    }
    let grid = uniform_grid(GRID_POINTS);
    let terms: Vec<Vec<f64>> = (1..=SERIES_TERMS)
        .map(|j| grid.iter().map(|&t| zeta(j) * fourier(j, t)).collect())
        .collect();
    bayes_accuracy_inner(n_mc, rng, |xi| {
        let x: Vec<f64> = (0..grid.len())
            .map(|i| xi.iter().zip(&terms).map(|(a, row)| a * row[i]).sum())
            .collect();
        let prod: Vec<f64> = x.iter().zip(&slope.values).map(|(a, b)| a * b).collect();
        slope.alpha0 + trapezoid(&grid, &prod)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn generator() -> Generator {
        Generator::new(&BasisSpec::cubic_bspline(4).unwrap(), RescaleKind::Tanh).unwrap()
    }

    #[test]
    fn fast_and_explicit_routes_agree() {
        let g = generator();
        let slope = SlopeSpec::reference().realize(g.grid(), &mut seeded(0)).unwrap();
        let pop = g.population(&slope).unwrap();
        let mut a = seeded(11);
        let mut b = seeded(11);
        for _ in 0..200 {
            let fast = pop.draw_client(&mut a);
            let slow = pop.draw_client_explicit(&mut b).unwrap();
            assert_eq!(fast.label, slow.label);
            for (x, y) in fast.features.iter().zip(&slow.features) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariate_mean_is_zero() {
        let g = generator();
        let mut rng = seeded(1);
        let n = 10_000;
        let mut mean = vec![0.0; GRID_POINTS];
        for _ in 0..n {
            let x = g.generate_covariate(&mut rng);
            for (m, v) in mean.iter_mut().zip(x.values()) {
                *m += v / n as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.05));
    }

    #[test]
    fn xi_has_unit_variance() {
        let mut rng = seeded(2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.gen_range(-XI_BOUND..XI_BOUND)).collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn leading_coefficient_is_recovered() {
        let grid = uniform_grid(4001);
        let spec = BasisSpec::fourier(3).unwrap();
        let projector = Projector::new(&spec, &grid).unwrap();
        let mut rng = seeded(3);
        let xi = Generator::draw_xi(&mut rng);
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| (1..=SERIES_TERMS).map(|j| xi[j - 1] * zeta(j) * fourier(j, t)).sum())
            .collect();
        let c = projector.project_values(&values).unwrap();
        assert!((c[0] - xi[0]).abs() < 1e-3);
    }

    #[test]
    fn zero_slope_gives_fair_coin() {
        let g = generator();
        let slope = SlopeSpec::zero(0.0).realize(g.grid(), &mut seeded(0)).unwrap();
        let x = g.generate_covariate(&mut seeded(4));
        assert_eq!(classification_function(&x, &slope).unwrap(), 0.0);
        let pop = g.population(&slope).unwrap();
        assert_eq!(pop.bayes_accuracy(2000, &mut seeded(5)).unwrap(), 0.5);
    }

    #[test]
    fn saturated_intercept_always_positive() {
        let g = generator();
        let slope = SlopeSpec::zero(1e3).realize(g.grid(), &mut seeded(0)).unwrap();
        let pop = g.population(&slope).unwrap();
        let mut rng = seeded(6);
        assert!((0..1000).all(|_| pop.draw_client(&mut rng).label == Label::Positive));
        assert_eq!(pop.bayes_accuracy(1000, &mut rng).unwrap(), 1.0);
    }

    #[test]
    fn bayes_accuracy_routes_agree() {
        let g = generator();
        let slope = SlopeSpec::reference().realize(g.grid(), &mut seeded(0)).unwrap();
        let pop = g.population(&slope).unwrap();
        let fast = pop.bayes_accuracy(5000, &mut seeded(8)).unwrap();
        let slow = bayes_accuracy(&slope, 5000, &mut seeded(8)).unwrap();
        assert!((fast - slow).abs() < 1e-12);
        assert!(bayes_accuracy(&slope, 10, &mut seeded(8)).is_err());
    }

    #[test]
    fn gaussian_process_marginals() {
        let grid = uniform_grid(GRID_POINTS);
        let spec = SlopeSpec::gaussian_process(15.0);
        let mut rng = seeded(9);
        let n = 4000;
        let (mut s0, mut s_end, mut cross) = (0.0, 0.0, 0.0);
        let lag = 17;
        for _ in 0..n {
            let v = spec.realize(&grid, &mut rng).unwrap().values;
            s0 += v[0] * v[0];
            s_end += v[GRID_POINTS - 1] * v[GRID_POINTS - 1];
            cross += v[100] * v[100 + lag];
        }
        let n = n as f64;
        assert!((s0 / n - 1.0).abs() < 0.1);
        assert!((s_end / n - 1.0).abs() < 0.1);
        let expect = (-15.0 * (grid[100 + lag] - grid[100])).exp();
        assert!((cross / n - expect).abs() < 0.1, "{} vs {expect}", cross / n);
    }

    #[test]
    fn series_slopes_have_opposite_signs() {
        let grid = uniform_grid(GRID_POINTS);
        let reference = SlopeSpec::reference().realize(&grid, &mut seeded(0)).unwrap();
        let along = |s: &Slope| {
            let prod: Vec<f64> = s.values.iter().zip(&reference.values).map(|(a, b)| a * b).collect();
            trapezoid(&grid, &prod)
        };
        for seed in 0..20 {
            let neg = SlopeSpec::uniform_series(-8.0, -2.0).realize(&grid, &mut seeded(seed)).unwrap();
            let pos = SlopeSpec::uniform_series(2.0, 8.0).realize(&grid, &mut seeded(seed)).unwrap();
            assert!(along(&neg) < 0.0);
            assert!(along(&pos) > 0.0);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = SlopeSpec {
            kind: SlopeKind::FixedSeries(vec![1.0; 3]),
            alpha0: 0.0,
        };
        assert!(bad.validate().is_err());
        assert!(SlopeSpec::gaussian_process(0.0).validate().is_err());
        assert!(SlopeSpec::uniform_series(3.0, 2.0).validate().is_err());
    }
}
