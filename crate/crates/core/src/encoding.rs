//! Finite basis representation of curves on [0, 1]: basis evaluation,
//! least-squares projection to coefficients, rescaling into [−1, 1] and
//! reconstruction.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

const SPLINE_ORDER: usize = 4;
const SPLINE_DEGREE: usize = SPLINE_ORDER - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    CubicBSpline,
    Fourier,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::CubicBSpline => "bspline",
            BasisKind::Fourier => "fourier",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bspline" | "cubic-bspline" => Ok(BasisKind::CubicBSpline),
            "fourier" => Ok(BasisKind::Fourier),
            _ => Err(invalid(format!("unknown basis {s:?}"))),
        }
    }
}

/// A basis `φ_1..φ_d` on [0, 1].
///
/// Cubic B-splines use a clamped knot vector with `d − 4` equidistant
/// interior knots. The Fourier family is the cosine system
/// `φ_1 = 1, φ_j(t) = √2 cos((j−1)πt)`, orthonormal in L²[0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    kind: BasisKind,
    dim: usize,
    knots: Vec<f64>,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("basis dimension must be at least 1"));
        }
        let knots = match kind {
            BasisKind::Fourier => Vec::new(),
            BasisKind::CubicBSpline => {
                if dim < SPLINE_ORDER {
                    return Err(invalid(format!(
                        "cubic B-spline basis needs dimension >= {SPLINE_ORDER}, got {dim}"
                    )));
                }
                let interior = dim - SPLINE_ORDER;
                let mut knots = vec![0.0; SPLINE_ORDER];
                knots.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
                knots.extend(std::iter::repeat(1.0).take(SPLINE_ORDER));
                knots
            }
        };
        Ok(Self { kind, dim, knots })
    }

    pub fn cubic_bspline(dim: usize) -> Result<Self> {
        Self::new(BasisKind::CubicBSpline, dim)
    }

    pub fn fourier(dim: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier, dim)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Values of all basis functions at `t`.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(t, &mut out);
        Ok(out)
    }

    fn evaluate_into(&self, t: f64, out: &mut [f64]) {
        match self.kind {
            BasisKind::Fourier => {
                out[0] = 1.0;
                for (j, v) in out.iter_mut().enumerate().skip(1) {
                    *v = SQRT_2 * (j as f64 * PI * t).cos();
                }
            }
            BasisKind::CubicBSpline => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let span = self.find_span(t);
                let local = self.nonzero_splines(span, t);
                for (r, v) in local.iter().enumerate() {
                    out[span - SPLINE_DEGREE + r] = *v;
                }
            }
        }
    }

    fn find_span(&self, t: f64) -> usize {
        let last = self.dim - 1;
        if t >= self.knots[last + 1] {
            return last;
        }
        // knots[span] <= t < knots[span + 1], span in [degree, last]
        let (mut lo, mut hi) = (SPLINE_DEGREE, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    // Cox–de Boor triangle for the DEGREE+1 splines that are nonzero on `span`.
    fn nonzero_splines(&self, span: usize, t: f64) -> [f64; SPLINE_ORDER] {
        let u = &self.knots;
        let mut n = [0.0; SPLINE_ORDER];
        let mut left = [0.0; SPLINE_ORDER];
        let mut right = [0.0; SPLINE_ORDER];
        n[0] = 1.0;
        for j in 1..=SPLINE_DEGREE {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// `T × d` matrix of basis values on a grid.
    pub fn design_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(times.len(), self.dim);
        let mut row = vec![0.0; self.dim];
        for (i, &t) in times.iter().enumerate() {
            check_time(t)?;
            self.evaluate_into(t, &mut row);
            for (k, v) in row.iter().enumerate() {
                m[(i, k)] = *v;
            }
        }
        Ok(m)
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.dim)
    }
}

impl FromStr for BasisSpec {
    type Err = Error;
    /// Parses the `kind:dim` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, dim) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("basis descriptor must be kind:dim, got {s:?}")))?;
        let dim = dim
            .parse()
            .map_err(|_| invalid(format!("bad basis dimension in {s:?}")))?;
        BasisSpec::new(kind.parse()?, dim)
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(invalid(format!("time {t} outside [0, 1]")))
    }
}

/// Equispaced grid of `t` points covering [0, 1] inclusive.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

/// A curve observed on a grid in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        for &t in &times {
            check_time(t)?;
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("observation times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Basis coefficients `z` of a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CoefficientVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Least-squares projection onto a basis for a fixed observation grid.
///
/// The normal equations `ΦᵀΦ z = Φᵀx` are factored once by Cholesky, so
/// projecting many curves observed on the same grid costs one `d × T`
/// matrix-vector product each.
#[derive(Debug, Clone)]
pub struct Projector {
    spec: BasisSpec,
    times: Vec<f64>,
    hat: DMatrix<f64>,
}

impl Projector {
    pub fn new(spec: &BasisSpec, times: &[f64]) -> Result<Self> {
        if times.len() < spec.dim() {
            return Err(invalid(format!(
                "need at least {} observations to fit {} coefficients, got {}",
                spec.dim(),
                spec.dim(),
                times.len()
            )));
        }
        let phi = spec.design_matrix(times)?;
        let gram = phi.transpose() * &phi;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("design matrix for {spec} is rank deficient")))?;
        let hat = chol.solve(&phi.transpose());
        if hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("design matrix for {spec} is rank deficient")));
        }
        Ok(Self {
            spec: spec.clone(),
            times: times.to_vec(),
            hat,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Coefficients of the curve with `values` observed on this grid.
    pub fn project_values(&self, values: &[f64]) -> Result<CoefficientVector> {
        if values.len() != self.times.len() {
            return Err(invalid(format!(
                "expected {} observations, got {}",
                self.times.len(),
                values.len()
            )));
        }
        let z = &self.hat * DVector::from_column_slice(values);
        Ok(CoefficientVector(z.iter().copied().collect()))
    }

    pub fn project(&self, sample: &FunctionalSample) -> Result<CoefficientVector> {
        if sample.times() != self.times.as_slice() {
            return Err(invalid("sample is not observed on the projector's grid"));
        }
        self.project_values(sample.values())
    }
}

/// One-off projection of a single curve.
pub fn project(sample: &FunctionalSample, spec: &BasisSpec) -> Result<CoefficientVector> {
    Projector::new(spec, sample.times())?.project(sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RescaleKind {
    Tanh,
    MaxAbs,
}

impl fmt::Display for RescaleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RescaleKind::Tanh => "tanh",
            RescaleKind::MaxAbs => "max-abs",
        })
    }
}

impl FromStr for RescaleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(RescaleKind::Tanh),
            "max-abs" | "maxabs" | "man" => Ok(RescaleKind::MaxAbs),
            _ => Err(invalid(format!("unknown rescaling {s:?}"))),
        }
    }
}

/// Maps coefficients into [−1, 1]. Max-abs of the zero vector is the zero vector.
pub fn rescale(z: &[f64], kind: RescaleKind) -> CoefficientVector {
    match kind {
        RescaleKind::Tanh => CoefficientVector(z.iter().map(|v| v.tanh()).collect()),
        RescaleKind::MaxAbs => {
            let m = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                CoefficientVector(vec![0.0; z.len()])
            } else {
                // clamp guards the last ulp
                CoefficientVector(z.iter().map(|v| (v / m).clamp(-1.0, 1.0)).collect())
            }
        }
    }
}

/// Evaluates `Σ_k z_k φ_k` on `times`.
pub fn reconstruct(z: &[f64], spec: &BasisSpec, times: &[f64]) -> Result<FunctionalSample> {
    if z.len() != spec.dim() {
        return Err(invalid(format!(
            "{} coefficients for a basis of dimension {}",
            z.len(),
            spec.dim()
        )));
    }
    let mut phi = vec![0.0; spec.dim()];
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        check_time(t)?;
        spec.evaluate_into(t, &mut phi);
        values.push(phi.iter().zip(z).map(|(p, c)| p * c).sum());
    }
    FunctionalSample::new(times.to_vec(), values)
}

/// Composite trapezoid rule over an arbitrary increasing grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn fourier_closed_form() {
        let f = BasisSpec::fourier(3).unwrap();
        let v = f.evaluate(0.0).unwrap();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - SQRT_2).abs() < 1e-15 && (v[2] - SQRT_2).abs() < 1e-15);
        let v = BasisSpec::fourier(2).unwrap().evaluate(0.5).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_outside_domain() {
        let f = BasisSpec::cubic_bspline(4).unwrap();
        assert!(f.evaluate(-0.01).is_err());
        assert!(f.evaluate(1.01).is_err());
        assert!(BasisSpec::cubic_bspline(3).is_err());
        assert!(BasisSpec::fourier(0).is_err());
    }

    #[test]
    fn fourier_orthonormal_by_trapezoid() {
        let grid = uniform_grid(10_000);
        let f = BasisSpec::fourier(6).unwrap();
        let phi = f.design_matrix(&grid).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let prod: Vec<f64> = (0..grid.len()).map(|i| phi[(i, j)] * phi[(i, k)]).collect();
                let ip = trapezoid(&grid, &prod);
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-4, "<phi_{j}, phi_{k}> = {ip}");
            }
        }
    }

    #[test]
    fn bspline_partition_of_unity_and_nonnegative() {
        let mut rng = seeded(4);
        for d in [4, 5, 6, 9] {
            let spec = BasisSpec::cubic_bspline(d).unwrap();
            let mut ts: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
            ts.extend([0.0, 1.0, 0.5]);
            for t in ts {
                let v = spec.evaluate(t).unwrap();
                assert!(v.iter().all(|&x| x >= -1e-15), "negative at t={t}");
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10, "d={d} t={t}");
            }
        }
    }

    #[test]
    fn bspline_d4_is_bernstein() {
        // With no interior knots the clamped cubic basis is the Bernstein basis.
        let spec = BasisSpec::cubic_bspline(4).unwrap();
        for t in [0.0, 0.2, 0.7, 1.0] {
            let v = spec.evaluate(t).unwrap();
            let s = 1.0 - t;
            let b = [s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t];
            for k in 0..4 {
                assert!((v[k] - b[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn project_constant_curve() {
        let grid = uniform_grid(101);
        let sample = FunctionalSample::new(grid.clone(), vec![1.0; 101]).unwrap();
        let z = project(&sample, &BasisSpec::fourier(4).unwrap()).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-10);
        for k in 1..4 {
            assert!(z[k].abs() < 1e-10);
        }
    }

    #[test]
    fn project_recovers_basis_element() {
        let grid = uniform_grid(256);
        let values: Vec<f64> = grid.iter().map(|t| SQRT_2 * (PI * t).cos()).collect();
        let sample = FunctionalSample::new(grid, values).unwrap();
        let z = project(&sample, &BasisSpec::fourier(4).unwrap()).unwrap();
        let expect = [0.0, 1.0, 0.0, 0.0];
        for k in 0..4 {
            assert!((z[k] - expect[k]).abs() < 1e-8, "{z:?}");
        }
    }

    #[test]
    fn bspline_reproduces_cubics() {
        let grid = uniform_grid(101);
        let cubic = |t: f64| 0.3 - 1.2 * t + 2.5 * t * t - 4.0 * t * t * t;
        let values: Vec<f64> = grid.iter().map(|&t| cubic(t)).collect();
        let spec = BasisSpec::cubic_bspline(6).unwrap();
        let sample = FunctionalSample::new(grid.clone(), values.clone()).unwrap();
        let z = project(&sample, &spec).unwrap();
        let back = reconstruct(&z, &spec, &grid).unwrap();
        let err = back
            .values()
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "max error {err}");
    }

    #[test]
    fn project_needs_enough_points() {
        let grid = uniform_grid(3);
        let sample = FunctionalSample::new(grid, vec![0.0; 3]).unwrap();
        assert!(project(&sample, &BasisSpec::fourier(4).unwrap()).is_err());
    }

    #[test]
    fn rank_deficient_design_is_singular() {
        // All observations inside one knot span of a d=9 spline leave some
        // basis functions identically zero on the grid.
        let times: Vec<f64> = (0..20).map(|i| 0.01 + 0.001 * i as f64).collect();
        let err = Projector::new(&BasisSpec::cubic_bspline(9).unwrap(), &times).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(&[0.0; 4], RescaleKind::Tanh).to_vec(), vec![0.0; 4]);
        assert_eq!(rescale(&[2.0, -4.0], RescaleKind::MaxAbs).to_vec(), vec![0.5, -1.0]);
        assert_eq!(rescale(&[0.0, 0.0, 0.0], RescaleKind::MaxAbs).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn reconstruct_examples() {
        let grid = uniform_grid(11);
        let spec = BasisSpec::fourier(4).unwrap();
        let c = reconstruct(&[1.0, 0.0, 0.0, 0.0], &spec, &grid).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let zero = reconstruct(&[0.0; 4], &spec, &grid).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(reconstruct(&[1.0], &spec, &grid).is_err());
    }

    #[test]
    fn functional_sample_validation() {
        assert!(FunctionalSample::new(vec![0.0, 0.5], vec![1.0]).is_err());
        assert!(FunctionalSample::new(vec![0.5, 0.2], vec![1.0, 2.0]).is_err());
        assert!(FunctionalSample::new(vec![0.0, 1.5], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for spec in [BasisSpec::fourier(7).unwrap(), BasisSpec::cubic_bspline(5).unwrap()] {
            assert_eq!(spec.to_string().parse::<BasisSpec>().unwrap(), spec);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn project_reconstruct_identity(
                coeffs in proptest::collection::vec(-5.0f64..5.0, 6),
                fourier in any::<bool>(),
            ) {
                let spec = if fourier { BasisSpec::fourier(6) } else { BasisSpec::cubic_bspline(6) }.unwrap();
                let grid = uniform_grid(64);
                let curve = reconstruct(&coeffs, &spec, &grid).unwrap();
                let z = Projector::new(&spec, &grid).unwrap().project(&curve).unwrap();
                for (a, b) in z.iter().zip(&coeffs) {
                    prop_assert!((a - b).abs() < 1e-8);
                }
            }

            #[test]
            fn rescaled_values_are_bounded(z in proptest::collection::vec(-1e3f64..1e3, 1..10)) {
                let t = rescale(&z, RescaleKind::Tanh);
                let m = rescale(&z, RescaleKind::MaxAbs);
                prop_assert!(t.iter().chain(m.iter()).all(|v| v.abs() <= 1.0));
                if z.iter().any(|&v| v != 0.0) {
                    prop_assert!(m.iter().any(|v| (v.abs() - 1.0).abs() < 1e-15));
                    for (a, b) in z.iter().zip(m.iter()) {
                        prop_assert!(a.signum() == b.signum() || *a == 0.0);
                    }
                }
            }

            #[test]
            fn tanh_is_monotone(a in -20.0f64..20.0, delta in 1e-6f64..5.0) {
                let lo = rescale(&[a], RescaleKind::Tanh)[0];
                let hi = rescale(&[a + delta], RescaleKind::Tanh)[0];
                prop_assert!(hi >= lo);
            }
        }
    }
}
