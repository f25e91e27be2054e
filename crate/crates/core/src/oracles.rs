//! Reference formulas: label-agreement utility, the Laplace weight kernel,
//! reversal success probabilities and a Monte Carlo total-variation estimate
//! of the feature mechanism.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::mechanisms::{rr_keep_probability, Epsilon, LaplaceParams};
use crate::output::{fmt_f64, RunMeta};
use crate::rng::child;

/// Agreement between labels drawn from η and η^(ε) at one feature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityPoint {
    pub eta: f64,
    pub eta_eps: f64,
    pub g: f64,
}

impl UtilityPoint {
    pub fn new(eta: f64, eta_eps: f64) -> Result<Self> {
        Ok(Self {
            eta,
            eta_eps,
            g: utility_g(eta, eta_eps)?,
        })
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// `2(η − ½)(η^(ε) − ½) + ½`.
pub fn utility_g(eta: f64, eta_eps: f64) -> Result<f64> {
    check_probability("eta", eta)?;
    check_probability("eta_eps", eta_eps)?;
    Ok(2.0 * (eta - 0.5) * (eta_eps - 0.5) + 0.5)
}

/// Conditional label probability after randomized response with keep
/// probability `q`: `½ + 2(q − ½)(η − ½)`.
pub fn posterior_drift_eta(eta: f64, q: f64) -> f64 {
    0.5 + 2.0 * (q - 0.5) * (eta - 0.5)
}

fn laplace_density(x: f64, scale: f64) -> f64 {
    (-x.abs() / scale).exp() / (2.0 * scale)
}

const OMEGA_PANELS: usize = 20_000;

/// Mean of the Laplace density at `z0 − z` over `z ~ U(−1, 1)`, by the
/// trapezoid rule with the kink at `z = z0` placed on a panel edge.
pub fn omega_normalizer(z0: f64, epsilon_z: Epsilon) -> f64 {
    let scale = 2.0 / epsilon_z.value();
    let f = |z: f64| laplace_density(z0 - z, scale);
    let trapezoid = |a: f64, b: f64, panels: usize| {
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / panels as f64;
        let inner: f64 = (1..panels).map(|i| f(a + h * i as f64)).sum();
        h * (inner + 0.5 * (f(a) + f(b)))
    };
    let integral = if z0 > -1.0 && z0 < 1.0 {
        let left = ((z0 + 1.0) / 2.0 * OMEGA_PANELS as f64).ceil().max(1.0) as usize;
        let right = (OMEGA_PANELS - left.min(OMEGA_PANELS - 1)).max(1);
        trapezoid(-1.0, z0, left) + trapezoid(z0, 1.0, right)
    } else {
        trapezoid(-1.0, 1.0, OMEGA_PANELS)
    };
    integral / 2.0
}

/// Weight of a perturbed point `z0` toward the original value `z` in the
/// one-dimensional uniform model: `ω(z | z0) = f(z0 − z) / E_z f(z0 − z)`
/// with `f` the Laplace density of scale `2/ε_z`.
pub fn weight_omega(z: f64, z0: f64, epsilon_z: Epsilon) -> f64 {
    if epsilon_z.is_infinite() {
        return f64::NAN;
    }
    laplace_density(z0 - z, 2.0 / epsilon_z.value()) / omega_normalizer(z0, epsilon_z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaPoint {
    pub z0: f64,
    pub z: f64,
    pub epsilon_z: Epsilon,
    pub omega: f64,
}

/// ω over a grid, one normalizer per `(z0, ε_z)`.
pub fn omega_heatmap(epsilons: &[Epsilon], z0_grid: &[f64], z_grid: &[f64]) -> Result<Vec<OmegaPoint>> {
    if let Some(e) = epsilons.iter().find(|e| e.is_infinite()) {
        return Err(invalid(format!("the weight kernel needs a finite epsilon, got {e}")));
    }
    if let Some(z) = z_grid.iter().find(|z| !(-1.0..=1.0).contains(*z)) {
        return Err(invalid(format!("z grid values must lie in [-1, 1], got {z}")));
    }
    let mut out = Vec::with_capacity(epsilons.len() * z0_grid.len() * z_grid.len());
    for &e in epsilons {
        let scale = 2.0 / e.value();
        for &z0 in z0_grid {
            let norm = omega_normalizer(z0, e);
            out.extend(z_grid.iter().map(|&z| OmegaPoint {
                z0,
                z,
                epsilon_z: e,
                omega: laplace_density(z0 - z, scale) / norm,
            }));
        }
    }
    Ok(out)
}

pub fn write_heatmap_csv<W: Write>(w: &mut W, meta: &RunMeta, points: &[OmegaPoint]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "z0,z,epsilon_z,omega")?;
    for p in points {
        writeln!(w, "{},{},{},{}", fmt_f64(p.z0), fmt_f64(p.z), p.epsilon_z, fmt_f64(p.omega))?;
    }
    Ok(())
}

/// Standard normal CDF (Abramowitz and Stegun 26.2.17, |error| < 7.5e-8).
pub fn normal_cdf(x: f64) -> f64 {
    const P: f64 = 0.231_641_9;
    const B: [f64; 5] = [0.319_381_530, -0.356_563_782, 1.781_477_937, -1.821_255_978, 1.330_274_429];
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let t = 1.0 / (1.0 + P * a);
    let poly = B.iter().rev().fold(0.0, |acc, b| acc * t + b) * t;
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = pdf * poly;
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}

fn check_accuracy(r: f64, n1: usize) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("accuracy must lie in (0, 1), got {r}")));
    }
    if n1 == 0 {
        return Err(invalid("n1 must be at least 1"));
    }
    Ok(())
}

/// Normal approximation to the chance that reversal keeps the better of
/// `f` and `−f` from `n1` exact feedback bits: `Φ(√n1 |r − ½| / √(r(1 − r)))`.
pub fn reversal_success_probability(r: f64, n1: usize) -> Result<f64> {
    check_accuracy(r, n1)?;
    Ok(normal_cdf((n1 as f64).sqrt() * (r - 0.5).abs() / (r * (1.0 - r)).sqrt()))
}

/// The same approximation when the bits pass through randomized response at
/// `ε_v`. The debiased estimate has standard deviation
/// `√(p(1 − p)/n1) / (2q − 1)` with `p = qr + (1 − q)(1 − r)`.
pub fn reversal_success_probability_rr(r: f64, n1: usize, epsilon_v: Epsilon) -> Result<f64> {
    check_accuracy(r, n1)?;
    let q = rr_keep_probability(epsilon_v);
    let p = q * r + (1.0 - q) * (1.0 - r);
    let sd = (p * (1.0 - p) / n1 as f64).sqrt() / (2.0 * q - 1.0);
    Ok(normal_cdf((r - 0.5).abs() / sd))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub d: usize,
    pub epsilon_z: Epsilon,
    pub estimate: f64,
    /// Spread of the shard estimates divided by the square root of the shard count.
    pub stderr: f64,
    pub n_samples: usize,
}

pub const TV_SHARDS: usize = 10;
pub const TV_NOTE: &str = "tv_estimate is the per-coordinate marginal histogram distance averaged over coordinates";

struct Histograms {
    bins: usize,
    // coordinate-major, original then perturbed
    counts: Vec<u64>,
    samples: usize,
}

impl Histograms {
    fn tv(&self, d: usize) -> f64 {
        let n = self.samples as f64;
        let per_coord: f64 = (0..d)
            .map(|k| {
                let p = &self.counts[2 * k * self.bins..(2 * k + 1) * self.bins];
                let q = &self.counts[(2 * k + 1) * self.bins..(2 * k + 2) * self.bins];
                0.5 * p.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>() / n
            })
            .sum();
        per_coord / d as f64
    }
}

/// Histogram estimate of the distance between `Z ~ U([−1, 1]^d)` and its
/// Laplace perturbation with per-coordinate scale `2d/ε_z`. Coordinates are
/// binned separately with width `2 / bins_per_axis` over `[−1 − 8λ, 1 + 8λ]`,
/// mass beyond the range goes to the edge bins, and the per-coordinate
/// distances are averaged.
pub fn mc_total_variation(
    d: usize,
    epsilon_z: Epsilon,
    n_samples: usize,
    bins_per_axis: usize,
    seed: u64,
) -> Result<TvEstimate> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if n_samples < 10_000 {
        return Err(invalid(format!("need at least 10000 samples, got {n_samples}")));
    }
    if bins_per_axis < 4 {
        return Err(invalid(format!("need at least 4 bins per axis, got {bins_per_axis}")));
    }
    let laplace = LaplaceParams::for_features(d, epsilon_z)?;
    let scale = laplace.map_or(0.0, |l| l.scale());
    let width = 2.0 / bins_per_axis as f64;
    let low = -1.0 - 8.0 * scale;
    let bins = ((2.0 + 16.0 * scale) / width).ceil() as usize;
    let bin = |v: f64| (((v - low) / width).floor().max(0.0) as usize).min(bins - 1);

    let shards: Vec<Histograms> = (0..TV_SHARDS)
        .into_par_iter()
        .map(|s| {
            let m = n_samples / TV_SHARDS + usize::from(s < n_samples % TV_SHARDS);
            let mut rng = child(seed, &[d as u64, epsilon_z.value().to_bits(), s as u64]);
            let mut counts = vec![0u64; 2 * d * bins];
            for _ in 0..m {
                for k in 0..d {
                    let z: f64 = rng.gen_range(-1.0..=1.0);
                    let noise = laplace.map_or(0.0, |l| l.sample(&mut rng));
                    counts[2 * k * bins + bin(z)] += 1;
                    counts[(2 * k + 1) * bins + bin(z + noise)] += 1;
                }
            }
            Histograms { bins, counts, samples: m }
        })
        .collect();

    let shard_tv: Vec<f64> = shards.iter().map(|h| h.tv(d)).collect();
    let mut total = Histograms {
        bins,
        counts: vec![0; 2 * d * bins],
        samples: 0,
    };
    for h in &shards {
        total.samples += h.samples;
        for (t, c) in total.counts.iter_mut().zip(&h.counts) {
            *t += c;
        }
    }
    let mean = shard_tv.iter().sum::<f64>() / TV_SHARDS as f64;
    let var = shard_tv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (TV_SHARDS - 1) as f64;
    Ok(TvEstimate {
        d,
        epsilon_z,
        estimate: total.tv(d),
        stderr: (var / TV_SHARDS as f64).sqrt(),
        n_samples,
    })
}

pub fn write_tv_csv<W: Write>(w: &mut W, meta: &RunMeta, rows: &[TvEstimate]) -> io::Result<()> {
    meta.write_header(w)?;
    writeln!(w, "# {TV_NOTE}")?;
    writeln!(w, "d,epsilon_z,tv_estimate,n_samples")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.d, r.epsilon_z, fmt_f64(r.estimate), r.n_samples)?;
    }
    Ok(())
}
