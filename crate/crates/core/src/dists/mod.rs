//! Output distributions, log-densities and inverse-CDF sampling.
//!
//! Every continuous draw goes through [`quantile`]: a uniform variate is
//! pushed through the inverse CDF of the target family. Discrete draws use
//! the cumulative-interval partition of `[0, 1]`.

mod quantile;
mod rng;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quantile::{
    laplace_cdf, laplace_quantile, normal_cdf, normal_quantile, quantile, Univariate,
};
pub use rng::{FixedStream, RandomSource, UniformSource};

/// Lower bound applied to variances estimated during training.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn check_vector(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Validation(format!("{name} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{name} has non-finite entry {x}")));
    }
    Ok(())
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Normal density with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
    inv_variance: Vec<f64>,
    half_log_det: f64,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        check_vector("mean", &mean)?;
        check_vector("variance", &variance)?;
        check_dim(mean.len(), &variance)?;
        if let Some(v) = variance.iter().find(|&&v| v <= 0.0) {
            return Err(Error::Validation(format!("variance component {v} must be > 0")));
        }
        let inv_variance = variance.iter().map(|v| 1.0 / v).collect();
        let half_log_det = 0.5 * variance.iter().map(|v| v.ln()).sum::<f64>();
        Ok(DiagonalGaussian {
            mean,
            variance,
            inv_variance,
            half_log_det,
        })
    }

    /// Construct with every variance raised to at least `floor`.
    pub fn with_floor(mean: Vec<f64>, variance: Vec<f64>, floor: f64) -> Result<Self> {
        let variance = variance.into_iter().map(|v| v.max(floor)).collect();
        Self::new(mean, variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    /// `½ Σ ln σ²_i`.
    pub fn half_log_det(&self) -> f64 {
        self.half_log_det
    }

    /// `½ Σ (x_i − μ_i)² / σ²_i`.
    #[inline]
    pub fn half_mahalanobis(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, mi), wi) in x.iter().zip(&self.mean).zip(&self.inv_variance) {
            let d = xi - mi;
            acc += d * d * wi;
        }
        0.5 * acc
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        -0.5 * LN_2PI * self.dim() as f64 - self.half_log_det - self.half_mahalanobis(x)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.log_density_unchecked(x))
    }
}

/// Normal density with full covariance, carrying its Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FullGaussian {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    factor: Vec<f64>,
    half_log_det: f64,
}

impl FullGaussian {
    /// `covariance` is row-major `d × d`; must be symmetric positive definite.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        check_vector("mean", &mean)?;
        let d = mean.len();
        check_dim(d * d, &covariance)?;
        check_vector("covariance", &covariance)?;
        for i in 0..d {
            for j in 0..i {
                if (covariance[i * d + j] - covariance[j * d + i]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let factor = cholesky(&covariance, d)?;
        let half_log_det = (0..d).map(|i| factor[i * d + i].ln()).sum();
        Ok(FullGaussian {
            mean,
            covariance,
            factor,
            half_log_det,
        })
    }

    /// Full-covariance density with a diagonal covariance matrix.
    pub fn from_diagonal(g: &DiagonalGaussian) -> Result<Self> {
        let d = g.dim();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = g.variance()[i];
        }
        Self::new(g.mean().to_vec(), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major covariance.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Row-major lower-triangular `M` with `M Mᵀ = Σ`.
    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    pub fn half_log_det(&self) -> f64 {
        self.half_log_det
    }

    /// `½ (x − μ)ᵀ Σ⁻¹ (x − μ)` by forward substitution.
    pub fn half_mahalanobis(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.factor[i * d + k] * z[k];
            }
            z[i] = s / self.factor[i * d + i];
            acc += z[i] * z[i];
        }
        0.5 * acc
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        -0.5 * LN_2PI * self.dim() as f64 - self.half_log_det - self.half_mahalanobis(x)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.log_density_unchecked(x))
    }

    /// Leading `k × k` principal block.
    pub fn leading(&self, k: usize) -> Result<FullGaussian> {
        let d = self.dim();
        let mut cov = Vec::with_capacity(k * k);
        for i in 0..k {
            cov.extend_from_slice(&self.covariance[i * d..i * d + k]);
        }
        FullGaussian::new(self.mean[..k].to_vec(), cov)
    }
}

fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Validation(
                        "covariance is not positive definite".into(),
                    ));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Product of independent Laplace densities.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalLaplace {
    location: Vec<f64>,
    scale: Vec<f64>,
}

impl DiagonalLaplace {
    pub fn new(location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_vector("location", &location)?;
        check_vector("scale", &scale)?;
        check_dim(location.len(), &scale)?;
        if let Some(b) = scale.iter().find(|&&b| b <= 0.0) {
            return Err(Error::Validation(format!("Laplace scale {b} must be > 0")));
        }
        Ok(DiagonalLaplace { location, scale })
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.location)
            .zip(&self.scale)
            .map(|((xi, a), b)| -(2.0 * b).ln() - (xi - a).abs() / b)
            .sum()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.log_density_unchecked(x))
    }
}

/// `N(μ, σ²)` → `L(μ, √(2/π) σ)`, matching the mean absolute deviation.
pub fn laplace_from_normal(g: &DiagonalGaussian) -> DiagonalLaplace {
    let c = (2.0 / PI).sqrt();
    DiagonalLaplace {
        location: g.mean().to_vec(),
        scale: g.variance().iter().map(|v| c * v.sqrt()).collect(),
    }
}

/// A state output distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "OutputRepr", try_from = "OutputRepr")]
pub enum OutputDist {
    Diagonal(DiagonalGaussian),
    Full(FullGaussian),
    Laplace(DiagonalLaplace),
}

impl OutputDist {
    pub fn dim(&self) -> usize {
        match self {
            OutputDist::Diagonal(g) => g.dim(),
            OutputDist::Full(g) => g.dim(),
            OutputDist::Laplace(l) => l.dim(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            OutputDist::Diagonal(g) => g.mean(),
            OutputDist::Full(g) => g.mean(),
            OutputDist::Laplace(l) => l.location(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OutputDist::Diagonal(_) => "diagonal",
            OutputDist::Full(_) => "full",
            OutputDist::Laplace(_) => "laplace",
        }
    }

    pub fn as_diagonal(&self) -> Option<&DiagonalGaussian> {
        match self {
            OutputDist::Diagonal(g) => Some(g),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            OutputDist::Diagonal(g) => g.log_density_unchecked(x),
            OutputDist::Full(g) => g.log_density_unchecked(x),
            OutputDist::Laplace(l) => l.log_density_unchecked(x),
        }
    }

    /// Exact log-density including normalizing constants.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.log_density_unchecked(x))
    }

    /// Keep the leading `k` coordinates.
    pub fn project(&self, k: usize) -> Result<OutputDist> {
        if k == 0 || k > self.dim() {
            return Err(Error::Domain(format!(
                "cannot project dimension {} onto {k}",
                self.dim()
            )));
        }
        Ok(match self {
            OutputDist::Diagonal(g) => OutputDist::Diagonal(DiagonalGaussian::new(
                g.mean()[..k].to_vec(),
                g.variance()[..k].to_vec(),
            )?),
            OutputDist::Full(g) => OutputDist::Full(g.leading(k)?),
            OutputDist::Laplace(l) => OutputDist::Laplace(DiagonalLaplace::new(
                l.location()[..k].to_vec(),
                l.scale()[..k].to_vec(),
            )?),
        })
    }
}

/// Draw one vector from an output distribution by inverse-CDF sampling.
///
/// Diagonal: `x_i = μ_i + σ_i Φ⁻¹(u_i)`. Full: `x = μ + M y` with
/// `y_i = Φ⁻¹(u_i)`. Laplace: componentwise Laplace inverse CDF.
pub fn sample_output<U: UniformSource + ?Sized>(dist: &OutputDist, rng: &mut U) -> Vec<f64> {
    match dist {
        OutputDist::Diagonal(g) => g
            .mean()
            .iter()
            .zip(g.variance())
            .map(|(m, v)| m + v.sqrt() * normal_quantile(rng.next_uniform()))
            .collect(),
        OutputDist::Full(g) => {
            let d = g.dim();
            let y: Vec<f64> = (0..d).map(|_| normal_quantile(rng.next_uniform())).collect();
            let m = g.factor();
            (0..d)
                .map(|i| g.mean()[i] + (0..=i).map(|k| m[i * d + k] * y[k]).sum::<f64>())
                .collect()
        }
        OutputDist::Laplace(l) => l
            .location()
            .iter()
            .zip(l.scale())
            .map(|(a, b)| laplace_quantile(rng.next_uniform(), *a, *b))
            .collect(),
    }
}

/// Cumulative table over positive weights, drawn from by interval lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSampler {
    cumulative: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("no weights".into()));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!("weight {w} must be positive")));
            }
            acc += w;
            cumulative.push(acc);
        }
        Ok(DiscreteSampler { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Index `j` whose interval `[c_{j-1}, c_j)` holds `u · total`; the last
    /// interval is closed.
    pub fn index(&self, u: f64) -> usize {
        let target = u * self.total();
        let j = self.cumulative.partition_point(|&c| c <= target);
        j.min(self.cumulative.len() - 1)
    }
}

/// Index (0-based) of the interval `A_j` of `[0, 1]` containing `u`.
pub fn sample_discrete(probs: &[f64], u: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("uniform {u} outside [0, 1]")));
    }
    if probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::Validation("probabilities must be strictly positive".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(DiscreteSampler::new(probs)?.index(u))
}

/// Number of Bernoulli trials up to and including the first `u ∈ [0, p)`.
pub fn sample_geometric<U: UniformSource + ?Sized>(p: f64, rng: &mut U) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("geometric parameter {p} outside (0, 1)")));
    }
    let mut n = 1;
    while rng.next_uniform() >= p {
        n += 1;
    }
    Ok(n)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum OutputRepr {
    Diagonal {
        mean: Vec<f64>,
        variance: Vec<f64>,
    },
    Full {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Laplace {
        mean: Vec<f64>,
        scale: Vec<f64>,
    },
}

impl From<OutputDist> for OutputRepr {
    fn from(d: OutputDist) -> Self {
        match d {
            OutputDist::Diagonal(g) => OutputRepr::Diagonal {
                mean: g.mean,
                variance: g.variance,
            },
            OutputDist::Full(g) => {
                let n = g.mean.len();
                OutputRepr::Full {
                    covariance: g.covariance.chunks(n).map(|r| r.to_vec()).collect(),
                    mean: g.mean,
                }
            }
            OutputDist::Laplace(l) => OutputRepr::Laplace {
                mean: l.location,
                scale: l.scale,
            },
        }
    }
}

impl TryFrom<OutputRepr> for OutputDist {
    type Error = Error;

    fn try_from(r: OutputRepr) -> Result<Self> {
        Ok(match r {
            OutputRepr::Diagonal { mean, variance } => {
                OutputDist::Diagonal(DiagonalGaussian::new(mean, variance)?)
            }
            OutputRepr::Full { mean, covariance } => {
                let d = mean.len();
                if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::Validation("covariance must be d × d".into()));
                }
                OutputDist::Full(FullGaussian::new(mean, covariance.concat())?)
            }
            OutputRepr::Laplace { mean, scale } => {
                OutputDist::Laplace(DiagonalLaplace::new(mean, scale)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(d: usize) -> DiagonalGaussian {
        DiagonalGaussian::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn peak_density_of_standard_normal() {
        let g = std_normal(2);
        let ld = g.log_density(&[0.0, 0.0]).unwrap();
        assert!((ld + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_formula() {
        let g = std_normal(1);
        let ld = g.log_density(&[2.0]).unwrap();
        assert!((ld - (-0.5 * (2.0 * PI).ln() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = OutputDist::Diagonal(std_normal(3));
        assert!(matches!(
            g.log_density(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn full_covariance_agrees_with_diagonal() {
        let g = DiagonalGaussian::new(vec![0.5, -1.0, 2.0], vec![0.3, 1.7, 4.0]).unwrap();
        let f = FullGaussian::from_diagonal(&g).unwrap();
        let mut rng = RandomSource::new(11, "full-vs-diag");
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| 6.0 * rng.uniform() - 3.0).collect();
            let a = g.log_density(&x).unwrap();
            let b = f.log_density(&x).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let cov = vec![4.0, 1.2, -0.4, 1.2, 2.0, 0.3, -0.4, 0.3, 1.5];
        let f = FullGaussian::new(vec![0.0; 3], cov.clone()).unwrap();
        let m = f.factor();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i * 3 + k] * m[j * 3 + k]).sum();
                assert!((s - cov[i * 3 + j]).abs() < 1e-10);
            }
        }
        assert!(FullGaussian::new(vec![0.0; 2], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(FullGaussian::new(vec![0.0; 2], vec![1.0, 0.1, 0.2, 1.0]).is_err());
    }

    #[test]
    fn invalid_variances_rejected() {
        assert!(DiagonalGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let g = DiagonalGaussian::with_floor(vec![0.0], vec![0.0], VARIANCE_FLOOR).unwrap();
        assert_eq!(g.variance(), &[VARIANCE_FLOOR]);
        assert!(DiagonalLaplace::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn median_uniforms_give_the_mean() {
        let g = OutputDist::Diagonal(
            DiagonalGaussian::new(vec![1.5, -2.0], vec![3.0, 0.2]).unwrap(),
        );
        let x = sample_output(&g, &mut FixedStream::new(vec![0.5]));
        assert_eq!(x, vec![1.5, -2.0]);
    }

    #[test]
    fn identity_full_covariance_matches_diagonal_sampler() {
        let diag = OutputDist::Diagonal(std_normal(4));
        let full = OutputDist::Full(FullGaussian::from_diagonal(&std_normal(4)).unwrap());
        let mut a = RandomSource::new(5, "s");
        let mut b = RandomSource::new(5, "s");
        for _ in 0..50 {
            assert_eq!(sample_output(&diag, &mut a), sample_output(&full, &mut b));
        }
    }

    #[test]
    fn diagonal_sample_moments() {
        let n = 100_000;
        let g = OutputDist::Diagonal(DiagonalGaussian::new(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap());
        let mut rng = RandomSource::new(21, "moments");
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let x = sample_output(&g, &mut rng);
            for i in 0..2 {
                sum[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for (i, var) in [1.0_f64, 4.0].into_iter().enumerate() {
            let mean = sum[i] / n as f64;
            let v = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 4.0 * var.sqrt() / (n as f64).sqrt(), "mean {mean}");
            assert!((v / var - 1.0).abs() < 0.05, "var {v}");
        }
    }

    #[test]
    fn diagonal_samples_pass_ks() {
        let n = 100_000;
        let g = OutputDist::Diagonal(DiagonalGaussian::new(vec![1.0, -3.0], vec![0.5, 2.0]).unwrap());
        let mut rng = RandomSource::new(2, "ks");
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_output(&g, &mut rng)).collect();
        let crit = 1.6276 / (n as f64).sqrt();
        for (i, (m, v)) in [(1.0_f64, 0.5_f64), (-3.0, 2.0)].into_iter().enumerate() {
            let mut xs: Vec<f64> = draws.iter().map(|x| x[i]).collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let f = statrs_phi((x - m) / v.sqrt());
                    (f - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < crit, "dimension {i}: KS {ks} ≥ {crit}");
        }
    }

    fn statrs_phi(z: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-z / 2f64.sqrt())
    }

    #[test]
    fn full_covariance_sample_covariance() {
        let n = 100_000;
        let cov = vec![2.0, 0.8, 0.0, 0.8, 1.0, -0.3, 0.0, -0.3, 0.5];
        let g = OutputDist::Full(FullGaussian::new(vec![1.0, 0.0, -1.0], cov.clone()).unwrap());
        let mut rng = RandomSource::new(9, "fullcov");
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_output(&g, &mut rng)).collect();
        let mean: Vec<f64> = (0..3)
            .map(|i| draws.iter().map(|x| x[i]).sum::<f64>() / n as f64)
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let c = draws
                    .iter()
                    .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                    .sum::<f64>()
                    / n as f64;
                let scale = (cov[i * 4] * cov[j * 4]).sqrt();
                assert!((c - cov[i * 3 + j]).abs() / scale < 0.05, "({i},{j}) {c}");
            }
        }
    }

    #[test]
    fn discrete_partition_examples() {
        assert_eq!(sample_discrete(&[0.4, 0.6], 0.9).unwrap() + 1, 2);
        assert_eq!(sample_discrete(&[0.4, 0.6], 0.0).unwrap() + 1, 1);
        assert_eq!(sample_discrete(&[0.2, 0.3, 0.5], 0.0).unwrap() + 1, 1);
        let third = 1.0 / 3.0;
        assert_eq!(sample_discrete(&[third, third, third], 0.5).unwrap() + 1, 2);
        assert_eq!(sample_discrete(&[0.4, 0.6], 1.0).unwrap() + 1, 2);
        assert!(matches!(
            sample_discrete(&[0.4, 0.5], 0.3),
            Err(Error::Validation(_))
        ));
        assert!(sample_discrete(&[0.5, 0.5], 1.2).is_err());
    }

    #[test]
    fn discrete_frequencies() {
        let probs = [0.1, 0.25, 0.4, 0.25];
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = RandomSource::new(4, "disc");
        for _ in 0..n {
            counts[sample_discrete(&probs, rng.uniform()).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let f = *c as f64 / n as f64;
            assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn geometric_rule_and_moments() {
        let mut s = FixedStream::new(vec![0.9, 0.2]);
        assert_eq!(sample_geometric(0.4, &mut s).unwrap(), 2);
        assert!(sample_geometric(0.0, &mut s).is_err());
        assert!(sample_geometric(1.0, &mut s).is_err());

        let mut rng = RandomSource::new(8, "geom-hi");
        let ones = (0..10_000)
            .filter(|_| sample_geometric(0.999, &mut rng).unwrap() == 1)
            .count();
        assert!(ones >= 9_970);

        let p = 0.25;
        let n = 100_000;
        let mut rng = RandomSource::new(8, "geom");
        let mean = (0..n).map(|_| sample_geometric(p, &mut rng).unwrap() as f64).sum::<f64>() / n as f64;
        let se = ((1.0 - p) / (p * p) / n as f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn laplace_conversion() {
        let g = DiagonalGaussian::new(vec![0.3, 0.0], vec![1.0, PI / 2.0]).unwrap();
        let l = laplace_from_normal(&g);
        assert_eq!(l.location(), &[0.3, 0.0]);
        assert!((l.scale()[0] - 0.797_884_560_8).abs() < 1e-10);
        assert!((l.scale()[1] - 1.0).abs() < 1e-14);

        let n = 100_000;
        let dist = OutputDist::Laplace(l.clone());
        let mut rng = RandomSource::new(3, "mad");
        let mad = (0..n)
            .map(|_| (sample_output(&dist, &mut rng)[0] - 0.3).abs())
            .sum::<f64>()
            / n as f64;
        assert!((mad / (2.0 / PI).sqrt() - 1.0).abs() < 0.02, "mad {mad}");
    }

    #[test]
    fn serde_round_trip() {
        let dists = vec![
            OutputDist::Diagonal(DiagonalGaussian::new(vec![0.1, 0.2], vec![1.0, 2.0]).unwrap()),
            OutputDist::Full(FullGaussian::new(vec![0.0, 1.0], vec![2.0, 0.5, 0.5, 1.0]).unwrap()),
            OutputDist::Laplace(DiagonalLaplace::new(vec![1.0], vec![0.5]).unwrap()),
        ];
        for d in dists {
            let s = serde_json::to_string(&d).unwrap();
            assert!(s.contains(&format!("\"kind\":\"{}\"", d.kind())));
            let back: OutputDist = serde_json::from_str(&s).unwrap();
            assert_eq!(back, d);
        }
        let bad = r#"{"kind":"diagonal","mean":[0.0],"variance":[-1.0]}"#;
        assert!(serde_json::from_str::<OutputDist>(bad).is_err());
    }
}
