//! Gaussian belief mathematics.
//!
//! Scalar conjugate updates, and multivariate posteriors over `J` correlated
//! alternatives when only a subset of the signals is received. Beliefs over
//! alternatives follow a one-factor structure: every alternative shares a
//! common component with variance `common_var`, plus an independent specific
//! component. Signal noise is independent across alternatives.
//!
//! Two routes to the multivariate posterior are provided. The conditioning
//! form works on the received coordinates only and tolerates a singular prior
//! covariance; the precision form needs an invertible prior. They must agree
//! whenever both are defined.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Smallest eigenvalue accepted for a covariance matrix.
pub const PSD_FLOOR: f64 = -1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("{what} is not finite")]
    NonFinite { what: &'static str },
    #[error("{what} must be non-negative, got {value}")]
    NegativeVariance { what: &'static str, value: f64 },
    #[error("signal noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{matrix} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd {
        matrix: &'static str,
        min_eigenvalue: f64,
    },
    #[error("{matrix} is numerically singular")]
    Singular { matrix: &'static str },
    #[error("mask entry {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: i64 },
}

fn finite(x: f64, what: &'static str) -> Result<f64, GaussianError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(GaussianError::NonFinite { what })
    }
}

fn variance(x: f64, what: &'static str) -> Result<f64, GaussianError> {
    finite(x, what)?;
    if x < 0.0 {
        return Err(GaussianError::NegativeVariance { what, value: x });
    }
    Ok(x)
}

pub(crate) fn noise(x: f64) -> Result<f64, GaussianError> {
    finite(x, "noise variance")?;
    if x <= 0.0 {
        return Err(GaussianError::NonPositiveNoise(x));
    }
    Ok(x)
}

/// Normal belief about a single alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBelief {
    pub mu: f64,
    pub sigma2: f64,
}

impl ScalarBelief {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self, GaussianError> {
        Ok(Self {
            mu: finite(mu, "prior mean")?,
            sigma2: variance(sigma2, "prior variance")?,
        })
    }

    fn validate(&self) -> Result<(), GaussianError> {
        finite(self.mu, "prior mean")?;
        variance(self.sigma2, "prior variance")?;
        Ok(())
    }
}

/// Conjugate posterior after observing `s = θ + ε`, `ε ~ N(0, noise_var)`.
pub fn posterior_scalar(
    prior: ScalarBelief,
    noise_var: f64,
    s: f64,
) -> Result<ScalarBelief, GaussianError> {
    prior.validate()?;
    let noise_var = noise(noise_var)?;
    let s = finite(s, "signal")?;
    let total = noise_var + prior.sigma2;
    let weight = prior.sigma2 / total;
    let (lo, hi) = if prior.mu <= s { (prior.mu, s) } else { (s, prior.mu) };
    // mu + w (s - mu) can round one ulp past s
    let mean = (prior.mu + weight * (s - prior.mu)).clamp(lo, hi);
    let var = (noise_var * prior.sigma2 / total).min(prior.sigma2).min(noise_var);
    Ok(ScalarBelief {
        mu: mean,
        sigma2: var,
    })
}

/// Change in the mean belief, `(s - mu) / (1 + γ)` with `γ = noise_var / sigma2`.
///
/// A dogmatic prior (`sigma2 == 0`) yields no update.
pub fn persuasion(prior: ScalarBelief, noise_var: f64, s: f64) -> Result<f64, GaussianError> {
    prior.validate()?;
    let noise_var = noise(noise_var)?;
    let s = finite(s, "signal")?;
    if prior.sigma2 == 0.0 {
        return Ok(0.0);
    }
    Ok(prior.sigma2 / (noise_var + prior.sigma2) * (s - prior.mu))
}

/// Prior over `J` alternatives with a common factor.
///
/// `cov[j][j] = common_var + specific_var[j]`, `cov[j][k] = common_var`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    mu: Vec<f64>,
    common_var: f64,
    specific_var: Vec<f64>,
}

impl BeliefState {
    pub fn new(mu: Vec<f64>, common_var: f64, specific_var: Vec<f64>) -> Result<Self, GaussianError> {
        if mu.len() != specific_var.len() {
            return Err(GaussianError::DimensionMismatch {
                what: "specific variances",
                expected: mu.len(),
                got: specific_var.len(),
            });
        }
        for &m in &mu {
            finite(m, "prior mean")?;
        }
        variance(common_var, "common variance")?;
        for &v in &specific_var {
            variance(v, "specific variance")?;
        }
        Ok(Self {
            mu,
            common_var,
            specific_var,
        })
    }

    /// Single alternative with no common factor.
    pub fn scalar(prior: ScalarBelief) -> Result<Self, GaussianError> {
        Self::new(vec![prior.mu], 0.0, vec![prior.sigma2])
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn common_var(&self) -> f64 {
        self.common_var
    }

    pub fn specific_var(&self) -> &[f64] {
        &self.specific_var
    }

    /// Marginal variance `σ_j²` of alternative `j`.
    pub fn variance(&self, j: usize) -> f64 {
        self.common_var + self.specific_var[j]
    }

    pub fn marginal(&self, j: usize) -> ScalarBelief {
        ScalarBelief {
            mu: self.mu[j],
            sigma2: self.variance(j),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.variance(i)
            } else {
                self.common_var
            }
        })
    }

    pub fn to_gaussian(&self) -> MultiGaussian {
        MultiGaussian {
            mean: DVector::from_column_slice(&self.mu),
            cov: self.covariance(),
        }
    }
}

/// Multivariate normal with a full covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MultiGaussian {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.cov)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Signal noise and the signal values actually delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    noise_var: f64,
    truth: Vec<f64>,
}

impl SignalModel {
    pub fn new(noise_var: f64, truth: Vec<f64>) -> Result<Self, GaussianError> {
        let noise_var = noise(noise_var)?;
        for &t in &truth {
            finite(t, "signal value")?;
        }
        Ok(Self { noise_var, truth })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }
}

/// Which signals are received, and the cost per signal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AcquisitionMask {
    received: Vec<bool>,
    unit_cost_bits: u64,
}

impl AcquisitionMask {
    pub fn new(received: Vec<bool>, unit_cost: f64) -> Result<Self, GaussianError> {
        variance(unit_cost, "unit cost")?;
        Ok(Self {
            received,
            unit_cost_bits: unit_cost.to_bits(),
        })
    }

    /// From a 0/1 vector.
    pub fn from_binary(bits: &[i64], unit_cost: f64) -> Result<Self, GaussianError> {
        let received = bits
            .iter()
            .enumerate()
            .map(|(index, &value)| match value {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(GaussianError::NotBinary { index, value }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(received, unit_cost)
    }

    pub fn from_indices(len: usize, indices: &[usize], unit_cost: f64) -> Result<Self, GaussianError> {
        let mut received = vec![false; len];
        for &i in indices {
            if i >= len {
                return Err(GaussianError::DimensionMismatch {
                    what: "mask index",
                    expected: len,
                    got: i,
                });
            }
            received[i] = true;
        }
        Self::new(received, unit_cost)
    }

    /// Bit `j` of `subset` set means alternative `j` is received.
    pub fn from_subset(len: usize, subset: u32, unit_cost: f64) -> Result<Self, GaussianError> {
        Self::new((0..len).map(|j| subset >> j & 1 == 1).collect(), unit_cost)
    }

    pub fn none(len: usize) -> Self {
        Self {
            received: vec![false; len],
            unit_cost_bits: 0f64.to_bits(),
        }
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn received(&self) -> &[bool] {
        &self.received
    }

    pub fn is_received(&self, j: usize) -> bool {
        self.received[j]
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.received[j]).collect()
    }

    pub fn count(&self) -> usize {
        self.received.iter().filter(|&&d| d).count()
    }

    pub fn unit_cost(&self) -> f64 {
        f64::from_bits(self.unit_cost_bits)
    }

    /// `c · Σ D_j`.
    pub fn total_cost(&self) -> f64 {
        self.unit_cost() * self.count() as f64
    }
}

fn check_lengths(
    belief: &BeliefState,
    signal: &SignalModel,
    mask: &AcquisitionMask,
) -> Result<(), GaussianError> {
    let j = belief.len();
    if signal.truth.len() != j {
        return Err(GaussianError::DimensionMismatch {
            what: "signal values",
            expected: j,
            got: signal.truth.len(),
        });
    }
    if mask.len() != j {
        return Err(GaussianError::DimensionMismatch {
            what: "acquisition mask",
            expected: j,
            got: mask.len(),
        });
    }
    Ok(())
}

/// Linear map from received signals to the posterior mean.
///
/// `posterior_mean = mu + gain * (s_R - mu_R)` where `R` lists the received
/// coordinates in increasing order.
#[derive(Debug, Clone)]
pub struct Gain {
    pub received: Vec<usize>,
    /// `J × |R|` matrix `Σ_{·R} (Σ_RR + σ_s² I)⁻¹`.
    pub gain: DMatrix<f64>,
    /// Cholesky factor of the prior-predictive covariance `Σ_RR + σ_s² I`.
    pub predictive: Option<Cholesky<f64, Dyn>>,
}

/// Kalman-style gain for conditioning `prior` on the masked signals.
pub fn gain(prior: &MultiGaussian, noise_var: f64, mask: &AcquisitionMask) -> Result<Gain, GaussianError> {
    let noise_var = noise(noise_var)?;
    let received = mask.indices();
    let n = prior.mean.len();
    let r = received.len();
    if r == 0 {
        return Ok(Gain {
            received,
            gain: DMatrix::zeros(n, 0),
            predictive: None,
        });
    }
    let s = DMatrix::from_fn(r, r, |a, b| {
        let v = prior.cov[(received[a], received[b])];
        if a == b {
            v + noise_var
        } else {
            v
        }
    });
    let chol = s.cholesky().ok_or(GaussianError::Singular {
        matrix: "Σ_RR + σ_s² I",
    })?;
    let cross = DMatrix::from_fn(r, n, |a, j| prior.cov[(received[a], j)]);
    let gain = chol.solve(&cross).transpose();
    Ok(Gain {
        received,
        gain,
        predictive: Some(chol),
    })
}

/// Posterior by partitioned Gaussian conditioning on the received coordinates.
///
/// With nothing received the prior is returned unchanged.
pub fn condition(
    prior: &MultiGaussian,
    noise_var: f64,
    signals: &[f64],
    mask: &AcquisitionMask,
) -> Result<MultiGaussian, GaussianError> {
    let n = prior.mean.len();
    if signals.len() != n || mask.len() != n {
        return Err(GaussianError::DimensionMismatch {
            what: "signals/mask",
            expected: n,
            got: if signals.len() != n { signals.len() } else { mask.len() },
        });
    }
    let g = gain(prior, noise_var, mask)?;
    if g.received.is_empty() {
        return Ok(prior.clone());
    }
    let innovation = DVector::from_iterator(
        g.received.len(),
        g.received.iter().map(|&j| signals[j] - prior.mean[j]),
    );
    let mean = &prior.mean + &g.gain * innovation;
    let cross = DMatrix::from_fn(g.received.len(), n, |a, j| prior.cov[(g.received[a], j)]);
    let mut cov = &prior.cov - &g.gain * cross;
    symmetrize(&mut cov);
    let min = min_eigenvalue(&cov);
    if min < PSD_FLOOR {
        return Err(GaussianError::NotPsd {
            matrix: "posterior covariance",
            min_eigenvalue: min,
        });
    }
    Ok(MultiGaussian { mean, cov })
}

/// Posterior by the precision form `(Ω + Σ⁻¹)⁻¹ (Ω s + Σ⁻¹ μ)`, with
/// `Ω = diag(D) / σ_s²`. Requires an invertible prior covariance.
pub fn condition_precision(
    prior: &MultiGaussian,
    noise_var: f64,
    signals: &[f64],
    mask: &AcquisitionMask,
) -> Result<MultiGaussian, GaussianError> {
    let noise_var = noise(noise_var)?;
    let n = prior.mean.len();
    if mask.count() == 0 {
        return Ok(prior.clone());
    }
    let prior_chol = prior.cov.clone().cholesky().ok_or(GaussianError::Singular {
        matrix: "Σ_θ",
    })?;
    let prior_precision = prior_chol.inverse();
    let mut precision = prior_precision;
    let mut info = prior_chol.solve(&prior.mean);
    for j in 0..n {
        if mask.is_received(j) {
            precision[(j, j)] += 1.0 / noise_var;
            info[j] += signals[j] / noise_var;
        }
    }
    let post_chol = precision.cholesky().ok_or(GaussianError::Singular {
        matrix: "Ω + Σ_θ⁻¹",
    })?;
    let mean = post_chol.solve(&info);
    let mut cov = post_chol.inverse();
    symmetrize(&mut cov);
    Ok(MultiGaussian { mean, cov })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Posterior over all alternatives given the received signals in `mask`.
///
/// Non-received coordinates are updated through their covariance with the
/// received ones. Uses the conditioning route.
pub fn posterior_multi(
    belief: &BeliefState,
    signal: &SignalModel,
    mask: &AcquisitionMask,
) -> Result<MultiGaussian, GaussianError> {
    check_lengths(belief, signal, mask)?;
    condition(&belief.to_gaussian(), signal.noise_var, &signal.truth, mask)
}

/// Largest absolute disagreement between the two posterior routes.
pub fn cross_check(
    belief: &BeliefState,
    signal: &SignalModel,
    mask: &AcquisitionMask,
) -> Result<f64, GaussianError> {
    check_lengths(belief, signal, mask)?;
    let prior = belief.to_gaussian();
    let a = condition(&prior, signal.noise_var, &signal.truth, mask)?;
    let b = condition_precision(&prior, signal.noise_var, &signal.truth, mask)?;
    let dm = (&a.mean - &b.mean).amax();
    let dc = (&a.cov - &b.cov).amax();
    Ok(dm.max(dc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sb(mu: f64, sigma2: f64) -> ScalarBelief {
        ScalarBelief::new(mu, sigma2).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let p = posterior_scalar(sb(0.0, 1.0), 1.0, 2.0).unwrap();
        assert_eq!((p.mu, p.sigma2), (1.0, 0.5));

        let p = posterior_scalar(sb(5.0, 0.0), 1.0, 9.0).unwrap();
        assert_eq!((p.mu, p.sigma2), (5.0, 0.0));

        // (100·69 + 400·94.1) / 500 and 100·400 / 500
        let p = posterior_scalar(sb(69.0, 400.0), 100.0, 94.1).unwrap();
        assert!((p.mu - 89.08).abs() < 1e-12);
        assert!((p.sigma2 - 80.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_rejection_sampling_oracle() {
        // Draw θ from the prior and s from N(θ, σ_s²); keep θ when s falls in a
        // narrow window around the observed signal.
        use crate::rng::KeyedStream;
        let (mu, s2, n2, s_obs): (f64, f64, f64, f64) = (69.0, 400.0, 100.0, 94.1);
        let mut rng = KeyedStream::new(2024, &[]);
        let (mut sum, mut sq, mut kept) = (0.0, 0.0, 0usize);
        for _ in 0..10_000_000 {
            let theta = mu + s2.sqrt() * rng.standard_normal();
            let s = theta + n2.sqrt() * rng.standard_normal();
            if (s - s_obs).abs() < 0.25 {
                sum += theta;
                sq += theta * theta;
                kept += 1;
            }
        }
        let mean = sum / kept as f64;
        let var = sq / kept as f64 - mean * mean;
        let se = (var / kept as f64).sqrt();
        assert!((mean - 89.08).abs() < 4.0 * se + 0.01, "mean {mean} se {se}");
        assert!((var - 80.0).abs() < 3.0, "var {var}");
    }

    #[test]
    fn scalar_rejects_bad_input() {
        assert!(matches!(
            posterior_scalar(sb(0.0, 1.0), 0.0, 1.0),
            Err(GaussianError::NonPositiveNoise(_))
        ));
        assert!(matches!(
            posterior_scalar(sb(0.0, 1.0), 1.0, f64::NAN),
            Err(GaussianError::NonFinite { .. })
        ));
        assert!(ScalarBelief::new(f64::INFINITY, 1.0).is_err());
        assert!(ScalarBelief::new(0.0, -1.0).is_err());
    }

    #[test]
    fn persuasion_examples() {
        assert_eq!(persuasion(sb(0.0, 1.0), 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(persuasion(sb(3.5, 2.0), 1.0, 3.5).unwrap(), 0.0);
        assert_eq!(persuasion(sb(0.0, 1.0), 3.0, 4.0).unwrap(), 1.0);
        let p = posterior_scalar(sb(0.0, 1.0), 3.0, 4.0).unwrap();
        assert_eq!(p.mu, 1.0);
        assert_eq!(persuasion(sb(1.0, 0.0), 3.0, 40.0).unwrap(), 0.0);
    }

    fn two(mu: [f64; 2], var: [f64; 2], common: f64) -> BeliefState {
        BeliefState::new(mu.to_vec(), common, vec![var[0] - common, var[1] - common]).unwrap()
    }

    #[test]
    fn multi_examples() {
        let b = two([0.0, 0.0], [1.0, 1.0], 0.5);
        let sig = SignalModel::new(1.0, vec![2.0, 0.0]).unwrap();
        let mask = AcquisitionMask::from_binary(&[1, 0], 0.0).unwrap();
        let post = posterior_multi(&b, &sig, &mask).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert!((post.mean[1] - 0.5).abs() < 1e-15);

        // direct 2×2 conditioning: cov(θ, s1) = (1, 0.5), var(s1) = 2
        assert!((post.cov[(0, 0)] - (1.0 - 1.0 / 2.0)).abs() < 1e-15);
        assert!((post.cov[(1, 1)] - (1.0 - 0.25 / 2.0)).abs() < 1e-15);
        assert!((post.cov[(0, 1)] - (0.5 - 0.5 / 2.0)).abs() < 1e-15);

        let b = two([3.0, 7.0], [2.0, 1.5], 0.0);
        let sig = SignalModel::new(0.7, vec![10.0, -4.0]).unwrap();
        let post = posterior_multi(&b, &sig, &mask).unwrap();
        assert_eq!(post.mean[1], 7.0);
    }

    #[test]
    fn empty_mask_returns_prior_bit_identical() {
        let b = BeliefState::new(vec![1.0, 2.0, 3.0], 0.3, vec![0.1, 0.2, 0.4]).unwrap();
        let sig = SignalModel::new(1.0, vec![9.0, 9.0, 9.0]).unwrap();
        let post = posterior_multi(&b, &sig, &AcquisitionMask::none(3)).unwrap();
        assert_eq!(post, b.to_gaussian());
    }

    #[test]
    fn singular_prior_uses_conditioning() {
        // all variance in the common factor: Σ is rank one
        let b = BeliefState::new(vec![0.0, 1.0, 2.0], 1.0, vec![0.0; 3]).unwrap();
        let sig = SignalModel::new(1.0, vec![2.0, 0.0, 0.0]).unwrap();
        let mask = AcquisitionMask::from_binary(&[1, 0, 0], 0.0).unwrap();
        let post = posterior_multi(&b, &sig, &mask).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert!((post.mean[2] - 3.0).abs() < 1e-15);
        assert!(matches!(
            condition_precision(&b.to_gaussian(), 1.0, sig.truth(), &mask),
            Err(GaussianError::Singular { matrix: "Σ_θ" })
        ));
    }

    #[test]
    fn dimension_and_binary_errors() {
        let b = two([0.0, 0.0], [1.0, 1.0], 0.5);
        let sig = SignalModel::new(1.0, vec![2.0]).unwrap();
        let mask = AcquisitionMask::none(2);
        assert!(matches!(
            posterior_multi(&b, &sig, &mask),
            Err(GaussianError::DimensionMismatch { .. })
        ));
        assert_eq!(
            AcquisitionMask::from_binary(&[0, 2], 1.0),
            Err(GaussianError::NotBinary { index: 1, value: 2 })
        );
        assert!(SignalModel::new(0.0, vec![]).is_err());
        assert!(BeliefState::new(vec![0.0], -0.1, vec![1.0]).is_err());
    }

    #[test]
    fn total_cost_is_count_times_unit() {
        let m = AcquisitionMask::from_binary(&[1, 0, 1, 1], 2.5).unwrap();
        assert_eq!(m.total_cost(), 7.5);
        assert_eq!(m.indices(), vec![0, 2, 3]);
    }

    fn belief_strategy() -> impl Strategy<Value = (BeliefState, SignalModel, AcquisitionMask)> {
        (2usize..6)
            .prop_flat_map(|j| {
                (
                    prop::collection::vec(-50.0..150.0f64, j),
                    0.0..200.0f64,
                    prop::collection::vec(1.0..400.0f64, j),
                    1.0..300.0f64,
                    prop::collection::vec(0.0..100.0f64, j),
                    prop::collection::vec(any::<bool>(), j),
                )
            })
            .prop_map(|(mu, common, spec, noise, truth, mask)| {
                (
                    BeliefState::new(mu, common, spec).unwrap(),
                    SignalModel::new(noise, truth).unwrap(),
                    AcquisitionMask::new(mask, 0.0).unwrap(),
                )
            })
    }

    proptest! {
        #[test]
        fn persuasion_is_posterior_shift(mu in -100.0..100.0f64, s2 in 0.0..500.0f64,
                                         n2 in 0.01..500.0f64, s in -100.0..200.0f64) {
            let p = sb(mu, s2);
            let d = persuasion(p, n2, s).unwrap();
            let post = posterior_scalar(p, n2, s).unwrap();
            prop_assert!((d - (post.mu - mu)).abs() <= 1e-12 * (1.0 + mu.abs().max(s.abs())));
            prop_assert!(d.abs() <= (s - mu).abs());
            if s != mu && s2 > 0.0 {
                prop_assert_eq!(d.signum(), (s - mu).signum());
            }
            prop_assert!(post.sigma2 <= s2.min(n2));
            prop_assert!(post.mu >= mu.min(s) && post.mu <= mu.max(s));
        }

        #[test]
        fn persuasion_shrinks_with_gamma(mu in -50.0..50.0f64, s in -50.0..150.0f64,
                                         s2 in 0.5..100.0f64) {
            let mut last = f64::INFINITY;
            for k in 0..40 {
                let noise = 0.01 * 1.3f64.powi(k);
                let d = persuasion(sb(mu, s2), noise, s).unwrap().abs();
                prop_assert!(d <= last);
                last = d;
            }
        }

        #[test]
        fn conditioning_and_precision_agree((b, sig, mask) in belief_strategy()) {
            let err = cross_check(&b, &sig, &mask).unwrap();
            prop_assert!(err < 1e-9, "disagreement {}", err);
        }

        #[test]
        fn posterior_covariance_is_textbook_and_psd((b, sig, mask) in belief_strategy()) {
            let post = posterior_multi(&b, &sig, &mask).unwrap();
            prop_assert!(post.min_eigenvalue() >= PSD_FLOOR);
            // Σ − Σ_·R (Σ_RR + σ_s² I)⁻¹ Σ_R· by explicit inverse, as an oracle
            let r = mask.indices();
            if !r.is_empty() {
                let cov = b.covariance();
                let n = b.len();
                let srr = DMatrix::from_fn(r.len(), r.len(), |a, c| cov[(r[a], r[c])]
                    + if a == c { sig.noise_var() } else { 0.0 });
                let sxr = DMatrix::from_fn(n, r.len(), |i, a| cov[(i, r[a])]);
                let inv = srr.try_inverse().unwrap();
                let expect = &cov - &sxr * inv * sxr.transpose();
                prop_assert!((&post.cov - expect).amax() < 1e-9);
            }
        }
    }
}
