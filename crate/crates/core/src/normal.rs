//! Standard normal density and distribution function.
//!
//! The CDF is evaluated through `erfc` in both tails so that upper-tail
//! probabilities keep full relative precision far from the origin.

use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)`, computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value for a standard normal test statistic.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * sf(z.abs())).min(1.0)
}

/// Normal loss function `φ(x) - x(1 - Φ(x))`, i.e. `E[(Z - x)^+]`.
pub fn loss(x: f64) -> f64 {
    pdf(x) - x * sf(x)
}
