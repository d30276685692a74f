//! Standard normal CDF and the log-space helpers EP needs for probit sites.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Below this argument `erfc` underflows and the asymptotic series is used.
const ASYMPTOTIC_BELOW: f64 = -30.0;

/// Standard normal CDF Φ(z).
pub fn probit(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// log Φ(z), accurate in both tails.
pub fn log_probit(z: f64) -> f64 {
    if z > 0.0 {
        // Φ(z) = 1 - Φ(-z)
        (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else if z > ASYMPTOTIC_BELOW {
        (0.5 * libm::erfc(-z * FRAC_1_SQRT_2)).ln()
    } else {
        let z2 = z * z;
        normal_log_pdf(z) - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
    }
}

/// φ(z) / Φ(z) without overflow for very negative z.
pub fn inverse_mills_ratio(z: f64) -> f64 {
    (normal_log_pdf(z) - log_probit(z)).exp()
}
