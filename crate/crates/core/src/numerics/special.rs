use crate::{Error, Result};

/// Below this the recurrence `ψ(x) = ψ(x + 1) - 1/x` is applied.
const ASYMPTOTIC_FROM: f64 = 10.0;

/// Digamma function `ψ(x) = d/dx log Γ(x)` for `x > 0`.
///
/// Shifts `x` up to at least 10 with the recurrence, then evaluates the
/// asymptotic series through the `x^-14` term (truncation error below
/// `1e-16` at `x = 10`).
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "digamma",
            x,
        });
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli numbers B_2k / (2k), k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 / x - series
}

/// `log Γ(x)` for `x > 0`.
pub fn lgamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "lgamma",
            x,
        });
    }
    Ok(libm::lgamma(x))
}
