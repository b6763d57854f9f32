//! Exact chi-square moments and the derived moments of the residual
//! variance estimator, the raw material for the moment-matched F
//! references.
//!
//! With r residual degrees of freedom, `sigma2_hat ~ sigma2 * chi2_r / r`,
//! so its central moments are scaled chi-square central moments.

use crate::error::{Error, Result};

/// Raw moment E[(chi^2_r)^s] for s in 1..=4, via the telescoping product
/// r (r+2) ... (r + 2(s-1)).
///
/// The product form is exact and avoids large-argument gamma ratios.
pub fn chi2_raw_moment(r: f64, s: u32) -> Result<f64> {
    if !(1..=4).contains(&s) {
        return Err(Error::InvalidOrder(s));
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidInput(format!("degrees of freedom {r} < 1")));
    }
    let mut acc = 1.0;
    for i in 0..s {
        acc *= r + 2.0 * i as f64;
    }
    Ok(acc)
}

/// Third and fourth central moments of chi^2_r, assembled from raw moments.
pub fn chi2_central_moments(r: f64) -> (f64, f64) {
    let m1 = r;
    let m2 = r * (r + 2.0);
    let m3 = m2 * (r + 4.0);
    let m4 = m3 * (r + 6.0);
    let cm3 = m3 - 3.0 * m2 * m1 + 2.0 * m1 * m1 * m1;
    let cm4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1;
    (cm3, cm4)
}

/// Variance and third/fourth central moments of the residual variance
/// estimator, evaluated at a plug-in variance value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMoments {
    /// var(sigma2_hat) = 2 sigma2^2 / r.
    pub var2: f64,
    /// E[(sigma2_hat - sigma2)^3].
    pub cm3: f64,
    /// E[(sigma2_hat - sigma2)^4].
    pub cm4: f64,
}

impl SigmaMoments {
    /// The known-variance limit: all estimator moments vanish.
    pub const ZERO: SigmaMoments = SigmaMoments { var2: 0.0, cm3: 0.0, cm4: 0.0 };
}

/// Moments of `sigma2_hat` at plug-in variance `sigma2` with r residual df.
pub fn sigma_hat_moments(sigma2: f64, r: f64) -> Result<SigmaMoments> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonpositiveVariance(sigma2));
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidInput(format!("residual df {r} < 1")));
    }
    let (c3, c4) = chi2_central_moments(r);
    let s4 = sigma2 * sigma2;
    Ok(SigmaMoments {
        var2: 2.0 * s4 / r,
        cm3: s4 * sigma2 / (r * r * r) * c3,
        cm4: s4 * s4 / (r * r * r * r) * c4,
    })
}
