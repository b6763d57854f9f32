//! First-harmonic regression model: per-condition design matrices and
//! ordinary least squares fits.
//!
//! A condition's expression vector is modeled as
//! `y = mesor + alpha*cos(2*pi*t/24) + beta*sin(2*pi*t/24) + noise`,
//! fitted by OLS with condition-specific residual variance.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// The oscillation period is fixed at 24 hours.
pub const PERIOD_HOURS: f64 = 24.0;

/// Relative pivot threshold below which the 3x3 normal equations are
/// declared singular (smallest pivot / largest pivot).
pub const PIVOT_RATIO_MIN: f64 = 1e-10;

/// LDL^T factorization of a symmetric 3x3 matrix.
///
/// Returns (L strictly-lower entries (l21, l31, l32), pivots d) or the
/// offending pivot ratio if the matrix is numerically singular.
fn ldlt3(a: &Matrix3<f64>) -> std::result::Result<([f64; 3], [f64; 3]), f64> {
    let d1 = a[(0, 0)];
    if d1 <= 0.0 {
        return Err(0.0);
    }
    let l21 = a[(1, 0)] / d1;
    let l31 = a[(2, 0)] / d1;
    let d2 = a[(1, 1)] - l21 * l21 * d1;
    let ratio = |ds: &[f64]| {
        let max = ds.iter().cloned().fold(f64::MIN, f64::max);
        let min = ds.iter().cloned().fold(f64::MAX, f64::min);
        min / max
    };
    if ratio(&[d1, d2]) < PIVOT_RATIO_MIN {
        return Err(ratio(&[d1, d2]));
    }
    let l32 = (a[(2, 1)] - l31 * l21 * d1) / d2;
    let d3 = a[(2, 2)] - l31 * l31 * d1 - l32 * l32 * d2;
    let r = ratio(&[d1, d2, d3]);
    if r < PIVOT_RATIO_MIN {
        return Err(r);
    }
    Ok(([l21, l31, l32], [d1, d2, d3]))
}

fn ldlt3_solve(l: &[f64; 3], d: &[f64; 3], b: Vector3<f64>) -> Vector3<f64> {
    let [l21, l31, l32] = *l;
    // forward: L z = b
    let z1 = b[0];
    let z2 = b[1] - l21 * z1;
    let z3 = b[2] - l31 * z1 - l32 * z2;
    // scale: D w = z
    let w1 = z1 / d[0];
    let w2 = z2 / d[1];
    let w3 = z3 / d[2];
    // backward: L^T x = w
    let x3 = w3;
    let x2 = w2 - l32 * x3;
    let x1 = w1 - l21 * x2 - l31 * x3;
    Vector3::new(x1, x2, x3)
}

/// Design matrix and precomputed normal-equation factors for one condition.
#[derive(Debug, Clone)]
pub struct ConditionDesign {
    times: Vec<f64>,
    replicates: Vec<usize>,
    rows: Vec<[f64; 3]>,
    xtx: Matrix3<f64>,
    xtx_inv: Matrix3<f64>,
    ldlt: ([f64; 3], [f64; 3]),
}

impl ConditionDesign {
    /// Build the n x 3 design with rows `(1, cos(2*pi*t/24), sin(2*pi*t/24))`,
    /// one row per (time, replicate) in time-major, replicate-minor order.
    pub fn build(times: &[f64], replicates: &[usize]) -> Result<Self> {
        if times.len() != replicates.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                actual: replicates.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::DegenerateDesign("no time points".into()));
        }
        for &t in times {
            if !(0.0..PERIOD_HOURS).contains(&t) || !t.is_finite() {
                return Err(Error::InvalidTime(t));
            }
        }
        for (i, &ta) in times.iter().enumerate() {
            if times[i + 1..].iter().any(|&tb| tb == ta) {
                return Err(Error::InvalidInput(format!("duplicate time point {ta}")));
            }
        }
        if let Some(&j) = replicates.iter().find(|&&j| j == 0) {
            let _ = j;
            return Err(Error::InvalidInput("replicate counts must be >= 1".into()));
        }

        let mut rows = Vec::with_capacity(replicates.iter().sum());
        for (&t, &j) in times.iter().zip(replicates) {
            let w = 2.0 * std::f64::consts::PI * t / PERIOD_HOURS;
            let row = [1.0, w.cos(), w.sin()];
            for _ in 0..j {
                rows.push(row);
            }
        }

        let mut xtx = Matrix3::zeros();
        for r in &rows {
            for i in 0..3 {
                for j in 0..3 {
                    xtx[(i, j)] += r[i] * r[j];
                }
            }
        }
        let ldlt = ldlt3(&xtx).map_err(|ratio| {
            Error::DegenerateDesign(format!(
                "rank(X) < 3 for times {:?} (pivot ratio {ratio:.3e})",
                times
            ))
        })?;
        let mut xtx_inv = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            let col = ldlt3_solve(&ldlt.0, &ldlt.1, e);
            for i in 0..3 {
                xtx_inv[(i, k)] = col[i];
            }
        }
        // symmetrize away factorization round-off
        for i in 0..3 {
            for j in (i + 1)..3 {
                let m = 0.5 * (xtx_inv[(i, j)] + xtx_inv[(j, i)]);
                xtx_inv[(i, j)] = m;
                xtx_inv[(j, i)] = m;
            }
        }

        Ok(Self {
            times: times.to_vec(),
            replicates: replicates.to_vec(),
            rows,
            xtx,
            xtx_inv,
            ldlt,
        })
    }

    /// Total sample count n = sum of replicate counts.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn replicates(&self) -> &[usize] {
        &self.replicates
    }

    /// Design rows in fit order.
    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn xtx(&self) -> &Matrix3<f64> {
        &self.xtx
    }

    /// (X^T X)^{-1}, the unscaled coefficient covariance factor.
    pub fn xtx_inv(&self) -> &Matrix3<f64> {
        &self.xtx_inv
    }
}

/// OLS fit of one condition: coefficients, residual variance, covariance,
/// and the derived amplitude/phase.
#[derive(Debug, Clone)]
pub struct ConditionFit {
    /// (mesor, alpha, beta).
    pub gamma: Vector3<f64>,
    /// Residual variance with divisor n - 3.
    pub sigma2: f64,
    /// sigma2 * (X^T X)^{-1}.
    pub cov: Matrix3<f64>,
    /// (X^T X)^{-1} kept unscaled for downstream reference-distribution work.
    pub xtx_inv: Matrix3<f64>,
    pub n: usize,
    /// Residual degrees of freedom, n - 3.
    pub df_resid: usize,
    pub amplitude: f64,
    /// Radians in [-pi, pi].
    pub phase: f64,
}

impl ConditionFit {
    pub fn mesor(&self) -> f64 {
        self.gamma[0]
    }

    pub fn alpha(&self) -> f64 {
        self.gamma[1]
    }

    pub fn beta(&self) -> f64 {
        self.gamma[2]
    }

    /// Peak time in hours, in [0, 24).
    pub fn phase_hours(&self) -> f64 {
        phase_to_hours(self.phase)
    }
}

/// Fit the harmonic regression for one condition by least squares.
///
/// Requires n >= 4 so the residual variance has at least one degree of
/// freedom; the contrast tests impose their own stricter minimums.
pub fn fit_condition(y: &[f64], design: &ConditionDesign) -> Result<ConditionFit> {
    let n = design.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
    }
    if n < 4 {
        return Err(Error::InsufficientReplication { n, min: 4 });
    }

    let mut xty = Vector3::zeros();
    for (row, &v) in design.rows.iter().zip(y) {
        xty[0] += v;
        xty[1] += row[1] * v;
        xty[2] += row[2] * v;
    }
    let gamma = ldlt3_solve(&design.ldlt.0, &design.ldlt.1, xty);

    let mut rss = 0.0;
    for (row, &v) in design.rows.iter().zip(y) {
        let fitted = gamma[0] + row[1] * gamma[1] + row[2] * gamma[2];
        let r = v - fitted;
        rss += r * r;
    }
    let sigma2 = rss / (n - 3) as f64;
    let cov = design.xtx_inv * sigma2;
    let (amplitude, phase) = amplitude_phase(gamma[1], gamma[2]);

    Ok(ConditionFit {
        gamma,
        sigma2,
        cov,
        xtx_inv: design.xtx_inv,
        n,
        df_resid: n - 3,
        amplitude,
        phase,
    })
}

/// Amplitude sqrt(alpha^2 + beta^2) and phase atan2(beta, alpha).
///
/// Phase is 0 by convention when alpha = beta = 0.
pub fn amplitude_phase(alpha: f64, beta: f64) -> (f64, f64) {
    if alpha == 0.0 && beta == 0.0 {
        return (0.0, 0.0);
    }
    (alpha.hypot(beta), beta.atan2(alpha))
}

/// Convert a phase angle in radians to peak time in hours, in [0, 24).
pub fn phase_to_hours(phase: f64) -> f64 {
    (phase * PERIOD_HOURS / (2.0 * std::f64::consts::PI)).rem_euclid(PERIOD_HOURS)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: [f64; 6] = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0];

    fn grid_design(j: usize) -> ConditionDesign {
        ConditionDesign::build(&GRID, &[j; 6]).unwrap()
    }

    #[test]
    fn build_shapes_and_rows() {
        let d = ConditionDesign::build(&[2.0, 6.0, 10.0, 14.0, 18.0, 22.0], &[3; 6]).unwrap();
        assert_eq!(d.n(), 18);
        assert_eq!(d.rows().len(), 18);
        // t = 0 -> (1, 1, 0); t = 6 -> (1, 0, 1)
        let d0 = ConditionDesign::build(&[0.0, 6.0, 12.0, 18.0], &[1; 4]).unwrap();
        let r0 = d0.rows()[0];
        assert!((r0[0] - 1.0).abs() == 0.0 && (r0[1] - 1.0).abs() < 1e-15 && r0[2].abs() < 1e-15);
        let r6 = d0.rows()[1];
        assert!(r6[1].abs() < 1e-15 && (r6[2] - 1.0).abs() < 1e-15);
        // every row: first entry 1, cos^2 + sin^2 = 1
        for r in d.rows() {
            assert_eq!(r[0], 1.0);
            assert!((r[1] * r[1] + r[2] * r[2] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_and_invalid_designs_rejected() {
        match ConditionDesign::build(&[0.0, 12.0], &[5, 5]) {
            Err(Error::DegenerateDesign(_)) => {}
            other => panic!("expected DegenerateDesign, got {other:?}"),
        }
        match ConditionDesign::build(&[0.0, 8.0, 24.0], &[1, 1, 1]) {
            Err(Error::InvalidTime(t)) => assert_eq!(t, 24.0),
            other => panic!("expected InvalidTime, got {other:?}"),
        }
        match ConditionDesign::build(&[0.0, 8.0, -0.5], &[1, 1, 1]) {
            Err(Error::InvalidTime(_)) => {}
            other => panic!("expected InvalidTime, got {other:?}"),
        }
        // aliasing two times with opposite harmonic sign still has rank < 3
        match ConditionDesign::build(&[3.0, 15.0], &[4, 4]) {
            Err(Error::DegenerateDesign(_)) => {}
            other => panic!("expected DegenerateDesign, got {other:?}"),
        }
        assert!(ConditionDesign::build(&[0.0, 4.0, 4.0], &[1, 1, 1]).is_err());
        assert!(ConditionDesign::build(&[0.0, 4.0, 8.0], &[1, 0, 1]).is_err());
    }

    #[test]
    fn noiseless_cosine_recovered_exactly() {
        let d = grid_design(3);
        let y: Vec<f64> = d
            .rows()
            .iter()
            .map(|r| 1.0 + r[1]) // 1 + cos term
            .collect();
        let fit = fit_condition(&y, &d).unwrap();
        assert!((fit.gamma[0] - 1.0).abs() < 1e-12);
        assert!((fit.gamma[1] - 1.0).abs() < 1e-12);
        assert!(fit.gamma[2].abs() < 1e-12);
        assert!(fit.sigma2.abs() < 1e-24);
    }

    #[test]
    fn constant_series_gives_pure_mesor() {
        let d = grid_design(3);
        let y = vec![5.0; 18];
        let fit = fit_condition(&y, &d).unwrap();
        assert!((fit.gamma[0] - 5.0).abs() < 1e-12);
        assert!(fit.gamma[1].abs() < 1e-13);
        assert!(fit.gamma[2].abs() < 1e-13);
        assert_eq!(fit.df_resid, 15);
    }

    #[test]
    fn matches_bruteforce_normal_equations() {
        // independent oracle: explicit Gaussian elimination on (X^T X | X^T y)
        let d = grid_design(2);
        let mut state = 0x1234_5678_u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let y: Vec<f64> = (0..d.n()).map(|i| 1.0 + 0.3 * (i as f64) + next()).collect();

        let mut a = [[0.0f64; 4]; 3];
        for (row, &v) in d.rows().iter().zip(&y) {
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += row[i] * row[j];
                }
                a[i][3] += row[i] * v;
            }
        }
        for col in 0..3 {
            let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..3 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..4 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let oracle = [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]];

        let fit = fit_condition(&y, &d).unwrap();
        for i in 0..3 {
            assert!(
                (fit.gamma[i] - oracle[i]).abs() < 1e-10,
                "coef {i}: {} vs {}",
                fit.gamma[i],
                oracle[i]
            );
        }
        // residual orthogonality X^T r = 0
        let mut xtr = [0.0f64; 3];
        for (row, &v) in d.rows().iter().zip(&y) {
            let r = v - (fit.gamma[0] + row[1] * fit.gamma[1] + row[2] * fit.gamma[2]);
            for i in 0..3 {
                xtr[i] += row[i] * r;
            }
        }
        for v in xtr {
            assert!(v.abs() < 1e-9, "X^T r = {xtr:?}");
        }
        // cov identity: cov == sigma2 * (X^T X)^{-1} recomputed from scratch
        let xtx_inv_oracle = d.xtx().try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = fit.sigma2 * xtx_inv_oracle[(i, j)];
                let got = fit.cov[(i, j)];
                assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn ols_shift_linearity_and_scale() {
        let d = grid_design(3);
        let y: Vec<f64> = d.rows().iter().enumerate().map(|(i, r)| 0.4 * r[1] + 0.1 * i as f64).collect();
        let fit = fit_condition(&y, &d).unwrap();
        let v = Vector3::new(0.7, -1.3, 2.2);
        let y2: Vec<f64> =
            d.rows().iter().zip(&y).map(|(r, &yy)| yy + v[0] + v[1] * r[1] + v[2] * r[2]).collect();
        let fit2 = fit_condition(&y2, &d).unwrap();
        for i in 0..3 {
            assert!((fit2.gamma[i] - fit.gamma[i] - v[i]).abs() < 1e-12);
        }
        assert!((fit2.sigma2 - fit.sigma2).abs() < 1e-12 * fit.sigma2.max(1e-12));

        // scaling y about fitted values scales sigma2 by s^2
        let s = 3.5;
        let fitted: Vec<f64> =
            d.rows().iter().map(|r| fit.gamma[0] + r[1] * fit.gamma[1] + r[2] * fit.gamma[2]).collect();
        let y3: Vec<f64> = y.iter().zip(&fitted).map(|(&yy, &f)| f + s * (yy - f)).collect();
        let fit3 = fit_condition(&y3, &d).unwrap();
        assert!((fit3.sigma2 - s * s * fit.sigma2).abs() < 1e-10 * (s * s * fit.sigma2));
    }

    #[test]
    fn amplitude_phase_conventions() {
        assert_eq!(amplitude_phase(1.0, 0.0), (1.0, 0.0));
        let (a, p) = amplitude_phase(0.0, 2.0);
        assert_eq!(a, 2.0);
        assert!((p - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let (a, p) = amplitude_phase(-1.0, 0.0);
        assert_eq!(a, 1.0);
        assert!((p - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(amplitude_phase(0.0, 0.0), (0.0, 0.0));
        // peak hours: phase pi/2 -> 6 h
        assert!((phase_to_hours(std::f64::consts::FRAC_PI_2) - 6.0).abs() < 1e-12);
        assert!((phase_to_hours(-std::f64::consts::FRAC_PI_2) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn fit_requires_minimum_samples() {
        let d = ConditionDesign::build(&[0.0, 8.0, 16.0], &[1, 1, 1]).unwrap();
        match fit_condition(&[1.0, 2.0, 3.0], &d) {
            Err(Error::InsufficientReplication { n: 3, min: 4 }) => {}
            other => panic!("expected InsufficientReplication, got {other:?}"),
        }
        match fit_condition(&[1.0; 5], &d) {
            Err(Error::DimensionMismatch { expected: 3, actual: 5 }) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }
}
