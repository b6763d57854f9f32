//! Moment-matched F references for heteroskedastic quadratic-form
//! statistics.
//!
//! Each test statistic has the shape
//! `T = (L g)^T (L Sigma_hat L^T)^{-1} (L g) / rho`
//! where the per-condition covariance blocks are scaled by independent
//! residual-variance estimates. The first two moments of `rho T` are
//! expanded around the plug-in variances and matched to a scaled F
//! distribution, giving a finite-sample reference `c T ~ F(rho, df)`.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::moments::SigmaMoments;
use crate::special;

/// Condition number above which the contrasted covariance is treated as
/// singular.
pub const OMEGA_COND_MAX: f64 = 1e12;

/// Tolerance on the closed-form denominator around zero for switching to
/// the chi-square limit.
pub const CHISQ_LIMIT_EPS: f64 = 1e-8;

/// Residual above which the fallback optimizer reports failure.
pub const OPTIMIZER_RESIDUAL_MAX: f64 = 1e-6;

/// Which family of parameter differences a contrast examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastKind {
    /// Paired (alpha, beta) differences: 2(K-1) x 3K.
    Rhythm,
    /// Mesor differences: (K-1) x 3K.
    Mesor,
    /// Differences of one scalar transform per condition: (K-1) x K.
    Scalar,
}

/// A difference-contrast matrix together with its rank.
#[derive(Debug, Clone)]
pub struct ContrastSpec {
    pub kind: ContrastKind,
    pub conditions: usize,
    /// Columns taken by each condition's parameter block (3 or 1).
    pub block: usize,
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

/// Build the difference contrast of the given kind for K conditions.
///
/// Rows compare condition 1 against condition k (+1 / -1 pattern), so the
/// rank equals the row count.
pub fn build_contrast(kind: ContrastKind, conditions: usize) -> Result<ContrastSpec> {
    if conditions < 2 {
        return Err(Error::InvalidConditionCount(conditions));
    }
    let k = conditions;
    let (rows, block) = match kind {
        ContrastKind::Rhythm => (2 * (k - 1), 3),
        ContrastKind::Mesor => (k - 1, 3),
        ContrastKind::Scalar => (k - 1, 1),
    };
    let mut m = DMatrix::zeros(rows, block * k);
    match kind {
        ContrastKind::Rhythm => {
            for j in 0..k - 1 {
                m[(j, 1)] = 1.0;
                m[(j, 3 * (j + 1) + 1)] = -1.0;
                m[(k - 1 + j, 2)] = 1.0;
                m[(k - 1 + j, 3 * (j + 1) + 2)] = -1.0;
            }
        }
        ContrastKind::Mesor => {
            for j in 0..k - 1 {
                m[(j, 0)] = 1.0;
                m[(j, 3 * (j + 1))] = -1.0;
            }
        }
        ContrastKind::Scalar => {
            for j in 0..k - 1 {
                m[(j, 0)] = 1.0;
                m[(j, j + 1)] = -1.0;
            }
        }
    }
    Ok(ContrastSpec { kind, conditions: k, block, matrix: m, rank: rows })
}

/// Per-condition unscaled covariance factor entering the contrasted
/// covariance: the full 3x3 (X^T X)^{-1} for coefficient contrasts, or the
/// scalar D^T (X^T X)^{-1} D for transform contrasts.
#[derive(Debug, Clone)]
pub enum CovBlock {
    Matrix(Matrix3<f64>),
    Scalar(f64),
}

/// Everything the moment computation needs about the fitted conditions.
#[derive(Debug, Clone)]
pub struct QuadFormContext {
    pub blocks: Vec<CovBlock>,
    /// Plug-in variances (estimated, or true values in oracle mode).
    pub sigma2: Vec<f64>,
    /// Residual degrees of freedom per condition.
    pub resid_df: Vec<f64>,
}

impl QuadFormContext {
    pub fn conditions(&self) -> usize {
        self.blocks.len()
    }
}

/// The assembled pieces of one quadratic form.
#[derive(Debug, Clone)]
pub struct QuadFormParts {
    /// C_k = L Diag(0, .., M_k, .., 0) L^T, one per condition.
    pub cks: Vec<DMatrix<f64>>,
    /// Omega = sum_k sigma2_k C_k.
    pub omega: DMatrix<f64>,
    pub omega_inv: DMatrix<f64>,
    /// B_k = C_k Omega^{-1}.
    pub bks: Vec<DMatrix<f64>>,
    /// Condition number of Omega.
    pub cond: f64,
}

fn condition_quadratic(contrast: &ContrastSpec, block: &CovBlock, k: usize) -> DMatrix<f64> {
    let rows = contrast.rank;
    let lk = contrast.matrix.columns(contrast.block * k, contrast.block);
    match block {
        CovBlock::Matrix(m) => {
            let mut md = DMatrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    md[(i, j)] = m[(i, j)];
                }
            }
            &lk * md * lk.transpose()
        }
        CovBlock::Scalar(d) => {
            let mut c = DMatrix::zeros(rows, rows);
            for i in 0..rows {
                for j in 0..rows {
                    c[(i, j)] = d * lk[(i, 0)] * lk[(j, 0)];
                }
            }
            c
        }
    }
}

/// Build C_k, Omega, its inverse, and the sensitivity matrices B_k.
///
/// Fails with `SingularOmega` when Omega's condition number exceeds
/// `OMEGA_COND_MAX` (or an eigenvalue is nonpositive).
pub fn decompose(contrast: &ContrastSpec, ctx: &QuadFormContext) -> Result<QuadFormParts> {
    let k = contrast.conditions;
    if ctx.blocks.len() != k || ctx.sigma2.len() != k || ctx.resid_df.len() != k {
        return Err(Error::DimensionMismatch { expected: k, actual: ctx.blocks.len() });
    }
    for (b, kind_ok) in ctx.blocks.iter().map(|b| {
        (
            b,
            match (contrast.kind, b) {
                (ContrastKind::Scalar, CovBlock::Scalar(_)) => true,
                (ContrastKind::Rhythm | ContrastKind::Mesor, CovBlock::Matrix(_)) => true,
                _ => false,
            },
        )
    }) {
        if !kind_ok {
            return Err(Error::InvalidInput(format!(
                "covariance block {b:?} does not match contrast kind {:?}",
                contrast.kind
            )));
        }
    }

    let rho = contrast.rank;
    let cks: Vec<DMatrix<f64>> =
        (0..k).map(|i| condition_quadratic(contrast, &ctx.blocks[i], i)).collect();
    let mut omega = DMatrix::zeros(rho, rho);
    for (c, &s2) in cks.iter().zip(&ctx.sigma2) {
        omega += c * s2;
    }
    // symmetric eigendecomposition gives both the conditioning check and a
    // stable inverse
    let eig = omega.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min_ev > 0.0) || !max_ev.is_finite() {
        return Err(Error::SingularOmega(f64::INFINITY));
    }
    let cond = max_ev / min_ev;
    if cond > OMEGA_COND_MAX {
        return Err(Error::SingularOmega(cond));
    }
    let mut inv_diag = DMatrix::zeros(rho, rho);
    for i in 0..rho {
        inv_diag[(i, i)] = 1.0 / eig.eigenvalues[i];
    }
    let omega_inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let bks: Vec<DMatrix<f64>> = cks.iter().map(|c| c * &omega_inv).collect();
    Ok(QuadFormParts { cks, omega, omega_inv, bks, cond })
}

/// The per-condition sensitivity matrices B_k (or G_k for transform
/// contrasts).
pub fn build_sensitivity_matrices(
    contrast: &ContrastSpec,
    ctx: &QuadFormContext,
) -> Result<Vec<DMatrix<f64>>> {
    Ok(decompose(contrast, ctx)?.bks)
}

/// First moment and variance of `rho T` under the null, expanded to second
/// order around the plug-in variances.
pub fn compute_mu1_mu2(rho: usize, bks: &[DMatrix<f64>], moments: &[SigmaMoments]) -> (f64, f64) {
    assert_eq!(bks.len(), moments.len(), "one moment set per condition");
    let rho_f = rho as f64;

    let mut mu1 = rho_f;
    let mut mu2 = 2.0 * rho_f;
    for (b, m) in bks.iter().zip(moments) {
        let b2 = b * b;
        let tr_b = b.trace();
        let tr_b2 = b2.trace();
        let tr_b3 = (&b2 * b).trace();
        let tr_b4 = (&b2 * &b2).trace();
        mu1 += m.var2 * tr_b2;
        mu2 += m.var2 * (tr_b * tr_b + 6.0 * tr_b2);
        mu2 -= m.cm3 * (2.0 * tr_b * tr_b2 + 4.0 * tr_b3);
        mu2 += m.cm4 * (tr_b2 * tr_b2 + 2.0 * tr_b4);
        mu2 -= m.var2 * m.var2 * tr_b2 * tr_b2;
    }
    for k in 0..bks.len() {
        for s in (k + 1)..bks.len() {
            let bk = &bks[k];
            let bs = &bks[s];
            let sym = bk * bs + bs * bk;
            let tr_sym = sym.trace();
            let tr_sym2 = (&sym * &sym).trace();
            let tr_kkss = (bk * bk * bs * bs).trace();
            mu2 += moments[k].var2
                * moments[s].var2
                * (tr_sym * tr_sym + 4.0 * tr_kkss + 2.0 * tr_sym2);
        }
    }
    (mu1, mu2)
}

/// How the reference distribution's (df, c) pair was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvedBy {
    ClosedForm,
    Optimizer,
    /// Matched variance hits the chi-square boundary; the reference is
    /// chi^2_rho / rho with c = rho / mu1.
    ChisqLimit,
}

/// A matched F (or limiting chi-square) reference distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FApprox {
    /// Numerator degrees of freedom (contrast rank).
    pub rho: usize,
    /// Denominator degrees of freedom; infinite in the chi-square limit.
    pub df: f64,
    /// Scale constant c applied to the statistic.
    pub scale: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub solved_by: SolvedBy,
}

/// Exact first moment of F(rho, df).
fn f_mean(df: f64) -> f64 {
    df / (df - 2.0)
}

/// Exact variance of F(rho, df).
fn f_var(rho: f64, df: f64) -> f64 {
    2.0 * df * df * (df + rho - 2.0) / (rho * (df - 2.0) * (df - 2.0) * (df - 4.0))
}

/// Squared residual of the two moment-matching equations at (c, df).
fn match_residual(rho: f64, mu1: f64, mu2: f64, c: f64, df: f64) -> f64 {
    let e1 = c * mu1 / rho - f_mean(df);
    let e2 = c * c * mu2 / (rho * rho) - f_var(rho, df);
    e1 * e1 + e2 * e2
}

/// Deterministic derivative-free fallback: coarse log-grid over
/// c in [1e-3, 1e3] and df in (4, 1e4], then coordinate-wise parabolic
/// refinement.
fn optimize_df_c(rho: f64, mu1: f64, mu2: f64) -> (f64, f64, f64) {
    const LC_LO: f64 = -6.907755278982137; // ln 1e-3
    const LC_HI: f64 = 6.907755278982137; // ln 1e3
    const LU_LO: f64 = -4.605170185988091; // ln 0.01   (df = 4 + e^u)
    const LU_HI: f64 = 9.210240366975849; // ln 9996.0
    const GRID: usize = 61;

    let eval = |lc: f64, lu: f64| match_residual(rho, mu1, mu2, lc.exp(), 4.0 + lu.exp());

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..GRID {
        let lc = LC_LO + (LC_HI - LC_LO) * i as f64 / (GRID - 1) as f64;
        for j in 0..GRID {
            let lu = LU_LO + (LU_HI - LU_LO) * j as f64 / (GRID - 1) as f64;
            let r = eval(lc, lu);
            if r < best.0 {
                best = (r, lc, lu);
            }
        }
    }
    let (mut res, mut lc, mut lu) = best;
    let mut h = (LC_HI - LC_LO) / (GRID - 1) as f64;
    for _ in 0..300 {
        if res < 1e-12 || h < 1e-13 {
            break;
        }
        for coord in 0..2 {
            let (x0, other) = if coord == 0 { (lc, lu) } else { (lu, lc) };
            let f = |x: f64| if coord == 0 { eval(x, other) } else { eval(other, x) };
            let (fm, f0, fp) = (f(x0 - h), f(x0), f(x0 + h));
            // parabola vertex through the three samples; fall back to the
            // best sampled point when curvature is unhelpful
            let denom = fm - 2.0 * f0 + fp;
            let mut x_new = if denom > 0.0 { x0 + 0.5 * h * (fm - fp) / denom } else { x0 };
            x_new = x_new.clamp(x0 - h, x0 + h);
            let candidates = [(fm, x0 - h), (f0, x0), (fp, x0 + h), (f(x_new), x_new)];
            let (fbest, xbest) =
                candidates.iter().cloned().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
            let clamp = |x: f64| {
                if coord == 0 { x.clamp(LC_LO, LC_HI) } else { x.clamp(LU_LO, LU_HI) }
            };
            let xbest = clamp(xbest);
            if coord == 0 {
                lc = xbest;
            } else {
                lu = xbest;
            }
            res = fbest.min(res);
        }
        h *= 0.6;
    }
    let c = lc.exp();
    let df = 4.0 + lu.exp();
    (res.min(match_residual(rho, mu1, mu2, c, df)), c, df)
}

/// Solve the moment-matching equations for (df, c).
///
/// The closed form is used whenever it returns df > 2 (the F CDF is valid
/// there even though its variance needs df > 4). A denominator within
/// `CHISQ_LIMIT_EPS` of zero switches to the chi-square limit. Otherwise a
/// deterministic optimizer searches c > 0, df > 4 and `MomentMismatch` is
/// returned if the best residual stays above `OPTIMIZER_RESIDUAL_MAX`.
pub fn solve_df_c(rho: usize, mu1: f64, mu2: f64) -> Result<FApprox> {
    if rho == 0 || !(mu1 > 0.0) || !(mu2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "moment matching needs rho >= 1, mu1 > 0, mu2 > 0 (got rho={rho}, mu1={mu1}, mu2={mu2})"
        )));
    }
    let rho_f = rho as f64;
    let m = mu2 / (mu1 * mu1);
    let denom = rho_f * m / 2.0 - 1.0;
    if denom.abs() < CHISQ_LIMIT_EPS {
        return Ok(FApprox {
            rho,
            df: f64::INFINITY,
            scale: rho_f / mu1,
            mu1,
            mu2,
            solved_by: SolvedBy::ChisqLimit,
        });
    }
    let df = (rho_f - 2.0 + 2.0 * rho_f * m) / denom;
    if df > 2.0 {
        let scale = rho_f * df / (mu1 * (df - 2.0));
        return Ok(FApprox { rho, df, scale, mu1, mu2, solved_by: SolvedBy::ClosedForm });
    }
    let (res, c, df) = optimize_df_c(rho_f, mu1, mu2);
    if res >= OPTIMIZER_RESIDUAL_MAX {
        return Err(Error::MomentMismatch(res));
    }
    Ok(FApprox { rho, df, scale: c, mu1, mu2, solved_by: SolvedBy::Optimizer })
}

/// Upper-tail p-value of the matched reference at an observed statistic.
///
/// F references return P(F(rho, df) > c*T); the chi-square limit returns
/// P(chi^2_rho > rho*c*T).
pub fn f_pvalue(stat: f64, approx: &FApprox) -> f64 {
    let rho = approx.rho as f64;
    if approx.solved_by == SolvedBy::ChisqLimit {
        special::chi2_sf(rho * approx.scale * stat, rho)
    } else {
        special::f_sf(approx.scale * stat, rho, approx.df)
    }
}
