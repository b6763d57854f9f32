//! The five hypothesis tests: per-condition rhythmicity (TR) and the
//! cross-condition differential tests for rhythmicity (TDR), mesor (TDM),
//! amplitude (TDA), and phase (TDP).
//!
//! TDR/TDM contrast the regression coefficients directly; TDA/TDP contrast
//! smooth transforms of (alpha, beta) with delta-method variances; all four
//! share the moment-matched F reference. TR uses a Monte Carlo reference
//! for a weighted sum of chi-square variables.

use nalgebra::{DVector, Vector3};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::harmonic::ConditionFit;
use crate::moments::{sigma_hat_moments, SigmaMoments};
use crate::satterthwaite::{
    build_contrast, decompose, compute_mu1_mu2, f_pvalue, solve_df_c, ContrastKind, ContrastSpec,
    CovBlock, FApprox, QuadFormContext, SolvedBy,
};

/// Minimum per-condition sample size for the moment-matched contrast tests
/// (the fourth-moment terms need n - 3 >= 5).
pub const MIN_N_CONTRAST: usize = 8;

/// Minimum per-condition sample size for fitting and TR.
pub const MIN_N_RHYTHM: usize = 4;

/// Default rhythmicity-gate threshold for TDA/TDP.
pub const DEFAULT_GATE_ALPHA: f64 = 0.05;

/// Default Monte Carlo draw count for TR.
pub const DEFAULT_TR_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    /// Rhythmicity within one condition.
    Tr,
    /// Differential rhythmicity across conditions.
    Tdr,
    /// Differential mesor.
    Tdm,
    /// Differential amplitude (cube-root transform).
    Tda,
    /// Differential phase.
    Tdp,
}

impl TestKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestKind::Tr => "TR",
            TestKind::Tdr => "TDR",
            TestKind::Tdm => "TDM",
            TestKind::Tda => "TDA",
            TestKind::Tdp => "TDP",
        }
    }

    pub fn parse(s: &str) -> Option<TestKind> {
        match s.to_ascii_uppercase().as_str() {
            "TR" => Some(TestKind::Tr),
            "TDR" => Some(TestKind::Tdr),
            "TDM" => Some(TestKind::Tdm),
            "TDA" => Some(TestKind::Tda),
            "TDP" => Some(TestKind::Tdp),
            _ => None,
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnostic flags carried by a test result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TestFlags {
    /// Reference fell back to the chi-square limit.
    pub chisq_limit: bool,
    /// (df, c) came from the optimizer rather than the closed form.
    pub optimizer_fallback: bool,
    /// Test not conducted because the rhythmicity gate failed.
    pub gated_out: bool,
    /// Moment matching failed; p-value is NaN.
    pub moment_mismatch: bool,
}

impl TestFlags {
    pub fn any(&self) -> bool {
        self.chisq_limit || self.optimizer_fallback || self.gated_out || self.moment_mismatch
    }
}

/// Monte Carlo reference details for TR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloInfo {
    pub draws: usize,
    pub seed: u64,
    /// Eigenvalues of the estimated (alpha, beta) covariance block,
    /// tau1 >= tau2 >= 0.
    pub tau: (f64, f64),
}

/// The reference distribution a p-value was computed against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    FMatch(FApprox),
    MonteCarlo(MonteCarloInfo),
}

/// Per-condition point estimates echoed alongside each test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimates {
    pub mesor: f64,
    pub amplitude: f64,
    /// Radians in [-pi, pi].
    pub phase: f64,
    pub sigma2: f64,
}

impl From<&ConditionFit> for ConditionEstimates {
    fn from(fit: &ConditionFit) -> Self {
        ConditionEstimates {
            mesor: fit.mesor(),
            amplitude: fit.amplitude,
            phase: fit.phase,
            sigma2: fit.sigma2,
        }
    }
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    /// Observed statistic; NaN when the test was gated out.
    pub statistic: f64,
    /// Upper-tail p-value; NaN when gated out or moment matching failed.
    pub p_value: f64,
    pub reference: Option<Reference>,
    pub per_condition: Vec<ConditionEstimates>,
    pub flags: TestFlags,
}

fn estimates(fits: &[ConditionFit]) -> Vec<ConditionEstimates> {
    fits.iter().map(ConditionEstimates::from).collect()
}

/// Plug-in moments, treating an exactly-zero variance estimate as the
/// known-variance limit instead of an error.
fn plugin_moments(sigma2: f64, r: f64) -> Result<SigmaMoments> {
    if sigma2 == 0.0 {
        return Ok(SigmaMoments::ZERO);
    }
    sigma_hat_moments(sigma2, r)
}

fn require_n(fits: &[ConditionFit], min: usize) -> Result<()> {
    for f in fits {
        if f.n < min {
            return Err(Error::InsufficientReplication { n: f.n, min });
        }
    }
    Ok(())
}

/// Trivial all-zero-contrast result (arises from exact fits with zero
/// residual variance, where the reference degenerates but the statistic is
/// identically zero).
fn zero_statistic_result(kind: TestKind, rho: usize, fits: &[ConditionFit]) -> TestResult {
    TestResult {
        kind,
        statistic: 0.0,
        p_value: 1.0,
        reference: Some(Reference::FMatch(FApprox {
            rho,
            df: f64::INFINITY,
            scale: 1.0,
            mu1: rho as f64,
            mu2: 2.0 * rho as f64,
            solved_by: SolvedBy::ChisqLimit,
        })),
        per_condition: estimates(fits),
        flags: TestFlags { chisq_limit: true, ..TestFlags::default() },
    }
}

/// Shared engine for the four contrast tests.
fn contrast_test(
    kind: TestKind,
    contrast: &ContrastSpec,
    ctx: &QuadFormContext,
    values: &DVector<f64>,
    wrap_phase: bool,
    fits: &[ConditionFit],
) -> Result<TestResult> {
    let rho = contrast.rank;
    let mut z = &contrast.matrix * values;
    if wrap_phase {
        for v in z.iter_mut() {
            *v = wrap_to_pi(*v);
        }
    }

    let parts = match decompose(contrast, ctx) {
        Ok(parts) => parts,
        Err(Error::SingularOmega(cond)) => {
            let scale = values.amax().max(1.0);
            if z.amax() <= 1e-12 * scale {
                return Ok(zero_statistic_result(kind, rho, fits));
            }
            return Err(Error::SingularOmega(cond));
        }
        Err(e) => return Err(e),
    };

    let statistic = (z.transpose() * &parts.omega_inv * &z)[(0, 0)] / rho as f64;
    let moments: Vec<SigmaMoments> = ctx
        .sigma2
        .iter()
        .zip(&ctx.resid_df)
        .map(|(&s2, &r)| plugin_moments(s2, r))
        .collect::<Result<_>>()?;
    let (mu1, mu2) = compute_mu1_mu2(rho, &parts.bks, &moments);

    let mut flags = TestFlags::default();
    match solve_df_c(rho, mu1, mu2) {
        Ok(approx) => {
            flags.chisq_limit = approx.solved_by == SolvedBy::ChisqLimit;
            flags.optimizer_fallback = approx.solved_by == SolvedBy::Optimizer;
            let p_value = f_pvalue(statistic, &approx);
            Ok(TestResult {
                kind,
                statistic,
                p_value,
                reference: Some(Reference::FMatch(approx)),
                per_condition: estimates(fits),
                flags,
            })
        }
        Err(Error::MomentMismatch(_)) => {
            flags.moment_mismatch = true;
            Ok(TestResult {
                kind,
                statistic,
                p_value: f64::NAN,
                reference: None,
                per_condition: estimates(fits),
                flags,
            })
        }
        Err(e) => Err(e),
    }
}

fn coefficient_context(fits: &[ConditionFit]) -> QuadFormContext {
    QuadFormContext {
        blocks: fits.iter().map(|f| CovBlock::Matrix(f.xtx_inv)).collect(),
        sigma2: fits.iter().map(|f| f.sigma2).collect(),
        resid_df: fits.iter().map(|f| f.df_resid as f64).collect(),
    }
}

fn stacked_coefficients(fits: &[ConditionFit]) -> DVector<f64> {
    let mut v = DVector::zeros(3 * fits.len());
    for (k, f) in fits.iter().enumerate() {
        v[3 * k] = f.gamma[0];
        v[3 * k + 1] = f.gamma[1];
        v[3 * k + 2] = f.gamma[2];
    }
    v
}

/// Differential rhythmicity: equality of (alpha, beta) across conditions.
pub fn test_differential_rhythm(fits: &[ConditionFit]) -> Result<TestResult> {
    if fits.len() < 2 {
        return Err(Error::InvalidConditionCount(fits.len()));
    }
    require_n(fits, MIN_N_CONTRAST)?;
    let contrast = build_contrast(ContrastKind::Rhythm, fits.len())?;
    let ctx = coefficient_context(fits);
    contrast_test(TestKind::Tdr, &contrast, &ctx, &stacked_coefficients(fits), false, fits)
}

/// Differential mesor: equality of baselines across conditions.
pub fn test_differential_mesor(fits: &[ConditionFit]) -> Result<TestResult> {
    if fits.len() < 2 {
        return Err(Error::InvalidConditionCount(fits.len()));
    }
    require_n(fits, MIN_N_CONTRAST)?;
    let contrast = build_contrast(ContrastKind::Mesor, fits.len())?;
    let ctx = coefficient_context(fits);
    contrast_test(TestKind::Tdm, &contrast, &ctx, &stacked_coefficients(fits), false, fits)
}

/// Which nonlinear transform of (alpha, beta) a gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Cube root of alpha^2 + beta^2.
    Amplitude,
    /// atan2(beta, alpha).
    Phase,
}

/// Delta-method gradient of the transform with respect to
/// (mesor, alpha, beta); the mesor entry is identically zero.
pub fn delta_gradient(kind: TransformKind, alpha: f64, beta: f64) -> Result<Vector3<f64>> {
    let r2 = alpha * alpha + beta * beta;
    if !(r2 > 0.0) {
        return Err(Error::ZeroAmplitude);
    }
    Ok(match kind {
        TransformKind::Amplitude => {
            let scale = 2.0 / 3.0 * r2.powf(-2.0 / 3.0);
            Vector3::new(0.0, scale * alpha, scale * beta)
        }
        TransformKind::Phase => Vector3::new(0.0, -beta / r2, alpha / r2),
    })
}

/// Wrap an angle difference into (-pi, pi].
pub fn wrap_to_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = x.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

fn gated_result(kind: TestKind, fits: &[ConditionFit]) -> TestResult {
    TestResult {
        kind,
        statistic: f64::NAN,
        p_value: f64::NAN,
        reference: None,
        per_condition: estimates(fits),
        flags: TestFlags { gated_out: true, ..TestFlags::default() },
    }
}

fn transform_test(
    kind: TestKind,
    transform: TransformKind,
    fits: &[ConditionFit],
    tr_pvalues: &[f64],
    gate_alpha: f64,
) -> Result<TestResult> {
    if fits.len() < 2 {
        return Err(Error::InvalidConditionCount(fits.len()));
    }
    if tr_pvalues.len() != fits.len() {
        return Err(Error::DimensionMismatch { expected: fits.len(), actual: tr_pvalues.len() });
    }
    require_n(fits, MIN_N_CONTRAST)?;
    // NaN rhythmicity p-values fail the gate
    if !tr_pvalues.iter().all(|&p| p < gate_alpha) {
        return Ok(gated_result(kind, fits));
    }

    let mut thetas = DVector::zeros(fits.len());
    let mut blocks = Vec::with_capacity(fits.len());
    for (k, f) in fits.iter().enumerate() {
        let (alpha, beta) = (f.alpha(), f.beta());
        let grad = delta_gradient(transform, alpha, beta)?;
        thetas[k] = match transform {
            TransformKind::Amplitude => (alpha * alpha + beta * beta).cbrt(),
            TransformKind::Phase => beta.atan2(alpha),
        };
        blocks.push(CovBlock::Scalar((grad.transpose() * f.xtx_inv * grad)[(0, 0)]));
    }
    let ctx = QuadFormContext {
        blocks,
        sigma2: fits.iter().map(|f| f.sigma2).collect(),
        resid_df: fits.iter().map(|f| f.df_resid as f64).collect(),
    };
    let contrast = build_contrast(ContrastKind::Scalar, fits.len())?;
    contrast_test(kind, &contrast, &ctx, &thetas, transform == TransformKind::Phase, fits)
}

/// Differential amplitude on the cube-root scale, gated on rhythmicity in
/// every condition.
pub fn test_differential_amplitude(
    fits: &[ConditionFit],
    tr_pvalues: &[f64],
    gate_alpha: f64,
) -> Result<TestResult> {
    transform_test(TestKind::Tda, TransformKind::Amplitude, fits, tr_pvalues, gate_alpha)
}

/// Differential phase with contrast differences wrapped into (-pi, pi],
/// gated on rhythmicity in every condition.
pub fn test_differential_phase(
    fits: &[ConditionFit],
    tr_pvalues: &[f64],
    gate_alpha: f64,
) -> Result<TestResult> {
    transform_test(TestKind::Tdp, TransformKind::Phase, fits, tr_pvalues, gate_alpha)
}

/// Closed-form eigenvalues of a symmetric 2x2 matrix, descending.
fn symmetric_eigen_2x2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).hypot(b);
    (mean + disc, mean - disc)
}

/// Rhythmicity test for one condition.
///
/// The statistic is alpha^2 + beta^2; its null is a weighted sum of two
/// chi-square(1) variables with weights equal to the eigenvalues of the
/// (alpha, beta) covariance block, and the weights' estimation noise is
/// absorbed by an inverse chi-square factor. The p-value is Monte Carlo
/// with the (1 + exceedances) / (N + 1) correction, reproducible given
/// (seed, draws).
pub fn test_rhythmicity(fit: &ConditionFit, draws: usize, seed: u64) -> Result<TestResult> {
    if fit.n < MIN_N_RHYTHM {
        return Err(Error::InsufficientReplication { n: fit.n, min: MIN_N_RHYTHM });
    }
    if draws < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 draws, got {draws}")));
    }
    let statistic = fit.alpha() * fit.alpha() + fit.beta() * fit.beta();

    let (tau1, mut tau2) =
        symmetric_eigen_2x2(fit.cov[(1, 1)], fit.cov[(1, 2)], fit.cov[(2, 2)]);
    if tau2 < -1e-12 {
        return Err(Error::NonpositiveTau(tau2));
    }
    tau2 = tau2.max(0.0);
    let tau1 = tau1.max(0.0);

    let r = fit.df_resid as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resid_chi2 = Gamma::new(0.5 * r, 2.0).expect("valid shape");
    let mut exceed = 0usize;
    for _ in 0..draws {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let u_star: f64 = resid_chi2.sample(&mut rng);
        let v = r * (z1 * z1 * tau1 + z2 * z2 * tau2) / u_star;
        if v > statistic {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (draws + 1) as f64;

    Ok(TestResult {
        kind: TestKind::Tr,
        statistic,
        p_value,
        reference: Some(Reference::MonteCarlo(MonteCarloInfo { draws, seed, tau: (tau1, tau2) })),
        per_condition: vec![ConditionEstimates::from(fit)],
        flags: TestFlags::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{fit_condition, ConditionDesign};

    const GRID: [f64; 6] = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0];

    fn fit_signal(
        design: &ConditionDesign,
        mesor: f64,
        amp: f64,
        phase_h: f64,
        noise: &[f64],
    ) -> ConditionFit {
        let mut y = Vec::with_capacity(design.n());
        let mut i = 0;
        for (&t, &j) in design.times().iter().zip(design.replicates()) {
            for _ in 0..j {
                let w = 2.0 * std::f64::consts::PI * (t - phase_h) / 24.0;
                y.push(mesor + amp * w.cos() + noise.get(i).copied().unwrap_or(0.0));
                i += 1;
            }
        }
        fit_condition(&y, design).unwrap()
    }

    fn lcg_noise(n: usize, scale: f64, mut state: u64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                state =
                    state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                scale * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            })
            .collect()
    }

    #[test]
    fn identical_rhythms_give_zero_statistic() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let noise = lcg_noise(18, 0.4, 7);
        let f1 = fit_signal(&d, 1.0, 1.0, 5.0, &noise);
        let f2 = fit_signal(&d, 2.0, 1.0, 5.0, &noise); // same rhythm, shifted mesor
        let res = test_differential_rhythm(&[f1.clone(), f2.clone()]).unwrap();
        assert!(res.statistic < 1e-18);
        assert!((res.p_value - 1.0).abs() < 1e-12);
        // mesor differs, so TDM sees signal
        let res_m = test_differential_mesor(&[f1, f2]).unwrap();
        assert!(res_m.statistic > 1.0);
        assert!(res_m.p_value < 0.05);
    }

    #[test]
    fn noiseless_equal_fits_yield_unit_pvalue() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let f1 = fit_signal(&d, 5.0, 1.0, 5.0, &[]);
        let f2 = fit_signal(&d, 5.0, 1.0, 5.0, &[]);
        for res in [
            test_differential_rhythm(&[f1.clone(), f2.clone()]).unwrap(),
            test_differential_mesor(&[f1, f2]).unwrap(),
        ] {
            assert_eq!(res.statistic, 0.0);
            assert_eq!(res.p_value, 1.0);
        }
    }

    #[test]
    fn exactly_zero_variance_with_equal_fits_degrades_gracefully() {
        // hand-built fits with sigma2 exactly 0: Omega is singular but the
        // contrast is identically zero, so the result is the trivial one
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let make = || ConditionFit {
            gamma: nalgebra::Vector3::new(2.0, 1.0, 0.5),
            sigma2: 0.0,
            cov: nalgebra::Matrix3::zeros(),
            xtx_inv: *d.xtx_inv(),
            n: 18,
            df_resid: 15,
            amplitude: 1.0f64.hypot(0.5),
            phase: 0.5f64.atan2(1.0),
        };
        let res = test_differential_rhythm(&[make(), make()]).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
        assert!(res.flags.chisq_limit);
        // unequal fits with zero variance cannot be referenced at all
        let mut other = make();
        other.gamma[1] = 2.0;
        match test_differential_rhythm(&[make(), other]) {
            Err(Error::SingularOmega(_)) => {}
            other => panic!("expected SingularOmega, got {other:?}"),
        }
    }

    #[test]
    fn contrast_tests_enforce_sample_minimum() {
        let d = ConditionDesign::build(&GRID, &[1; 6]).unwrap(); // n = 6
        let noise = lcg_noise(6, 0.2, 3);
        let f = fit_signal(&d, 1.0, 1.0, 5.0, &noise);
        match test_differential_rhythm(&[f.clone(), f.clone()]) {
            Err(Error::InsufficientReplication { n: 6, min: 8 }) => {}
            other => panic!("expected InsufficientReplication, got {other:?}"),
        }
        // TR still runs at n = 6
        assert!(test_rhythmicity(&f, 1000, 1).is_ok());
    }

    #[test]
    fn delta_gradients_reference_points() {
        let g = delta_gradient(TransformKind::Amplitude, 1.0, 0.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        let g = delta_gradient(TransformKind::Phase, 0.0, 2.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] + 0.5).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        let g = delta_gradient(TransformKind::Phase, 1.0, 0.0).unwrap();
        assert_eq!((g[0], g[1], g[2]), (0.0, 0.0, 1.0));
        assert!(matches!(
            delta_gradient(TransformKind::Amplitude, 0.0, 0.0),
            Err(Error::ZeroAmplitude)
        ));
    }

    #[test]
    fn delta_gradients_match_finite_differences() {
        let h = 1e-6;
        let amp = |a: f64, b: f64| (a * a + b * b).cbrt();
        let ph = |a: f64, b: f64| b.atan2(a);
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let mut checked = 0;
        while checked < 100 {
            let (a, b) = (next(), next());
            if (a * a + b * b).sqrt() <= 0.1 {
                continue;
            }
            checked += 1;
            for (kind, f) in [
                (TransformKind::Amplitude, &amp as &dyn Fn(f64, f64) -> f64),
                (TransformKind::Phase, &ph),
            ] {
                let g = delta_gradient(kind, a, b).unwrap();
                let fd_a = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
                let fd_b = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
                let scale = g[1].abs().max(g[2].abs()).max(1e-3);
                assert!((g[1] - fd_a).abs() / scale < 1e-6, "dA at ({a},{b})");
                assert!((g[2] - fd_b).abs() / scale < 1e-6, "dB at ({a},{b})");
            }
        }
    }

    #[test]
    fn cube_root_transform_value() {
        let theta = (2.0f64 + 2.0).cbrt(); // alpha = beta = sqrt(2)
        assert!((theta - 1.5874010519681994).abs() < 1e-12);
    }

    #[test]
    fn wrap_to_pi_branch_cut() {
        use std::f64::consts::PI;
        assert!((wrap_to_pi(PI) - PI).abs() < 1e-15);
        assert!((wrap_to_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_to_pi(1.5 * PI) + 0.5 * PI).abs() < 1e-14);
        assert!((wrap_to_pi(0.3) - 0.3).abs() < 1e-15);
        // near-antipodal differences stay small after wrapping
        let d = wrap_to_pi((PI - 0.01) - (-PI + 0.01));
        assert!(d.abs() < 0.05, "wrapped difference {d}");
    }

    #[test]
    fn gating_returns_flagged_result() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let noise = lcg_noise(18, 0.3, 11);
        let f1 = fit_signal(&d, 1.0, 2.0, 5.0, &noise);
        let f2 = fit_signal(&d, 1.0, 2.0, 5.0, &lcg_noise(18, 0.3, 13));
        let res =
            test_differential_amplitude(&[f1.clone(), f2.clone()], &[0.01, 0.2], 0.05).unwrap();
        assert!(res.flags.gated_out);
        assert!(res.p_value.is_nan() && res.statistic.is_nan());
        // NaN gate p-value also gates out
        let res = test_differential_phase(&[f1.clone(), f2.clone()], &[0.01, f64::NAN], 0.05).unwrap();
        assert!(res.flags.gated_out);
        // passing gate runs the test
        let res = test_differential_amplitude(&[f1, f2], &[0.01, 0.02], 0.05).unwrap();
        assert!(!res.flags.gated_out);
        assert!(res.p_value > 0.0 && res.p_value <= 1.0);
    }

    #[test]
    fn equal_transforms_give_zero_statistic() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let noise = lcg_noise(18, 0.2, 17);
        let f1 = fit_signal(&d, 1.0, 2.0, 5.0, &noise);
        let f2 = fit_signal(&d, 3.0, 2.0, 5.0, &noise); // same (alpha, beta)
        let res = test_differential_amplitude(&[f1.clone(), f2.clone()], &[1e-4, 1e-4], 0.05).unwrap();
        assert!(res.statistic < 1e-18);
        assert!((res.p_value - 1.0).abs() < 1e-12);
        let res = test_differential_phase(&[f1, f2], &[1e-4, 1e-4], 0.05).unwrap();
        assert!(res.statistic < 1e-18);
        assert!((res.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rhythmicity_zero_statistic_has_unit_pvalue() {
        // alpha = beta = 0 exactly: every null draw exceeds the statistic
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let f0 = ConditionFit {
            gamma: nalgebra::Vector3::new(2.0, 0.0, 0.0),
            sigma2: 1.0,
            cov: *d.xtx_inv(),
            xtx_inv: *d.xtx_inv(),
            n: 18,
            df_resid: 15,
            amplitude: 0.0,
            phase: 0.0,
        };
        let res = test_rhythmicity(&f0, 2000, 99).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn rhythmicity_is_reproducible_and_seed_sensitive() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let f = fit_signal(&d, 1.0, 0.8, 3.0, &lcg_noise(18, 1.0, 29));
        let a = test_rhythmicity(&f, 5000, 1234).unwrap();
        let b = test_rhythmicity(&f, 5000, 1234).unwrap();
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
        let c = test_rhythmicity(&f, 5000, 1235).unwrap();
        assert!(a.p_value != c.p_value || a.statistic == c.statistic);
        match (&a.reference, &c.reference) {
            (Some(Reference::MonteCarlo(ia)), Some(Reference::MonteCarlo(ic))) => {
                assert_eq!(ia.tau, ic.tau);
                assert!(ia.tau.0 >= ia.tau.1 && ia.tau.1 >= 0.0);
            }
            _ => panic!("expected Monte Carlo references"),
        }
        assert!(test_rhythmicity(&f, 999, 1).is_err());
    }

    #[test]
    fn strong_rhythm_is_detected() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let f = fit_signal(&d, 1.0, 2.0, 5.0, &lcg_noise(18, 1.0, 31));
        let res = test_rhythmicity(&f, 10_000, 7).unwrap();
        assert!(res.p_value < 0.01, "p = {}", res.p_value);
    }

    #[test]
    fn permutation_invariance_of_contrast_tests() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let fits = [
            fit_signal(&d, 1.0, 1.0, 5.0, &lcg_noise(18, 0.7, 41)),
            fit_signal(&d, 1.3, 1.4, 2.0, &lcg_noise(18, 1.9, 43)),
            fit_signal(&d, 0.7, 0.5, 9.0, &lcg_noise(18, 0.4, 47)),
        ];
        let base_r = test_differential_rhythm(&fits).unwrap();
        let base_m = test_differential_mesor(&fits).unwrap();
        for perm in [[1usize, 0, 2], [2, 1, 0], [1, 2, 0]] {
            let shuffled: Vec<ConditionFit> = perm.iter().map(|&i| fits[i].clone()).collect();
            let r = test_differential_rhythm(&shuffled).unwrap();
            let m = test_differential_mesor(&shuffled).unwrap();
            assert!((r.statistic - base_r.statistic).abs() <= 1e-9 * base_r.statistic.max(1.0));
            assert!((r.p_value - base_r.p_value).abs() <= 1e-10);
            assert!((m.statistic - base_m.statistic).abs() <= 1e-9 * base_m.statistic.max(1.0));
            assert!((m.p_value - base_m.p_value).abs() <= 1e-10);
        }
    }

    #[test]
    fn scale_invariance_of_pvalues() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let noise1 = lcg_noise(18, 0.8, 53);
        let noise2 = lcg_noise(18, 1.6, 59);
        let f1 = fit_signal(&d, 1.0, 1.0, 5.0, &noise1);
        let f2 = fit_signal(&d, 1.1, 1.6, 3.0, &noise2);
        let base = test_differential_rhythm(&[f1, f2]).unwrap();
        let s = 3.7;
        let scale_fit = |noise: &[f64], mesor: f64, amp: f64, ph: f64| {
            let mut y = Vec::new();
            let mut i = 0;
            for (&t, &j) in d.times().iter().zip(d.replicates()) {
                for _ in 0..j {
                    let w = 2.0 * std::f64::consts::PI * (t - ph) / 24.0;
                    y.push(s * (mesor + amp * w.cos() + noise[i]));
                    i += 1;
                }
            }
            fit_condition(&y, &d).unwrap()
        };
        let g1 = scale_fit(&noise1, 1.0, 1.0, 5.0);
        let g2 = scale_fit(&noise2, 1.1, 1.6, 3.0);
        let scaled = test_differential_rhythm(&[g1, g2]).unwrap();
        assert!(
            (scaled.p_value - base.p_value).abs() < 1e-10,
            "p changed under rescaling: {} vs {}",
            scaled.p_value,
            base.p_value
        );
        if let (Some(Reference::FMatch(a)), Some(Reference::FMatch(b))) =
            (&base.reference, &scaled.reference)
        {
            assert!((a.mu1 - b.mu1).abs() < 1e-9);
            assert!((a.mu2 - b.mu2).abs() < 1e-9);
        } else {
            panic!("expected F references");
        }
    }

    #[test]
    fn tda_rotation_invariance_and_tdp_shift_equivariance() {
        let d = ConditionDesign::build(&GRID, &[3; 6]).unwrap();
        let f1 = fit_signal(&d, 1.0, 2.0, 4.0, &lcg_noise(18, 0.5, 61));
        let f2 = fit_signal(&d, 1.0, 2.5, 8.0, &lcg_noise(18, 0.5, 67));
        let gate = [1e-6, 1e-6];
        let base_a = test_differential_amplitude(&[f1.clone(), f2.clone()], &gate, 0.05).unwrap();
        let base_p = test_differential_phase(&[f1.clone(), f2.clone()], &gate, 0.05).unwrap();

        // rotate both conditions' (alpha, beta) by the same angle: amplitudes
        // unchanged, phases shift equally
        let rotate = |f: &ConditionFit, ang: f64| {
            let (a, b) = (f.alpha(), f.beta());
            let (ra, rb) = (a * ang.cos() - b * ang.sin(), a * ang.sin() + b * ang.cos());
            let mut g = f.clone();
            g.gamma[1] = ra;
            g.gamma[2] = rb;
            let (amp, ph) = crate::harmonic::amplitude_phase(ra, rb);
            g.amplitude = amp;
            g.phase = ph;
            g
        };
        for ang in [0.4, 2.0, -1.2] {
            let r1 = rotate(&f1, ang);
            let r2 = rotate(&f2, ang);
            let rot_a = test_differential_amplitude(&[r1.clone(), r2.clone()], &gate, 0.05).unwrap();
            let rot_p = test_differential_phase(&[r1, r2], &gate, 0.05).unwrap();
            assert!(
                (rot_a.statistic - base_a.statistic).abs() <= 1e-9 * base_a.statistic.max(1.0),
                "TDA changed under rotation {ang}"
            );
            assert!(
                (rot_p.statistic - base_p.statistic).abs() <= 1e-8 * base_p.statistic.max(1.0),
                "TDP changed under rotation {ang}: {} vs {}",
                rot_p.statistic,
                base_p.statistic
            );
        }
    }
}
