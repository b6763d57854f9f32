//! Synthetic-data generation and calibration experiments: type I error /
//! power sweeps per scenario, and a whole-transcriptome FDR benchmark.
//!
//! Expression is generated from
//! `y = mesor + A*cos(2*pi*(t - phase)/24) + noise` on a fixed time grid,
//! with Gaussian or scaled Student-t noise per condition. Scenario presets
//! cover the calibration designs used by the test suites; arbitrary
//! scenarios load from a TOML file.

use rayon::prelude::*;
use serde::Deserialize;

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Error, Result};
use crate::fdr::bh_adjust;
use crate::harmonic::{fit_condition, ConditionDesign, ConditionFit, PERIOD_HOURS};
use crate::hypothesis::{
    test_differential_amplitude, test_differential_mesor, test_differential_phase,
    test_differential_rhythm, test_rhythmicity, TestKind,
};
use crate::seeding::{derive_seed, label_hash, stream_rng};

/// Default sampling grid (hours).
pub const DEFAULT_TIME_GRID: [f64; 6] = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0];

fn default_time_grid() -> Vec<f64> {
    DEFAULT_TIME_GRID.to_vec()
}

fn default_mesor() -> f64 {
    1.0
}

/// Per-condition noise family.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    /// Zero-mean Gaussian with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `scale` times a Student-t variate with `df` degrees of freedom.
    StudentT { scale: f64, df: f64 },
}

impl Noise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
                }
            }
            Noise::StudentT { scale, df } => {
                scale * StudentT::new(df).expect("valid df").sample(rng)
            }
        }
    }
}

/// One condition's generating parameters.
#[derive(Debug, Clone, Deserialize)]
pub struct ConditionScenario {
    #[serde(default = "default_mesor")]
    pub mesor: f64,
    pub amplitude: f64,
    pub phase_hours: f64,
    /// Replicates per time point.
    pub replicates: usize,
    pub noise: Noise,
}

/// A named simulation scenario.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    #[serde(default = "default_time_grid")]
    pub time_grid: Vec<f64>,
    #[serde(rename = "condition")]
    pub conditions: Vec<ConditionScenario>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidScenario { label: self.label.clone(), reason };
        if self.conditions.is_empty() {
            return Err(fail("no conditions".into()));
        }
        if self.time_grid.is_empty() {
            return Err(fail("empty time grid".into()));
        }
        for &t in &self.time_grid {
            if !(0.0..PERIOD_HOURS).contains(&t) {
                return Err(fail(format!("time {t} outside [0, 24)")));
            }
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if c.amplitude < 0.0 {
                return Err(fail(format!("condition {i}: negative amplitude")));
            }
            if !(0.0..PERIOD_HOURS).contains(&c.phase_hours) {
                return Err(fail(format!("condition {i}: phase outside [0, 24)")));
            }
            if c.replicates == 0 {
                return Err(fail(format!("condition {i}: zero replicates")));
            }
            match c.noise {
                Noise::Gaussian { sigma } => {
                    if sigma < 0.0 {
                        return Err(fail(format!("condition {i}: negative sigma")));
                    }
                }
                Noise::StudentT { scale, df } => {
                    if scale < 0.0 || df < 3.0 {
                        return Err(fail(format!(
                            "condition {i}: t noise needs scale >= 0 and df >= 3"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Build the per-condition designs implied by the grid and replicates.
    pub fn designs(&self) -> Result<Vec<ConditionDesign>> {
        self.conditions
            .iter()
            .map(|c| ConditionDesign::build(&self.time_grid, &vec![c.replicates; self.time_grid.len()]))
            .collect()
    }
}

/// Generate one condition's expression vector in design row order.
pub fn generate_condition<R: Rng + ?Sized>(
    cond: &ConditionScenario,
    time_grid: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(time_grid.len() * cond.replicates);
    for &t in time_grid {
        let mean = cond.mesor
            + cond.amplitude
                * (2.0 * std::f64::consts::PI * (t - cond.phase_hours) / PERIOD_HOURS).cos();
        for _ in 0..cond.replicates {
            y.push(mean + cond.noise.sample(rng));
        }
    }
    y
}

/// Generate a gene's expression under every condition of a scenario.
pub fn generate_gene<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Vec<Vec<f64>> {
    spec.conditions.iter().map(|c| generate_condition(c, &spec.time_grid, rng)).collect()
}

// ---------------------------------------------------------------------------
// scenario presets
// ---------------------------------------------------------------------------

fn gaussian(sigma: f64) -> Noise {
    Noise::Gaussian { sigma }
}

fn student(scale: f64, df: f64) -> Noise {
    Noise::StudentT { scale, df }
}

fn cond(amplitude: f64, phase: f64, noise: Noise, replicates: usize) -> ConditionScenario {
    ConditionScenario { mesor: 1.0, amplitude, phase_hours: phase, replicates, noise }
}

fn mesor_cond(mesor: f64, noise: Noise) -> ConditionScenario {
    ConditionScenario { mesor, amplitude: 1.0, phase_hours: 5.0, replicates: 3, noise }
}

fn scenario(label: &str, conditions: Vec<ConditionScenario>) -> ScenarioSpec {
    ScenarioSpec { label: label.to_string(), time_grid: default_time_grid(), conditions }
}

/// A named preset scenario together with the test it calibrates.
pub struct Preset {
    pub spec: ScenarioSpec,
    pub test: TestKind,
}

/// Look up a built-in calibration scenario by name.
///
/// Naming: `null`/`alt` prefixes are differential-rhythm scenarios; `mesor`,
/// `amp`, and `phase` prefixes calibrate TDM/TDA/TDP; `rhythm-a<A>` are
/// one-condition rhythmicity scenarios. `eq`/`hetero` describe the noise,
/// `t3`/`t4` heavy-tailed noise, and `unbal` an unbalanced design
/// (2 replicates in condition 1, 3 elsewhere).
pub fn preset(name: &str) -> Option<Preset> {
    let tdr = |spec| Some(Preset { spec, test: TestKind::Tdr });
    let tdm = |spec| Some(Preset { spec, test: TestKind::Tdm });
    let tda = |spec| Some(Preset { spec, test: TestKind::Tda });
    let tdp = |spec| Some(Preset { spec, test: TestKind::Tdp });
    let tr = |spec| Some(Preset { spec, test: TestKind::Tr });
    match name {
        // differential rhythmicity: nulls
        "null3-eq" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(1.0), 3),
                cond(1.0, 5.0, gaussian(1.0), 3),
                cond(1.0, 5.0, gaussian(1.0), 3),
            ],
        )),
        "null3-hetero" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(0.5), 3),
                cond(1.0, 5.0, gaussian(2.0), 3),
                cond(1.0, 5.0, gaussian(2.0), 3),
            ],
        )),
        "null3-t3-unbal" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(1.0), 2),
                cond(1.0, 5.0, student(0.4, 3.0), 3),
                cond(1.0, 5.0, student(0.4, 3.0), 3),
            ],
        )),
        "null3-t4-unbal" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, student(1.0, 4.0), 2),
                cond(1.0, 5.0, student(0.1, 4.0), 3),
                cond(1.0, 5.0, student(0.5, 4.0), 3),
            ],
        )),
        "null2-eq" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(1.0), 3), cond(1.0, 5.0, gaussian(1.0), 3)],
        )),
        "null2-hetero" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(0.5), 3), cond(1.0, 5.0, gaussian(2.0), 3)],
        )),
        "null2-t3-unbal" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(1.0), 2), cond(1.0, 5.0, student(0.4, 3.0), 3)],
        )),
        "null2-t4-unbal" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, student(1.0, 4.0), 2), cond(1.0, 5.0, student(0.5, 4.0), 3)],
        )),
        // differential rhythmicity: alternatives (condition 2 phase-shifted,
        // condition 3 amplitude-raised in the 3-condition designs)
        "alt3-eq" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(1.0), 3),
                cond(1.0, 2.5, gaussian(1.0), 3),
                cond(1.5, 5.0, gaussian(1.0), 3),
            ],
        )),
        "alt3-hetero" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(0.5), 3),
                cond(1.0, 2.5, gaussian(2.0), 3),
                cond(1.5, 5.0, gaussian(2.0), 3),
            ],
        )),
        "alt3-t3-unbal" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, gaussian(1.0), 2),
                cond(1.0, 2.5, student(0.4, 3.0), 3),
                cond(1.5, 5.0, student(0.4, 3.0), 3),
            ],
        )),
        "alt3-t4-unbal" => tdr(scenario(
            name,
            vec![
                cond(1.0, 5.0, student(1.0, 4.0), 2),
                cond(1.0, 2.5, student(0.1, 4.0), 3),
                cond(1.5, 5.0, student(0.5, 4.0), 3),
            ],
        )),
        "alt2-eq" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(1.0), 3), cond(1.5, 2.5, gaussian(1.0), 3)],
        )),
        "alt2-hetero" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(0.5), 3), cond(1.5, 2.5, gaussian(2.0), 3)],
        )),
        "alt2-t3-unbal" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, gaussian(1.0), 2), cond(1.5, 2.5, student(0.4, 3.0), 3)],
        )),
        "alt2-t4-unbal" => tdr(scenario(
            name,
            vec![cond(1.0, 5.0, student(1.0, 4.0), 2), cond(1.5, 2.5, student(0.5, 4.0), 3)],
        )),
        // differential mesor
        "mesor3-null-eq" => tdm(scenario(
            name,
            vec![
                mesor_cond(1.0, gaussian(1.0)),
                mesor_cond(1.0, gaussian(1.0)),
                mesor_cond(1.0, gaussian(1.0)),
            ],
        )),
        "mesor3-null-hetero" => tdm(scenario(
            name,
            vec![
                mesor_cond(1.0, gaussian(0.5)),
                mesor_cond(1.0, gaussian(2.0)),
                mesor_cond(1.0, gaussian(2.0)),
            ],
        )),
        "mesor3-alt-eq" => tdm(scenario(
            name,
            vec![
                mesor_cond(1.0, gaussian(1.0)),
                mesor_cond(3.0, gaussian(1.0)),
                mesor_cond(5.0, gaussian(1.0)),
            ],
        )),
        "mesor3-alt-hetero" => tdm(scenario(
            name,
            vec![
                mesor_cond(1.0, gaussian(0.5)),
                mesor_cond(3.0, gaussian(2.0)),
                mesor_cond(5.0, gaussian(2.0)),
            ],
        )),
        "mesor2-null-eq" => {
            tdm(scenario(name, vec![mesor_cond(1.0, gaussian(1.0)), mesor_cond(1.0, gaussian(1.0))]))
        }
        "mesor2-null-hetero" => {
            tdm(scenario(name, vec![mesor_cond(1.0, gaussian(0.5)), mesor_cond(1.0, gaussian(2.0))]))
        }
        "mesor2-alt-eq" => {
            tdm(scenario(name, vec![mesor_cond(1.0, gaussian(1.0)), mesor_cond(3.0, gaussian(1.0))]))
        }
        "mesor2-alt-hetero" => {
            tdm(scenario(name, vec![mesor_cond(1.0, gaussian(0.5)), mesor_cond(3.0, gaussian(2.0))]))
        }
        // differential amplitude
        "amp3-null-eq" => tda(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
            ],
        )),
        "amp3-null-hetero" => tda(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(0.5), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
            ],
        )),
        "amp3-alt-eq" => tda(scenario(
            name,
            vec![
                cond(2.0, 5.0, gaussian(1.0), 3),
                cond(2.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
            ],
        )),
        "amp3-alt-hetero" => tda(scenario(
            name,
            vec![
                cond(2.0, 5.0, gaussian(0.5), 3),
                cond(2.0, 5.0, gaussian(2.0), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
            ],
        )),
        "amp2-null-eq" => tda(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(1.0), 3), cond(4.0, 5.0, gaussian(1.0), 3)],
        )),
        "amp2-null-hetero" => tda(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(0.5), 3), cond(4.0, 5.0, gaussian(2.0), 3)],
        )),
        "amp2-alt-eq" => tda(scenario(
            name,
            vec![cond(2.0, 5.0, gaussian(1.0), 3), cond(4.0, 5.0, gaussian(1.0), 3)],
        )),
        "amp2-alt-hetero" => tda(scenario(
            name,
            vec![cond(2.0, 5.0, gaussian(0.5), 3), cond(4.0, 5.0, gaussian(2.0), 3)],
        )),
        // differential phase
        "phase3-null-eq" => tdp(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
            ],
        )),
        "phase3-null-hetero" => tdp(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(0.5), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
            ],
        )),
        "phase3-alt-eq" => tdp(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(1.0), 3),
                cond(4.0, 3.0, gaussian(1.0), 3),
                cond(4.0, 5.0, gaussian(1.0), 3),
            ],
        )),
        "phase3-alt-hetero" => tdp(scenario(
            name,
            vec![
                cond(4.0, 5.0, gaussian(0.5), 3),
                cond(4.0, 3.0, gaussian(2.0), 3),
                cond(4.0, 5.0, gaussian(2.0), 3),
            ],
        )),
        "phase2-null-eq" => tdp(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(1.0), 3), cond(4.0, 5.0, gaussian(1.0), 3)],
        )),
        "phase2-null-hetero" => tdp(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(0.5), 3), cond(4.0, 5.0, gaussian(2.0), 3)],
        )),
        "phase2-alt-eq" => tdp(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(1.0), 3), cond(4.0, 3.0, gaussian(1.0), 3)],
        )),
        "phase2-alt-hetero" => tdp(scenario(
            name,
            vec![cond(4.0, 5.0, gaussian(0.5), 3), cond(4.0, 3.0, gaussian(2.0), 3)],
        )),
        // rhythmicity (single condition)
        "rhythm-a0" => tr(scenario(name, vec![cond(0.0, 5.0, gaussian(1.0), 3)])),
        "rhythm-a0.5" => tr(scenario(name, vec![cond(0.5, 5.0, gaussian(1.0), 3)])),
        "rhythm-a1" => tr(scenario(name, vec![cond(1.0, 5.0, gaussian(1.0), 3)])),
        "rhythm-a2" => tr(scenario(name, vec![cond(2.0, 5.0, gaussian(1.0), 3)])),
        _ => None,
    }
}

/// All built-in scenario names.
pub fn preset_names() -> Vec<&'static str> {
    vec![
        "null3-eq",
        "null3-hetero",
        "null3-t3-unbal",
        "null3-t4-unbal",
        "null2-eq",
        "null2-hetero",
        "null2-t3-unbal",
        "null2-t4-unbal",
        "alt3-eq",
        "alt3-hetero",
        "alt3-t3-unbal",
        "alt3-t4-unbal",
        "alt2-eq",
        "alt2-hetero",
        "alt2-t3-unbal",
        "alt2-t4-unbal",
        "mesor3-null-eq",
        "mesor3-null-hetero",
        "mesor3-alt-eq",
        "mesor3-alt-hetero",
        "mesor2-null-eq",
        "mesor2-null-hetero",
        "mesor2-alt-eq",
        "mesor2-alt-hetero",
        "amp3-null-eq",
        "amp3-null-hetero",
        "amp3-alt-eq",
        "amp3-alt-hetero",
        "amp2-null-eq",
        "amp2-null-hetero",
        "amp2-alt-eq",
        "amp2-alt-hetero",
        "phase3-null-eq",
        "phase3-null-hetero",
        "phase3-alt-eq",
        "phase3-alt-hetero",
        "phase2-null-eq",
        "phase2-null-hetero",
        "phase2-alt-eq",
        "phase2-alt-hetero",
        "rhythm-a0",
        "rhythm-a0.5",
        "rhythm-a1",
        "rhythm-a2",
    ]
}

// ---------------------------------------------------------------------------
// scenario files
// ---------------------------------------------------------------------------

/// One scenario plus the tests it should run.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioEntry {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    #[serde(default = "default_tests")]
    pub tests: Vec<String>,
}

fn default_tests() -> Vec<String> {
    vec!["tdr".to_string()]
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioEntry>,
}

/// Parse a TOML scenario file and validate every entry.
pub fn load_scenario_file(text: &str) -> Result<ScenarioFile> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for entry in &file.scenarios {
        entry.spec.validate()?;
        for t in &entry.tests {
            if TestKind::parse(t).is_none() {
                return Err(Error::InvalidScenario {
                    label: entry.spec.label.clone(),
                    reason: format!("unknown test '{t}'"),
                });
            }
        }
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// rejection experiments
// ---------------------------------------------------------------------------

/// Knobs for a rejection-rate experiment.
#[derive(Debug, Clone, Copy)]
pub struct RejectionOptions {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Monte Carlo draws for TR (both standalone and as the TDA/TDP gate).
    pub tr_draws: usize,
    /// Gate threshold for TDA/TDP.
    pub gate_alpha: f64,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        RejectionOptions {
            replicates: 2000,
            alpha: 0.05,
            seed: 42,
            tr_draws: 2000,
            gate_alpha: 0.05,
        }
    }
}

/// Result of a rejection-rate experiment.
#[derive(Debug, Clone)]
pub struct RejectionReport {
    pub label: String,
    pub test: TestKind,
    pub replicates: usize,
    pub rejections: usize,
    /// Replicates that failed outright (counted as non-rejections).
    pub failures: usize,
    pub rate: f64,
    /// Binomial standard error of the rate.
    pub se: f64,
    pub alpha: f64,
    pub seed: u64,
}

fn fit_all(data: &[Vec<f64>], designs: &[ConditionDesign]) -> Result<Vec<ConditionFit>> {
    data.iter().zip(designs).map(|(y, d)| fit_condition(y, d)).collect()
}

/// Estimate the rejection rate of one test under one scenario.
///
/// Replicate r uses the RNG stream (seed, label, r), so reports are
/// reproducible bit-for-bit regardless of thread count.
pub fn run_rejection_experiment(
    spec: &ScenarioSpec,
    test: TestKind,
    opts: &RejectionOptions,
) -> Result<RejectionReport> {
    spec.validate()?;
    if opts.replicates < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 replicates, got {}",
            opts.replicates
        )));
    }
    if test != TestKind::Tr && spec.conditions.len() < 2 {
        return Err(Error::InvalidConditionCount(spec.conditions.len()));
    }
    let designs = spec.designs()?;
    let case_tag = label_hash(&spec.label);

    let outcomes: Vec<Option<bool>> = (0..opts.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(opts.seed, &[case_tag, rep as u64]);
            let data = generate_gene(spec, &mut rng);
            let fits = match fit_all(&data, &designs) {
                Ok(f) => f,
                Err(_) => return None,
            };
            let tr_seed = |k: usize| derive_seed(opts.seed, &[case_tag, rep as u64, 1000 + k as u64]);
            let result = match test {
                TestKind::Tr => test_rhythmicity(&fits[0], opts.tr_draws, tr_seed(0)),
                TestKind::Tdr => test_differential_rhythm(&fits),
                TestKind::Tdm => test_differential_mesor(&fits),
                TestKind::Tda | TestKind::Tdp => {
                    let gate: Result<Vec<f64>> = fits
                        .iter()
                        .enumerate()
                        .map(|(k, f)| {
                            test_rhythmicity(f, opts.tr_draws, tr_seed(k)).map(|r| r.p_value)
                        })
                        .collect();
                    match gate {
                        Ok(gate_p) => {
                            if test == TestKind::Tda {
                                test_differential_amplitude(&fits, &gate_p, opts.gate_alpha)
                            } else {
                                test_differential_phase(&fits, &gate_p, opts.gate_alpha)
                            }
                        }
                        Err(e) => Err(e),
                    }
                }
            };
            match result {
                Ok(r) => Some(r.p_value < opts.alpha),
                Err(_) => None,
            }
        })
        .collect();

    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    let rejections = outcomes.iter().filter(|o| **o == Some(true)).count();
    let rate = rejections as f64 / opts.replicates as f64;
    let se = (rate * (1.0 - rate) / opts.replicates as f64).sqrt();
    Ok(RejectionReport {
        label: spec.label.clone(),
        test,
        replicates: opts.replicates,
        rejections,
        failures,
        rate,
        se,
        alpha: opts.alpha,
        seed: opts.seed,
    })
}

// ---------------------------------------------------------------------------
// FDR experiment
// ---------------------------------------------------------------------------

/// Whole-transcriptome benchmark: a fraction of genes carries
/// condition-specific rhythm parameters, the rest share one rhythm, and
/// BH-adjusted differential-rhythm discoveries are scored against the
/// planted labels.
#[derive(Debug, Clone, Deserialize)]
pub struct FdrExperimentSpec {
    #[serde(default = "FdrExperimentSpec::default_label")]
    pub label: String,
    pub genes: usize,
    pub dr_fraction: f64,
    #[serde(default = "default_time_grid")]
    pub time_grid: Vec<f64>,
    /// Per-condition replicates per time point.
    pub replicates: Vec<usize>,
    /// Per-condition Gaussian noise standard deviations.
    pub sigmas: Vec<f64>,
    /// Rhythm parameters for planted differential genes.
    pub dr_amplitudes: Vec<f64>,
    pub dr_phases: Vec<f64>,
    /// Shared rhythm for the remaining genes.
    pub nondr_amplitude: f64,
    pub nondr_phase: f64,
    #[serde(default = "default_mesor")]
    pub mesor: f64,
    #[serde(default = "FdrExperimentSpec::default_bh_alpha")]
    pub bh_alpha: f64,
}

impl FdrExperimentSpec {
    fn default_label() -> String {
        "fdr-default".to_string()
    }

    fn default_bh_alpha() -> f64 {
        0.05
    }

    /// The default benchmark: 2,000 genes, 10% differential, three
    /// conditions with heteroskedastic noise and unbalanced replication.
    pub fn three_conditions() -> Self {
        FdrExperimentSpec {
            label: Self::default_label(),
            genes: 2000,
            dr_fraction: 0.10,
            time_grid: default_time_grid(),
            replicates: vec![2, 3, 3],
            sigmas: vec![0.5, 1.0, 1.0],
            dr_amplitudes: vec![1.0, 2.0, 2.0],
            dr_phases: vec![5.0, 10.0, 10.0],
            nondr_amplitude: 1.0,
            nondr_phase: 5.0,
            mesor: 1.0,
            bh_alpha: 0.05,
        }
    }

    /// Two-condition variant of the default benchmark.
    pub fn two_conditions() -> Self {
        let mut spec = Self::three_conditions();
        spec.label = "fdr-default-2cond".to_string();
        spec.replicates.truncate(2);
        spec.sigmas.truncate(2);
        spec.dr_amplitudes.truncate(2);
        spec.dr_phases.truncate(2);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidScenario { label: self.label.clone(), reason };
        let k = self.replicates.len();
        if k < 2 {
            return Err(fail("need at least 2 conditions".into()));
        }
        if self.sigmas.len() != k || self.dr_amplitudes.len() != k || self.dr_phases.len() != k {
            return Err(fail("per-condition vectors must have equal lengths".into()));
        }
        if self.genes == 0 || !(0.0..=1.0).contains(&self.dr_fraction) {
            return Err(fail("genes must be > 0 and dr_fraction in [0, 1]".into()));
        }
        Ok(())
    }

    fn gene_scenario(&self, dr: bool) -> ScenarioSpec {
        let conditions = (0..self.replicates.len())
            .map(|k| ConditionScenario {
                mesor: self.mesor,
                amplitude: if dr { self.dr_amplitudes[k] } else { self.nondr_amplitude },
                phase_hours: if dr { self.dr_phases[k] } else { self.nondr_phase },
                replicates: self.replicates[k],
                noise: Noise::Gaussian { sigma: self.sigmas[k] },
            })
            .collect();
        ScenarioSpec {
            label: self.label.clone(),
            time_grid: self.time_grid.clone(),
            conditions,
        }
    }
}

/// Confusion counts and scores for one simulated transcriptome.
#[derive(Debug, Clone, Copy)]
pub struct FdrReplicate {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// FP / (TP + FP); defined as 0 when nothing is rejected.
    pub fdr: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct FdrReport {
    pub label: String,
    pub replicates: Vec<FdrReplicate>,
    pub mean_fdr: f64,
    pub mean_f1: f64,
    pub se_fdr: f64,
    pub se_f1: f64,
    pub seed: u64,
}

/// Run the FDR benchmark for `reps` independent transcriptomes.
pub fn run_fdr_experiment(spec: &FdrExperimentSpec, reps: usize, seed: u64) -> Result<FdrReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let dr_spec = spec.gene_scenario(true);
    let nondr_spec = spec.gene_scenario(false);
    let designs = dr_spec.designs()?;
    let n_dr = ((spec.genes as f64) * spec.dr_fraction).round() as usize;
    let case_tag = label_hash(&spec.label);

    let mut replicates = Vec::with_capacity(reps);
    for rep in 0..reps {
        let pvalues: Vec<f64> = (0..spec.genes)
            .into_par_iter()
            .map(|g| {
                let mut rng = stream_rng(seed, &[case_tag, rep as u64, g as u64]);
                let gene_spec = if g < n_dr { &dr_spec } else { &nondr_spec };
                let data = generate_gene(gene_spec, &mut rng);
                let fits = match fit_all(&data, &designs) {
                    Ok(f) => f,
                    Err(_) => return f64::NAN,
                };
                match test_differential_rhythm(&fits) {
                    Ok(r) => r.p_value,
                    Err(_) => f64::NAN,
                }
            })
            .collect();
        let q = bh_adjust(&pvalues);
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (g, &qv) in q.iter().enumerate() {
            let rejected = qv < spec.bh_alpha;
            let is_dr = g < n_dr;
            match (rejected, is_dr) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let fdr = if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 };
        let f1 = if 2 * tp + fp + fn_ == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        replicates.push(FdrReplicate { tp, fp, fn_, fdr, f1 });
    }

    let mean = |f: &dyn Fn(&FdrReplicate) -> f64| {
        replicates.iter().map(|r| f(r)).sum::<f64>() / reps as f64
    };
    let sd = |f: &dyn Fn(&FdrReplicate) -> f64, m: f64| {
        if reps < 2 {
            0.0
        } else {
            (replicates.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
                / (reps as f64).sqrt()
        }
    };
    let mean_fdr = mean(&|r| r.fdr);
    let mean_f1 = mean(&|r| r.f1);
    Ok(FdrReport {
        label: spec.label.clone(),
        se_fdr: sd(&|r| r.fdr, mean_fdr),
        se_f1: sd(&|r| r.f1, mean_f1),
        mean_fdr,
        mean_f1,
        replicates,
        seed,
    })
}

// ---------------------------------------------------------------------------
// metrics output
// ---------------------------------------------------------------------------

/// One row of the metrics CSV.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub case: String,
    pub test: String,
    pub metric: String,
    pub value: f64,
    pub se: f64,
    pub r: usize,
    pub seed: u64,
}

impl RejectionReport {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        vec![MetricRow {
            case: self.label.clone(),
            test: self.test.as_str().to_string(),
            metric: "rejection_rate".to_string(),
            value: self.rate,
            se: self.se,
            r: self.replicates,
            seed: self.seed,
        }]
    }
}

impl FdrReport {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        vec![
            MetricRow {
                case: self.label.clone(),
                test: "TDR".to_string(),
                metric: "fdr".to_string(),
                value: self.mean_fdr,
                se: self.se_fdr,
                r: self.replicates.len(),
                seed: self.seed,
            },
            MetricRow {
                case: self.label.clone(),
                test: "TDR".to_string(),
                metric: "f1".to_string(),
                value: self.mean_f1,
                se: self.se_f1,
                r: self.replicates.len(),
                seed: self.seed,
            },
        ]
    }
}

/// Write metric rows as CSV with a fixed header.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "case,test,metric,value,se,R,seed")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{},{}", r.case, r.test, r.metric, r.value, r.se, r.r, r.seed)?;
    }
    Ok(())
}
