//! Whole-transcriptome orchestration: group samples into per-condition
//! designs, run all five tests per gene in parallel, adjust p-values per
//! test family, and serialize one row per gene.
//!
//! Output is deterministic for a given (input, seed) regardless of thread
//! count: every gene draws from its own seed-derived RNG stream and rows
//! are emitted in input order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdr::bh_adjust;
use crate::harmonic::{fit_condition, ConditionDesign, ConditionFit, PERIOD_HOURS};
use crate::hypothesis::{
    test_differential_amplitude, test_differential_mesor, test_differential_phase,
    test_differential_rhythm, test_rhythmicity, TestResult, DEFAULT_GATE_ALPHA, DEFAULT_TR_DRAWS,
};
use crate::io::Dataset;
use crate::seeding::derive_seed;

/// Pipeline configuration.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Significance threshold used for summary counts.
    pub alpha: f64,
    /// Rhythmicity-gate threshold for TDA/TDP (raw TR p-values).
    pub gate_alpha: f64,
    /// Monte Carlo draws per rhythmicity test.
    pub mc_draws: usize,
    pub seed: u64,
    /// Worker threads; None uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            gate_alpha: DEFAULT_GATE_ALPHA,
            mc_draws: DEFAULT_TR_DRAWS,
            seed: 42,
            threads: None,
        }
    }
}

/// One condition's design plus the matrix columns feeding it, in design
/// row order.
#[derive(Debug, Clone)]
pub struct ConditionLayout {
    pub name: String,
    pub design: ConditionDesign,
    /// Matrix column index for each design row.
    pub columns: Vec<usize>,
}

/// Group metadata into per-condition layouts.
///
/// Conditions keep their order of first appearance; within a condition,
/// samples are ordered by time (ties by input order) to match the design's
/// time-major row layout.
pub fn condition_layouts(dataset: &Dataset) -> Result<Vec<ConditionLayout>> {
    let mut names: Vec<&str> = Vec::new();
    for m in &dataset.meta {
        if !names.contains(&m.condition.as_str()) {
            names.push(&m.condition);
        }
    }
    if names.len() < 2 {
        return Err(Error::InvalidConditionCount(names.len()));
    }

    let mut layouts = Vec::with_capacity(names.len());
    for name in names {
        let mut cols: Vec<usize> = dataset
            .meta
            .iter()
            .enumerate()
            .filter(|(_, m)| m.condition == name)
            .map(|(i, _)| i)
            .collect();
        cols.sort_by(|&a, &b| {
            dataset.meta[a].time.total_cmp(&dataset.meta[b].time).then(a.cmp(&b))
        });
        let mut times: Vec<f64> = Vec::new();
        let mut replicates: Vec<usize> = Vec::new();
        for &c in &cols {
            let t = dataset.meta[c].time;
            if times.last() == Some(&t) {
                *replicates.last_mut().unwrap() += 1;
            } else {
                times.push(t);
                replicates.push(1);
            }
        }
        let design = ConditionDesign::build(&times, &replicates)?;
        layouts.push(ConditionLayout { name: name.to_string(), design, columns: cols });
    }
    Ok(layouts)
}

/// Per-condition estimates reported for a gene.
#[derive(Debug, Clone, Copy)]
pub struct ConditionReport {
    pub mesor: f64,
    pub amplitude: f64,
    /// Hours in [0, 24).
    pub phase_hours: f64,
    pub sigma2: f64,
    pub p_tr: f64,
    pub q_tr: f64,
}

/// One output row.
#[derive(Debug, Clone)]
pub struct GeneResultRow {
    pub gene_id: String,
    pub conditions: Vec<ConditionReport>,
    pub p_tdr: f64,
    pub q_tdr: f64,
    pub p_tdm: f64,
    pub q_tdm: f64,
    pub p_tda: f64,
    pub q_tda: f64,
    pub p_tdp: f64,
    pub q_tdp: f64,
    /// Semicolon-separated diagnostics; empty when clean.
    pub flags: String,
}

impl GeneResultRow {
    /// True when a flag records a failure (as opposed to gating or a
    /// reference-distribution note).
    pub fn has_error_flag(&self) -> bool {
        self.flags.split(';').any(|f| f.starts_with("error:") || f.ends_with("moment_mismatch"))
    }
}

/// The assembled output table.
#[derive(Debug, Clone)]
pub struct AnalysisTable {
    pub condition_names: Vec<String>,
    pub rows: Vec<GeneResultRow>,
}

impl AnalysisTable {
    pub fn error_row_count(&self) -> usize {
        self.rows.iter().filter(|r| r.has_error_flag()).count()
    }
}

struct GeneOutcome {
    fits: Vec<Option<ConditionFit>>,
    p_tr: Vec<f64>,
    p_tdr: f64,
    p_tdm: f64,
    p_tda: f64,
    p_tdp: f64,
    flags: Vec<String>,
}

fn push_test_flags(flags: &mut Vec<String>, label: &str, result: &TestResult) {
    if result.flags.gated_out {
        flags.push(format!("{label}:gated_out"));
    }
    if result.flags.moment_mismatch {
        flags.push(format!("{label}:moment_mismatch"));
    }
    if result.flags.chisq_limit {
        flags.push(format!("{label}:chisq_limit"));
    }
    if result.flags.optimizer_fallback {
        flags.push(format!("{label}:optimizer_fallback"));
    }
}

fn analyze_gene(
    gene_idx: usize,
    y: &[f64],
    layouts: &[ConditionLayout],
    cfg: &AnalysisConfig,
) -> GeneOutcome {
    let k = layouts.len();
    let mut flags = Vec::new();
    let mut fits: Vec<Option<ConditionFit>> = Vec::with_capacity(k);
    for layout in layouts {
        let yk: Vec<f64> = layout.columns.iter().map(|&c| y[c]).collect();
        match fit_condition(&yk, &layout.design) {
            Ok(f) => fits.push(Some(f)),
            Err(e) => {
                flags.push(format!("error:fit:{}:{e}", layout.name));
                fits.push(None);
            }
        }
    }

    let mut p_tr = vec![f64::NAN; k];
    for (ci, fit) in fits.iter().enumerate() {
        if let Some(fit) = fit {
            let seed = derive_seed(cfg.seed, &[gene_idx as u64, ci as u64]);
            match test_rhythmicity(fit, cfg.mc_draws, seed) {
                Ok(r) => p_tr[ci] = r.p_value,
                Err(e) => flags.push(format!("error:tr:{}:{e}", layouts[ci].name)),
            }
        }
    }

    let all_fits: Option<Vec<ConditionFit>> =
        fits.iter().cloned().collect::<Option<Vec<_>>>();
    let (mut p_tdr, mut p_tdm, mut p_tda, mut p_tdp) =
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if let Some(all) = &all_fits {
        match test_differential_rhythm(all) {
            Ok(r) => {
                p_tdr = r.p_value;
                push_test_flags(&mut flags, "tdr", &r);
            }
            Err(e) => flags.push(format!("error:tdr:{e}")),
        }
        match test_differential_mesor(all) {
            Ok(r) => {
                p_tdm = r.p_value;
                push_test_flags(&mut flags, "tdm", &r);
            }
            Err(e) => flags.push(format!("error:tdm:{e}")),
        }
        match test_differential_amplitude(all, &p_tr, cfg.gate_alpha) {
            Ok(r) => {
                p_tda = r.p_value;
                push_test_flags(&mut flags, "tda", &r);
            }
            Err(e) => flags.push(format!("error:tda:{e}")),
        }
        match test_differential_phase(all, &p_tr, cfg.gate_alpha) {
            Ok(r) => {
                p_tdp = r.p_value;
                push_test_flags(&mut flags, "tdp", &r);
            }
            Err(e) => flags.push(format!("error:tdp:{e}")),
        }
    }

    GeneOutcome { fits, p_tr, p_tdr, p_tdm, p_tda, p_tdp, flags }
}

/// Run every test for every gene and adjust p-values per test family
/// (TR additionally per condition).
///
/// Per-gene failures downgrade to flagged rows; the batch never aborts.
pub fn analyze_all(dataset: &Dataset, cfg: &AnalysisConfig) -> Result<AnalysisTable> {
    let layouts = condition_layouts(dataset)?;
    let run = || -> Vec<GeneOutcome> {
        (0..dataset.matrix.n_genes())
            .into_par_iter()
            .map(|g| analyze_gene(g, dataset.matrix.row(g), &layouts, cfg))
            .collect()
    };
    let outcomes = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let k = layouts.len();
    let n_genes = outcomes.len();
    let q_tr: Vec<Vec<f64>> = (0..k)
        .map(|ci| bh_adjust(&outcomes.iter().map(|o| o.p_tr[ci]).collect::<Vec<_>>()))
        .collect();
    let q_tdr = bh_adjust(&outcomes.iter().map(|o| o.p_tdr).collect::<Vec<_>>());
    let q_tdm = bh_adjust(&outcomes.iter().map(|o| o.p_tdm).collect::<Vec<_>>());
    let q_tda = bh_adjust(&outcomes.iter().map(|o| o.p_tda).collect::<Vec<_>>());
    let q_tdp = bh_adjust(&outcomes.iter().map(|o| o.p_tdp).collect::<Vec<_>>());

    let mut rows = Vec::with_capacity(n_genes);
    for (g, o) in outcomes.into_iter().enumerate() {
        let conditions = (0..k)
            .map(|ci| match &o.fits[ci] {
                Some(f) => ConditionReport {
                    mesor: f.mesor(),
                    amplitude: f.amplitude,
                    phase_hours: f.phase_hours(),
                    sigma2: f.sigma2,
                    p_tr: o.p_tr[ci],
                    q_tr: q_tr[ci][g],
                },
                None => ConditionReport {
                    mesor: f64::NAN,
                    amplitude: f64::NAN,
                    phase_hours: f64::NAN,
                    sigma2: f64::NAN,
                    p_tr: f64::NAN,
                    q_tr: f64::NAN,
                },
            })
            .collect();
        rows.push(GeneResultRow {
            gene_id: dataset.matrix.gene_ids[g].clone(),
            conditions,
            p_tdr: o.p_tdr,
            q_tdr: q_tdr[g],
            p_tdm: o.p_tdm,
            q_tdm: q_tdm[g],
            p_tda: o.p_tda,
            q_tda: q_tda[g],
            p_tdp: o.p_tdp,
            q_tdp: q_tdp[g],
            flags: o.flags.join(";"),
        });
    }
    Ok(AnalysisTable {
        condition_names: layouts.into_iter().map(|l| l.name).collect(),
        rows,
    })
}

/// Minimal circular distance between two phases in hours, in [0, period/2].
pub fn circular_phase_difference(phi1: f64, phi2: f64, period: f64) -> f64 {
    let d = (phi1 - phi2).rem_euclid(period);
    d.min(period - d)
}

/// Shorthand using the fixed 24 h period.
pub fn circular_phase_difference_24(phi1: f64, phi2: f64) -> f64 {
    circular_phase_difference(phi1, phi2, PERIOD_HOURS)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Serialize the table as tab-separated text. Byte-identical for identical
/// inputs and seed.
pub fn write_table<W: std::io::Write>(table: &AnalysisTable, w: &mut W) -> std::io::Result<()> {
    let mut header = vec!["gene_id".to_string()];
    for name in &table.condition_names {
        for col in ["mesor", "amplitude", "phase_hours", "sigma2", "p_tr", "q_tr"] {
            header.push(format!("{name}_{col}"));
        }
    }
    for col in ["p_tdr", "q_tdr", "p_tdm", "q_tdm", "p_tda", "q_tda", "p_tdp", "q_tdp", "flags"] {
        header.push(col.to_string());
    }
    writeln!(w, "{}", header.join("\t"))?;

    for row in &table.rows {
        let mut fields = vec![row.gene_id.clone()];
        for c in &row.conditions {
            fields.push(fmt(c.mesor));
            fields.push(fmt(c.amplitude));
            fields.push(fmt(c.phase_hours));
            fields.push(fmt(c.sigma2));
            fields.push(fmt(c.p_tr));
            fields.push(fmt(c.q_tr));
        }
        for v in [
            row.p_tdr, row.q_tdr, row.p_tdm, row.q_tdm, row.p_tda, row.q_tda, row.p_tdp,
            row.q_tdp,
        ] {
            fields.push(fmt(v));
        }
        fields.push(row.flags.clone());
        writeln!(w, "{}", fields.join("\t"))?;
    }
    Ok(())
}
