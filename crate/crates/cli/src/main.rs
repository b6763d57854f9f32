//! `carhy` command line: whole-matrix analysis, scenario simulations, and
//! the FDR benchmark.
//!
//! Exit codes: 0 success; 2 input validation failure; 3 completed with
//! flagged (failed) gene rows.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carhy::io::{ingest, preprocess, Units};
use carhy::pipeline::{analyze_all, write_table, AnalysisConfig};
use carhy::sim::{
    load_scenario_file, preset, preset_names, run_fdr_experiment, run_rejection_experiment,
    write_metrics_csv, FdrExperimentSpec, MetricRow, RejectionOptions,
};
use carhy::TestKind;

#[derive(Parser)]
#[command(
    name = "carhy",
    version,
    about = "Rhythmicity and differential rhythmicity/mesor/amplitude/phase tests for multi-condition circadian expression data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all five tests over an expression matrix and write one row per gene.
    Analyze(AnalyzeArgs),
    /// Estimate rejection rates for simulation scenarios.
    Simulate(SimulateArgs),
    /// FDR / F1 benchmark on a planted differential-rhythm transcriptome.
    FdrBench(FdrBenchArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Expression matrix (TSV/CSV: header of sample ids, one gene per row).
    #[arg(long)]
    expr: PathBuf,
    /// Sample metadata (columns: sample_id, condition, time).
    #[arg(long)]
    meta: PathBuf,
    /// Input scale: tpm (filter + log2) or log (already transformed).
    #[arg(long, default_value = "tpm")]
    units: String,
    /// Significance level used for the summary counts.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Rhythmicity-gate threshold for the amplitude/phase tests.
    #[arg(long = "gate-alpha", default_value_t = 0.05)]
    gate_alpha: f64,
    /// Monte Carlo draws per rhythmicity test.
    #[arg(long = "mc-draws", default_value_t = 10_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = use all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output table path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario file; omit to use built-in scenarios via --case.
    #[arg(long = "scenario-file")]
    scenario_file: Option<PathBuf>,
    /// Scenario label(s): entries of the scenario file, or built-in names.
    #[arg(long = "case")]
    cases: Vec<String>,
    /// Replicates per scenario.
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FdrBenchArgs {
    /// TOML benchmark spec; omit for the default three-condition benchmark.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
        Command::FdrBench(args) => fdr_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let units = Units::parse(&args.units)
        .ok_or_else(|| anyhow::anyhow!("--units must be 'tpm' or 'log', got '{}'", args.units))?;
    let dataset = ingest(&args.expr, &args.meta, units)?;
    let (dataset, summary) = preprocess(dataset);
    if summary.noop {
        eprintln!("note: input declared log-scale; preprocessing skipped");
    } else {
        eprintln!(
            "preprocess: retained {} of {} genes (TPM > 1 in at least half of samples), log2(TPM+1) applied",
            summary.genes_retained, summary.genes_in
        );
    }

    let cfg = AnalysisConfig {
        alpha: args.alpha,
        gate_alpha: args.gate_alpha,
        mc_draws: args.mc_draws,
        seed: args.seed,
        threads: if args.threads == 0 { None } else { Some(args.threads) },
    };
    let table = analyze_all(&dataset, &cfg)?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    write_table(&table, &mut file)?;
    drop(file);

    let count = |f: &dyn Fn(&carhy::pipeline::GeneResultRow) -> f64| {
        table.rows.iter().filter(|r| f(r) < args.alpha).count()
    };
    eprintln!(
        "analyzed {} genes across {} conditions -> {}",
        table.rows.len(),
        table.condition_names.len(),
        args.out.display()
    );
    eprintln!(
        "BH-significant at {}: TDR {}, TDM {}, TDA {}, TDP {}",
        args.alpha,
        count(&|r| r.q_tdr),
        count(&|r| r.q_tdm),
        count(&|r| r.q_tda),
        count(&|r| r.q_tdp),
    );
    let errors = table.error_row_count();
    if errors > 0 {
        eprintln!("{errors} gene(s) carry error flags; see the flags column");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let opts = RejectionOptions {
        replicates: args.reps,
        alpha: args.alpha,
        seed: args.seed,
        ..Default::default()
    };
    let mut rows: Vec<MetricRow> = Vec::new();

    match &args.scenario_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let file = load_scenario_file(&text)?;
            let selected: Vec<_> = if args.cases.is_empty() {
                file.scenarios.iter().collect()
            } else {
                let picked: Vec<_> = file
                    .scenarios
                    .iter()
                    .filter(|e| args.cases.contains(&e.spec.label))
                    .collect();
                if picked.len() != args.cases.len() {
                    anyhow::bail!("some --case labels not found in {}", path.display());
                }
                picked
            };
            for entry in selected {
                for test_name in &entry.tests {
                    let kind = TestKind::parse(test_name)
                        .ok_or_else(|| anyhow::anyhow!("unknown test '{test_name}'"))?;
                    let report = run_rejection_experiment(&entry.spec, kind, &opts)?;
                    eprintln!(
                        "{} [{}]: rate = {:.4} (se {:.4}, R = {})",
                        report.label, report.test, report.rate, report.se, report.replicates
                    );
                    rows.extend(report.metric_rows());
                }
            }
        }
        None => {
            if args.cases.is_empty() {
                anyhow::bail!(
                    "no scenario source: pass --scenario-file or --case <builtin>; built-ins: {}",
                    preset_names().join(", ")
                );
            }
            for name in &args.cases {
                let p = preset(name).ok_or_else(|| {
                    anyhow::anyhow!(
                        "unknown built-in scenario '{name}'; available: {}",
                        preset_names().join(", ")
                    )
                })?;
                let report = run_rejection_experiment(&p.spec, p.test, &opts)?;
                eprintln!(
                    "{} [{}]: rate = {:.4} (se {:.4}, R = {})",
                    report.label, report.test, report.rate, report.se, report.replicates
                );
                rows.extend(report.metric_rows());
            }
        }
    }

    let mut file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    write_metrics_csv(&rows, &mut file)?;
    eprintln!("wrote {} metric row(s) -> {}", rows.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn fdr_bench(args: FdrBenchArgs) -> anyhow::Result<ExitCode> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<FdrExperimentSpec>(&text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => FdrExperimentSpec::three_conditions(),
    };
    let report = run_fdr_experiment(&spec, args.reps, args.seed)?;
    for (i, rep) in report.replicates.iter().enumerate() {
        eprintln!(
            "replicate {i}: TP {} FP {} FN {} FDR {:.4} F1 {:.4}",
            rep.tp, rep.fp, rep.fn_, rep.fdr, rep.f1
        );
    }
    eprintln!(
        "mean FDR = {:.4} (se {:.4}), mean F1 = {:.4} (se {:.4})",
        report.mean_fdr, report.se_fdr, report.mean_f1, report.se_f1
    );
    let mut file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    write_metrics_csv(&report.metric_rows(), &mut file)?;
    eprintln!("wrote metrics -> {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
