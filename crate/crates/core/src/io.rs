//! Expression-matrix and sample-metadata ingestion, plus the TPM
//! preprocessing step.
//!
//! Expression files are character-delimited text (tab or comma, detected
//! from the header): a header row of sample ids after a leading gene-id
//! column, then one gene per row. Metadata files carry columns
//! `sample_id`, `condition`, `time` in any order.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harmonic::PERIOD_HOURS;

/// Declared scale of the expression values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// Transcripts per million; preprocessing filters and log-transforms.
    Tpm,
    /// Already log-scale; preprocessing is a no-op.
    Log,
}

impl Units {
    pub fn parse(s: &str) -> Option<Units> {
        match s.to_ascii_lowercase().as_str() {
            "tpm" => Some(Units::Tpm),
            "log" => Some(Units::Log),
            _ => None,
        }
    }
}

/// One sample's annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub condition: String,
    /// Hours in [0, 24).
    pub time: f64,
}

/// Dense genes x samples expression matrix.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    pub gene_ids: Vec<String>,
    values: Vec<f64>,
    n_samples: usize,
}

impl ExpressionMatrix {
    pub fn new(gene_ids: Vec<String>, values: Vec<f64>, n_samples: usize) -> Self {
        assert_eq!(values.len(), gene_ids.len() * n_samples);
        ExpressionMatrix { gene_ids, values, n_samples }
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        &self.values[gene * self.n_samples..(gene + 1) * self.n_samples]
    }
}

/// A validated expression matrix with aligned metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: ExpressionMatrix,
    /// One entry per matrix column, in column order.
    pub meta: Vec<SampleMeta>,
    pub units: Units,
}

fn detect_delimiter(header: &str) -> char {
    if header.contains('\t') {
        '\t'
    } else {
        ','
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        lines.push(line?);
    }
    Ok(lines)
}

fn parse_expression(path: &Path) -> Result<(Vec<String>, ExpressionMatrix)> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = rows
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty expression file", path.display())))?;
    let delim = detect_delimiter(header);
    let cols: Vec<&str> = header.split(delim).map(str::trim).collect();
    if cols.len() < 2 {
        return Err(Error::Parse(format!("{}: header has no sample columns", path.display())));
    }
    let sample_ids: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let n = sample_ids.len();

    let mut gene_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != n + 1 {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                n + 1,
                fields.len()
            )));
        }
        let gene = fields[0].to_string();
        if !seen.insert(gene.clone()) {
            return Err(Error::DuplicateGene(gene));
        }
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| {
                Error::Parse(format!(
                    "{}:{}: '{f}' is not a number",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.push(v);
        }
        gene_ids.push(gene);
    }
    Ok((sample_ids, ExpressionMatrix::new(gene_ids, values, n)))
}

fn parse_metadata(path: &Path) -> Result<Vec<SampleMeta>> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = rows
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty metadata file", path.display())))?;
    let delim = detect_delimiter(header);
    let cols: Vec<String> =
        header.split(delim).map(|s| s.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| {
        cols.iter().position(|c| c == name).ok_or_else(|| {
            Error::Parse(format!("{}: missing metadata column '{name}'", path.display()))
        })
    };
    let id_col = find("sample_id")?;
    let cond_col = find("condition")?;
    let time_col = find("time")?;

    let mut meta = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                cols.len(),
                fields.len()
            )));
        }
        let sample_id = fields[id_col].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(Error::Parse(format!(
                "{}:{}: duplicate sample id '{sample_id}'",
                path.display(),
                lineno + 1
            )));
        }
        let time: f64 = fields[time_col].parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: time '{}' is not a number",
                path.display(),
                lineno + 1,
                fields[time_col]
            ))
        })?;
        if !(0.0..PERIOD_HOURS).contains(&time) {
            return Err(Error::InvalidTime(time));
        }
        meta.push(SampleMeta { sample_id, condition: fields[cond_col].to_string(), time });
    }
    Ok(meta)
}

/// Load and cross-validate expression and metadata files.
///
/// The returned dataset has metadata rows aligned with matrix columns.
/// Requirements: the two sample-id sets must match exactly, every condition
/// must cover at least three distinct times, and TPM values must be
/// nonnegative.
pub fn ingest(expr_path: &Path, meta_path: &Path, units: Units) -> Result<Dataset> {
    let (sample_ids, matrix) = parse_expression(expr_path)?;
    let meta_rows = parse_metadata(meta_path)?;

    let mut by_id: HashMap<&str, &SampleMeta> =
        meta_rows.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    let mut meta = Vec::with_capacity(sample_ids.len());
    for id in &sample_ids {
        match by_id.remove(id.as_str()) {
            Some(m) => meta.push(m.clone()),
            None => {
                return Err(Error::MissingSample {
                    id: id.clone(),
                    context: "appears in the expression header but not in the metadata".into(),
                })
            }
        }
    }
    if let Some((id, _)) = by_id.into_iter().next() {
        return Err(Error::MissingSample {
            id: id.to_string(),
            context: "appears in the metadata but not in the expression header".into(),
        });
    }

    let mut times_by_condition: HashMap<&str, HashSet<u64>> = HashMap::new();
    for m in &meta {
        times_by_condition.entry(m.condition.as_str()).or_default().insert(m.time.to_bits());
    }
    for (condition, times) in &times_by_condition {
        if times.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "condition '{condition}' covers only {} distinct time(s); need at least 3",
                times.len()
            )));
        }
    }

    if units == Units::Tpm {
        for g in 0..matrix.n_genes() {
            if let Some(v) = matrix.row(g).iter().find(|v| **v < 0.0) {
                return Err(Error::UnitsMismatch(format!(
                    "negative TPM value {v} in gene '{}'",
                    matrix.gene_ids[g]
                )));
            }
        }
    }

    Ok(Dataset { matrix, meta, units })
}

/// Result of preprocessing.
#[derive(Debug, Clone)]
pub struct PreprocessSummary {
    pub genes_in: usize,
    pub genes_retained: usize,
    /// True when the input was already log-scale and nothing was done.
    pub noop: bool,
}

/// Filter low-expression genes and move TPM to log2 scale.
///
/// Keeps genes with TPM > 1 (strict) in at least half of the samples and
/// maps values to log2(TPM + 1). Log-scale input passes through unchanged.
pub fn preprocess(dataset: Dataset) -> (Dataset, PreprocessSummary) {
    let genes_in = dataset.matrix.n_genes();
    if dataset.units == Units::Log {
        let summary =
            PreprocessSummary { genes_in, genes_retained: genes_in, noop: true };
        return (dataset, summary);
    }
    let n = dataset.matrix.n_samples();
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for g in 0..genes_in {
        let row = dataset.matrix.row(g);
        let above = row.iter().filter(|&&v| v > 1.0).count();
        if 2 * above >= n {
            gene_ids.push(dataset.matrix.gene_ids[g].clone());
            values.extend(row.iter().map(|&v| (v + 1.0).log2()));
        }
    }
    let summary =
        PreprocessSummary { genes_in, genes_retained: gene_ids.len(), noop: false };
    (
        Dataset {
            matrix: ExpressionMatrix::new(gene_ids, values, n),
            meta: dataset.meta,
            units: Units::Log,
        },
        summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("carhy-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{}-{name}", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const META_6: &str = "sample_id\tcondition\ttime\n\
        s1\tA\t0\n s2\tA\t8\n s3\tA\t16\n s4\tB\t0\n s5\tB\t8\n s6\tB\t16\n";

    #[test]
    fn toy_ingest_groups_and_validates() {
        let expr = write_tmp(
            "expr.tsv",
            "gene_id\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t1\t2\t3\t4\t5\t6\ng2\t0\t0\t0\t0\t0\t0\n",
        );
        let meta = write_tmp("meta.tsv", &META_6.replace(" s", "s"));
        let ds = ingest(&expr, &meta, Units::Tpm).unwrap();
        assert_eq!(ds.matrix.n_genes(), 2);
        assert_eq!(ds.matrix.n_samples(), 6);
        assert_eq!(ds.meta[3].condition, "B");
        assert_eq!(ds.matrix.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn sample_mismatch_is_rejected() {
        let expr = write_tmp(
            "expr-miss.tsv",
            "gene_id\ts1\ts2\ts3\ts4\ts5\tsX\ng1\t1\t2\t3\t4\t5\t6\n",
        );
        let meta = write_tmp("meta-miss.tsv", &META_6.replace(" s", "s"));
        match ingest(&expr, &meta, Units::Tpm) {
            Err(Error::MissingSample { id, .. }) => assert_eq!(id, "sX"),
            other => panic!("expected MissingSample, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_gene_and_negative_tpm_rejected() {
        let expr = write_tmp(
            "expr-dup.tsv",
            "gene_id\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t1\t2\t3\t4\t5\t6\ng1\t1\t2\t3\t4\t5\t6\n",
        );
        let meta = write_tmp("meta-dup.tsv", &META_6.replace(" s", "s"));
        assert!(matches!(ingest(&expr, &meta, Units::Tpm), Err(Error::DuplicateGene(_))));

        let expr = write_tmp(
            "expr-neg.tsv",
            "gene_id\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t1\t-2\t3\t4\t5\t6\n",
        );
        assert!(matches!(ingest(&expr, &meta, Units::Tpm), Err(Error::UnitsMismatch(_))));
    }

    #[test]
    fn comma_delimited_and_too_few_times() {
        let expr = write_tmp("expr.csv", "gene,s1,s2,s3,s4\ng1,1,2,3,4\n");
        let meta = write_tmp(
            "meta.csv",
            "sample_id,condition,time\ns1,A,0\ns2,A,8\ns3,B,0\ns4,B,8\n",
        );
        match ingest(&expr, &meta, Units::Tpm) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("distinct time")),
            other => panic!("expected InvalidInput, got {other:?}"),
        }
    }

    #[test]
    fn preprocess_filter_and_transform() {
        let gene_ids = vec!["zero".into(), "exactly_one".into(), "three".into(), "mixed".into()];
        #[rustfmt::skip]
        let values = vec![
            0.0, 0.0, 0.0, 0.0, // dropped: never > 1
            1.0, 1.0, 1.0, 1.0, // dropped: strict inequality
            3.0, 3.0, 3.0, 3.0, // kept: log2(4) = 2
            5.0, 0.5, 9.0, 0.0, // kept: above in half the samples
        ];
        let ds = Dataset {
            matrix: ExpressionMatrix::new(gene_ids, values, 4),
            meta: vec![],
            units: Units::Tpm,
        };
        let (out, summary) = preprocess(ds);
        assert_eq!(summary.genes_in, 4);
        assert_eq!(summary.genes_retained, 2);
        assert!(!summary.noop);
        assert_eq!(out.matrix.gene_ids, vec!["three".to_string(), "mixed".to_string()]);
        assert!(out.matrix.row(0).iter().all(|&v| (v - 2.0).abs() < 1e-15));
        assert_eq!(out.units, Units::Log);

        // log input is untouched
        let ds = Dataset {
            matrix: ExpressionMatrix::new(vec!["g".into()], vec![0.0, 0.0], 2),
            meta: vec![],
            units: Units::Log,
        };
        let (out, summary) = preprocess(ds);
        assert!(summary.noop);
        assert_eq!(out.matrix.n_genes(), 1);
    }
}
