//! CSV formats: labeled embeddings, verdict tables, K-sweeps and objective
//! comparisons. Floats are written in shortest round-trip form.

use std::fmt::Display;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::losses::Objective;
use crate::submodcheck::{LatticeCheckResult, Verdict};
use crate::synthlab::{SweepResult, SweepRow};
use crate::trainer::ComparisonRow;

pub const VERDICT_HEADER: [&str; 6] = ["objective", "n", "trials", "violations", "min_margin", "verdict"];
pub const SWEEP_HEADER: [&str; 4] = ["k", "objective", "kernel", "loss"];
pub const COMPARISON_HEADER: [&str; 6] =
    ["objective", "accuracy", "rare_class_recall", "intra_var", "inter_sep", "final_loss"];

pub fn embedding_header(dim: usize) -> Vec<String> {
    let mut h = vec!["id".to_string(), "label".to_string()];
    h.extend((0..dim).map(|c| format!("f{c}")));
    h
}

fn csv_error(e: csv::Error) -> ScoreError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ScoreError::Io(io.to_string()),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => ScoreError::Parse {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        kind => ScoreError::Parse { line, message: format!("{kind:?}") },
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Header row checked against `expected`, followed by the data rows with
/// their 1-based line numbers.
fn read_table<R: Read>(r: R, expected: &[String]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut records = reader(r).into_records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_error)?,
        None => return Err(ScoreError::Parse { line: 1, message: "missing header".into() }),
    };
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(ScoreError::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<T>
where
    T::Err: Display,
{
    let raw = rec.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|e| ScoreError::Parse { line, message: format!("column {name}: cannot parse {raw:?}: {e}") })
}

fn optional_field(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<Option<f64>> {
    match rec.get(idx).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => field(rec, idx, line, name).map(Some),
    }
}

fn header_len(bytes: &[u8]) -> Result<usize> {
    let mut r = reader(bytes);
    match r.records().next() {
        Some(rec) => Ok(rec.map_err(csv_error)?.len()),
        None => Err(ScoreError::Parse { line: 1, message: "missing header".into() }),
    }
}

pub fn write_embeddings<W: Write>(w: W, batch: &EmbeddingBatch) -> Result<()> {
    let mut out = writer(w);
    out.write_record(embedding_header(batch.dim())).map_err(csv_error)?;
    for i in 0..batch.len() {
        let mut rec = vec![batch.ids()[i].clone(), batch.labels()[i].to_string()];
        rec.extend(batch.vector(i).iter().map(|v| v.to_string()));
        out.write_record(&rec).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingBatch> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let width = header_len(&bytes)?;
    if width < 3 {
        return Err(ScoreError::Parse { line: 1, message: "header needs id, label and at least one feature column".into() });
    }
    let dim = width - 2;
    let rows = read_table(bytes.as_slice(), &embedding_header(dim))?;
    if rows.is_empty() {
        return Err(ScoreError::Parse { line: 2, message: "no data rows".into() });
    }
    let mut z = Array2::zeros((rows.len(), dim));
    let mut labels = Vec::with_capacity(rows.len());
    let mut ids = Vec::with_capacity(rows.len());
    for (r, (line, rec)) in rows.iter().enumerate() {
        ids.push(rec.get(0).unwrap_or("").to_string());
        let label: i64 = field(rec, 1, *line, "label")?;
        if label < 0 {
            return Err(ScoreError::Parse { line: *line, message: format!("label must be a nonnegative integer, got {label}") });
        }
        labels.push(label as usize);
        for c in 0..dim {
            let v: f64 = field(rec, c + 2, *line, &format!("f{c}"))?;
            if !v.is_finite() {
                return Err(ScoreError::Parse { line: *line, message: format!("column f{c} is not finite") });
            }
            z[[r, c]] = v;
        }
    }
    EmbeddingBatch::new(z, labels, ids)
}

pub fn read_embeddings_file(path: &Path) -> Result<EmbeddingBatch> {
    let file = File::open(path).map_err(|e| ScoreError::Io(format!("{}: {e}", path.display())))?;
    read_embeddings(file)
}

pub fn embeddings_to_string(batch: &EmbeddingBatch) -> Result<String> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, batch)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SWEEP_HEADER).map_err(csv_error)?;
    for row in rows {
        out.write_record([row.k.to_string(), row.objective.to_string(), row.kernel.to_string(), row.loss.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep<R: Read>(r: R) -> Result<SweepResult> {
    let header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = read_table(r, &header)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(SweepRow {
                k: field(&rec, 0, line, "k")?,
                objective: field(&rec, 1, line, "objective")?,
                kernel: field(&rec, 2, line, "kernel")?,
                loss: field(&rec, 3, line, "loss")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { rows })
}

/// One parsed verdict CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub objective: Objective,
    pub n: usize,
    pub trials: usize,
    pub violations: u64,
    pub min_margin: f64,
    pub verdict: Verdict,
}

impl From<&LatticeCheckResult> for VerdictRecord {
    fn from(r: &LatticeCheckResult) -> Self {
        Self {
            objective: r.objective,
            n: r.n,
            trials: r.trials,
            violations: r.violation_count,
            min_margin: r.min_margin,
            verdict: r.verdict,
        }
    }
}

pub fn write_verdicts<W: Write>(w: W, rows: &[VerdictRecord]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(VERDICT_HEADER).map_err(csv_error)?;
    for r in rows {
        out.write_record([
            r.objective.to_string(),
            r.n.to_string(),
            r.trials.to_string(),
            r.violations.to_string(),
            r.min_margin.to_string(),
            r.verdict.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_verdicts<R: Read>(r: R) -> Result<Vec<VerdictRecord>> {
    let header: Vec<String> = VERDICT_HEADER.iter().map(|s| s.to_string()).collect();
    read_table(r, &header)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(VerdictRecord {
                objective: field(&rec, 0, line, "objective")?,
                n: field(&rec, 1, line, "n")?,
                trials: field(&rec, 2, line, "trials")?,
                violations: field(&rec, 3, line, "violations")?,
                min_margin: field(&rec, 4, line, "min_margin")?,
                verdict: field(&rec, 5, line, "verdict")?,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_comparison<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(COMPARISON_HEADER).map_err(csv_error)?;
    for r in rows {
        out.write_record([
            r.objective.clone(),
            opt(r.accuracy),
            opt(r.rare_class_recall),
            opt(r.intra_var),
            opt(r.inter_sep),
            opt(r.final_loss),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_comparison<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    let header: Vec<String> = COMPARISON_HEADER.iter().map(|s| s.to_string()).collect();
    read_table(r, &header)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(ComparisonRow {
                objective: rec.get(0).unwrap_or("").to_string(),
                accuracy: optional_field(&rec, 1, line, "accuracy")?,
                rare_class_recall: optional_field(&rec, 2, line, "rare_class_recall")?,
                intra_var: optional_field(&rec, 3, line, "intra_var")?,
                inter_sep: optional_field(&rec, 4, line, "inter_sep")?,
                final_loss: optional_field(&rec, 5, line, "final_loss")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use ndarray::array;

    fn sample() -> EmbeddingBatch {
        EmbeddingBatch::new(array![[0.1, -2.5], [1e-300, 3.0]], vec![0, 4], vec!["a".into(), "b,c".into()]).unwrap()
    }

    #[test]
    fn embeddings_round_trip() {
        let b = sample();
        let text = embeddings_to_string(&b).unwrap();
        assert!(text.starts_with("id,label,f0,f1\n"));
        assert_eq!(read_embeddings(text.as_bytes()).unwrap(), b);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "id,label,f0\na,0,1.0\nb,1,oops\n";
        match read_embeddings(bad.as_bytes()) {
            Err(ScoreError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("f0"));
            }
            other => panic!("{other:?}"),
        }
        let ragged = "id,label,f0\na,0,1.0\nb,1\n";
        assert!(matches!(read_embeddings(ragged.as_bytes()), Err(ScoreError::Parse { line: 3, .. })));
        let negative = "id,label,f0\na,-1,1.0\n";
        assert!(matches!(read_embeddings(negative.as_bytes()), Err(ScoreError::Parse { line: 2, .. })));
        let header = "id,lbl,f0\na,0,1.0\n";
        assert!(matches!(read_embeddings(header.as_bytes()), Err(ScoreError::Parse { line: 1, .. })));
        let nan = "id,label,f0\na,0,NaN\n";
        assert!(matches!(read_embeddings(nan.as_bytes()), Err(ScoreError::Parse { line: 2, .. })));
        assert!(matches!(read_embeddings("".as_bytes()), Err(ScoreError::Parse { line: 1, .. })));
    }

    #[test]
    fn sweep_round_trip() {
        let rows = vec![
            SweepRow { k: 0, objective: Objective::Fl, kernel: KernelSpec::Cosine, loss: 87.02 },
            SweepRow { k: 7, objective: Objective::GcCf, kernel: KernelSpec::Rbf { bandwidth: 0.5 }, loss: -1.0 / 3.0 },
        ];
        let mut buf = Vec::new();
        write_sweep(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,objective,kernel,loss\n0,fl,cosine,87.02\n"));
        assert_eq!(read_sweep(buf.as_slice()).unwrap().rows, rows);
    }

    #[test]
    fn verdicts_round_trip() {
        let rows = vec![VerdictRecord {
            objective: Objective::SupCon,
            n: 6,
            trials: 3,
            violations: 12,
            min_margin: f64::NEG_INFINITY,
            verdict: Verdict::Violated,
        }];
        let mut buf = Vec::new();
        write_verdicts(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "objective,n,trials,violations,min_margin,verdict\nsupcon,6,3,12,-inf,violated\n");
        assert_eq!(read_verdicts(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn comparison_round_trip_with_failed_row() {
        let rows = vec![
            ComparisonRow {
                objective: "gc-cf@0.5".into(),
                accuracy: None,
                rare_class_recall: None,
                intra_var: None,
                inter_sep: None,
                final_loss: None,
            },
            ComparisonRow {
                objective: "fl".into(),
                accuracy: Some(0.9),
                rare_class_recall: Some(0.75),
                intra_var: Some(0.1),
                inter_sep: Some(1.5),
                final_loss: Some(-3.25),
            },
        ];
        let mut buf = Vec::new();
        write_comparison(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("objective,accuracy,rare_class_recall,intra_var,inter_sep,final_loss\ngc-cf@0.5,,,,,\n"));
        assert_eq!(read_comparison(buf.as_slice()).unwrap(), rows);
    }
}
