//! Dataset CSV and JSON formats.
//!
//! CSV header is `t,c,s,x1,...,xp`; an empty field means the value is absent.
//! Floats are written in Rust's shortest round-trip form, so load/save is
//! bit-exact. The JSON mirror is an array of `{"t"?, "c"?, "s", "x"}` objects.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, SubjectRecord};

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_opt(field: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|e| {
        Error::InvalidDataset(format!("row {row}, column {column}: `{field}`: {e}"))
    })
}

/// Mode inferred from the records: censoring is "observed" iff every labeled
/// subject carries a censoring time.
pub fn infer_c_observed(records: &[SubjectRecord]) -> bool {
    let mut labeled = records.iter().filter(|r| r.label).peekable();
    labeled.peek().is_some() && labeled.all(|r| r.censoring_time.is_some())
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "c".to_string(), "s".to_string()];
    header.extend((1..=dataset.dimension).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![
            fmt_opt(r.survival_time),
            fmt_opt(r.censoring_time),
            if r.label { "1" } else { "0" }.to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[..3] != ["t", "c", "s"] {
        return Err(Error::InvalidDataset(format!(
            "header must start with t,c,s; got {}",
            names.join(",")
        )));
    }
    for (j, name) in names[3..].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(Error::InvalidDataset(format!(
                "covariate column {} must be named x{}, got `{name}`",
                j + 4,
                j + 1
            )));
        }
    }
    let dimension = names.len() - 3;
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label = match rec.get(2).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::InvalidDataset(format!(
                    "row {row}: label must be 0 or 1, got {other:?}"
                )))
            }
        };
        let covariates = (3..rec.len())
            .map(|j| {
                parse_opt(&rec[j], row, names[j])?.ok_or_else(|| {
                    Error::InvalidDataset(format!("row {row}: covariate {} is empty", names[j]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SubjectRecord {
            survival_time: parse_opt(&rec[0], row, "t")?,
            censoring_time: parse_opt(&rec[1], row, "c")?,
            label,
            covariates,
            true_event: None,
        });
    }
    let c_observed = infer_c_observed(&records);
    Ok(Dataset::new(records, dimension, c_observed))
}

pub fn write_json<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &dataset.records)?;
    Ok(())
}

pub fn read_json<R: Read>(reader: R) -> Result<Dataset> {
    let records: Vec<SubjectRecord> = serde_json::from_reader(reader)?;
    let dimension = records.first().map_or(0, |r| r.covariates.len());
    let c_observed = infer_c_observed(&records);
    Ok(Dataset::new(records, dimension, c_observed))
}

/// Loads a dataset, choosing the format by extension (`.json`, else CSV).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e == "json") {
        read_json(reader)
    } else {
        read_csv(reader)
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "json") {
        write_json(dataset, &mut writer)?;
    } else {
        write_csv(dataset, &mut writer)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_record(p: usize) -> impl Strategy<Value = SubjectRecord> {
        (
            any::<bool>(),
            1e-300f64..1e6,
            prop::option::of(1e-300f64..1e6),
            prop::collection::vec(-1e6f64..1e6, p),
        )
            .prop_map(|(label, a, b, x)| {
                if label {
                    SubjectRecord::labeled(a, b, x)
                } else {
                    SubjectRecord::unlabeled(a, x)
                }
            })
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip_bit_exactly(records in prop::collection::vec(arb_record(3), 1..30)) {
            let d = Dataset::new(records, 3, false);
            let mut buf = Vec::new();
            write_csv(&d, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back.records, &d.records);
            prop_assert_eq!(back.dimension, 3);

            let mut buf = Vec::new();
            write_json(&d, &mut buf).unwrap();
            let back = read_json(buf.as_slice()).unwrap();
            prop_assert_eq!(&back.records, &d.records);
        }
    }

    #[test]
    fn reads_the_documented_layout() {
        let text = "t,c,s,x1,x2\n80,90,1,0.5,1\n,70,0,-1,2\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.dimension, 2);
        assert!(d.c_observed_for_labeled);
        assert_eq!(d.records[1].survival_time, None);
        assert_eq!(d.records[1].censoring_time, Some(70.0));

        let d = read_csv("t,c,s,x1\n80,,1,0.5\n".as_bytes()).unwrap();
        assert!(!d.c_observed_for_labeled);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_csv("a,b,c\n".as_bytes()).is_err());
        assert!(read_csv("t,c,s,x2\n1,2,1,0\n".as_bytes()).is_err());
        assert!(read_csv("t,c,s,x1\n1,2,2,0\n".as_bytes()).is_err());
        assert!(read_csv("t,c,s,x1\n1,abc,1,0\n".as_bytes()).is_err());
        assert!(read_json(r#"[{"s": 3, "x": []}]"#.as_bytes()).is_err());
    }
}
