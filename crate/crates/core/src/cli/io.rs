//! Dataset files: CSV with a header row, or JSON lines with one object per RCT.
//!
//! Every record has a `study_id`, one field per bias domain and an
//! `association`. Bias values are `0`/`1` or `low`/`high`; associations are
//! `0`/`1`/`2` or `negative`/`none`/`positive` (case-insensitive).

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::data::{AssociationLabels, BiasMatrix, Dataset, Provenance};
use crate::error::{McmaError, Result};

pub const STUDY_ID: &str = "study_id";
pub const ASSOCIATION: &str = "association";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl`/`.ndjson` map to JSON lines, everything else to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jsonl" | "ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

pub fn parse_bias(field: &str, raw: &str, line: usize) -> Result<u8> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "0" | "low" => Ok(0),
        "1" | "high" => Ok(1),
        other => Err(McmaError::DomainError(format!(
            "line {line}, field {field}: {other:?} is not a risk-of-bias value (0/1/low/high)"
        ))),
    }
}

pub fn parse_association(raw: &str, line: usize) -> Result<u8> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "0" | "negative" => Ok(0),
        "1" | "none" => Ok(1),
        "2" | "positive" => Ok(2),
        other => Err(McmaError::DomainError(format!(
            "line {line}, field {ASSOCIATION}: {other:?} is not an association (0/1/2/negative/none/positive)"
        ))),
    }
}

struct Rows {
    ids: Vec<String>,
    bias: Vec<Vec<u8>>,
    labels: Vec<u8>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            ids: Vec::new(),
            bias: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn into_dataset(self, domains: Vec<String>, path: &Path) -> Result<Dataset> {
        if self.labels.is_empty() {
            return Err(McmaError::Parse {
                line: 1,
                message: "no records".into(),
            });
        }
        Dataset::new(
            BiasMatrix::new(self.bias, domains)?,
            AssociationLabels::new(self.labels)?,
            self.ids,
            Provenance::Ingested {
                path: path.display().to_string(),
            },
        )
    }
}

/// Reads a dataset. With `domains = None` every column other than the study
/// id and association is a bias domain, in file order.
pub fn ingest(path: &Path, format: Format, domains: Option<&[String]>) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    match format {
        Format::Csv => ingest_csv(&text, domains, path),
        Format::Jsonl => ingest_jsonl(&text, domains, path),
    }
}

fn csv_error(e: csv::Error) -> McmaError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    McmaError::Parse {
        line,
        message: e.to_string(),
    }
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| McmaError::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

fn resolve_domains(keys: &[String], domains: Option<&[String]>) -> Vec<String> {
    match domains {
        Some(d) => d.to_vec(),
        None => keys
            .iter()
            .filter(|k| *k != STUDY_ID && *k != ASSOCIATION)
            .cloned()
            .collect(),
    }
}

pub fn ingest_csv(text: &str, domains: Option<&[String]>, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    let domains = resolve_domains(&header, domains);
    let id_col = column(&header, STUDY_ID)?;
    let label_col = column(&header, ASSOCIATION)?;
    let bias_cols = domains
        .iter()
        .map(|d| column(&header, d))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Rows::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.ids.push(record[id_col].to_string());
        rows.labels
            .push(parse_association(&record[label_col], line)?);
        let bias = bias_cols
            .iter()
            .zip(&domains)
            .map(|(&c, name)| parse_bias(name, &record[c], line))
            .collect::<Result<Vec<_>>>()?;
        rows.bias.push(bias);
    }
    rows.into_dataset(domains, path)
}

fn json_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn json_field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| McmaError::Parse {
        line,
        message: format!("missing field {name:?}"),
    })
}

pub fn ingest_jsonl(text: &str, domains: Option<&[String]>, path: &Path) -> Result<Dataset> {
    let mut rows = Rows::new();
    let mut resolved: Option<Vec<String>> = domains.map(<[String]>::to_vec);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| McmaError::Parse {
            line,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(McmaError::Parse {
                line,
                message: "expected a JSON object".into(),
            });
        };
        let names = resolved.get_or_insert_with(|| {
            let keys: Vec<String> = obj.keys().cloned().collect();
            resolve_domains(&keys, None)
        });
        let text_of = |name: &str| -> Result<String> {
            json_text(json_field(&obj, name, line)?).ok_or_else(|| {
                McmaError::DomainError(format!(
                    "line {line}, field {name}: expected a string or number"
                ))
            })
        };
        rows.ids.push(text_of(STUDY_ID)?);
        rows.labels
            .push(parse_association(&text_of(ASSOCIATION)?, line)?);
        let bias = names
            .iter()
            .map(|name| parse_bias(name, &text_of(name)?, line))
            .collect::<Result<Vec<_>>>()?;
        rows.bias.push(bias);
    }
    rows.into_dataset(resolved.unwrap_or_default(), path)
}

pub fn to_csv(dataset: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![STUDY_ID.to_string()];
    header.extend(dataset.bias.domain_names().iter().cloned());
    header.push(ASSOCIATION.into());
    w.write_record(&header)?;
    for (i, id) in dataset.study_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(dataset.bias.row(i).iter().map(u8::to_string));
        rec.push(dataset.labels.as_slice()[i].to_string());
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_jsonl(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for (i, id) in dataset.study_ids.iter().enumerate() {
        let mut obj = Map::new();
        obj.insert(STUDY_ID.into(), Value::from(id.clone()));
        for (name, &v) in dataset.bias.domain_names().iter().zip(dataset.bias.row(i)) {
            obj.insert(name.clone(), Value::from(v));
        }
        obj.insert(
            ASSOCIATION.into(),
            Value::from(dataset.labels.as_slice()[i]),
        );
        out.push_str(&serde_json::to_string(&obj)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(dataset)?,
        Format::Jsonl => to_jsonl(dataset)?,
    };
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIX: &str = "rob_random_seq,rob_allocation_concealment,rob_blinding_participants,\
                       rob_blinding_outcome,rob_incomplete_data,rob_selective_reporting";

    fn parse_csv(text: &str) -> Result<Dataset> {
        ingest_csv(text, None, Path::new("mem.csv"))
    }

    #[test]
    fn aliases_map_to_codes() {
        let text = format!(
            "study_id,{SIX},association\na,low,HIGH,0,1,low,high,positive\nb,1,1,1,0,0,0,none\n"
        );
        let ds = parse_csv(&text).unwrap();
        assert_eq!(ds.bias.row(0), &[0, 1, 0, 1, 0, 1]);
        assert_eq!(ds.labels.as_slice(), &[2, 1]);
        assert_eq!(ds.bias.domain_names()[0], "rob_random_seq");
    }

    #[test]
    fn missing_column_is_named() {
        let text = "study_id,rob_random_seq,association\na,0,1\n";
        let configured: Vec<String> = SIX.split(',').map(String::from).collect();
        match ingest_csv(text, Some(&configured), Path::new("x")) {
            Err(McmaError::Parse { message, .. }) => {
                assert!(message.contains("rob_allocation_concealment"))
            }
            other => panic!("{other:?}"),
        }
        match parse_csv("study_id,rob_a,rob_b\na,0,1\n") {
            Err(McmaError::Parse { message, .. }) => assert!(message.contains("association")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_report_line_and_field() {
        match parse_csv("study_id,rob_a,rob_b,association\na,0,1,1\nb,0,maybe,1\n") {
            Err(McmaError::DomainError(m)) => {
                assert!(m.contains("line 3") && m.contains("rob_b"), "{m}")
            }
            other => panic!("{other:?}"),
        }
        match parse_csv("study_id,rob_a,rob_b,association\na,0,1,1\nb,0,1\n") {
            Err(McmaError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match ingest_jsonl(
            "{\"study_id\":\"a\",\"rob_a\":0,\"association\":1}\nnot json\n",
            None,
            Path::new("x"),
        ) {
            Err(McmaError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsonl_keeps_key_order() {
        let text =
            "{\"study_id\":\"s1\",\"rob_z\":\"high\",\"rob_a\":0,\"association\":\"negative\"}\n\
                    {\"study_id\":\"s2\",\"rob_z\":0,\"rob_a\":1,\"association\":2}\n";
        let ds = ingest_jsonl(text, None, Path::new("x")).unwrap();
        assert_eq!(
            ds.bias.domain_names(),
            &["rob_z".to_string(), "rob_a".to_string()]
        );
        assert_eq!(ds.bias.row(0), &[1, 0]);
        assert_eq!(ds.labels.as_slice(), &[0, 2]);
        assert_eq!(
            ingest_jsonl(&to_jsonl(&ds).unwrap(), None, Path::new("x"))
                .unwrap()
                .bias,
            ds.bias
        );
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_csv("study_id,rob_a,association\n").is_err());
    }
}
