//! Delimited feature files.
//!
//! ```text
//! id,label,f0,f1,...,f{d-1}
//! a17,0,0.12,-0.40,...
//! b03,,0.98,0.05,...
//! ```
//!
//! `label` is `0`, `1` or empty for unlabeled rows. Every row must carry
//! exactly `d` finite, not-all-zero coordinates.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AuditError, Result};
use crate::types::{Collection, ControlSet, FeatureVector, Group, LabeledExample};

/// Rows of a feature file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<Option<Group>>,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(FeatureVector::dim)
    }

    pub fn from_labeled(examples: &[LabeledExample]) -> Self {
        FeatureTable {
            ids: (0..examples.len()).map(|i| i.to_string()).collect(),
            labels: examples.iter().map(|e| Some(e.z)).collect(),
            vectors: examples.iter().map(|e| e.x.clone()).collect(),
        }
    }

    pub fn from_collection(c: &Collection) -> Self {
        let labels = match c.hidden_labels() {
            Some(l) => l.iter().copied().map(Some).collect(),
            None => vec![None; c.len()],
        };
        FeatureTable {
            ids: (0..c.len()).map(|i| i.to_string()).collect(),
            labels,
            vectors: c.elements().to_vec(),
        }
    }

    /// All rows as labeled examples; fails on the first unlabeled row.
    pub fn labeled(&self) -> Result<Vec<LabeledExample>> {
        self.vectors
            .iter()
            .zip(&self.labels)
            .zip(&self.ids)
            .map(|((x, z), id)| match z {
                Some(z) => Ok(LabeledExample::new(x.clone(), *z)),
                None => Err(AuditError::Format(format!("row {id:?} has no label"))),
            })
            .collect()
    }

    /// The rows as a collection. Labels are kept as hidden labels only when
    /// every row has one.
    pub fn to_collection(&self) -> Result<Collection> {
        if self.labels.iter().all(Option::is_some) && !self.is_empty() {
            Collection::with_labels(self.vectors.clone(), self.labels.iter().flatten().copied().collect())
        } else {
            Collection::new(self.vectors.clone())
        }
    }

    pub fn to_control_set(&self) -> Result<ControlSet> {
        ControlSet::from_labeled(&self.labeled()?)
    }
}

fn parse_label(raw: &str) -> Result<Option<Group>> {
    match raw.trim() {
        "" => Ok(None),
        "0" => Ok(Some(Group::Zero)),
        "1" => Ok(Some(Group::One)),
        other => Err(AuditError::InvalidLabel(other.to_string())),
    }
}

pub fn read_features<R: Read>(reader: R, delimiter: u8) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(AuditError::Format(
            "header must start with `id,label` followed by at least one feature column".into(),
        ));
    }
    let dim = headers.len() - 2;
    for (j, name) in headers.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(AuditError::Format(format!(
                "feature column {j} is named {name:?}, expected \"f{j}\""
            )));
        }
    }

    let mut table = FeatureTable::default();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(AuditError::DimensionMismatch {
                expected: dim,
                found: record.len().saturating_sub(2),
            });
        }
        let values = record
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| AuditError::Format(format!("row {}: {v:?}: {e}", row + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let x = FeatureVector::new(values)?;
        if x.norm() == 0.0 {
            return Err(AuditError::ZeroVector);
        }
        table.ids.push(record[0].to_string());
        table.labels.push(parse_label(&record[1])?);
        table.vectors.push(x);
    }
    Ok(table)
}

pub fn read_feature_file<P: AsRef<Path>>(path: P, delimiter: u8) -> Result<FeatureTable> {
    read_features(File::open(path)?, delimiter)
}

pub fn write_features<W: Write>(writer: W, table: &FeatureTable, delimiter: u8) -> Result<()> {
    let dim = table.dim().unwrap_or(0);
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    for ((id, label), x) in table.ids.iter().zip(&table.labels).zip(&table.vectors) {
        let mut row = vec![
            id.clone(),
            label.map(|g| g.index().to_string()).unwrap_or_default(),
        ];
        // `{}` on f64 prints the shortest string that parses back exactly.
        row.extend(x.values().iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_feature_file<P: AsRef<Path>>(path: P, table: &FeatureTable, delimiter: u8) -> Result<()> {
    write_features(File::create(path)?, table, delimiter)
}
