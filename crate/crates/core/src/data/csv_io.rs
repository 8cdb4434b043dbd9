use std::collections::BTreeMap;
use std::path::Path;

use super::{CategoricalColumn, Covariate, ExperimentDataset, OUTCOME, TREATMENT, UNIT_ID};
use crate::error::{Error, Result};

/// Reads an experiment table. The assignment probability is the empirical
/// treated fraction.
pub fn load_csv(path: impl AsRef<Path>) -> Result<ExperimentDataset> {
    load_csv_with(path, None)
}

/// Reads an experiment table: UTF-8, comma separated, header row, required
/// columns `unit_id`, `treatment` (literal `0`/`1`) and `outcome`.
///
/// Any other column is a covariate: continuous if every value parses as a
/// finite number, categorical otherwise. Empty cells are rejected. Row numbers
/// in errors are file line numbers (the header is line 1).
pub fn load_csv_with(
    path: impl AsRef<Path>,
    assignment_probability: Option<f64>,
) -> Result<ExperimentDataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, message: String| Error::ParseError {
        path: path.to_owned(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_owned(),
                source,
            },
            other => parse_err(1, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let id_col = find(UNIT_ID)?;
    let t_col = find(TREATMENT)?;
    let y_col = find(OUTCOME)?;
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![id_col, t_col, y_col].contains(i))
        .map(|(i, h)| (i, h.to_owned()))
        .collect();
    {
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = headers.iter().find(|h| !seen.insert(*h)) {
            return Err(parse_err(1, format!("duplicate column `{dup}`")));
        }
    }

    let mut ids = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); cov_cols.len()];
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        ids.push(record[id_col].to_owned());
        treatment.push(match &record[t_col] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidTreatmentValue {
                    row: line,
                    value: other.to_owned(),
                })
            }
        });
        let y: f64 = record[y_col]
            .parse()
            .map_err(|_| parse_err(line, format!("outcome `{}` is not a number", &record[y_col])))?;
        if !y.is_finite() {
            return Err(parse_err(line, format!("outcome `{y}` is not finite")));
        }
        outcome.push(y);
        for ((col, name), values) in cov_cols.iter().zip(raw.iter_mut()) {
            let v = &record[*col];
            if v.is_empty() {
                return Err(parse_err(line, format!("empty value in column `{name}`")));
            }
            values.push(v.to_owned());
        }
    }

    let mut covariates = BTreeMap::new();
    for ((_, name), values) in cov_cols.into_iter().zip(raw) {
        let numeric: Option<Vec<f64>> = values
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        let cov = match numeric {
            Some(v) => Covariate::Continuous(v),
            None => Covariate::Categorical(CategoricalColumn::from_values(&values)),
        };
        covariates.insert(name, cov);
    }
    ExperimentDataset::new(ids, treatment, outcome, covariates, assignment_probability)
}

/// Writes a dataset in the format [`load_csv`] reads. Covariate columns follow
/// the required ones in name order.
pub fn write_csv(ds: &ExperimentDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_owned(),
            source,
        },
        other => Error::InvalidDataset(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec![UNIT_ID.to_owned(), TREATMENT.to_owned(), OUTCOME.to_owned()];
    header.extend(ds.covariates().keys().cloned());
    w.write_record(&header).map_err(io)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        row.clear();
        row.push(ds.unit_ids()[i].clone());
        row.push(if ds.treatment()[i] { "1" } else { "0" }.to_owned());
        row.push(ds.outcome()[i].to_string());
        for cov in ds.covariates().values() {
            row.push(match cov {
                Covariate::Categorical(c) => c.value(i).to_owned(),
                Covariate::Continuous(v) => v[i].to_string(),
            });
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}
