use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Example, OriginId};
use crate::error::{Error, Result};

/// Loads a comma-separated file of real-valued features. When `labeled`, the
/// final column is an integer class index. A first row whose first token is
/// not numeric is treated as a header and skipped.
pub fn load_csv(path: &Path, labeled: bool, first_id: OriginId) -> Result<Dataset> {
    read_csv(File::open(path)?, labeled, first_id)
}

pub fn read_csv<R: Read>(reader: R, labeled: bool, first_id: OriginId) -> Result<Dataset> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);

    let mut examples = Vec::new();
    let mut width: Option<usize> = None;
    let mut max_class: Option<usize> = None;
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && record[0].parse::<f64>().is_err() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(expected) if expected != record.len() => {
                return Err(Error::InconsistentColumns { row, expected, found: record.len() });
            }
            Some(_) => {}
        }
        let n_features = if labeled { record.len().saturating_sub(1) } else { record.len() };
        let features = record
            .iter()
            .take(n_features)
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { row, message: format!("column {}: not a finite number: {tok:?}", col + 1) })
            })
            .collect::<Result<Vec<f64>>>()?;
        let id = first_id + examples.len() as OriginId;
        let example = if labeled {
            let tok = &record[record.len() - 1];
            let class = tok.parse::<usize>().map_err(|_| Error::Parse {
                row,
                message: format!("label column: not a class index: {tok:?}"),
            })?;
            max_class = Some(max_class.map_or(class, |m| m.max(class)));
            Example::labeled(id, features, class)
        } else {
            Example::unlabeled(id, features)
        };
        examples.push(example);
    }
    let feature_dim = width.map_or(0, |w| if labeled { w - 1 } else { w });
    Dataset::new(examples, feature_dim, max_class.map_or(0, |c| c + 1))
}

/// Writes features (and labels, when requested) with full round-trip precision.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W, with_labels: bool) -> Result<()> {
    let mut wtr = ::csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut header: Vec<String> = (1..=dataset.feature_dim()).map(|i| format!("f{i}")).collect();
    if with_labels {
        header.push("label".into());
    }
    wtr.write_record(&header).map_err(csv_io)?;
    let mut fields = Vec::with_capacity(dataset.feature_dim() + 1);
    for ex in dataset {
        fields.clear();
        fields.extend(ex.features().iter().map(|v| v.to_string()));
        if with_labels {
            fields.push(ex.class().ok_or(Error::Unlabeled(ex.origin_id()))?.to_string());
        }
        wtr.write_record(&fields).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: ::csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
