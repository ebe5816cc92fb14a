//! Run journal: one JSON object per line, one line per completed round.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use selftrain::pipeline::{ExperimentBlock, ExperimentMatrix, ExperimentMode, IterationResult};

use crate::error::{CliError, Result};

pub const JOURNAL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalRecord {
    pub schema: u32,
    pub config_digest: String,
    pub experiment: ExperimentMode,
    /// Index of the run within its experiment (one per model for the
    /// single-teacher mode, always 0 for ensembles).
    pub chain: usize,
    pub result: IterationResult,
}

pub fn write_record<W: Write>(mut writer: W, record: &JournalRecord) -> io::Result<()> {
    serde_json::to_writer(&mut writer, record)?;
    writer.write_all(b"\n")
}

pub fn parse_journal(text: &str) -> Result<Vec<JournalRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JournalRecord = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("corrupt journal record at line {}: {e}", i + 1)))?;
        if record.schema != JOURNAL_SCHEMA {
            return Err(CliError::data(format!(
                "journal record at line {} has schema {} (expected {JOURNAL_SCHEMA})",
                i + 1,
                record.schema
            )));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::data("journal contains no records"));
    }
    Ok(records)
}

pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read journal {}: {e}", path.display())))?;
    parse_journal(&text)
}

/// Regroups records by experiment (first-seen order) and chain.
pub fn matrix_from_records(records: &[JournalRecord]) -> Result<ExperimentMatrix> {
    let mut blocks: Vec<ExperimentBlock> = Vec::new();
    for (n, r) in records.iter().enumerate() {
        let block = match blocks.iter().position(|b| b.mode == r.experiment) {
            Some(i) => &mut blocks[i],
            None => {
                blocks.push(ExperimentBlock { mode: r.experiment, chains: Vec::new() });
                blocks.last_mut().expect("just pushed")
            }
        };
        if r.chain == block.chains.len() {
            block.chains.push(Vec::new());
        }
        let known = block.chains.len();
        let chain = block.chains.get_mut(r.chain).ok_or_else(|| {
            CliError::data(format!("journal record {}: chain {} appears before chain {known}", n + 1, r.chain))
        })?;
        if r.result.iteration != chain.len() {
            return Err(CliError::data(format!(
                "journal record {}: iteration {} out of order (expected {})",
                n + 1,
                r.result.iteration,
                chain.len()
            )));
        }
        chain.push(r.result.clone());
    }
    Ok(ExperimentMatrix { blocks })
}
