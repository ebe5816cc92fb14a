use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use selftrain::classifier::save_checkpoint;
use selftrain::data::Dataset;
use selftrain::ingest::{gen_synthetic, load_csv, load_stl10, write_csv, HiddenLabel, HiddenLabels};
use selftrain::metrics::{format_report, rows_to_tsv};
use selftrain::pipeline::{mode_configs, run_experiment_observed, AuditRow, ExperimentBlock, ExperimentMatrix, IterationOutcome};

use crate::config::{ModeSelection, ReportFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::journal::{matrix_from_records, read_journal, write_record, JournalRecord, JOURNAL_SCHEMA};

/// Caps the worker pool; unset means one worker per core.
pub const THREADS_ENV: &str = "SELFTRAIN_THREADS";

pub const LABELED_CSV: &str = "labeled.csv";
pub const UNLABELED_CSV: &str = "unlabeled.csv";
pub const TEST_CSV: &str = "test.csv";
pub const HIDDEN_CSV: &str = "hidden_labels.csv";
pub const JOURNAL_FILE: &str = "journal.jsonl";

pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot configure worker pool: {e}")))
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| output_err(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct HiddenRow {
    origin_id: u64,
    class: usize,
    ood: bool,
}

fn write_hidden(hidden: &HiddenLabels, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (&origin_id, h) in hidden {
        w.serialize(HiddenRow { origin_id, class: h.class, ood: h.ood }).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

fn read_hidden(path: &Path) -> Result<HiddenLabels> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut hidden = HiddenLabels::new();
    for (i, row) in r.deserialize::<HiddenRow>().enumerate() {
        let row = row.map_err(|e| CliError::data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        hidden.insert(row.origin_id, HiddenLabel { class: row.class, ood: row.ood });
    }
    Ok(hidden)
}

#[derive(Debug, Clone)]
pub struct GenSummary {
    pub dir: PathBuf,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub ood: usize,
}

/// Writes the synthetic splits as CSV plus the hidden-label side table.
/// Origin ids are consecutive across labeled, unlabeled, test, so a `[data.csv]`
/// config pointing at these files reproduces them exactly.
pub fn cmd_gen_data(config_path: &Path) -> Result<GenSummary> {
    let config = RunConfig::load(config_path)?;
    let spec = config.data.synthetic.as_ref().ok_or_else(|| CliError::config("gen-data needs a [data.synthetic] section"))?;
    let data = gen_synthetic(spec)?;
    let dir = config.output.data_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| output_err(&dir, e))?;
    for (name, set, labels) in [(LABELED_CSV, &data.labeled, true), (UNLABELED_CSV, &data.unlabeled, false), (TEST_CSV, &data.test, true)] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write_csv(set, &mut w, labels).map_err(|e| output_err(&path, e))?;
        w.flush().map_err(|e| output_err(&path, e))?;
    }
    write_hidden(&data.hidden, &dir.join(HIDDEN_CSV))?;
    Ok(GenSummary {
        dir,
        labeled: data.labeled.len(),
        unlabeled: data.unlabeled.len(),
        test: data.test.len(),
        ood: data.hidden.values().filter(|h| h.ood).count(),
    })
}

pub struct LoadedData {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
    pub hidden: Option<HiddenLabels>,
}

pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    if let Some(spec) = &config.data.synthetic {
        let d = gen_synthetic(spec)?;
        return Ok(LoadedData { labeled: d.labeled, unlabeled: d.unlabeled, test: d.test, hidden: Some(d.hidden) });
    }
    if let Some(c) = &config.data.csv {
        let labeled = load_csv(&c.labeled, true, 0)?;
        let unlabeled = load_csv(&c.unlabeled, false, labeled.len() as u64)?;
        let test = load_csv(&c.test, true, (labeled.len() + unlabeled.len()) as u64)?;
        let num_classes = c.num_classes.unwrap_or(labeled.num_classes().max(test.num_classes()));
        let hidden = c.hidden_labels.as_deref().map(read_hidden).transpose()?;
        return Ok(LoadedData {
            labeled: labeled.with_num_classes(num_classes)?,
            unlabeled,
            test: test.with_num_classes(num_classes)?,
            hidden,
        });
    }
    let s = config.data.stl10.as_ref().expect("validated: one data source");
    let labeled = load_stl10(&s.train_images, Some(&s.train_labels), 0)?;
    let unlabeled = load_stl10(&s.unlabeled_images, None, labeled.len() as u64)?;
    let test = load_stl10(&s.test_images, Some(&s.test_labels), (labeled.len() + unlabeled.len()) as u64)?;
    Ok(LoadedData { labeled, unlabeled, test, hidden: None })
}

fn write_audit(rows: &[AuditRow], k: usize, c: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["origin_id".to_string()];
    header.extend((1..=k).map(|j| format!("member{j}_max_prob")));
    header.extend((0..c).map(|j| format!("mean_prob_{j}")));
    header.extend(["entropy".to_string(), "pseudo_label".to_string()]);
    w.write_record(&header).map_err(|e| output_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.origin_id.to_string()];
        rec.extend(r.member_max_probs.iter().map(f64::to_string));
        rec.extend(r.mean_probs.iter().map(f64::to_string));
        rec.extend([r.entropy.to_string(), r.pseudo_label.to_string()]);
        w.write_record(&rec).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report_text: String,
    pub journal_path: PathBuf,
    pub journal_sha256: String,
}

/// Runs the configured experiment(s) and writes into `out`:
/// `journal.jsonl`, `audit/<experiment>-chain<j>-iter<i>.csv`,
/// `models/<experiment>-chain<j>-member<m>.json` (final round) and
/// `report.txt` / `report.tsv`.
pub fn cmd_run(config_path: &Path, out: &Path) -> Result<RunSummary> {
    let config = RunConfig::load(config_path)?;
    let data = load_data(&config)?;
    let (d, c) = (data.labeled.feature_dim(), data.labeled.num_classes());
    let base = config.experiment_config(d, c)?;
    let plan = match config.mode_selection()? {
        ModeSelection::All => mode_configs(&base),
        ModeSelection::Single(mode) => vec![(mode, vec![base])],
    };
    let digest = config.digest();

    for sub in ["audit", "models"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| output_err(&dir, e))?;
    }
    let journal_path = out.join(JOURNAL_FILE);
    let mut journal = create(&journal_path)?;
    let mut matrix = ExperimentMatrix::default();

    for (mode, configs) in plan {
        let mut block = ExperimentBlock { mode, chains: Vec::new() };
        for (chain, ec) in configs.iter().enumerate() {
            let mut io_error: Option<CliError> = None;
            let mut observe = |o: &IterationOutcome| {
                if io_error.is_some() {
                    return;
                }
                let record = JournalRecord {
                    schema: JOURNAL_SCHEMA,
                    config_digest: digest.clone(),
                    experiment: mode,
                    chain,
                    result: o.result.clone(),
                };
                let audit = out.join("audit").join(format!("{mode}-chain{chain}-iter{}.csv", o.result.iteration));
                let res = write_record(&mut journal, &record)
                    .map_err(|e| output_err(&journal_path, e))
                    .and_then(|_| write_audit(&o.audit_rows(), o.models.len(), c, &audit));
                io_error = res.err();
            };
            let run = run_experiment_observed(&data.labeled, &data.unlabeled, &data.test, ec, data.hidden.as_ref(), &mut observe)?;
            if let Some(e) = io_error {
                return Err(e);
            }
            for (j, model) in run.final_models.iter().enumerate() {
                let path = out.join("models").join(format!("{mode}-chain{chain}-member{}.json", j + 1));
                save_checkpoint(model, &path).map_err(|e| output_err(&path, e))?;
            }
            block.chains.push(run.results);
        }
        matrix.blocks.push(block);
    }
    journal.flush().map_err(|e| output_err(&journal_path, e))?;
    drop(journal);

    let report = format_report(&matrix);
    for format in &config.output.formats {
        let (name, body) = match format {
            ReportFormat::Text => ("report.txt", report.text.clone()),
            ReportFormat::Tsv => ("report.tsv", rows_to_tsv(&report.rows)),
        };
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| output_err(&path, e))?;
    }
    let bytes = fs::read(&journal_path).map_err(|e| output_err(&journal_path, e))?;
    Ok(RunSummary { report_text: report.text, journal_sha256: hex::encode(Sha256::digest(&bytes)), journal_path })
}

/// Tables rebuilt from a journal alone.
pub fn cmd_report(journal_path: &Path) -> Result<String> {
    let records = read_journal(journal_path)?;
    let matrix = matrix_from_records(&records)?;
    Ok(format_report(&matrix).text)
}
