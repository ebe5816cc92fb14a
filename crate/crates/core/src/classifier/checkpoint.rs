//! Versioned JSON checkpoints. Floats are written in shortest round-trip form
//! and parsed exactly, so save/load is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "selftrain-model";

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: TrainedModel,
}

pub fn write_checkpoint<W: Write>(model: &TrainedModel, writer: W) -> Result<()> {
    let env = Envelope { format: FORMAT.into(), version: CHECKPOINT_VERSION, model: model.clone() };
    serde_json::to_writer(writer, &env).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<TrainedModel> {
    let env: Envelope = serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if env.format != FORMAT || env.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format {} v{}", env.format, env.version)));
    }
    let TrainedModel { spec, parameters, train_log } = env.model;
    TrainedModel::new(spec, parameters, train_log).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
