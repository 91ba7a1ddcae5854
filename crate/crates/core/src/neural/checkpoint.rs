use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ParamLayout;

const MAGIC: &[u8; 8] = b"NGSCKPT1";

/// One named run of values in the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub len: usize,
}

/// JSON header of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layout: ParamLayout,
    pub sections: Vec<Section>,
    /// Free-form hyperparameters and schedule state.
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Binary checkpoint: magic, header length (u64 LE), JSON header, then each
/// section's values as little-endian f64 in header order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payload: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(layout: ParamLayout, meta: serde_json::Value) -> Self {
        Self {
            header: CheckpointHeader {
                layout,
                sections: Vec::new(),
                meta,
            },
            payload: Vec::new(),
        }
    }

    pub fn push_section(&mut self, name: &str, values: Vec<f64>) {
        self.header.sections.push(Section {
            name: name.to_string(),
            len: values.len(),
        });
        self.payload.push(values);
    }

    pub fn section(&self, name: &str) -> Option<&[f64]> {
        self.header
            .sections
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.payload[i].as_slice())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for values in &self.payload {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        let mut payload = Vec::with_capacity(header.sections.len());
        let mut buf = [0u8; 8];
        for s in &header.sections {
            let mut values = Vec::with_capacity(s.len);
            for _ in 0..s.len {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Format(format!("truncated section {}", s.name)))?;
                values.push(f64::from_le_bytes(buf));
            }
            payload.push(values);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint payload".into()));
        }
        Ok(Self { header, payload })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
