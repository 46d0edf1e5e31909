//! Off-chain payload store backing the digest-based schemes.
//!
//! One JSON object per line, append-only, two record shapes:
//!
//! ```text
//! {"type":"data","deviceId":"…","sequence":1,"payload":"<base64>","digest":"<hex>"}
//! {"type":"window","windowId":1,"root":"<hex>","leaves":[{"deviceId":"…","sequence":1},…]}
//! ```
//!
//! The store keeps an in-memory index over the file and re-reads it on open,
//! so a run can be inspected or resumed from the file alone. An availability
//! flag simulates an outage: while unavailable every operation fails and
//! nothing is written, letting callers exercise their failure paths.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{base64_bytes, DeviceId, Digest32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeafRef {
    pub device_id: DeviceId,
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum StoreRecord {
    #[serde(rename = "data", rename_all = "camelCase")]
    Data {
        device_id: DeviceId,
        sequence: u64,
        #[serde(with = "base64_bytes")]
        payload: Vec<u8>,
        digest: Digest32,
    },
    #[serde(rename = "window", rename_all = "camelCase")]
    Window {
        window_id: u64,
        root: Digest32,
        leaves: Vec<LeafRef>,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("store file {path} line {line} is not a valid record: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("off-chain store is unavailable")]
    Unavailable,
    #[error("data record for device {device} sequence {sequence} already exists")]
    DuplicateData { device: DeviceId, sequence: u64 },
    #[error("window {0} already recorded")]
    DuplicateWindow(u64),
}

pub struct OffchainStore {
    path: PathBuf,
    file: File,
    records: Vec<StoreRecord>,
    data_index: BTreeMap<(DeviceId, u64), usize>,
    window_index: BTreeMap<u64, usize>,
    available: bool,
}

impl OffchainStore {
    /// Opens (or creates) the store file and indexes its records.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)?;
        let mut store = OffchainStore {
            path: path.to_path_buf(),
            file,
            records: Vec::new(),
            data_index: BTreeMap::new(),
            window_index: BTreeMap::new(),
            available: true,
        };
        let reader = BufReader::new(File::open(path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord =
                serde_json::from_str(&line).map_err(|source| StoreError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source,
                })?;
            store.index_record(record)?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Toggles the simulated outage.
    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    pub fn is_available(&self) -> bool {
        self.available
    }

    pub fn append_data(
        &mut self,
        device_id: DeviceId,
        sequence: u64,
        payload: Vec<u8>,
        digest: Digest32,
    ) -> Result<(), StoreError> {
        self.append(StoreRecord::Data {
            device_id,
            sequence,
            payload,
            digest,
        })
    }

    pub fn append_window(
        &mut self,
        window_id: u64,
        root: Digest32,
        leaves: Vec<LeafRef>,
    ) -> Result<(), StoreError> {
        self.append(StoreRecord::Window {
            window_id,
            root,
            leaves,
        })
    }

    fn append(&mut self, record: StoreRecord) -> Result<(), StoreError> {
        if !self.available {
            return Err(StoreError::Unavailable);
        }
        let line = serde_json::to_string(&record).expect("record serializes");
        // Index first: a duplicate must fail before touching the file.
        self.index_record(record)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }

    fn index_record(&mut self, record: StoreRecord) -> Result<(), StoreError> {
        let slot = self.records.len();
        match &record {
            StoreRecord::Data {
                device_id,
                sequence,
                ..
            } => {
                let key = (*device_id, *sequence);
                if self.data_index.contains_key(&key) {
                    return Err(StoreError::DuplicateData {
                        device: *device_id,
                        sequence: *sequence,
                    });
                }
                self.data_index.insert(key, slot);
            }
            StoreRecord::Window { window_id, .. } => {
                if self.window_index.contains_key(window_id) {
                    return Err(StoreError::DuplicateWindow(*window_id));
                }
                self.window_index.insert(*window_id, slot);
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn get_data(
        &self,
        device_id: DeviceId,
        sequence: u64,
    ) -> Result<Option<&StoreRecord>, StoreError> {
        if !self.available {
            return Err(StoreError::Unavailable);
        }
        Ok(self
            .data_index
            .get(&(device_id, sequence))
            .map(|&i| &self.records[i]))
    }

    pub fn get_window(&self, window_id: u64) -> Result<Option<&StoreRecord>, StoreError> {
        if !self.available {
            return Err(StoreError::Unavailable);
        }
        Ok(self.window_index.get(&window_id).map(|&i| &self.records[i]))
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
