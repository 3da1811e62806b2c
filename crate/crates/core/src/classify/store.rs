//! Append-only label store: one JSON record per line keyed by message id.
//! Committed records survive crashes; a torn trailing line is discarded on
//! reload so the next append starts clean.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{ClassifyError, ToxicityLabel};

pub struct LabelStore {
    path: PathBuf,
    writer: BufWriter<File>,
    records: HashMap<String, ToxicityLabel>,
}

impl LabelStore {
    /// Opens (creating if needed) a store and loads every committed record.
    ///
    /// A final partial line — the footprint of a crash mid-append — is
    /// truncated away. Garbage in the middle of the file is corruption.
    pub fn open(path: &Path) -> Result<Self, ClassifyError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut records = HashMap::new();
        let mut good_end: u64 = 0;
        let mut torn_tail = false;
        if path.exists() {
            let file = File::open(path)?;
            let mut reader = BufReader::new(file);
            let mut lineno = 0usize;
            let mut buf = String::new();
            loop {
                buf.clear();
                let read = reader.read_line(&mut buf)?;
                if read == 0 {
                    break;
                }
                lineno += 1;
                let complete = buf.ends_with('\n');
                match serde_json::from_str::<ToxicityLabel>(buf.trim_end()) {
                    Ok(label) => {
                        if !complete {
                            // Record parsed but the newline never landed;
                            // treat as uncommitted.
                            torn_tail = true;
                            break;
                        }
                        if let Err(detail) = label.check() {
                            return Err(ClassifyError::StoreCorrupt {
                                line: lineno,
                                detail,
                            });
                        }
                        if records.insert(label.message_id.clone(), label).is_some() {
                            return Err(ClassifyError::StoreCorrupt {
                                line: lineno,
                                detail: "duplicate message_id".into(),
                            });
                        }
                        good_end += read as u64;
                    }
                    Err(e) => {
                        let at_eof = reader.fill_buf()?.is_empty();
                        if at_eof {
                            torn_tail = true;
                            break;
                        }
                        return Err(ClassifyError::StoreCorrupt {
                            line: lineno,
                            detail: e.to_string(),
                        });
                    }
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn_tail {
            // Append mode ignores seeks, so truncate through a fresh handle.
            drop(file);
            let trunc = OpenOptions::new().write(true).open(path)?;
            trunc.set_len(good_end)?;
            trunc.sync_all()?;
            file = OpenOptions::new().append(true).open(path)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, message_id: &str) -> bool {
        self.records.contains_key(message_id)
    }

    pub fn get(&self, message_id: &str) -> Option<&ToxicityLabel> {
        self.records.get(message_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToxicityLabel> {
        self.records.values()
    }

    /// Appends and flushes one record. A message id may be committed once.
    pub fn append(&mut self, label: &ToxicityLabel) -> Result<(), ClassifyError> {
        if self.records.contains_key(&label.message_id) {
            return Err(ClassifyError::StoreCorrupt {
                line: 0,
                detail: format!("message_id {} already committed", label.message_id),
            });
        }
        let line = serde_json::to_string(label).map_err(|e| ClassifyError::StoreCorrupt {
            line: 0,
            detail: e.to_string(),
        })?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.records.insert(label.message_id.clone(), label.clone());
        Ok(())
    }
}
