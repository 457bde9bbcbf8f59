//! Where ledger lines go. Every sink appends one line per record and
//! reports failure instead of silently dropping it.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

pub trait LedgerSink: Send {
    /// Appends `line` plus a newline; durable when this returns `Ok`.
    fn append(&mut self, line: &str) -> io::Result<()>;

    fn seal(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps lines in memory; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    lines: Arc<Mutex<Vec<String>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self) -> String {
        let lines = self.lines.lock().expect("memory sink poisoned");
        lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

impl LedgerSink for MemorySink {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.lines
            .lock()
            .expect("memory sink poisoned")
            .push(line.to_string());
        Ok(())
    }
}

/// Wraps another sink and fails every append while switched off.
pub struct SwitchableSink {
    inner: Box<dyn LedgerSink>,
    available: Arc<AtomicBool>,
}

impl SwitchableSink {
    pub fn new(inner: Box<dyn LedgerSink>) -> (Self, Arc<AtomicBool>) {
        let available = Arc::new(AtomicBool::new(true));
        (
            Self {
                inner,
                available: available.clone(),
            },
            available,
        )
    }
}

impl LedgerSink for SwitchableSink {
    fn append(&mut self, line: &str) -> io::Result<()> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(io::Error::other("ledger storage unavailable"));
        }
        self.inner.append(line)
    }

    fn seal(&mut self) -> io::Result<()> {
        self.inner.seal()
    }
}

/// Appends to a JSONL file, syncing after every line. Before each append
/// the file tail is compared with what this sink last wrote; any outside
/// modification fails the append with `ErrorKind::InvalidData`.
#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    file: File,
    len: u64,
    last_line: Vec<u8>,
}

impl FileSink {
    /// Opens (creating if needed) and returns the sink plus the existing contents.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<u8>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut existing = Vec::new();
        file.read_to_end(&mut existing)?;
        let last_line = match existing.strip_suffix(b"\n") {
            Some(body) => {
                let start = body.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
                existing[start..].to_vec()
            }
            None => Vec::new(),
        };
        let sink = Self {
            path: path.to_path_buf(),
            file,
            len: existing.len() as u64,
            last_line,
        };
        Ok((sink, existing))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn check_tail(&mut self) -> io::Result<()> {
        let actual = self.file.metadata()?.len();
        if actual != self.len {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "ledger file length changed from {} to {actual} bytes underneath the writer",
                    self.len
                ),
            ));
        }
        if !self.last_line.is_empty() {
            let mut tail = vec![0u8; self.last_line.len()];
            self.file
                .seek(SeekFrom::Start(self.len - tail.len() as u64))?;
            self.file.read_exact(&mut tail)?;
            if tail != self.last_line {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "ledger tail was modified underneath the writer",
                ));
            }
        }
        Ok(())
    }
}

impl LedgerSink for FileSink {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.check_tail()?;
        let mut bytes = Vec::with_capacity(line.len() + 1);
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
        self.file.write_all(&bytes)?;
        self.file.sync_data()?;
        self.len += bytes.len() as u64;
        self.last_line = bytes;
        Ok(())
    }

    fn seal(&mut self) -> io::Result<()> {
        self.file.flush()?;
        self.file.sync_all()
    }
}
