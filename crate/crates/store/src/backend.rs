//! Byte-level storage under the log. The store only ever reads the whole
//! log, appends to it, or truncates it.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;

pub trait Backend: Send {
    fn load(&mut self) -> io::Result<Vec<u8>>;
    fn append(&mut self, bytes: &[u8]) -> io::Result<()>;
    fn truncate(&mut self, len: u64) -> io::Result<()>;
}

#[derive(Debug)]
pub struct FileBackend {
    file: File,
}

impl FileBackend {
    pub fn open(path: &Path, writable: bool) -> io::Result<Self> {
        let file = if writable {
            OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?
        } else {
            File::open(path)?
        };
        Ok(FileBackend { file })
    }
}

impl Backend for FileBackend {
    fn load(&mut self) -> io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.file.seek(SeekFrom::Start(0))?;
        self.file.read_to_end(&mut buf)?;
        Ok(buf)
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.seek(SeekFrom::End(0))?;
        self.file.write_all(bytes)?;
        self.file.sync_data()
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.file.set_len(len)?;
        self.file.sync_data()
    }
}

/// In-memory log. Clones share the same buffer, which lets a test "reopen"
/// a store over the bytes a previous instance left behind.
#[derive(Debug, Clone, Default)]
pub struct MemoryBackend {
    buf: Arc<Mutex<Vec<u8>>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.buf.lock().clone()
    }
}

impl Backend for MemoryBackend {
    fn load(&mut self) -> io::Result<Vec<u8>> {
        Ok(self.buf.lock().clone())
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.buf.lock().extend_from_slice(bytes);
        Ok(())
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.buf.lock().truncate(len as usize);
        Ok(())
    }
}

/// Fault injector: once the byte budget runs out, an append writes only the
/// bytes that still fit and then fails, like a crash mid-write. Truncation
/// can be made to fail too, so the torn bytes stay behind.
#[derive(Debug)]
pub struct FailingBackend<B> {
    inner: B,
    budget: Arc<Mutex<Option<usize>>>,
    fail_truncate: bool,
}

impl<B: Backend> FailingBackend<B> {
    pub fn new(inner: B) -> Self {
        FailingBackend {
            inner,
            budget: Arc::new(Mutex::new(None)),
            fail_truncate: false,
        }
    }

    pub fn failing_truncate(mut self) -> Self {
        self.fail_truncate = true;
        self
    }

    /// Handle for arming the fault after the store has opened.
    pub fn budget_handle(&self) -> Arc<Mutex<Option<usize>>> {
        Arc::clone(&self.budget)
    }
}

impl<B: Backend> Backend for FailingBackend<B> {
    fn load(&mut self) -> io::Result<Vec<u8>> {
        self.inner.load()
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        let mut budget = self.budget.lock();
        match *budget {
            Some(left) if left < bytes.len() => {
                self.inner.append(&bytes[..left])?;
                *budget = Some(0);
                Err(io::Error::other("injected write failure"))
            }
            Some(left) => {
                *budget = Some(left - bytes.len());
                self.inner.append(bytes)
            }
            None => self.inner.append(bytes),
        }
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        if self.fail_truncate {
            return Err(io::Error::other("injected truncate failure"));
        }
        self.inner.truncate(len)
    }
}
