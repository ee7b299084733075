//! File plumbing shared by every stage: atomic writes, CSV helpers, digests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::{Deref, DerefMut};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => {
            let line = e.position().map_or(0, |p| p.line());
            Error::malformed(path, line, e.to_string())
        }
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// A file that only appears under its final name once [`AtomicFile::commit`] succeeds.
pub struct AtomicFile {
    inner: BufWriter<File>,
    tmp: PathBuf,
    path: PathBuf,
}

impl AtomicFile {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = tmp_path(path);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self { inner: BufWriter::new(file), tmp, path: path.to_path_buf() })
    }

    pub fn commit(self) -> Result<()> {
        let file = self.inner.into_inner().map_err(|e| Error::io(&self.tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&self.tmp, e))?;
        drop(file);
        fs::rename(&self.tmp, &self.path).map_err(|e| Error::io(&self.path, e))
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// CSV writer over an [`AtomicFile`].
pub struct CsvOut {
    writer: csv::Writer<AtomicFile>,
    path: PathBuf,
}

pub fn csv_writer(path: &Path) -> Result<CsvOut> {
    Ok(CsvOut {
        writer: csv::Writer::from_writer(AtomicFile::create(path)?),
        path: path.to_path_buf(),
    })
}

impl CsvOut {
    pub fn row<I, T>(&mut self, record: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(record).map_err(|e| csv_err(&self.path, e))
    }

    pub fn record<S: serde::Serialize>(&mut self, record: S) -> Result<()> {
        self.writer.serialize(record).map_err(|e| csv_err(&self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        let path = self.path;
        let inner = self.writer.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        inner.commit()
    }
}

impl Deref for CsvOut {
    type Target = csv::Writer<AtomicFile>;
    fn deref(&self) -> &Self::Target {
        &self.writer
    }
}

impl DerefMut for CsvOut {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.writer
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = AtomicFile::create(path)?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.commit()
}

pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

/// Deserializes every row of a headed CSV file.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv_reader(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Shortest decimal rendering that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
