//! Line-oriented input and atomic output.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Seek, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

fn is_stdio(path: Option<&Path>) -> bool {
    path.is_none_or(|p| p.as_os_str() == "-")
}

pub fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let path = path.expect("checked above");
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

/// Input that can be read more than once. Stdin is spooled to a temporary
/// file first.
pub enum Rereadable {
    Path(PathBuf),
    Spooled(NamedTempFile),
}

impl Rereadable {
    pub fn new(path: Option<&Path>) -> Result<Self> {
        if !is_stdio(path) {
            return Ok(Rereadable::Path(path.expect("checked above").to_path_buf()));
        }
        let mut spool = NamedTempFile::new().context("cannot create spool file for stdin")?;
        io::copy(&mut io::stdin().lock(), spool.as_file_mut()).context("cannot spool stdin")?;
        Ok(Rereadable::Spooled(spool))
    }

    /// A fresh handle positioned at the start.
    pub fn open_file(&self) -> Result<File> {
        match self {
            Rereadable::Path(p) => {
                File::open(p).with_context(|| format!("cannot open {}", p.display()))
            }
            Rereadable::Spooled(f) => {
                let mut file = f.reopen().context("cannot reopen spool file")?;
                file.rewind()?;
                Ok(file)
            }
        }
    }

    pub fn open(&self) -> Result<Box<dyn BufRead>> {
        Ok(Box::new(BufReader::new(self.open_file()?)))
    }
}

/// Output sink. Files are written to a temporary sibling and renamed into
/// place by [`Output::commit`]; dropping an uncommitted output discards it.
pub enum Output {
    Stdout(BufWriter<io::Stdout>),
    File {
        writer: BufWriter<NamedTempFile>,
        target: PathBuf,
    },
}

impl Output {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        if is_stdio(path) {
            return Ok(Output::Stdout(BufWriter::new(io::stdout())));
        }
        let target = path.expect("checked above").to_path_buf();
        let dir = match target.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut builder = tempfile::Builder::new();
        // Temp files are private by default; the renamed output should not be.
        #[cfg(unix)]
        let permissions = std::fs::metadata(&target)
            .map(|m| m.permissions())
            .unwrap_or_else(|_| std::os::unix::fs::PermissionsExt::from_mode(0o644));
        #[cfg(unix)]
        builder.permissions(permissions);
        let tmp = builder
            .tempfile_in(&dir)
            .with_context(|| format!("cannot create temporary file in {}", dir.display()))?;
        Ok(Output::File {
            writer: BufWriter::new(tmp),
            target,
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        let w: &mut dyn Write = match self {
            Output::Stdout(w) => w,
            Output::File { writer, .. } => writer,
        };
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_all(&mut self, bytes: &[u8]) -> Result<()> {
        match self {
            Output::Stdout(w) => w.write_all(bytes)?,
            Output::File { writer, .. } => writer.write_all(bytes)?,
        }
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        match self {
            Output::Stdout(mut w) => w.flush().context("cannot write to stdout"),
            Output::File { writer, target } => {
                let tmp = writer.into_inner().map_err(|e| e.into_error())?;
                tmp.as_file().sync_all()?;
                tmp.persist(&target)
                    .with_context(|| format!("cannot move output into {}", target.display()))?;
                Ok(())
            }
        }
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut out = Output::create(Some(path))?;
    out.write_all(bytes)?;
    out.commit()
}

/// Emits one line-delimited JSON record on stderr.
pub fn report<T: serde::Serialize>(record: &T) {
    eprintln!("{}", lap_core::to_canonical_json(record));
}
