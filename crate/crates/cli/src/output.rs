//! Output directory bookkeeping and the `meta.json` provenance record.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "mstates";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writer that hashes everything passing through it.
struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a serde_json::Value,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'a str>,
}

/// Collects every file written for one command so `meta.json` can list them.
pub struct OutputDir {
    root: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = hash_file(path).map_err(|e| mstates_core::Error::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Writes `rel` under the output root through `body`.
    pub fn write<F, E>(&mut self, rel: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), E>,
        E: Into<WriteFailure>,
    {
        let path = self.root.join(rel);
        let io_err = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = File::create(&path).map_err(io_err)?;
        let mut w = HashingWriter {
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
        };
        match body(&mut w).map_err(Into::into) {
            Ok(()) => {}
            Err(WriteFailure::Io(e)) => return Err(io_err(e)),
            Err(WriteFailure::Core(e)) => return Err(e.into()),
        }
        w.flush().map_err(io_err)?;
        self.outputs.push(FileDigest {
            path: rel.to_string(),
            sha256: hex::encode(w.hasher.finalize()),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        self.write(rel, |w| -> io::Result<()> {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            w.write_all(b"\n")
        })
    }

    /// Writes `meta.json` last so it can list everything else.
    pub fn finish(self, command: &str, cfg: Option<&RunConfig>, seed: u64, generator: Option<&str>) -> CliResult<()> {
        let config = match cfg {
            Some(c) => serde_json::to_value(c.hashed()).map_err(mstates_core::Error::from)?,
            None => serde_json::Value::Null,
        };
        self.finish_with(command, &config, seed, generator)
    }

    pub fn finish_with(
        mut self,
        command: &str,
        config: &serde_json::Value,
        seed: u64,
        generator: Option<&str>,
    ) -> CliResult<()> {
        let canonical = serde_json::to_vec(config).map_err(mstates_core::Error::from)?;
        let meta = Meta {
            tool: TOOL,
            version: VERSION,
            command,
            seed,
            config_hash: hex::encode(Sha256::digest(&canonical)),
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            generator,
        };
        let body = serde_json::to_string_pretty(&meta).map_err(mstates_core::Error::from)?;
        let path = self.root.join("meta.json");
        fs::write(&path, body + "\n").map_err(|source| CliError::Write { path, source })?;
        self.outputs.clear();
        Ok(())
    }
}

/// Error produced inside an output body.
pub enum WriteFailure {
    Io(io::Error),
    Core(mstates_core::Error),
}

impl From<io::Error> for WriteFailure {
    fn from(e: io::Error) -> Self {
        WriteFailure::Io(e)
    }
}

impl From<mstates_core::Error> for WriteFailure {
    fn from(e: mstates_core::Error) -> Self {
        WriteFailure::Core(e)
    }
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
