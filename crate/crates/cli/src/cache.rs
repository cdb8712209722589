//! On-disk cache of distance matrices and embeddings keyed by content hash.
//!
//! Entries are written to a temporary name and renamed into place, so an
//! interrupted run never leaves a truncated entry behind. Unreadable entries
//! are treated as misses.

use std::env;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mstates_core::correlation::ReturnTable;
use mstates_core::formats::{read_distances, read_embedding_bin, write_distances, write_embedding_bin};
use mstates_core::geometry::{Embedding, FrameDistanceMatrix, MdsConfig, MdsInit};
use sha2::{Digest, Sha256};

pub const CACHE_ENV: &str = "MS_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    /// `$MS_CACHE_DIR`, else `$XDG_CACHE_HOME/mstates`, else
    /// `~/.cache/mstates`, else `<out>/.mstates-cache`.
    pub fn from_env(out: &Path) -> Self {
        let non_empty = |k: &str| env::var_os(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        let dir = non_empty(CACHE_ENV)
            .or_else(|| non_empty("XDG_CACHE_HOME").map(|p| p.join("mstates")))
            .or_else(|| non_empty("HOME").map(|p| p.join(".cache").join("mstates")))
            .unwrap_or_else(|| out.join(".mstates-cache"));
        Cache { dir }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{key}.{ext}"))
    }

    pub fn load_distances(&self, key: &str) -> Option<FrameDistanceMatrix> {
        let file = File::open(self.entry(key, "msd")).ok()?;
        match read_distances(BufReader::new(file)) {
            Ok(d) => Some(d),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}.msd: {e}");
                None
            }
        }
    }

    pub fn store_distances(&self, key: &str, dist: &FrameDistanceMatrix) {
        self.store(key, "msd", |w| write_distances(dist, w));
    }

    pub fn load_embedding(&self, key: &str) -> Option<Embedding> {
        let file = File::open(self.entry(key, "mse")).ok()?;
        match read_embedding_bin(BufReader::new(file)) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}.mse: {e}");
                None
            }
        }
    }

    pub fn store_embedding(&self, key: &str, emb: &Embedding) {
        self.store(key, "mse", |w| write_embedding_bin(emb, w));
    }

    /// Cache writes are best effort: failures are logged, never fatal.
    fn store(&self, key: &str, ext: &str, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) {
        let target = self.entry(key, ext);
        let tmp = self.dir.join(format!("{key}.{ext}.tmp{}", std::process::id()));
        let result = fs::create_dir_all(&self.dir)
            .and_then(|_| File::create(&tmp))
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                write(&mut w)?;
                w.flush()
            })
            .and_then(|_| fs::rename(&tmp, &target));
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            log::warn!("cannot write cache entry {}: {e}", target.display());
        }
    }
}

/// Hash of the aligned return table: tickers, dates and every value's bits.
pub fn data_key(returns: &ReturnTable) -> String {
    let mut h = Sha256::new();
    h.update(b"mstates-returns-v1");
    h.update((returns.n_instruments() as u64).to_le_bytes());
    for inst in returns.instruments() {
        h.update((inst.ticker.len() as u64).to_le_bytes());
        h.update(inst.ticker.as_bytes());
    }
    h.update((returns.n_dates() as u64).to_le_bytes());
    for d in returns.dates() {
        h.update(d.format("%Y-%m-%d").to_string().as_bytes());
    }
    for i in 0..returns.n_instruments() {
        for v in returns.series(i) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn distance_key(data_key: &str, epoch_len: usize, shift: usize, epsilon: f64) -> String {
    let mut h = Sha256::new();
    h.update(b"mstates-distances-v1");
    h.update(data_key.as_bytes());
    h.update((epoch_len as u64).to_le_bytes());
    h.update((shift as u64).to_le_bytes());
    h.update(epsilon.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

pub fn embedding_key(distance_key: &str, mds: &MdsConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"mstates-embedding-v1");
    h.update(distance_key.as_bytes());
    for v in [mds.dim as u64, mds.n_restarts as u64, mds.max_iter as u64, mds.seed] {
        h.update(v.to_le_bytes());
    }
    h.update(mds.tol.to_bits().to_le_bytes());
    h.update(match mds.init {
        MdsInit::Random => b"random".as_slice(),
        MdsInit::ClassicalWarmStart => b"classical".as_slice(),
    });
    hex::encode(h.finalize())
}
