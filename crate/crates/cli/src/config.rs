//! Run configuration: built-in defaults, then a `key = value` file, then
//! command-line flags. Flags always win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::Args;
use mstates_core::clustering::{default_epsilon_grid, default_k_range, DEFAULT_K_MIN, DEFAULT_N_INIT};
use mstates_core::correlation::{validate_epsilon, DEFAULT_EPOCH_LEN};
use mstates_core::geometry::{MdsConfig, MdsInit};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Flags shared by every pipeline subcommand. Each one may also be given in
/// the config file under the same name with `_` in place of `-`.
#[derive(Args, Debug, Clone, Default)]
pub struct PipelineArgs {
    /// Plain-text `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price CSV (`date,ticker,adj_close`)
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Universe CSV (`code,name,sector,abbrv`)
    #[arg(long)]
    pub universe: Option<PathBuf>,
    /// Read prices in wide format (`date,<ticker>,...`)
    #[arg(long)]
    pub wide: bool,
    /// First date to keep (YYYY-MM-DD)
    #[arg(long)]
    pub start: Option<String>,
    /// Last date to keep (YYYY-MM-DD)
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long)]
    pub epoch_len: Option<usize>,
    #[arg(long)]
    pub shift: Option<usize>,
    /// Power-map parameter for single-ε commands
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Comma-separated ε values for `scan`
    #[arg(long)]
    pub epsilon_grid: Option<String>,
    /// Cluster counts for `scan`: `1-10` or `2,4,6`
    #[arg(long)]
    pub k_range: Option<String>,
    /// Cluster count for `states`
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mds_dim: Option<usize>,
    #[arg(long)]
    pub mds_restarts: Option<usize>,
    #[arg(long)]
    pub mds_max_iter: Option<usize>,
    #[arg(long)]
    pub mds_tol: Option<f64>,
    /// `random` or `classical`
    #[arg(long)]
    pub mds_init: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write CSV exports (frames, distances)
    #[arg(long)]
    pub csv: bool,
    /// Suppress progress output
    #[arg(long)]
    pub quiet: bool,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub universe: Option<PathBuf>,
    pub wide: bool,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub epoch_len: usize,
    pub shift: usize,
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub k_range: Vec<usize>,
    pub k: Option<usize>,
    pub k_min: usize,
    pub n_init: usize,
    pub seed: u64,
    pub mds: MdsConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub csv: bool,
    pub quiet: bool,
}

/// The settings that influence results. Output location, thread count and
/// verbosity are deliberately absent so they never change the config hash.
#[derive(Debug, Serialize)]
pub struct HashedConfig {
    pub wide: bool,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub epoch_len: usize,
    pub shift: usize,
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub k_range: Vec<usize>,
    pub k: Option<usize>,
    pub k_min: usize,
    pub n_init: usize,
    pub seed: u64,
    pub mds_dim: usize,
    pub mds_restarts: usize,
    pub mds_max_iter: usize,
    pub mds_tol: f64,
    pub mds_init: &'static str,
}

impl RunConfig {
    pub fn resolve(args: &PipelineArgs) -> CliResult<Self> {
        let mut file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mds_default = MdsConfig::default();
        let start = pick_with(args.start.clone(), &mut file, "start", Ok)?
            .map(|s| parse_date(&s))
            .transpose()?;
        let end = pick_with(args.end.clone(), &mut file, "end", Ok)?
            .map(|s| parse_date(&s))
            .transpose()?;
        if let (Some(s), Some(e)) = (start, end) {
            if s > e {
                return Err(CliError::usage(format!("start {s} is after end {e}")));
            }
        }
        let epsilon_grid = match pick_with(args.epsilon_grid.clone(), &mut file, "epsilon_grid", Ok)? {
            Some(s) => parse_epsilon_grid(&s)?,
            None => default_epsilon_grid(),
        };
        let k_range = match pick_with(args.k_range.clone(), &mut file, "k_range", Ok)? {
            Some(s) => parse_k_range(&s)?,
            None => default_k_range(),
        };
        let mds_init = match pick_with(args.mds_init.clone(), &mut file, "mds_init", Ok)?.as_deref() {
            None | Some("random") => MdsInit::Random,
            Some("classical") => MdsInit::ClassicalWarmStart,
            Some(other) => return Err(CliError::usage(format!("mds_init must be random or classical, got {other}"))),
        };
        let seed = pick(args.seed, &mut file, "seed")?.unwrap_or(0);
        let epsilon = pick(args.epsilon, &mut file, "epsilon")?.unwrap_or(0.0);
        validate_epsilon(epsilon)?;

        let cfg = RunConfig {
            prices: pick_path(args.prices.clone(), &mut file, "prices"),
            universe: pick_path(args.universe.clone(), &mut file, "universe"),
            wide: args.wide || pick::<bool>(None, &mut file, "wide")?.unwrap_or(false),
            start,
            end,
            epoch_len: pick(args.epoch_len, &mut file, "epoch_len")?.unwrap_or(DEFAULT_EPOCH_LEN),
            shift: pick(args.shift, &mut file, "shift")?.unwrap_or(1),
            epsilon,
            epsilon_grid,
            k_range,
            k: pick(args.k, &mut file, "k")?,
            k_min: pick(args.k_min, &mut file, "k_min")?.unwrap_or(DEFAULT_K_MIN),
            n_init: pick(args.n_init, &mut file, "n_init")?.unwrap_or(DEFAULT_N_INIT),
            seed,
            mds: MdsConfig {
                dim: pick(args.mds_dim, &mut file, "mds_dim")?.unwrap_or(mds_default.dim),
                n_restarts: pick(args.mds_restarts, &mut file, "mds_restarts")?.unwrap_or(mds_default.n_restarts),
                max_iter: pick(args.mds_max_iter, &mut file, "mds_max_iter")?.unwrap_or(mds_default.max_iter),
                tol: pick(args.mds_tol, &mut file, "mds_tol")?.unwrap_or(mds_default.tol),
                seed,
                init: mds_init,
            },
            out: pick_path(args.out.clone(), &mut file, "out").unwrap_or_else(|| PathBuf::from(".")),
            threads: pick(args.threads, &mut file, "threads")?,
            csv: args.csv || pick::<bool>(None, &mut file, "csv")?.unwrap_or(false),
            quiet: args.quiet || pick::<bool>(None, &mut file, "quiet")?.unwrap_or(false),
        };
        file.finish()?;
        if cfg.epoch_len < 2 {
            return Err(CliError::usage("epoch_len must be >= 2"));
        }
        if cfg.shift == 0 {
            return Err(CliError::usage("shift must be >= 1"));
        }
        if cfg.threads == Some(0) {
            return Err(CliError::usage("threads must be >= 1"));
        }
        Ok(cfg)
    }

    pub fn hashed(&self) -> HashedConfig {
        HashedConfig {
            wide: self.wide,
            start: self.start,
            end: self.end,
            epoch_len: self.epoch_len,
            shift: self.shift,
            epsilon: self.epsilon,
            epsilon_grid: self.epsilon_grid.clone(),
            k_range: self.k_range.clone(),
            k: self.k,
            k_min: self.k_min,
            n_init: self.n_init,
            seed: self.seed,
            mds_dim: self.mds.dim,
            mds_restarts: self.mds.n_restarts,
            mds_max_iter: self.mds.max_iter,
            mds_tol: self.mds.tol,
            mds_init: match self.mds.init {
                MdsInit::Random => "random",
                MdsInit::ClassicalWarmStart => "classical",
            },
        }
    }

    pub fn date_range(&self) -> (NaiveDate, NaiveDate) {
        (self.start.unwrap_or(NaiveDate::MIN), self.end.unwrap_or(NaiveDate::MAX))
    }
}

/// Parsed `key = value` file. Blank lines and `#` comments are ignored;
/// relative paths are resolved against the file's directory.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
    base: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cf = Self::parse(&text)?;
        cf.base = path.parent().map(Path::to_path_buf);
        Ok(cf)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", no + 1)))?;
            let key = key.trim().replace('-', "_");
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::usage(format!("config line {}: duplicate key {key}", no + 1)));
            }
        }
        Ok(ConfigFile { entries, base: None })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Fails on keys that nobody consumed.
    pub fn finish(self) -> CliResult<()> {
        match self.entries.keys().next() {
            Some(k) => Err(CliError::usage(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }

    fn resolve_path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        match &self.base {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        }
    }
}

/// Flag value if present, else the parsed file value.
pub fn pick<T: FromStr>(flag: Option<T>, file: &mut ConfigFile, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    pick_with(flag, file, key, |s| {
        s.parse::<T>()
            .map_err(|e| CliError::usage(format!("config key {key}: cannot parse {s:?}: {e}")))
    })
}

fn pick_with<T>(
    flag: Option<T>,
    file: &mut ConfigFile,
    key: &str,
    parse: impl FnOnce(String) -> CliResult<T>,
) -> CliResult<Option<T>> {
    let from_file = file.take(key);
    match flag {
        Some(v) => Ok(Some(v)),
        None => from_file.map(parse).transpose(),
    }
}

pub fn pick_path(flag: Option<PathBuf>, file: &mut ConfigFile, key: &str) -> Option<PathBuf> {
    let from_file = file.take(key).map(|v| file.resolve_path(&v));
    flag.or(from_file)
}

fn parse_date(s: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| CliError::usage(format!("bad date {s:?}: {e}")))
}

pub fn parse_epsilon_grid(s: &str) -> CliResult<Vec<f64>> {
    let grid = s
        .split(',')
        .map(|v| {
            let eps: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad epsilon {v:?}")))?;
            validate_epsilon(eps)?;
            Ok(eps)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if grid.is_empty() {
        return Err(CliError::usage("empty epsilon grid"));
    }
    Ok(grid)
}

/// `lo-hi` (inclusive) or a comma-separated list.
pub fn parse_k_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::usage(format!("bad k range {s:?}"));
    let ks: Vec<usize> = match s.split_once('-') {
        Some((lo, hi)) => {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            (lo..=hi).collect()
        }
        None => s
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?,
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}
