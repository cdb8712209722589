use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use mstates_core::clustering::{
    best_of_restarts, label_states, landscape_for_embedding, select_optimum, LandscapeCell, RestartSpread, StateModel,
};
use mstates_core::correlation::{build_frames, epoch_correlation, log_returns, power_map, FrameSet, ReturnTable};
use mstates_core::dynamics::{
    build_trajectory, classify_new_frame, forbidden_transition_report, index_return_proxy, transition_counts,
    tridiagonality_score, ForbiddenTransition,
};
use mstates_core::formats::{
    read_embedding_bin, read_frames, write_distances, write_distances_csv, write_embedding_bin, write_embedding_csv,
    write_frame_csv, write_frames, write_landscape, write_state_model, write_trajectory, write_transitions,
    write_transitions_excluding_self, StateEntry,
};
use mstates_core::geometry::{mds_embed, pairwise_distances_with_progress, Embedding, FrameDistanceMatrix};
use mstates_core::ingest::{
    load_prices, load_prices_wide, load_universe, write_drop_report, write_prices, DroppedTicker, PriceTable,
};
use mstates_core::synth::{generate_returns, to_prices, RegimeSpec, GENERATOR};
use mstates_core::Error;
use serde::{Deserialize, Serialize};

use crate::cache::{self, Cache};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

pub const FRAMES_FILE: &str = "frames.msf";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DROP_REPORT_FILE: &str = "drop_report.json";
pub const DISTANCES_FILE: &str = "distances.msd";
pub const EMBEDDING_FILE: &str = "embedding.csv";
pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const OPTIMUM_FILE: &str = "optimum.json";
pub const STATE_MODEL_FILE: &str = "state_model.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const DYNAMICS_FILE: &str = "dynamics.json";
pub const CLASSIFICATION_FILE: &str = "classification.json";
pub const MODEL_DIR: &str = "model";
pub const BUNDLE_FILE: &str = "model.json";

/// Shared state for one pipeline command.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub cache: Cache,
    pub prices: PriceTable,
    pub returns: ReturnTable,
    pub dropped: Vec<DroppedTicker>,
    data_key: String,
}

impl Pipeline {
    pub fn load(cfg: RunConfig, cache: Cache) -> CliResult<Self> {
        let path = cfg.prices.clone().ok_or_else(|| CliError::usage("--prices is required"))?;
        let (prices, dropped) = load_table(&cfg, &path)?;
        let returns = log_returns(&prices);
        let data_key = cache::data_key(&returns);
        Ok(Pipeline {
            cfg,
            cache,
            prices,
            returns,
            dropped,
            data_key,
        })
    }

    fn note(&self, msg: &str) {
        if !self.cfg.quiet {
            eprintln!("{msg}");
        }
    }

    pub fn frames(&self, epsilon: f64) -> CliResult<FrameSet> {
        Ok(build_frames(&self.returns, self.cfg.epoch_len, self.cfg.shift, epsilon)?)
    }

    /// Distances rounded to single precision, from cache when possible.
    pub fn distances(&self, frames: &FrameSet) -> CliResult<(FrameDistanceMatrix, String)> {
        let key = cache::distance_key(&self.data_key, frames.epoch_len, frames.shift, frames.epsilon);
        if let Some(d) = self.cache.load_distances(&key) {
            if d.size() == frames.len() && d.taus() == frames.taus().as_slice() {
                self.note(&format!("distances: cache hit (epsilon {})", frames.epsilon));
                return Ok((d, key));
            }
        }
        let f = frames.len() as u64;
        let total = f * f.saturating_sub(1) / 2;
        let progress = Progress::new(total, self.cfg.quiet, format!("distances (epsilon {})", frames.epsilon));
        let dist = pairwise_distances_with_progress(frames, |done| progress.update(done))?.quantized_f32();
        progress.finish();
        self.cache.store_distances(&key, &dist);
        Ok((dist, key))
    }

    pub fn embedding(&self, dist: &FrameDistanceMatrix, dist_key: &str, epsilon: f64) -> CliResult<Embedding> {
        let key = cache::embedding_key(dist_key, &self.cfg.mds);
        if let Some(e) = self.cache.load_embedding(&key) {
            if e.len() == dist.size() && e.taus == dist.taus() {
                self.note(&format!("embedding: cache hit (epsilon {epsilon})"));
                return Ok(e);
            }
        }
        let start = Instant::now();
        let emb = mds_embed(dist, &self.cfg.mds)?;
        self.note(&format!(
            "embedding (epsilon {epsilon}): stress {:.6e} in {:.1}s",
            emb.stress,
            start.elapsed().as_secs_f64()
        ));
        self.cache.store_embedding(&key, &emb);
        Ok(emb)
    }

    /// Frames, distances and embedding for one ε.
    pub fn stage(&self, epsilon: f64) -> CliResult<(FrameSet, Embedding)> {
        let frames = self.frames(epsilon)?;
        let (dist, key) = self.distances(&frames)?;
        let emb = self.embedding(&dist, &key, epsilon)?;
        Ok((frames, emb))
    }

    fn output_dir(&self) -> CliResult<OutputDir> {
        let mut out = OutputDir::create(&self.cfg.out)?;
        if let Some(p) = &self.cfg.prices {
            out.add_input(p)?;
        }
        if let Some(u) = &self.cfg.universe {
            out.add_input(u)?;
        }
        out.write(DROP_REPORT_FILE, |w| write_drop_report(&self.dropped, w))?;
        Ok(out)
    }
}

fn load_table(cfg: &RunConfig, path: &Path) -> CliResult<(PriceTable, Vec<DroppedTicker>)> {
    let (start, end) = cfg.date_range();
    let loaded = if cfg.wide {
        load_prices_wide(path, start, end)?
    } else {
        load_prices(path, start, end)?
    };
    for d in &loaded.dropped {
        log::warn!(
            "dropped {}: {} missing date(s), first {}",
            d.ticker,
            d.missing_dates_count,
            d.first_missing
        );
    }
    let mut table = loaded.table;
    if let Some(u) = &cfg.universe {
        table = table.with_universe(&load_universe(u)?)?;
    }
    Ok((table, loaded.dropped))
}

/// Throttled pairs/sec reporting on stderr.
struct Progress {
    total: u64,
    quiet: bool,
    label: String,
    start: Instant,
    last: Mutex<Instant>,
    done: AtomicU64,
}

impl Progress {
    fn new(total: u64, quiet: bool, label: String) -> Self {
        let now = Instant::now();
        Progress {
            total,
            quiet,
            label,
            start: now,
            last: Mutex::new(now),
            done: AtomicU64::new(0),
        }
    }

    fn update(&self, done: u64) {
        self.done.fetch_max(done, Ordering::Relaxed);
        if self.quiet {
            return;
        }
        let Ok(mut last) = self.last.try_lock() else { return };
        if last.elapsed().as_secs_f64() >= 1.0 {
            *last = Instant::now();
            let secs = self.start.elapsed().as_secs_f64();
            let done = self.done.load(Ordering::Relaxed);
            eprintln!(
                "{}: {done}/{} pairs, {:.0} pairs/s",
                self.label,
                self.total,
                done as f64 / secs
            );
        }
    }

    fn finish(&self) {
        if !self.quiet {
            let secs = self.start.elapsed().as_secs_f64().max(1e-9);
            eprintln!(
                "{}: {} pairs in {secs:.2}s, {:.0} pairs/s",
                self.label,
                self.total,
                self.total as f64 / secs
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FramesManifest {
    pub N: usize,
    pub T: usize,
    pub F: usize,
    pub epoch_len: usize,
    pub shift: usize,
    pub epsilon: f64,
}

pub fn cmd_frames(cfg: RunConfig, cache: Cache) -> CliResult<FramesManifest> {
    let p = Pipeline::load(cfg, cache)?;
    let frames = p.frames(p.cfg.epsilon)?;
    let manifest = FramesManifest {
        N: p.prices.n_instruments(),
        T: p.prices.n_dates(),
        F: frames.len(),
        epoch_len: frames.epoch_len,
        shift: frames.shift,
        epsilon: frames.epsilon,
    };
    let mut out = p.output_dir()?;
    out.write(FRAMES_FILE, |w| write_frames(&frames, w))?;
    out.write_json(MANIFEST_FILE, &manifest)?;
    if p.cfg.csv {
        for frame in frames.frames() {
            out.write(&format!("frames_csv/{}.csv", frame.tau), |w| write_frame_csv(frame, w))?;
        }
    }
    out.finish("frames", Some(&p.cfg), p.cfg.seed, None)?;
    Ok(manifest)
}

pub fn cmd_distances(cfg: RunConfig, cache: Cache) -> CliResult<FrameDistanceMatrix> {
    let p = Pipeline::load(cfg, cache)?;
    let frames = p.frames(p.cfg.epsilon)?;
    let (dist, _) = p.distances(&frames)?;
    let mut out = p.output_dir()?;
    out.write(DISTANCES_FILE, |w| write_distances(&dist, w))?;
    if p.cfg.csv {
        out.write("distances.csv", |w| write_distances_csv(&dist, w))?;
    }
    out.finish("distances", Some(&p.cfg), p.cfg.seed, None)?;
    Ok(dist)
}

pub fn cmd_embed(cfg: RunConfig, cache: Cache) -> CliResult<Embedding> {
    let p = Pipeline::load(cfg, cache)?;
    let (_, emb) = p.stage(p.cfg.epsilon)?;
    let mut out = p.output_dir()?;
    out.write(EMBEDDING_FILE, |w| write_embedding_csv(&emb, w))?;
    out.write_json(
        "embedding.json",
        &serde_json::json!({
            "F": emb.len(),
            "dim": emb.dim,
            "stress": emb.stress,
            "n_restarts": emb.n_restarts_used,
            "seed": emb.seed,
            "degenerate": emb.degenerate,
        }),
    )?;
    out.finish("embed", Some(&p.cfg), p.cfg.seed, None)?;
    Ok(emb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub k_star: usize,
    pub epsilon_star: f64,
    pub sigma_d_intra: f64,
    pub k_min: usize,
}

pub fn cmd_scan(cfg: RunConfig, cache: Cache) -> CliResult<(Vec<LandscapeCell>, Optimum)> {
    let p = Pipeline::load(cfg, cache)?;
    let mut cells = Vec::with_capacity(p.cfg.k_range.len() * p.cfg.epsilon_grid.len());
    for &eps in &p.cfg.epsilon_grid {
        let (_, emb) = p.stage(eps)?;
        let start = Instant::now();
        cells.extend(landscape_for_embedding(
            &emb,
            eps,
            &p.cfg.k_range,
            p.cfg.n_init,
            p.cfg.seed,
            &RestartSpread,
        )?);
        p.note(&format!(
            "k-means (epsilon {eps}): {} k values x {} restarts in {:.1}s",
            p.cfg.k_range.len(),
            p.cfg.n_init,
            start.elapsed().as_secs_f64()
        ));
    }
    let (k_star, epsilon_star) = select_optimum(&cells, p.cfg.k_min)?;
    let sigma = cells
        .iter()
        .find(|c| c.k == k_star && c.epsilon == epsilon_star)
        .map(|c| c.sigma_d_intra)
        .expect("optimum comes from the cells");
    let optimum = Optimum {
        k_star,
        epsilon_star,
        sigma_d_intra: sigma,
        k_min: p.cfg.k_min,
    };
    let mut out = p.output_dir()?;
    out.write(LANDSCAPE_FILE, |w| write_landscape(&cells, w))?;
    out.write_json(OPTIMUM_FILE, &optimum)?;
    out.finish("scan", Some(&p.cfg), p.cfg.seed, None)?;
    Ok((cells, optimum))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub k: usize,
    pub epsilon: f64,
    pub total_transitions: u64,
    pub tridiagonality: f64,
    pub empty_rows: Vec<usize>,
    pub forbidden_transitions: Vec<ForbiddenTransition>,
}

/// Everything needed to classify future frames against a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub epoch_len: usize,
    pub shift: usize,
    pub epsilon: f64,
    pub k: usize,
    pub dim: usize,
    pub tickers: Vec<String>,
    pub mu: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub states: Vec<StateEntry>,
}

impl ModelBundle {
    fn from_model(m: &StateModel, frames: &FrameSet, tickers: Vec<String>) -> Self {
        ModelBundle {
            epoch_len: frames.epoch_len,
            shift: frames.shift,
            epsilon: m.epsilon_star,
            k: m.k_star,
            dim: m.dim,
            tickers,
            mu: m.mu.clone(),
            centroids: (1..=m.k_star).map(|s| m.centroid(s).to_vec()).collect(),
            states: m
                .taus
                .iter()
                .zip(&m.state_of_frame)
                .map(|(&tau, &state_id)| StateEntry { tau, state_id })
                .collect(),
        }
    }

    fn to_model(&self) -> CliResult<StateModel> {
        if self.centroids.len() != self.k || self.centroids.iter().any(|c| c.len() != self.dim) {
            return Err(CliError::ModelMismatch("centroids do not match k and dim".into()));
        }
        if self.states.iter().any(|s| s.state_id == 0 || s.state_id > self.k) {
            return Err(CliError::ModelMismatch("state id out of range".into()));
        }
        Ok(StateModel {
            k_star: self.k,
            epsilon_star: self.epsilon,
            state_of_frame: self.states.iter().map(|s| s.state_id).collect(),
            dim: self.dim,
            centroids: self.centroids.concat(),
            mu: self.mu.clone(),
            taus: self.states.iter().map(|s| s.tau).collect(),
        })
    }
}

pub struct StatesOutput {
    pub model: StateModel,
    pub dynamics: DynamicsReport,
}

pub fn cmd_states(cfg: RunConfig, cache: Cache) -> CliResult<StatesOutput> {
    let k = cfg.k.ok_or_else(|| CliError::usage("--k is required"))?;
    let p = Pipeline::load(cfg, cache)?;
    let eps = p.cfg.epsilon;
    let (frames, emb) = p.stage(eps)?;
    let raw = if eps == 0.0 { frames.clone() } else { p.frames(0.0)? };
    let run = best_of_restarts(&emb.points, emb.dim, k, p.cfg.n_init.max(1), p.cfg.seed)?;
    let model = label_states(&raw, &run, eps)?;
    let tm = transition_counts(&model)?;
    let proxy = index_return_proxy(&p.returns);
    let trajectory = build_trajectory(&emb, &model, Some(&proxy))?;
    let dynamics = DynamicsReport {
        k,
        epsilon: eps,
        total_transitions: tm.total(),
        tridiagonality: tridiagonality_score(&tm),
        empty_rows: tm.empty_rows.clone(),
        forbidden_transitions: forbidden_transition_report(&tm),
    };
    let tickers = p.returns.instruments().iter().map(|i| i.ticker.clone()).collect();
    let bundle = ModelBundle::from_model(&model, &frames, tickers);

    let mut out = p.output_dir()?;
    out.write(STATE_MODEL_FILE, |w| write_state_model(&model, w))?;
    out.write(TRAJECTORY_FILE, |w| write_trajectory(&trajectory, w))?;
    out.write(TRANSITIONS_FILE, |w| write_transitions(&tm, w))?;
    out.write("transitions_excluding_self.csv", |w| write_transitions_excluding_self(&tm, w))?;
    out.write(EMBEDDING_FILE, |w| write_embedding_csv(&emb, w))?;
    out.write_json(DYNAMICS_FILE, &dynamics)?;
    out.write(&format!("{MODEL_DIR}/{FRAMES_FILE}"), |w| write_frames(&frames, w))?;
    out.write(&format!("{MODEL_DIR}/embedding.mse"), |w| write_embedding_bin(&emb, w))?;
    out.write_json(&format!("{MODEL_DIR}/{BUNDLE_FILE}"), &bundle)?;
    out.finish("states", Some(&p.cfg), p.cfg.seed, None)?;
    Ok(StatesOutput { model, dynamics })
}

/// Options `classify` takes on top of the shared configuration.
#[derive(Debug, Clone)]
pub struct ClassifyRequest {
    pub model_dir: PathBuf,
    pub new_prices: PathBuf,
    /// Explicitly requested settings that must agree with the model.
    pub epoch_len: Option<usize>,
    pub epsilon: Option<f64>,
    pub write_output: bool,
}

pub fn cmd_classify(cfg: RunConfig, req: &ClassifyRequest) -> CliResult<mstates_core::dynamics::Classification> {
    let dir = &req.model_dir;
    let bundle: ModelBundle = read_json(&dir.join(BUNDLE_FILE))?;
    if let Some(e) = req.epoch_len.filter(|&e| e != bundle.epoch_len) {
        return Err(CliError::ModelMismatch(format!(
            "epoch_len {e} requested, model uses {}",
            bundle.epoch_len
        )));
    }
    if let Some(e) = req.epsilon.filter(|&e| e != bundle.epsilon) {
        return Err(CliError::ModelMismatch(format!("epsilon {e} requested, model uses {}", bundle.epsilon)));
    }
    let model = bundle.to_model()?;
    let reference = read_frames(BufReader::new(open(&dir.join(FRAMES_FILE))?))?;
    let embedding = read_embedding_bin(BufReader::new(open(&dir.join("embedding.mse"))?))?;
    if reference.epsilon != bundle.epsilon || reference.epoch_len != bundle.epoch_len {
        return Err(CliError::ModelMismatch("reference frames disagree with model.json".into()));
    }
    if reference.dim() != bundle.tickers.len() {
        return Err(CliError::ModelMismatch("reference frames disagree with ticker list".into()));
    }

    let (table, _) = load_table(&cfg, &req.new_prices)?;
    let table = align_to(&table, &bundle.tickers)?;
    let needed = bundle.epoch_len + 1;
    if table.n_dates() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            available: table.n_dates(),
        }
        .into());
    }
    let dates = table.dates();
    let recent = table.restrict(dates[dates.len() - needed], dates[dates.len() - 1])?;
    let returns = log_returns(&recent);
    let last = *returns.dates().last().expect("epoch_len >= 2 returns");
    let raw = epoch_correlation(&returns, last, bundle.epoch_len)?;
    let frame = power_map(&raw, bundle.epsilon)?;
    let result = classify_new_frame(&frame, &reference, &embedding, &model)?;

    if req.write_output {
        let mut out = OutputDir::create(&cfg.out)?;
        out.add_input(&req.new_prices)?;
        out.add_input(&dir.join(BUNDLE_FILE))?;
        out.write_json(CLASSIFICATION_FILE, &result)?;
        out.finish("classify", Some(&cfg), cfg.seed, None)?;
    }
    Ok(result)
}

/// Rows of `table` reordered to `tickers`; extra tickers are ignored.
fn align_to(table: &PriceTable, tickers: &[String]) -> CliResult<PriceTable> {
    let mut instruments = Vec::with_capacity(tickers.len());
    let mut prices = Vec::with_capacity(tickers.len() * table.n_dates());
    for t in tickers {
        let i = table
            .instruments()
            .iter()
            .position(|inst| &inst.ticker == t)
            .ok_or_else(|| CliError::ModelMismatch(format!("ticker {t} missing from new prices")))?;
        instruments.push(table.instruments()[i].clone());
        prices.extend_from_slice(table.series(i));
    }
    Ok(PriceTable::new(instruments, table.dates().to_vec(), prices)?)
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| Error::io(path, e).into())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let f = open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f)).map_err(Error::from)?)
}

/// Planted-regime data set.
pub struct SynthRequest {
    pub spec: RegimeSpec,
    pub out: PathBuf,
}

pub fn cmd_synth(req: &SynthRequest) -> CliResult<PriceTable> {
    let returns = generate_returns(&req.spec)?;
    let prices = to_prices(&returns)?;
    let regime_of_day = req.spec.regime_of_day();
    let mut out = OutputDir::create(&req.out)?;
    out.write("prices.csv", |w| write_prices(&prices, w))?;
    out.write("regimes.csv", |w| -> io::Result<()> {
        writeln!(w, "date,regime,base_correlation")?;
        for (date, &r) in returns.dates().iter().zip(&regime_of_day) {
            writeln!(w, "{date},{r},{}", req.spec.regimes[r].base_correlation)?;
        }
        Ok(())
    })?;
    out.write_json("spec.json", &req.spec)?;
    let config = serde_json::to_value(&req.spec).map_err(Error::from)?;
    out.finish_with("synth", &config, req.spec.seed, Some(GENERATOR))?;
    Ok(prices)
}

/// Reads `regimes.csv` back as (date, regime index) pairs.
pub fn read_regime_labels(path: &Path) -> CliResult<Vec<(NaiveDate, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split(',');
            let bad = || Error::Format(format!("bad regimes line {l:?}"));
            let date = NaiveDate::parse_from_str(it.next().ok_or_else(bad)?, "%Y-%m-%d").map_err(|_| bad())?;
            let r = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok((date, r))
        })
        .collect()
}
