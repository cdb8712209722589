//! On-disk formats.
//!
//! Binary files are little-endian. Integer header fields are `u64`; dates are
//! `i64` days since 1970-01-01.
//!
//! * `MSF1` frame sets: magic, N, F, epoch_len, shift, ε (`f64`), then per frame
//!   N·(N−1)/2 `f64` upper-triangle entries followed by the frame's τ.
//! * `MSD1` distance matrices: magic, F, packed upper triangle as `f32`, then F
//!   τ values.
//! * `MSE1` embeddings: magic, F, dim, seed, n_restarts, stress (`f64`),
//!   degenerate flag (`u64`), F·dim `f64` coordinates, F τ values.

use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clustering::{LandscapeCell, StateModel};
use crate::correlation::{triangle_len, CorrelationFrame, FrameSet};
use crate::dynamics::{Trajectory, TransitionMatrix};
use crate::error::{Error, Result};
use crate::geometry::{Embedding, FrameDistanceMatrix};

pub const FRAMES_MAGIC: &[u8; 4] = b"MSF1";
pub const DISTANCES_MAGIC: &[u8; 4] = b"MSD1";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"MSE1";

fn unix_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

pub fn date_to_days(d: NaiveDate) -> i64 {
    (d - unix_epoch()).num_days()
}

pub fn days_to_date(days: i64) -> Result<NaiveDate> {
    unix_epoch()
        .checked_add_signed(chrono::TimeDelta::days(days))
        .ok_or_else(|| Error::Format(format!("date offset {days} out of range")))
}

fn fmt_err(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Format(e.to_string())
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(fmt_err)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(fmt_err)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(fmt_err)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(fmt_err)?;
    Ok(f32::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(fmt_err)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&b)
        )));
    }
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b).map_err(fmt_err)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes".into())),
    }
}

fn usize_field(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} too large")))
}

pub fn write_frames<W: Write>(set: &FrameSet, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(FRAMES_MAGIC)?;
    for v in [set.dim(), set.len(), set.epoch_len, set.shift] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&set.epsilon.to_le_bytes())?;
    for f in set.frames() {
        for v in f.upper() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&date_to_days(f.tau).to_le_bytes())?;
    }
    w.flush()
}

pub fn read_frames<R: Read>(reader: R) -> Result<FrameSet> {
    let mut r = BufReader::new(reader);
    expect_magic(&mut r, FRAMES_MAGIC)?;
    let n = usize_field(read_u64(&mut r)?, "N")?;
    let f = usize_field(read_u64(&mut r)?, "F")?;
    let epoch_len = usize_field(read_u64(&mut r)?, "epoch_len")?;
    let shift = usize_field(read_u64(&mut r)?, "shift")?;
    let epsilon = read_f64(&mut r)?;
    let len = triangle_len(n);
    let mut frames = Vec::with_capacity(f);
    for _ in 0..f {
        let upper = (0..len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let tau = days_to_date(read_i64(&mut r)?)?;
        frames.push(CorrelationFrame::from_upper(tau, epoch_len, epsilon, n, upper)?);
    }
    expect_eof(&mut r)?;
    FrameSet::new(epoch_len, shift, epsilon, frames)
}

pub fn write_distances<W: Write>(dist: &FrameDistanceMatrix, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(DISTANCES_MAGIC)?;
    w.write_all(&(dist.size() as u64).to_le_bytes())?;
    for &v in dist.upper() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    for &t in dist.taus() {
        w.write_all(&date_to_days(t).to_le_bytes())?;
    }
    w.flush()
}

pub fn read_distances<R: Read>(reader: R) -> Result<FrameDistanceMatrix> {
    let mut r = BufReader::new(reader);
    expect_magic(&mut r, DISTANCES_MAGIC)?;
    let f = usize_field(read_u64(&mut r)?, "F")?;
    let upper = (0..triangle_len(f))
        .map(|_| read_f32(&mut r).map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    let taus = (0..f)
        .map(|_| read_i64(&mut r).and_then(days_to_date))
        .collect::<Result<Vec<_>>>()?;
    expect_eof(&mut r)?;
    FrameDistanceMatrix::from_upper(f, upper, taus)
}

pub fn write_embedding_bin<W: Write>(e: &Embedding, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(EMBEDDING_MAGIC)?;
    for v in [e.len() as u64, e.dim as u64, e.seed, e.n_restarts_used as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&e.stress.to_le_bytes())?;
    w.write_all(&(e.degenerate as u64).to_le_bytes())?;
    for v in &e.points {
        w.write_all(&v.to_le_bytes())?;
    }
    for &t in &e.taus {
        w.write_all(&date_to_days(t).to_le_bytes())?;
    }
    w.flush()
}

pub fn read_embedding_bin<R: Read>(reader: R) -> Result<Embedding> {
    let mut r = BufReader::new(reader);
    expect_magic(&mut r, EMBEDDING_MAGIC)?;
    let f = usize_field(read_u64(&mut r)?, "F")?;
    let dim = usize_field(read_u64(&mut r)?, "dim")?;
    let seed = read_u64(&mut r)?;
    let n_restarts_used = usize_field(read_u64(&mut r)?, "n_restarts")?;
    let stress = read_f64(&mut r)?;
    let degenerate = read_u64(&mut r)? != 0;
    let points = (0..f * dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let taus = (0..f)
        .map(|_| read_i64(&mut r).and_then(days_to_date))
        .collect::<Result<Vec<_>>>()?;
    expect_eof(&mut r)?;
    let mut e = Embedding::from_points(dim, points, taus)?;
    e.seed = seed;
    e.n_restarts_used = n_restarts_used;
    e.stress = stress;
    e.degenerate = degenerate;
    Ok(e)
}

fn axis_names(dim: usize) -> Vec<String> {
    if dim == 3 {
        vec!["x".into(), "y".into(), "z".into()]
    } else {
        (0..dim).map(|c| format!("x{c}")).collect()
    }
}

/// `tau,x,y,z` (or `tau,x0,..` for other dimensions).
pub fn write_embedding_csv<W: Write>(e: &Embedding, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "tau,{}", axis_names(e.dim).join(","))?;
    for i in 0..e.len() {
        let coords: Vec<String> = e.point(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", e.taus[i], coords.join(","))?;
    }
    w.flush()
}

pub fn read_embedding_csv<R: Read>(reader: R) -> Result<Embedding> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty embedding file".into()))?.map_err(fmt_err)?;
    let dim = header.trim_end().split(',').count() - 1;
    let mut points = Vec::new();
    let mut taus = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(fmt_err)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::MalformedRow {
            line: k as u64 + 2,
            message: "bad embedding row".into(),
        };
        let tau = NaiveDate::parse_from_str(parts.next().ok_or_else(bad)?, "%Y-%m-%d").map_err(|_| bad())?;
        let coords = parts.map(|p| p.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        if coords.len() != dim {
            return Err(bad());
        }
        taus.push(tau);
        points.extend(coords);
    }
    Embedding::from_points(dim, points, taus)
}

pub const LANDSCAPE_HEADER: &str = "k,epsilon,sigma_d_intra,mean_d_intra,n_init";

pub fn write_landscape<W: Write>(cells: &[LandscapeCell], writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{LANDSCAPE_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{},{},{}", c.k, c.epsilon, c.sigma_d_intra, c.mean_d_intra, c.n_init)?;
    }
    w.flush()
}

pub fn read_landscape<R: Read>(reader: R) -> Result<Vec<LandscapeCell>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::MalformedRow {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub tau: NaiveDate,
    pub state_id: usize,
}

/// `{k_star, epsilon_star, mu, states: [{tau, state_id}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModelJson {
    pub k_star: usize,
    pub epsilon_star: f64,
    pub mu: Vec<f64>,
    pub states: Vec<StateEntry>,
}

impl From<&StateModel> for StateModelJson {
    fn from(m: &StateModel) -> Self {
        StateModelJson {
            k_star: m.k_star,
            epsilon_star: m.epsilon_star,
            mu: m.mu.clone(),
            states: m
                .taus
                .iter()
                .zip(&m.state_of_frame)
                .map(|(&tau, &state_id)| StateEntry { tau, state_id })
                .collect(),
        }
    }
}

pub fn write_state_model<W: Write>(m: &StateModel, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, &StateModelJson::from(m))?;
    w.write_all(b"\n").map_err(fmt_err)?;
    w.flush().map_err(fmt_err)
}

pub const TRANSITIONS_HEADER: &str = "from_state,to_state,count,probability";

pub fn write_transitions<W: Write>(tm: &TransitionMatrix, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{TRANSITIONS_HEADER}")?;
    for a in 1..=tm.k {
        for b in 1..=tm.k {
            writeln!(w, "{a},{b},{},{}", tm.count(a, b), tm.probability(a, b))?;
        }
    }
    w.flush()
}

/// Same layout as [`write_transitions`] with self-loops excluded from the
/// normalization.
pub fn write_transitions_excluding_self<W: Write>(tm: &TransitionMatrix, writer: W) -> io::Result<()> {
    let probs = tm.probabilities_excluding_self();
    let mut w = BufWriter::new(writer);
    writeln!(w, "{TRANSITIONS_HEADER}")?;
    for a in 1..=tm.k {
        for b in 1..=tm.k {
            writeln!(w, "{a},{b},{},{}", tm.count(a, b), probs[a - 1][b - 1])?;
        }
    }
    w.flush()
}

pub fn write_trajectory<W: Write>(t: &Trajectory, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    let dim = t.nodes.first().map_or(3, |n| n.point.len());
    writeln!(w, "tau,{},state_id,index_return", axis_names(dim).join(","))?;
    for n in &t.nodes {
        let coords: Vec<String> = n.point.iter().map(|v| v.to_string()).collect();
        let ret = n.index_return.map(|r| r.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", n.tau, coords.join(","), n.state_id, ret)?;
    }
    w.flush()
}

/// Dense N×N matrix, one row per line.
pub fn write_frame_csv<W: Write>(frame: &CorrelationFrame, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for row in frame.to_dense() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

/// Dense F×F matrix with a `tau` header row and column.
pub fn write_distances_csv<W: Write>(dist: &FrameDistanceMatrix, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    let taus: Vec<String> = dist.taus().iter().map(|t| t.to_string()).collect();
    writeln!(w, "tau,{}", taus.join(","))?;
    for a in 0..dist.size() {
        let cells: Vec<String> = (0..dist.size()).map(|b| dist.get(a, b).to_string()).collect();
        writeln!(w, "{},{}", taus[a], cells.join(","))?;
    }
    w.flush()
}
