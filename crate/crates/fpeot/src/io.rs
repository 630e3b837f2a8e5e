//! File formats: the TT container, saved trajectories, flow CSVs and JSON
//! reports.
//!
//! TT container layout, all integers little-endian:
//!
//! ```text
//! b"FPEOTTT1"            magic
//! u64                    header length in bytes
//! header                 UTF-8 JSON {"d", "mode_sizes", "ranks", "cores_offset"}
//! f64 × Σ r_{k−1} n_k r_k  cores, row-major (r_{k−1}, n_k, r_k), back to back
//! ```
//!
//! `cores_offset[k]` is the byte offset of core `k` from the start of the
//! file. Values are stored bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fpeot_core::fpe::StepDiagnostics;
use fpeot_core::{ChebGrid, DensityTrajectory, FlowPath, TtTensor};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const TT_MAGIC: &[u8; 8] = b"FPEOTTT1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TtHeader {
    d: usize,
    mode_sizes: Vec<usize>,
    ranks: Vec<usize>,
    cores_offset: Vec<u64>,
}

fn malformed(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format { what: "TT container", msg: msg.into() }
}

/// Serialises `t` into the container format.
pub fn write_tt<W: Write>(t: &TtTensor, mut w: W) -> Result<()> {
    let lens: Vec<u64> = t.cores().iter().map(|c| 8 * c.len() as u64).collect();
    // The header length depends on the offsets, which depend on the header
    // length; widen until the two agree.
    let mut header_len = 0u64;
    let header = loop {
        let mut offset = 16 + header_len;
        let cores_offset = lens
            .iter()
            .map(|l| {
                let o = offset;
                offset += l;
                o
            })
            .collect();
        let header = serde_json::to_vec(&TtHeader {
            d: t.d(),
            mode_sizes: t.mode_sizes().to_vec(),
            ranks: t.ranks().to_vec(),
            cores_offset,
        })?;
        if header.len() as u64 == header_len {
            break header;
        }
        header_len = header.len() as u64;
    };
    w.write_all(TT_MAGIC).and_then(|_| w.write_all(&header_len.to_le_bytes())).map_err(HarnessError::io("<tt>"))?;
    w.write_all(&header).map_err(HarnessError::io("<tt>"))?;
    for core in t.cores() {
        let bytes: Vec<u8> = core.iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes).map_err(HarnessError::io("<tt>"))?;
    }
    Ok(())
}

/// Parses a container written by [`write_tt`].
pub fn read_tt<R: Read>(mut r: R) -> Result<TtTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(HarnessError::io("<tt>"))?;
    if bytes.len() < 16 || &bytes[..8] != TT_MAGIC {
        return Err(malformed("bad magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = 16u64
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| malformed("header runs past the end of the file"))? as usize;
    let header: TtHeader =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| malformed(format!("header: {e}")))?;
    let d = header.d;
    if header.mode_sizes.len() != d || header.ranks.len() != d + 1 || header.cores_offset.len() != d {
        return Err(malformed("header arrays do not match d"));
    }
    let mut cores = Vec::with_capacity(d);
    let mut expected = header_end as u64;
    for k in 0..d {
        let len = header.ranks[k]
            .checked_mul(header.mode_sizes[k])
            .and_then(|v| v.checked_mul(header.ranks[k + 1]))
            .ok_or_else(|| malformed("core size overflows"))?;
        let start = header.cores_offset[k];
        if start != expected {
            return Err(malformed(format!("core {k} starts at {start}, expected {expected}")));
        }
        let end = start
            .checked_add(8 * len as u64)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| malformed(format!("core {k} runs past the end of the file")))?;
        cores.push(
            bytes[start as usize..end as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
        expected = end;
    }
    if expected != bytes.len() as u64 {
        return Err(malformed("trailing bytes after the last core"));
    }
    Ok(TtTensor::new(header.mode_sizes, header.ranks, cores)?)
}

pub fn save_tt(t: &TtTensor, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    write_tt(t, &mut w)?;
    w.flush().map_err(HarnessError::io(path))
}

pub fn load_tt(path: &Path) -> Result<TtTensor> {
    let file = File::open(path).map_err(HarnessError::io(path))?;
    read_tt(BufReader::new(file))
}

/// Index file of a saved trajectory directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub d: usize,
    pub grid: usize,
    #[serde(rename = "box")]
    pub bounds: [f64; 2],
    pub t_max: f64,
    pub steps: usize,
    pub substeps: usize,
    /// Snapshot file names relative to the directory, one per step.
    pub snapshots: Vec<String>,
    pub diagnostics: Vec<StepDiagnostics>,
}

pub const MANIFEST: &str = "manifest.json";

fn snapshot_name(m: usize) -> String {
    format!("snapshot_{m:06}.tt")
}

/// Writes `snapshot_%06d.tt` per step plus `manifest.json` into `dir`.
pub fn save_trajectory(traj: &DensityTrajectory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let mut names = Vec::with_capacity(traj.steps() + 1);
    for (m, s) in traj.snapshots().iter().enumerate() {
        let name = snapshot_name(m);
        save_tt(s, &dir.join(&name))?;
        names.push(name);
    }
    let (a, b) = traj.grid().interval();
    let manifest = TrajectoryManifest {
        d: traj.grid().d(),
        grid: traj.grid().n(),
        bounds: [a, b],
        t_max: traj.t_max(),
        steps: traj.steps(),
        substeps: traj.substeps(),
        snapshots: names,
        diagnostics: traj.diagnostics().to_vec(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

/// Reads a directory written by [`save_trajectory`].
pub fn load_trajectory(dir: &Path) -> Result<DensityTrajectory> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(HarnessError::MissingRunData(format!("no {} in {}", MANIFEST, dir.display())));
    }
    let manifest: TrajectoryManifest = read_json(&manifest_path)?;
    if manifest.snapshots.len() != manifest.steps + 1 {
        return Err(HarnessError::Format {
            what: "trajectory manifest",
            msg: format!("{} snapshots for {} steps", manifest.snapshots.len(), manifest.steps),
        });
    }
    let grid = ChebGrid::new(manifest.d, manifest.grid, manifest.bounds[0], manifest.bounds[1])?;
    let snapshots = manifest
        .snapshots
        .iter()
        .map(|name| {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(HarnessError::MissingRunData(format!("snapshot {}", path.display())));
            }
            load_tt(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityTrajectory::from_snapshots(grid, manifest.t_max, snapshots, manifest.diagnostics, manifest.substeps)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(HarnessError::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    let file = File::create(path).map_err(HarnessError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// `id,t,x_1..x_d`, one row per path and time.
pub fn write_paths_csv(path: &Path, d: usize, paths: &[FlowPath]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|k| format!("x_{k}")));
    w.write_record(&header)?;
    for p in paths {
        for (t, x) in p.times.iter().zip(&p.states) {
            let mut row = vec![p.id.to_string(), t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(HarnessError::io(path))
}

/// `id,diagnostic`.
pub fn write_straightness_csv(path: &Path, ids: &[usize], values: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "diagnostic"])?;
    for (id, v) in ids.iter().zip(values) {
        w.write_record([id.to_string(), v.to_string()])?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Reads `id,t,x_1..x_d` rows back into paths, in file order.
pub fn read_paths_csv(path: &Path) -> Result<Vec<FlowPath>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut paths: Vec<FlowPath> = Vec::new();
    for record in r.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| HarnessError::Format { what: "paths CSV", msg: format!("{s:?}: {e}") })
        };
        let id: usize = record[0]
            .parse()
            .map_err(|e| HarnessError::Format { what: "paths CSV", msg: format!("id {:?}: {e}", &record[0]) })?;
        let t = parse(&record[1])?;
        let x = record.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
        match paths.last_mut() {
            Some(p) if p.id == id => {
                p.times.push(t);
                p.states.push(x);
            }
            _ => paths.push(FlowPath { id, times: vec![t], states: vec![x] }),
        }
    }
    Ok(paths)
}

/// Path of the per-density report inside a run directory.
pub fn density_report_path(out: &Path, index: usize) -> PathBuf {
    out.join("reports").join(format!("density_{index:04}.json"))
}

pub const SUMMARY: &str = "summary.json";
