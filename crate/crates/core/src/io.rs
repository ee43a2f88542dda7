//! Persistence: the binary array container for fields and defect fields,
//! CSV report writers, and the run manifest.
//!
//! Container layout (little-endian, fixed 64-byte header):
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..8   | magic `DELARRAY`                        |
//! | 8..12  | format version (u32, currently 1)       |
//! | 12..16 | spatial dimension (u32)                 |
//! | 16..20 | cells per axis of the stored array (u32)|
//! | 20..24 | component count (u32)                   |
//! | 24..28 | scalar width in bytes (u32, always 8)   |
//! | 28..32 | kind: 0 conserved field, 1 defect (u32) |
//! | 32..40 | snapshot time (f64)                     |
//! | 40..44 | block factor H for defects, else 0 (u32)|
//! | 44..64 | reserved, zero                          |
//!
//! Cell data follows row-major (y outer) with components interleaved:
//! conserved fields store `[rho, m_x (, m_y)]`, defect fields store
//! `[Rv_xx (, Rv_xy, Rv_yy), Rp]` per block.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::GapReport;
use crate::defect::{BlockPartition, DefectField};
use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::oscillation::WeakstarTable;
use crate::solver::EnergyLedger;
use crate::state::{ConservedField, TorusGrid};
use crate::weak_form::{ConsistencyTable, ResidualReport, SlackReport};

const MAGIC: &[u8; 8] = b"DELARRAY";
const VERSION: u32 = 1;
const KIND_FIELD: u32 = 0;
const KIND_DEFECT: u32 = 1;

struct Header {
    dim: u32,
    n: u32,
    components: u32,
    kind: u32,
    time: f64,
    block: u32,
}

fn write_header(w: &mut impl Write, h: &Header) -> Result<()> {
    let mut buf = [0u8; 64];
    buf[0..8].copy_from_slice(MAGIC);
    buf[8..12].copy_from_slice(&VERSION.to_le_bytes());
    buf[12..16].copy_from_slice(&h.dim.to_le_bytes());
    buf[16..20].copy_from_slice(&h.n.to_le_bytes());
    buf[20..24].copy_from_slice(&h.components.to_le_bytes());
    buf[24..28].copy_from_slice(&8u32.to_le_bytes());
    buf[28..32].copy_from_slice(&h.kind.to_le_bytes());
    buf[32..40].copy_from_slice(&h.time.to_le_bytes());
    buf[40..44].copy_from_slice(&h.block.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut buf = [0u8; 64];
    r.read_exact(&mut buf)?;
    if &buf[0..8] != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes(buf[at..at + 4].try_into().unwrap());
    if word(8) != VERSION {
        return Err(Error::Container(format!("unsupported version {}", word(8))));
    }
    if word(24) != 8 {
        return Err(Error::Container(format!("unsupported scalar width {}", word(24))));
    }
    Ok(Header {
        dim: word(12),
        n: word(16),
        components: word(20),
        kind: word(28),
        time: f64::from_le_bytes(buf[32..40].try_into().unwrap()),
        block: word(40),
    })
}

fn write_scalars(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_scalars(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write one conserved-field snapshot.
pub fn write_field(path: impl AsRef<Path>, field: &ConservedField) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            dim: dim as u32,
            n: grid.cells_per_axis() as u32,
            components: (1 + dim) as u32,
            kind: KIND_FIELD,
            time: field.time,
            block: 0,
        },
    )?;
    let cells = grid.total_cells();
    write_scalars(
        &mut w,
        (0..cells).flat_map(|i| {
            let mut row = vec![field.rho[i], field.mom[i][0]];
            if dim == 2 {
                row.push(field.mom[i][1]);
            }
            row
        }),
    )?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ConservedField> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.kind != KIND_FIELD {
        return Err(Error::Container(format!("expected field container, got kind {}", h.kind)));
    }
    let grid = TorusGrid::new(h.dim as usize, h.n as usize)?;
    let dim = grid.dim();
    if h.components != (1 + dim) as u32 {
        return Err(Error::Container(format!("component count {}", h.components)));
    }
    let cells = grid.total_cells();
    let flat = read_scalars(&mut r, cells * (1 + dim))?;
    let mut rho = Vec::with_capacity(cells);
    let mut mom = Vec::with_capacity(cells);
    for i in 0..cells {
        let base = i * (1 + dim);
        rho.push(flat[base]);
        mom.push([flat[base + 1], if dim == 2 { flat[base + 2] } else { 0.0 }]);
    }
    ConservedField::new(grid, rho, mom, h.time)
}

/// Write one defect field; `time` tags the snapshot it belongs to.
pub fn write_defect(path: impl AsRef<Path>, defect: &DefectField, time: f64) -> Result<()> {
    let partition = defect.partition();
    let dim = partition.grid().dim();
    let comps = if dim == 1 { 2 } else { 4 };
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        &Header {
            dim: dim as u32,
            n: partition.blocks_per_axis() as u32,
            components: comps,
            kind: KIND_DEFECT,
            time,
            block: partition.block_factor() as u32,
        },
    )?;
    write_scalars(
        &mut w,
        (0..partition.num_blocks()).flat_map(|b| {
            let rv = defect.rv[b];
            if dim == 1 {
                vec![rv.xx, defect.rp[b]]
            } else {
                vec![rv.xx, rv.xy, rv.yy, defect.rp[b]]
            }
        }),
    )?;
    w.flush()?;
    Ok(())
}

pub fn read_defect(path: impl AsRef<Path>) -> Result<(DefectField, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let h = read_header(&mut r)?;
    if h.kind != KIND_DEFECT {
        return Err(Error::Container(format!("expected defect container, got kind {}", h.kind)));
    }
    let dim = h.dim as usize;
    let fine = TorusGrid::new(dim, (h.n * h.block) as usize)?;
    let partition = BlockPartition::new(fine, h.block as usize)?;
    let comps = if dim == 1 { 2usize } else { 4 };
    if h.components != comps as u32 {
        return Err(Error::Container(format!("component count {}", h.components)));
    }
    let nb = partition.num_blocks();
    let flat = read_scalars(&mut r, nb * comps)?;
    let mut rv = Vec::with_capacity(nb);
    let mut rp = Vec::with_capacity(nb);
    for b in 0..nb {
        let base = b * comps;
        if dim == 1 {
            rv.push(SymMat { xx: flat[base], xy: 0.0, yy: 0.0 });
            rp.push(flat[base + 1]);
        } else {
            rv.push(SymMat { xx: flat[base], xy: flat[base + 1], yy: flat[base + 2] });
            rp.push(flat[base + 3]);
        }
    }
    Ok((DefectField::new(partition, rv, rp)?, h.time))
}

// --- CSV writers -----------------------------------------------------------

pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut out = String::from("time,energy,dissipation,slack\n");
    let slack = ledger.slack();
    for k in 0..ledger.len() {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e}\n",
            ledger.times[k], ledger.energy[k], ledger.dissipation[k], slack[k]
        ));
    }
    out
}

pub fn residual_csv(report: &ResidualReport) -> String {
    let mut out = String::from("function,residual,quadrature_estimate\n");
    for e in &report.entries {
        out.push_str(&format!("{},{:.17e},{:.17e}\n", e.id, e.residual, e.quadrature_estimate));
    }
    out
}

pub fn slack_csv(report: &SlackReport) -> String {
    let mut out = String::from("envelope,min_slack,tau1,tau2,pass\n");
    for e in &report.entries {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{}\n",
            e.id,
            e.min_slack,
            e.at.0,
            e.at.1,
            e.min_slack >= -report.tol
        ));
    }
    out
}

pub fn consistency_csv(table: &ConsistencyTable) -> String {
    let mut out = String::from("epsilon,family,function,error\n");
    for row in &table.rows {
        for (id, v) in table.scalar_ids.iter().zip(row.e1.iter()) {
            out.push_str(&format!("{:.6e},E1,{},{:.17e}\n", row.epsilon, id, v));
        }
        for (id, v) in table.vector_ids.iter().zip(row.e2.iter()) {
            out.push_str(&format!("{:.6e},E2,{},{:.17e}\n", row.epsilon, id, v));
        }
        for (id, v) in table.envelope_ids.iter().zip(row.e3.iter()) {
            out.push_str(&format!("{:.6e},E3,{},{:.17e}\n", row.epsilon, id, v));
        }
    }
    out
}

pub fn gap_csv(report: &GapReport) -> String {
    let mut out = String::from("time,gap\n");
    for (t, g) in report.times.iter().zip(report.gap.iter()) {
        out.push_str(&format!("{:.17e},{:.17e}\n", t, g));
    }
    out.push_str(&format!("# lambda,{:.17e}\n", report.lambda));
    out
}

pub fn weakstar_csv(table: &WeakstarTable) -> String {
    let mut out = String::from("function,member,rho_pairing,momentum_pairing\n");
    for row in &table.rows {
        for (n, (r, m)) in row.rho.iter().zip(row.mom.iter()).enumerate() {
            out.push_str(&format!("{},{},{:.17e},{:.17e}\n", row.id, n, r, m));
        }
    }
    out
}

pub fn write_string(path: impl AsRef<Path>, content: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(content.as_bytes())?;
    f.flush()?;
    Ok(())
}

// --- run manifest ------------------------------------------------------------

pub fn sha256_hex(path: impl AsRef<Path>) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record of one CLI run: configuration echo, seeds, and a digest
/// of every artifact written.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config_echo: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub verdicts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64, threads: usize, config_echo: String) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config_echo,
            artifacts: Vec::new(),
            verdicts: BTreeMap::new(),
        }
    }

    /// Register `root/rel` (already written) with its digest.
    pub fn add_artifact(&mut self, root: &Path, rel: impl AsRef<Path>) -> Result<()> {
        let full: PathBuf = root.join(rel.as_ref());
        let sha256 = sha256_hex(&full)?;
        let bytes = std::fs::metadata(&full)?.len();
        self.artifacts.push(ArtifactEntry {
            path: rel.as_ref().to_string_lossy().into_owned(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn set_verdict(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.verdicts.insert(key.into(), value.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization")
    }

    /// Write the manifest itself (not listed among its own artifacts).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_string(path, &self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::EosParams;

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("del-io-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn field_container_round_trip() {
        let dir = tmpdir("field");
        for dim in [1usize, 2] {
            let g = TorusGrid::new(dim, 12).unwrap();
            let f = ConservedField::from_fn(g, |x| {
                (
                    1.0 + 0.5 * (x[0] * 2.1).sin().abs(),
                    [0.3 * x[0], if dim == 2 { -0.2 * x[1] } else { 0.0 }],
                )
            })
            .unwrap();
            let path = dir.join(format!("f{dim}.bin"));
            write_field(&path, &f).unwrap();
            let back = read_field(&path).unwrap();
            assert_eq!(back.grid(), g);
            assert_eq!(back.rho, f.rho);
            assert_eq!(back.mom, f.mom);
        }
    }

    #[test]
    fn defect_container_round_trip() {
        let dir = tmpdir("defect");
        let g = TorusGrid::new(2, 16).unwrap();
        let partition = BlockPartition::new(g, 4).unwrap();
        let eos = EosParams::default();
        let f = ConservedField::from_fn(g, |x| {
            (1.0 + 0.3 * (3.0 * x[0]).sin().abs(), [x[1] * 0.2, -x[0] * 0.1])
        })
        .unwrap();
        let d = crate::defect::defect_field(&f, &partition, &eos).unwrap();
        let path = dir.join("d.bin");
        write_defect(&path, &d, 0.75).unwrap();
        let (back, t) = read_defect(&path).unwrap();
        assert_eq!(t, 0.75);
        assert_eq!(back.partition(), partition);
        assert_eq!(back.rv, d.rv);
        assert_eq!(back.rp, d.rp);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tmpdir("magic");
        let path = dir.join("bad.bin");
        std::fs::write(&path, vec![0u8; 128]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Container(_))));
    }

    #[test]
    fn ledger_csv_layout() {
        let mut ledger = EnergyLedger::default();
        ledger.push(0.0, 5.0, 0.0);
        ledger.push(0.1, 4.5, 0.25);
        let csv = ledger_csv(&ledger);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "time,energy,dissipation,slack");
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("2.5"));
    }

    #[test]
    fn manifest_digests_match_files() {
        let dir = tmpdir("manifest");
        write_string(dir.join("a.csv"), "x,y\n1,2\n").unwrap();
        let mut manifest = RunManifest::new("solve", 42, 1, "[solver]\n".into());
        manifest.add_artifact(&dir, "a.csv").unwrap();
        manifest.set_verdict("energy_inequality", "PASS");
        manifest.write(dir.join("manifest.json")).unwrap();

        let json = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["command"], "solve");
        assert_eq!(parsed["seed"], 42);
        assert_eq!(parsed["verdicts"]["energy_inequality"], "PASS");
        let digest = parsed["artifacts"][0]["sha256"].as_str().unwrap();
        assert_eq!(digest, sha256_hex(dir.join("a.csv")).unwrap());
    }
}
