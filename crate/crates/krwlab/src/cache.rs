//! Compact binary cache for survival solves, keyed by a fingerprint of
//! `(killing, exhaustion, dimension, R, tolerance)`.

use crate::config::{ExhaustionSpec, KillingSpec};
use anyhow::{bail, Context, Result};
use krw_core::{Point, SurvivalSolution};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"KRWSOL1\n";

pub fn fingerprint(
    killing: &KillingSpec,
    exhaustion: &ExhaustionSpec,
    dim: usize,
    r_index: u32,
    tol: f64,
) -> String {
    let key = serde_json::json!({
        "killing": killing,
        "exhaustion": exhaustion,
        "dim": dim,
        "r": r_index,
        "tol": tol,
    });
    let mut hasher = Sha256::new();
    hasher.update(key.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

/// Values of one cached solve, sufficient for point queries and CSV dumps.
pub struct CachedSolution {
    pub dim: usize,
    pub residual: f64,
    pub sweeps: u64,
    pub values: Vec<(Point, f64)>,
    map: HashMap<Point, f64>,
}

impl CachedSolution {
    pub fn from_solution(sol: &SurvivalSolution) -> Self {
        let values: Vec<(Point, f64)> = sol.iter().collect();
        let map = values.iter().copied().collect();
        CachedSolution {
            dim: sol.dim,
            residual: sol.stats.residual,
            sweeps: sol.stats.sweeps,
            values,
            map,
        }
    }

    /// `u(x)` with the boundary convention `u = 1` outside the domain.
    pub fn value(&self, p: &Point) -> f64 {
        self.map.get(p).copied().unwrap_or(1.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(16 + self.values.len() * 16);
        buf.extend_from_slice(MAGIC);
        buf.push(self.dim as u8);
        buf.extend_from_slice(&self.residual.to_le_bytes());
        buf.extend_from_slice(&self.sweeps.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for (p, u) in &self.values {
            for a in 0..self.dim {
                buf.extend_from_slice(&p.coord(a).to_le_bytes());
            }
            buf.extend_from_slice(&u.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut data = Vec::new();
        f.read_to_end(&mut data)?;
        if data.len() < 8 + 1 + 8 + 8 + 8 || &data[..8] != MAGIC {
            bail!("not a solve cache file: {}", path.display());
        }
        let dim = data[8] as usize;
        let mut off = 9;
        let read_f64 = |d: &[u8], o: usize| f64::from_le_bytes(d[o..o + 8].try_into().unwrap());
        let read_u64 = |d: &[u8], o: usize| u64::from_le_bytes(d[o..o + 8].try_into().unwrap());
        let residual = read_f64(&data, off);
        off += 8;
        let sweeps = read_u64(&data, off);
        off += 8;
        let n = read_u64(&data, off) as usize;
        off += 8;
        let rec = 4 * dim + 8;
        if data.len() != off + n * rec {
            bail!("truncated solve cache file: {}", path.display());
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let mut coords = [0i32; 5];
            for c in coords.iter_mut().take(dim) {
                *c = i32::from_le_bytes(data[off..off + 4].try_into().unwrap());
                off += 4;
            }
            let u = read_f64(&data, off);
            off += 8;
            values.push((Point::new(&coords[..dim]), u));
        }
        let map = values.iter().copied().collect();
        Ok(CachedSolution {
            dim,
            residual,
            sweeps,
            values,
            map,
        })
    }
}

pub fn cache_path(out_dir: &Path, fp: &str) -> PathBuf {
    out_dir.join("cache").join(format!("{fp}.bin"))
}
