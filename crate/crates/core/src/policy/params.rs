use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SBRL";
pub const FORMAT_VERSION: u32 = 1;

/// Flat parameter vector for a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub spec: NetworkSpec,
    pub values: Vec<f32>,
}

impl PolicyParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        PolicyParams { spec: spec.clone(), values: vec![0.0; spec.param_count()] }
    }

    /// Orthogonal initialization scaled per block: 1.0 for hidden and attention
    /// projections, 1.0 for the value head, 0.01 for the action heads. Biases
    /// and log-std start at zero.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        for e in spec.layout().entries {
            if !e.name.ends_with(".w") {
                continue;
            }
            let gain = match e.name.as_str() {
                "mean.w" | "shoot.w" => 0.01,
                _ => 1.0,
            };
            let m = orthogonal(e.rows, e.cols, gain, &mut rng);
            for (dst, v) in p.values[e.range()].iter_mut().zip(m) {
                *dst = v as f32;
            }
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn block(&self, name: &str) -> Option<&[f32]> {
        self.spec.layout().get(name).map(|e| &self.values[e.range()])
    }

    /// SHA-256 over the spec hash and the little-endian parameter bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.spec.hash().to_le_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = self.spec.layout();
        let spec_json = serde_json::to_vec(&self.spec).expect("spec serializes");
        let mut out = Vec::with_capacity(64 + spec_json.len() + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec.hash().to_le_bytes());
        out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec_json);
        out.extend_from_slice(&(layout.entries.len() as u32).to_le_bytes());
        for e in &layout.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.rows as u32).to_le_bytes());
            out.extend_from_slice(&(e.cols as u32).to_le_bytes());
            out.extend_from_slice(&(e.offset as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported version {}", version)));
        }
        let hash = r.u64()?;
        let n = r.u32()? as usize;
        let spec: NetworkSpec = serde_json::from_slice(r.take(n)?).map_err(|e| corrupt(&format!("spec: {}", e)))?;
        spec.validate().map_err(|e| corrupt(&e))?;
        if spec.hash() != hash {
            return Err(corrupt("spec hash does not match embedded spec"));
        }
        let layout = spec.layout();
        let entries = r.u32()? as usize;
        if entries != layout.entries.len() {
            return Err(corrupt("layout table length"));
        }
        for e in &layout.entries {
            let len = r.u16()? as usize;
            let name = r.take(len)?;
            let (rows, cols, offset) = (r.u32()? as usize, r.u32()? as usize, r.u64()? as usize);
            if name != e.name.as_bytes() || rows != e.rows || cols != e.cols || offset != e.offset {
                return Err(corrupt(&format!("layout entry {}", e.name)));
            }
        }
        let count = r.u64()? as usize;
        if count != layout.total {
            return Err(corrupt("parameter count"));
        }
        let raw = r.take(count.checked_mul(4).ok_or_else(|| corrupt("parameter count"))?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(PolicyParams { spec, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a parameter file of any spec.
    pub fn load_any(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a parameter file, requiring it to match `spec`.
    pub fn load(path: &Path, spec: &NetworkSpec) -> Result<Self> {
        let p = Self::load_any(path)?;
        if p.spec.hash() != spec.hash() {
            return Err(Error::SpecMismatch { expected: spec.hash(), found: p.spec.hash() });
        }
        Ok(p)
    }
}

pub fn save_params(params: &PolicyParams, path: &Path) -> Result<()> {
    params.save(path)
}

pub fn load_params(path: &Path, spec: &NetworkSpec) -> Result<PolicyParams> {
    PolicyParams::load(path, spec)
}

fn corrupt(m: &str) -> Error {
    Error::CorruptFile(m.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Row-major `rows x cols` matrix with orthonormal rows (or columns, whichever
/// is the smaller set) times `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = gain * if rows <= cols { vecs[r][c] } else { vecs[c][r] };
        }
    }
    m
}

/// Human-readable sidecar written next to a weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub skill: String,
    pub training_steps: u64,
    pub config_hash: String,
    pub spec_hash: String,
    pub seed: u64,
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("toml")
}

impl ModelMeta {
    pub fn save(&self, weights: &Path) -> Result<()> {
        let path = sidecar_path(weights);
        let text = toml::to_string(self).expect("meta serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(weights: &Path) -> Result<Self> {
        let path = sidecar_path(weights);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(toml::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btree::TaskKind;

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = orthogonal(3, 5, 1.0, &mut rng);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..5).map(|k| m[i * 5 + k] * m[j * 5 + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("combat.sbrl");
        let spec = NetworkSpec::for_task(TaskKind::Combat);
        let p = PolicyParams::init(&spec, 9);
        p.save(&path).unwrap();
        let q = load_params(&path, &spec).unwrap();
        assert_eq!(p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), q.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(p.content_hash(), q.content_hash());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let spec = NetworkSpec::for_task(TaskKind::Combat);
        let bytes = PolicyParams::init(&spec, 9).to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(PolicyParams::from_bytes(&bytes[..cut]), Err(Error::CorruptFile(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(PolicyParams::from_bytes(&bad), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("combat.sbrl");
        PolicyParams::init(&NetworkSpec::for_task(TaskKind::Combat), 9).save(&path).unwrap();
        let r = load_params(&path, &NetworkSpec::for_task(TaskKind::Hide));
        assert!(matches!(r, Err(Error::SpecMismatch { .. })));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sbrl");
        let meta = ModelMeta { skill: "combat".into(), training_steps: 4000, config_hash: "ab".into(), spec_hash: "cd".into(), seed: 3 };
        meta.save(&path).unwrap();
        assert_eq!(ModelMeta::load(&path).unwrap(), meta);
    }
}
