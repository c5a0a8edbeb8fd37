//! Binary checkpoints with a JSON sidecar.
//!
//! Layout: the magic `MPKD1`, a little-endian `u32` block count, then per
//! block `u32` rows, `u32` cols and `rows * cols` little-endian `f32` values.
//! Blocks in order: entity embeddings, relation embeddings, transform,
//! attention vector (1 row), time frequencies (1 row), then the alignment
//! matrices temporal Q, K, V and cross Q, K.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::AlignParams;
use crate::encoder::NetworkParams;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const MAGIC: &[u8; 5] = b"MPKD1";
const BLOCKS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dim: usize,
    pub entities: usize,
    pub relations: usize,
    pub dropout: f64,
    pub config_digest: String,
    pub seed: u64,
    /// SHA-256 of the binary payload.
    pub payload_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub student: NetworkParams<f64>,
    pub align: AlignParams<f64>,
    pub meta: CheckpointMeta,
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn put(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn block(&mut self) -> Result<DenseMatrix<f64>> {
        let (rows, cols) = (self.u32()?, self.u32()?);
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint("block size overflow".into()))?;
        let data = self
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        DenseMatrix::new(rows, cols, data)
    }
}

impl Checkpoint {
    pub fn new(student: NetworkParams<f64>, align: AlignParams<f64>, config_digest: &str, seed: u64) -> Self {
        let meta = CheckpointMeta {
            dim: student.dim(),
            entities: student.entities(),
            relations: student.base_relations,
            dropout: student.dropout,
            config_digest: config_digest.to_string(),
            seed,
            payload_sha256: String::new(),
        };
        let mut ck = Self { student, align, meta };
        ck.meta.payload_sha256 = hex(&ck.payload());
        ck
    }

    pub fn payload(&self) -> Vec<u8> {
        let s = &self.student;
        let a = &self.align;
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&BLOCKS.to_le_bytes());
        for m in [&s.entity_emb, &s.relation_emb, &s.transform] {
            put(&mut out, m.rows(), m.cols(), m.data());
        }
        put(&mut out, 1, s.attn.len(), &s.attn);
        put(&mut out, 1, s.time_freq.len(), &s.time_freq);
        for m in [&a.temporal_q, &a.temporal_k, &a.temporal_v, &a.cross_q, &a.cross_k] {
            put(&mut out, m.rows(), m.cols(), m.data());
        }
        out
    }

    pub fn sidecar(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        s.push('\n');
        s
    }

    /// Decodes a payload and checks it against its metadata.
    pub fn from_parts(payload: &[u8], meta: CheckpointMeta) -> Result<Self> {
        if payload.len() < MAGIC.len() || &payload[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        if hex(payload) != meta.payload_sha256 {
            return Err(Error::Checkpoint("payload digest does not match metadata".into()));
        }
        let mut r = Reader { bytes: payload, pos: MAGIC.len() };
        if r.u32()? != BLOCKS as usize {
            return Err(Error::Checkpoint("unexpected block count".into()));
        }
        let entity_emb = r.block()?;
        let relation_emb = r.block()?;
        let transform = r.block()?;
        let attn = r.block()?.data().to_vec();
        let time_freq = r.block()?.data().to_vec();
        let align = AlignParams {
            temporal_q: r.block()?,
            temporal_k: r.block()?,
            temporal_v: r.block()?,
            cross_q: r.block()?,
            cross_k: r.block()?,
        };
        if r.pos != payload.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let student = NetworkParams {
            entity_emb,
            relation_emb,
            transform,
            attn,
            time_freq,
            dropout: meta.dropout,
            base_relations: meta.relations,
        };
        student.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if student.dim() != meta.dim || student.entities() != meta.entities || align.dim() != meta.dim {
            return Err(Error::Checkpoint("dimensions disagree with metadata".into()));
        }
        Ok(Self { student, align, meta })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.payload())?;
        std::fs::write(Self::sidecar_path(path), self.sidecar())?;
        Ok(())
    }

    /// Loads a checkpoint; `expected_digest` pins the training config.
    pub fn load(path: &Path, expected_digest: Option<&str>) -> Result<Self> {
        let payload = std::fs::read(path)?;
        let meta_text = std::fs::read_to_string(Self::sidecar_path(path))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        if let Some(d) = expected_digest {
            if d != meta.config_digest {
                return Err(Error::Checkpoint("config digest mismatch".into()));
            }
        }
        Self::from_parts(&payload, meta)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let student = NetworkParams::<f64>::init(5, 2, 4, 0.5, &mut rng);
        let align = AlignParams::init(4, 0.01, &mut rng);
        Checkpoint::new(student, align, "abc", 3)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mpkd");
        let ck = sample();
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path, Some("abc")).unwrap();
        assert_eq!(loaded.payload(), ck.payload());
        assert_eq!(loaded.sidecar(), ck.sidecar());
        for (a, b) in loaded.student.entity_emb.data().iter().zip(ck.student.entity_emb.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn rejects_bad_magic_and_digest() {
        let ck = sample();
        let mut bytes = ck.payload();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_parts(&bytes, ck.meta.clone()), Err(Error::Checkpoint(_))));
        let mut bytes = ck.payload();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(Checkpoint::from_parts(&bytes, ck.meta.clone()).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mpkd");
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path, Some("other")).is_err());
    }
}
