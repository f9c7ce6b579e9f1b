//! Binary corpus files.
//!
//! ```text
//! header   "FPSC" | u16 version (=1) | u32 embedding_dim | u32 record_count
//! record   u16 len | subject_id (UTF-8)
//!          u16 len | site_id (UTF-8)
//!          u8 label (0 = HC, 1 = PD)
//!          u32 frame_count T
//!          T * embedding_dim f64, row-major
//! ```
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64,
//! so a write/read round trip is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{CorpusError, Error, Result};
use crate::pool::{EmbeddingSequence, Label, Recording};

pub const MAGIC: [u8; 4] = *b"FPSC";
pub const VERSION: u16 = 1;

/// In-memory image of a corpus file.
///
/// Recording ids are not stored; decoding names every sequence
/// `site_id/subject_id`, which is also what the generator uses.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFile {
    pub embedding_dim: usize,
    pub records: Vec<Recording>,
}

impl CorpusFile {
    pub fn new(embedding_dim: usize, records: Vec<Recording>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.sequence.dim() != embedding_dim) {
            return Err(Error::Data(format!(
                "recording {} has width {}, corpus width is {embedding_dim}",
                r.sequence.recording_id(),
                r.sequence.dim()
            )));
        }
        Ok(Self {
            embedding_dim,
            records,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::Data(format!("{what} {v} does not fit in u32")))
        };
        let payload: usize = self
            .records
            .iter()
            .map(|r| r.sequence.frames().len() * 8 + 64)
            .sum();
        let mut out = Vec::with_capacity(14 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(self.embedding_dim, "embedding dim")?.to_le_bytes());
        out.extend_from_slice(&to_u32(self.records.len(), "record count")?.to_le_bytes());
        for r in &self.records {
            write_str(&mut out, &r.subject_id)?;
            write_str(&mut out, &r.site_id)?;
            out.push(r.label.as_u8());
            out.extend_from_slice(&to_u32(r.sequence.len(), "frame count")?.to_le_bytes());
            for v in r.sequence.frames().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CorpusError::BadMagic(magic));
        }
        let version = cur.u16("version")?;
        if version != VERSION {
            return Err(CorpusError::UnsupportedVersion(version));
        }
        let dim = cur.u32("embedding dim")? as usize;
        let count = cur.u32("record count")? as usize;
        if dim == 0 {
            return Err(CorpusError::InvalidRecord {
                record: 0,
                reason: "embedding dim is zero".into(),
            });
        }

        let mut records = Vec::with_capacity(count.min(1 << 16));
        for index in 0..count {
            let subject_id = cur.string(index)?;
            let site_id = cur.string(index)?;
            let raw_label = cur.take(1, "label")?[0];
            let label = Label::from_u8(raw_label).ok_or_else(|| CorpusError::InvalidRecord {
                record: index,
                reason: format!("label byte {raw_label}"),
            })?;
            let frames = cur.u32("frame count")? as usize;
            if frames == 0 {
                return Err(CorpusError::InvalidRecord {
                    record: index,
                    reason: "zero frames".into(),
                });
            }
            let n = frames
                .checked_mul(dim)
                .filter(|n| n.checked_mul(8).is_some())
                .ok_or_else(|| CorpusError::Truncated(format!("record {index} declares too many frames")))?;
            let raw = cur.take(n * 8, "frame payload")?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite { record: index });
            }
            let array = Array2::from_shape_vec((frames, dim), values).expect("length checked");
            let sequence = EmbeddingSequence::new(format!("{site_id}/{subject_id}"), array).map_err(|e| {
                CorpusError::InvalidRecord {
                    record: index,
                    reason: e.to_string(),
                }
            })?;
            records.push(Recording {
                subject_id,
                site_id,
                label,
                sequence,
            });
        }
        if cur.pos != bytes.len() {
            return Err(CorpusError::TrailingBytes(bytes.len() - cur.pos));
        }
        Ok(Self {
            embedding_dim: dim,
            records,
        })
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Data(format!("identifier too long: {s:?}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CorpusError::Truncated(format!(
                "{what}: needed {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16, CorpusError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self, record: usize) -> Result<String, CorpusError> {
        let len = self.u16("identifier length")? as usize;
        let raw = self.take(len, "identifier")?;
        String::from_utf8(raw.to_vec()).map_err(|_| CorpusError::InvalidRecord {
            record,
            reason: "identifier is not UTF-8".into(),
        })
    }
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &CorpusFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = corpus.encode()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<CorpusFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusFile::decode(&bytes)?)
}
