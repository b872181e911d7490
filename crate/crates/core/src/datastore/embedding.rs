use std::io::{Read, Write};

use super::{DatastoreError, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
pub const EMBEDDING_VERSION: u32 = 1;

/// An `rows x dim` matrix of extractor features, row-major, with provenance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    extractor_id: String,
    source_tag: String,
}

fn check_label(label: &str) -> Result<()> {
    if label.len() > u16::MAX as usize {
        return Err(DatastoreError::Label(format!(
            "label is {} bytes, limit is {}",
            label.len(),
            u16::MAX
        )));
    }
    Ok(())
}

impl EmbeddingSet {
    pub fn new(
        rows: usize,
        dim: usize,
        data: Vec<f32>,
        extractor_id: impl Into<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let expected = rows.saturating_mul(dim);
        if rows == 0 || dim == 0 || data.len() != expected {
            return Err(DatastoreError::Shape {
                rows,
                dim,
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DatastoreError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        let extractor_id = extractor_id.into();
        let source_tag = source_tag.into();
        check_label(&extractor_id)?;
        check_label(&source_tag)?;
        Ok(Self {
            rows,
            dim,
            data,
            extractor_id,
            source_tag,
        })
    }

    /// Builds a set from f64 rows, narrowing to f32.
    pub fn from_rows_f64(
        rows: &[Vec<f64>],
        extractor_id: impl Into<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(DatastoreError::DimMismatch(dim, r.len()));
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), dim, data, extractor_id, source_tag)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn extractor_id(&self) -> &str {
        &self.extractor_id
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Result<Self> {
        let tag = tag.into();
        check_label(&tag)?;
        self.source_tag = tag;
        Ok(self)
    }

    /// Row values widened to f64, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// New set made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(
            indices.len(),
            self.dim,
            data,
            self.extractor_id.clone(),
            self.source_tag.clone(),
        )
    }
}

/// Serializes `set` in the `EMB1` layout and returns the number of bytes written.
pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut dst: W) -> Result<u64> {
    let mut header = Vec::with_capacity(32 + set.extractor_id.len() + set.source_tag.len());
    header.extend_from_slice(&EMBEDDING_MAGIC);
    header.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    header.extend_from_slice(&(set.rows as u64).to_le_bytes());
    header.extend_from_slice(&(set.dim as u64).to_le_bytes());
    for label in [&set.extractor_id, &set.source_tag] {
        header.extend_from_slice(&(label.len() as u16).to_le_bytes());
        header.extend_from_slice(label.as_bytes());
    }
    dst.write_all(&header)?;
    let mut payload = Vec::with_capacity(set.data.len() * 4);
    for v in &set.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    dst.write_all(&payload)?;
    dst.flush()?;
    Ok((header.len() + payload.len()) as u64)
}

fn read_exact_or_truncated<R: Read>(src: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match src.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(DatastoreError::Truncated {
                    expected: buf.len() as u64,
                    found: filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn read_label<R: Read>(src: &mut R) -> Result<String> {
    let mut len = [0u8; 2];
    read_exact_or_truncated(src, &mut len)?;
    let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact_or_truncated(src, &mut bytes)?;
    String::from_utf8(bytes).map_err(|e| DatastoreError::Label(e.to_string()))
}

/// Parses an `EMB1` stream.
pub fn read_embeddings<R: Read>(mut src: R) -> Result<EmbeddingSet> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut src, &mut magic)?;
    if magic != EMBEDDING_MAGIC {
        return Err(DatastoreError::BadMagic { found: magic });
    }
    let mut word = [0u8; 4];
    read_exact_or_truncated(&mut src, &mut word)?;
    let version = u32::from_le_bytes(word);
    if version != EMBEDDING_VERSION {
        return Err(DatastoreError::VersionMismatch {
            found: version,
            expected: EMBEDDING_VERSION,
        });
    }
    let mut dword = [0u8; 8];
    read_exact_or_truncated(&mut src, &mut dword)?;
    let rows = u64::from_le_bytes(dword);
    read_exact_or_truncated(&mut src, &mut dword)?;
    let dim = u64::from_le_bytes(dword);
    let extractor_id = read_label(&mut src)?;
    let source_tag = read_label(&mut src)?;

    let expected =
        rows.checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(DatastoreError::Shape {
                rows: rows as usize,
                dim: dim as usize,
                expected: usize::MAX,
                found: 0,
            })?;
    // Read through `take` so a lying header cannot trigger a huge allocation up front.
    let mut payload = Vec::new();
    src.by_ref().take(expected).read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(DatastoreError::Truncated {
            expected,
            found: payload.len() as u64,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingSet::new(rows as usize, dim as usize, data, extractor_id, source_tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EmbeddingSet {
        EmbeddingSet::new(2, 3, vec![1., 2., 3., 4., 5., 6.], "toy-teacher", "val-out").unwrap()
    }

    #[test]
    fn roundtrip_small_matrix() {
        let set = sample();
        let mut buf = Vec::new();
        let n = write_embeddings(&set, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        let back = read_embeddings(&buf[..]).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.row(1), &[4., 5., 6.]);
    }

    #[test]
    fn short_payload_is_truncation() {
        let set = EmbeddingSet::new(10, 2, vec![0.5; 20], "x", "y").unwrap();
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        buf.truncate(buf.len() - 8); // one row missing
        match read_embeddings(&buf[..]) {
            Err(DatastoreError::Truncated { expected, found }) => {
                assert_eq!(expected, 80);
                assert_eq!(found, 72);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_payload_reports_position() {
        let set = sample();
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        let off = buf.len() - 4 * 6 + 4 * 4; // row 1, col 1
        buf[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match read_embeddings(&buf[..]) {
            Err(DatastoreError::NonFinite { row, col }) => assert_eq!((row, col), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut buf = Vec::new();
        write_embeddings(&sample(), &mut buf).unwrap();
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(
            read_embeddings(&wrong[..]),
            Err(DatastoreError::BadMagic { .. })
        ));
        let mut wrong = buf.clone();
        wrong[4] = 2;
        assert!(matches!(
            read_embeddings(&wrong[..]),
            Err(DatastoreError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(EmbeddingSet::new(2, 2, vec![0.; 3], "a", "b").is_err());
        assert!(EmbeddingSet::new(0, 2, vec![], "a", "b").is_err());
        assert!(matches!(
            EmbeddingSet::new(1, 2, vec![0., f32::INFINITY], "a", "b"),
            Err(DatastoreError::NonFinite { row: 0, col: 1 })
        ));
    }

    proptest! {
        #[test]
        fn read_inverts_write(
            rows in 1usize..12,
            dim in 1usize..9,
            seed in any::<u64>(),
            ext in "[a-z0-9-]{0,12}",
            tag in "[a-z0-9 -]{0,12}",
        ) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let data: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let set = EmbeddingSet::new(rows, dim, data, ext, tag).unwrap();
            let mut buf = Vec::new();
            write_embeddings(&set, &mut buf).unwrap();
            let back = read_embeddings(&buf[..]).unwrap();
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                set.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back, set);
        }
    }
}
