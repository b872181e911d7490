use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::{DatastoreError, Result};

pub const MANIFEST_HEADER: &str = "tile_id\tslide_id\tgroup\tx\ty\twidth\theight\tmpp\tsplit";
const SCHEMA_PREFIX: &str = "# schema_version=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    ValIn,
    ValOut,
    Guidance,
    Other,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValIn => "val_in",
            Split::ValOut => "val_out",
            Split::Guidance => "guidance",
            Split::Other => "other",
        }
    }

    /// Validation splits form one arm of the preprocessing pipeline, everything else the other.
    pub fn is_validation(self) -> bool {
        matches!(self, Split::ValIn | Split::ValOut)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val_in" => Ok(Split::ValIn),
            "val_out" => Ok(Split::ValOut),
            "guidance" => Ok(Split::Guidance),
            "other" => Ok(Split::Other),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// One tile: where it was cut from, at which resolution, and which split it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile_id: String,
    pub slide_id: String,
    /// Stratification group (tissue source site in the histopathology setting).
    pub group: String,
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    pub mpp: f64,
    pub split: Split,
}

impl TileRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err(format!("tile {:?} has zero size", self.tile_id));
        }
        if !(self.mpp > 0.0 && self.mpp.is_finite()) {
            return Err(format!(
                "tile {:?} has invalid mpp {}",
                self.tile_id, self.mpp
            ));
        }
        for (name, field) in [
            ("tile_id", &self.tile_id),
            ("slide_id", &self.slide_id),
            ("group", &self.group),
        ] {
            if field.is_empty() || field.contains(['\t', '\n', '\r']) {
                return Err(format!(
                    "{name} {field:?} is empty or contains tabs/newlines"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileManifest {
    pub entries: Vec<TileRecord>,
    pub schema_version: u32,
}

impl Default for TileManifest {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            schema_version: 1,
        }
    }
}

impl TileManifest {
    /// Builds a manifest, checking record invariants and id uniqueness.
    pub fn new(entries: Vec<TileRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            e.validate()
                .map_err(|msg| DatastoreError::Manifest { line: i + 1, msg })?;
            if !seen.insert(e.tile_id.as_str()) {
                return Err(DatastoreError::DuplicateId(e.tile_id.clone()));
            }
        }
        Ok(Self {
            entries,
            schema_version: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.tile_id.clone()).collect()
    }

    pub fn filter_split(&self, split: Split) -> TileManifest {
        TileManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
            schema_version: self.schema_version,
        }
    }
}

pub fn write_manifest<W: Write>(manifest: &TileManifest, mut dst: W) -> Result<()> {
    writeln!(dst, "{SCHEMA_PREFIX}{}", manifest.schema_version)?;
    writeln!(dst, "{MANIFEST_HEADER}")?;
    for e in &manifest.entries {
        writeln!(
            dst,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.tile_id, e.slide_id, e.group, e.x, e.y, e.width, e.height, e.mpp, e.split
        )?;
    }
    dst.flush()?;
    Ok(())
}

fn field<T: FromStr>(value: &str, name: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| DatastoreError::Manifest {
        line,
        msg: format!("field {name}: {e}"),
    })
}

pub fn read_manifest<R: BufRead>(src: R) -> Result<TileManifest> {
    let mut schema_version = 1;
    let mut header_seen = false;
    let mut entries = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if let Some(rest) = trimmed.strip_prefix(SCHEMA_PREFIX) {
            schema_version = field(rest.trim(), "schema_version", lineno)?;
            continue;
        }
        if trimmed.starts_with('#') || (trimmed.is_empty() && header_seen) {
            continue;
        }
        if !header_seen {
            if trimmed != MANIFEST_HEADER {
                return Err(DatastoreError::Manifest {
                    line: lineno,
                    msg: format!("expected header {MANIFEST_HEADER:?}, found {trimmed:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 9 {
            return Err(DatastoreError::Manifest {
                line: lineno,
                msg: format!("expected 9 tab-separated fields, found {}", cols.len()),
            });
        }
        entries.push(TileRecord {
            tile_id: cols[0].to_string(),
            slide_id: cols[1].to_string(),
            group: cols[2].to_string(),
            x: field(cols[3], "x", lineno)?,
            y: field(cols[4], "y", lineno)?,
            width: field(cols[5], "width", lineno)?,
            height: field(cols[6], "height", lineno)?,
            mpp: field(cols[7], "mpp", lineno)?,
            split: field(cols[8], "split", lineno)?,
        });
    }
    if !header_seen {
        return Err(DatastoreError::Manifest {
            line: 0,
            msg: "missing header line".into(),
        });
    }
    let mut manifest = TileManifest::new(entries)?;
    manifest.schema_version = schema_version;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, group: &str) -> TileRecord {
        TileRecord {
            tile_id: id.into(),
            slide_id: "slide-1".into(),
            group: group.into(),
            x: 100,
            y: -4,
            width: 224,
            height: 224,
            mpp: 0.5,
            split: Split::ValOut,
        }
    }

    #[test]
    fn roundtrip_with_comments() {
        let m = TileManifest::new(vec![rec("a", "G1"), rec("b", "G2")]).unwrap();
        let mut buf = Vec::new();
        write_manifest(&m, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("# trailing comment\n");
        let back = read_manifest(text.as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_is_required() {
        let text = "a\ts\tg\t0\t0\t1\t1\t0.5\ttrain\n";
        assert!(matches!(
            read_manifest(text.as_bytes()),
            Err(DatastoreError::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_duplicates_and_bad_records() {
        assert!(matches!(
            TileManifest::new(vec![rec("a", "G"), rec("a", "G")]),
            Err(DatastoreError::DuplicateId(_))
        ));
        let mut bad = rec("a", "G");
        bad.mpp = 0.0;
        assert!(TileManifest::new(vec![bad]).is_err());
        let text = format!("{MANIFEST_HEADER}\na\ts\tg\t0\t0\t1\t1\t0.5\tholdout\n");
        assert!(matches!(
            read_manifest(text.as_bytes()),
            Err(DatastoreError::Manifest { line: 2, .. })
        ));
    }
}
