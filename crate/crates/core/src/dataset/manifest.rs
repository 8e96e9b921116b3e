use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Only a user's most recent recordings are kept.
pub const MAX_RECORDINGS_PER_USER: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub user_id: String,
    pub recording_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    /// Recording time, seconds since the Unix epoch.
    pub timestamp: i64,
}

/// Every recording of a dataset, one row per file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    root: PathBuf,
    index: BTreeMap<String, usize>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, root: PathBuf) -> Result<Self, DatasetError> {
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.recording_id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateRecording(e.recording_id.clone()));
            }
        }
        Ok(Self { entries, root, index })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Directory relative paths are resolved against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Reads `user_id,recording_id,path,timestamp` rows (tab-delimited for
    /// `.tsv`).
    pub fn from_reader<R: Read>(reader: R, delimiter: u8, root: PathBuf) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(reader);
        let entries = rdr
            .deserialize::<ManifestEntry>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(entries, root)
    }

    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_reader(file, delimiter_for(path), root)
    }

    pub fn write<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), DatasetError> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file), delimiter_for(path))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn entry(&self, recording_id: &str) -> Option<&ManifestEntry> {
        self.index.get(recording_id).map(|&i| &self.entries[i])
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    }
}

/// Per-user recording ids, most recent first, capped per user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inventory {
    users: BTreeMap<String, Vec<String>>,
}

impl Inventory {
    pub fn from_manifest(manifest: &Manifest) -> Self {
        Self::from_manifest_capped(manifest, MAX_RECORDINGS_PER_USER)
    }

    /// Equal timestamps are ordered by recording id so the result does not
    /// depend on manifest row order.
    pub fn from_manifest_capped(manifest: &Manifest, cap: usize) -> Self {
        let mut by_user: BTreeMap<String, Vec<(i64, &str)>> = BTreeMap::new();
        for e in &manifest.entries {
            by_user
                .entry(e.user_id.clone())
                .or_default()
                .push((e.timestamp, &e.recording_id));
        }
        let users = by_user
            .into_iter()
            .map(|(u, mut recs)| {
                recs.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
                let ids = recs.into_iter().take(cap).map(|(_, r)| r.to_string()).collect();
                (u, ids)
            })
            .collect();
        Self { users }
    }

    pub fn from_map(users: BTreeMap<String, Vec<String>>) -> Self {
        Self { users }
    }

    pub fn recordings(&self, user: &str) -> &[String] {
        self.users.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn users(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.users.iter().map(|(u, r)| (u.as_str(), r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(u: &str, r: &str, t: i64) -> ManifestEntry {
        ManifestEntry {
            user_id: u.into(),
            recording_id: r.into(),
            path: format!("{r}.txt").into(),
            timestamp: t,
        }
    }

    #[test]
    fn latest_first_and_capped() {
        let entries = (0..130).map(|i| entry("u", &format!("r{i:03}"), i)).collect();
        let m = Manifest::new(entries, PathBuf::new()).unwrap();
        let inv = Inventory::from_manifest(&m);
        let recs = inv.recordings("u");
        assert_eq!(recs.len(), 100);
        assert_eq!(recs[0], "r129");
        assert_eq!(recs[99], "r030");
        assert!(inv.recordings("nobody").is_empty());
    }

    #[test]
    fn duplicate_recordings_rejected() {
        let e = vec![entry("u", "r", 1), entry("v", "r", 2)];
        assert!(matches!(Manifest::new(e, PathBuf::new()), Err(DatasetError::DuplicateRecording(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = Manifest::new(vec![entry("u", "r1", 5), entry("u", "r2", 7)], PathBuf::from("/data")).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf, b',').unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,recording_id,path,timestamp\n"));
        let back = Manifest::from_reader(buf.as_slice(), b',', PathBuf::from("/data")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve(&back.entries()[0]), PathBuf::from("/data/r1.txt"));
    }
}
