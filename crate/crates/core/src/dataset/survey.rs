use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::DatasetError;

/// Cells spelled like this are read as a missing answer.
const MISSING_MARKERS: [&str; 3] = ["", "NA", "N/A"];

/// Raw survey answers keyed by user, then by column name.
///
/// A missing answer is `None`; empty strings never appear as values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurveyTable {
    columns: Vec<String>,
    rows: BTreeMap<String, BTreeMap<String, Option<String>>>,
}

impl SurveyTable {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: BTreeMap::new(),
        }
    }

    /// Reads delimited text whose header row is `user_id` followed by
    /// attribute names.
    pub fn from_reader<R: Read>(reader: R, delimiter: u8) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut cols = headers.iter().map(|h| h.trim().to_string());
        if cols.next().as_deref() != Some("user_id") {
            return Err(DatasetError::Malformed {
                path: "<survey>".into(),
                reason: "first column must be `user_id`".into(),
            });
        }
        let mut table = Self::new(cols);
        for rec in rdr.records() {
            let rec = rec?;
            let user = rec.get(0).unwrap_or_default().trim().to_string();
            if table.rows.contains_key(&user) {
                return Err(DatasetError::DuplicateUser(user));
            }
            let row = table
                .columns
                .iter()
                .zip(rec.iter().skip(1))
                .map(|(c, v)| {
                    let v = v.trim();
                    let v = (!MISSING_MARKERS.contains(&v)).then(|| v.to_string());
                    (c.clone(), v)
                })
                .collect();
            table.rows.insert(user, row);
        }
        Ok(table)
    }

    /// Tab-delimited for `.tsv` files, comma-delimited otherwise.
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, delimiter_for(path)).map_err(|e| match e {
            DatasetError::Malformed { reason, .. } => DatasetError::Malformed {
                path: path.to_path_buf(),
                reason,
            },
            e => e,
        })
    }

    pub fn write<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), DatasetError> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        w.write_record(std::iter::once("user_id").chain(self.columns.iter().map(String::as_str)))?;
        for (user, row) in &self.rows {
            let mut rec = vec![user.as_str()];
            for c in &self.columns {
                rec.push(row.get(c).and_then(|v| v.as_deref()).unwrap_or("NA"));
            }
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file), delimiter_for(path))
    }

    /// Sets one answer, adding the user and column as needed. Empty strings
    /// are stored as missing.
    pub fn set(&mut self, user: &str, column: &str, value: Option<&str>) {
        if !self.columns.iter().any(|c| c == column) {
            self.columns.push(column.to_string());
        }
        let value = value.map(str::trim).filter(|v| !v.is_empty()).map(str::to_string);
        self.rows
            .entry(user.to_string())
            .or_default()
            .insert(column.to_string(), value);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The answer, or `None` when the user, column or answer is absent.
    pub fn get(&self, user: &str, column: &str) -> Option<&str> {
        self.rows.get(user)?.get(column)?.as_deref()
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    }
}
