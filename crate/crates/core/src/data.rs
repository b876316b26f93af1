//! Records, datasets and their CSV representation.
//!
//! Every attribute is binary. A [`Record`] stores one bit per attribute, in
//! schema order; numeric indices over the domain `{0,1}^d` treat attribute 0
//! as the most significant bit, so index order equals lexicographic order.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    names: Vec<String>,
}

impl AttributeSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSchema("at least one attribute is required".into()));
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidSchema("attribute names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute name {name:?}")));
            }
        }
        Ok(AttributeSchema { names })
    }

    /// Schema `attr_1, ..., attr_d`.
    pub fn with_width(d: usize) -> Result<Self> {
        Self::new((1..=d).map(|j| format!("attr_{j}")).collect())
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A binary record; `bits[j]` is attribute `j` (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    bits: Vec<u8>,
}

impl Record {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::param(format!("bit {pos} has value {}", bits[pos])));
        }
        Ok(Record { bits })
    }

    pub fn zeros(d: usize) -> Self {
        Record { bits: vec![0; d] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Record {
            bits: bits.iter().map(|&b| b as u8).collect(),
        }
    }

    /// Record with lexicographic rank `index` among `{0,1}^d`.
    pub fn from_index(index: u64, d: usize) -> Self {
        debug_assert!(d <= 64);
        let bits = (0..d)
            .map(|j| ((index >> (d - 1 - j)) & 1) as u8)
            .collect();
        Record { bits }
    }

    /// Lexicographic rank; requires `d <= 64`.
    pub fn to_index(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn d(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, j: usize) -> bool {
        self.bits[j] == 1
    }

    pub fn with_flipped(&self, j: usize) -> Record {
        let mut bits = self.bits.clone();
        bits[j] ^= 1;
        Record { bits }
    }

    pub fn concat(&self, other: &Record) -> Record {
        let mut bits = Vec::with_capacity(self.d() + other.d());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&other.bits);
        Record { bits }
    }

    pub fn slice(&self, start: usize, end: usize) -> Record {
        Record {
            bits: self.bits[start..end].to_vec(),
        }
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit as u8);
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Record {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::param(format!("invalid bit character {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Record { bits })
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Record {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `|{j : a_j != b_j}|`.
pub fn hamming_distance(a: &Record, b: &Record) -> Result<usize> {
    if a.d() != b.d() {
        return Err(Error::SchemaMismatch {
            expected: a.d(),
            found: b.d(),
        });
    }
    Ok(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    schema: AttributeSchema,
    rows: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, rows: Vec<Record>) -> Result<Self> {
        for row in &rows {
            if row.d() != schema.d() {
                return Err(Error::SchemaMismatch {
                    expected: schema.d(),
                    found: row.d(),
                });
            }
        }
        Ok(Dataset { schema, rows })
    }

    /// Dataset over the default schema `attr_1..attr_d`.
    pub fn from_rows(d: usize, rows: Vec<Record>) -> Result<Self> {
        Self::new(AttributeSchema::with_width(d)?, rows)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn d(&self) -> usize {
        self.schema.d()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn with_row_replaced(&self, i: usize, row: Record) -> Result<Dataset> {
        let mut rows = self.rows.clone();
        rows[i] = row;
        Dataset::new(self.schema.clone(), rows)
    }
}

/// One labeled example with `±1` features and label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledRow {
    pub features: Vec<i8>,
    pub label: i8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDataset {
    schema: AttributeSchema,
    rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn new(schema: AttributeSchema, rows: Vec<LabeledRow>) -> Result<Self> {
        for row in &rows {
            if row.features.len() != schema.d() {
                return Err(Error::SchemaMismatch {
                    expected: schema.d(),
                    found: row.features.len(),
                });
            }
            if row.features.iter().chain(std::iter::once(&row.label)).any(|&v| v != 1 && v != -1) {
                return Err(Error::param("labeled rows must hold only -1/+1 values"));
            }
        }
        Ok(LabeledDataset { schema, rows })
    }

    /// Builds from `{0,1}` records and boolean labels (`false -> -1`, `true -> +1`).
    pub fn from_bits(d: usize, rows: &[(Record, bool)]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|(x, y)| LabeledRow {
                features: x.bits().iter().map(|&b| if b == 1 { 1 } else { -1 }).collect(),
                label: if *y { 1 } else { -1 },
            })
            .collect();
        Self::new(AttributeSchema::with_width(d)?, rows)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn d(&self) -> usize {
        self.schema.d()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    /// The `{0,1}` view used by the histogram-based learners.
    pub fn to_bits(&self) -> Vec<(Record, bool)> {
        self.rows
            .iter()
            .map(|r| {
                let bits = r.features.iter().map(|&v| (v == 1) as u8).collect();
                (Record { bits }, r.label == 1)
            })
            .collect()
    }
}

/// Either kind of dataset, as returned by [`load_dataset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadedDataset {
    Unlabeled(Dataset),
    Labeled(LabeledDataset),
}

fn parse_cell(cell: &str, line: usize, column: usize) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::MalformedCell {
            line,
            column,
            value: other.to_string(),
        }),
    }
}

/// Parses CSV with header `attr_1..attr_d[,label]` from any reader.
pub fn read_dataset<R: Read>(reader: R, has_labels: bool) -> Result<LoadedDataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = csv.records();
    let header = match records.next() {
        Some(h) => h.map_err(csv_err)?,
        None => return Err(Error::EmptyHeader),
    };
    let mut names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyHeader);
    }
    if has_labels {
        names.pop();
    }
    let schema = AttributeSchema::new(names)?;
    let width = schema.d() + has_labels as usize;

    let mut plain = Vec::new();
    let mut labeled = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: rec.len(),
            });
        }
        let bits = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| parse_cell(cell, line, col + 1))
            .collect::<Result<Vec<u8>>>()?;
        if has_labels {
            let to_sign = |b: u8| if b == 1 { 1i8 } else { -1 };
            labeled.push(LabeledRow {
                features: bits[..schema.d()].iter().map(|&b| to_sign(b)).collect(),
                label: to_sign(bits[schema.d()]),
            });
        } else {
            plain.push(Record { bits });
        }
    }
    Ok(if has_labels {
        LoadedDataset::Labeled(LabeledDataset::new(schema, labeled)?)
    } else {
        LoadedDataset::Unlabeled(Dataset::new(schema, plain)?)
    })
}

pub fn load_dataset(path: impl AsRef<Path>, has_labels: bool) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file), has_labels)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::param(format!("csv: {other:?}")),
    }
}

pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    writeln!(w, "{}", data.schema().names().join(","))?;
    for row in data.rows() {
        let cells: Vec<&str> = row.bits().iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_labeled_dataset<W: Write>(mut w: W, data: &LabeledDataset) -> Result<()> {
    writeln!(w, "{},label", data.schema().names().join(","))?;
    for row in data.rows() {
        let cells: Vec<&str> = row
            .features
            .iter()
            .chain(std::iter::once(&row.label))
            .map(|&v| if v == 1 { "1" } else { "0" })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str) -> Record {
        s.parse().unwrap()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(&rec("0000"), &rec("0000")).unwrap(), 0);
        assert_eq!(hamming_distance(&rec("0000"), &rec("0101")).unwrap(), 2);
        assert_eq!(hamming_distance(&rec("1111"), &rec("0000")).unwrap(), 4);
        assert!(matches!(
            hamming_distance(&rec("00"), &rec("000")),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn hamming_is_a_metric_exhaustively() {
        let d = 6;
        let all: Vec<Record> = (0..1u64 << d).map(|i| Record::from_index(i, d)).collect();
        for a in &all {
            for b in &all {
                let ab = hamming_distance(a, b).unwrap();
                assert_eq!(ab, hamming_distance(b, a).unwrap());
                assert_eq!(ab == 0, a == b);
                for c in all.iter().step_by(5) {
                    let ac = hamming_distance(a, c).unwrap();
                    let cb = hamming_distance(c, b).unwrap();
                    assert!(ab <= ac + cb);
                }
            }
        }
    }

    #[test]
    fn index_round_trip_is_lexicographic() {
        assert_eq!(Record::from_index(0b1010, 4), rec("1010"));
        assert_eq!(rec("0110").to_index(), 6);
        let sorted: Vec<Record> = (0..16).map(|i| Record::from_index(i, 4)).collect();
        let mut copy = sorted.clone();
        copy.sort();
        assert_eq!(sorted, copy);
    }

    #[test]
    fn parse_two_rows() {
        let loaded = read_dataset("attr_1,attr_2\n1,0\n0,0".as_bytes(), false).unwrap();
        let LoadedDataset::Unlabeled(ds) = loaded else { panic!() };
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.rows(), &[rec("10"), rec("00")]);
    }

    #[test]
    fn parse_empty_body() {
        let loaded = read_dataset("attr_1,attr_2\n".as_bytes(), false).unwrap();
        let LoadedDataset::Unlabeled(ds) = loaded else { panic!() };
        assert_eq!(ds.n(), 0);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            read_dataset("attr_1,attr_2\n1,2\n".as_bytes(), false),
            Err(Error::MalformedCell { line: 2, column: 2, .. })
        ));
        assert!(matches!(
            read_dataset("attr_1,attr_2\n1\n".as_bytes(), false),
            Err(Error::RaggedRow { line: 2, .. })
        ));
        assert!(matches!(read_dataset("".as_bytes(), false), Err(Error::EmptyHeader)));
    }

    #[test]
    fn labels_map_to_signs() {
        let loaded = read_dataset("attr_1,attr_2,label\n1,0,0\n0,1,1\n".as_bytes(), true).unwrap();
        let LoadedDataset::Labeled(ds) = loaded else { panic!() };
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.rows()[0], LabeledRow { features: vec![1, -1], label: -1 });
        assert_eq!(ds.rows()[1], LabeledRow { features: vec![-1, 1], label: 1 });
        assert_eq!(ds.to_bits(), vec![(rec("10"), false), (rec("01"), true)]);
    }

    #[test]
    fn labeled_round_trip() {
        let ds = LabeledDataset::from_bits(3, &[(rec("101"), true), (rec("000"), false)]).unwrap();
        let mut buf = Vec::new();
        write_labeled_dataset(&mut buf, &ds).unwrap();
        let LoadedDataset::Labeled(back) = read_dataset(buf.as_slice(), true).unwrap() else {
            panic!()
        };
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_duplicate_names() {
        assert!(AttributeSchema::new(vec!["a".into(), "a".into()]).is_err());
        assert!(AttributeSchema::new(vec![]).is_err());
    }
}
