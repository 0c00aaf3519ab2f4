//! Schema-driven ingestion of KDD'99, NSL-KDD and UNSW-NB15 connection records.
//!
//! A [`DatasetSchema`] describes the raw CSV layout: which column carries the
//! attack label, which columns are ignored (NSL-KDD difficulty score, UNSW-NB15
//! `id` and binary `label`), and which of the remaining feature columns are
//! categorical. An [`AttackTaxonomy`] maps raw attack names onto the class
//! indices the classifiers are trained on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KDD_CLASSES: [&str; 5] = ["DoS", "Probe", "R2L", "U2R", "normal"];
const UNSW_CLASSES: [&str; 10] = [
    "Exploits",
    "Reconnaissance",
    "Backdoor",
    "DoS",
    "Analysis",
    "Fuzzers",
    "Worms",
    "Shellcode",
    "Generic",
    "Normal",
];

const KDD_TAXONOMY: &str = include_str!("../taxonomy/kdd.tsv");
const UNSW_TAXONOMY: &str = include_str!("../taxonomy/unsw_nb15.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "kdd99")]
    Kdd99,
    #[serde(rename = "nsl-kdd")]
    NslKdd,
    #[serde(rename = "unsw-nb15")]
    UnswNb15,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [
        DatasetKind::Kdd99,
        DatasetKind::NslKdd,
        DatasetKind::UnswNb15,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Kdd99 => "kdd99",
            DatasetKind::NslKdd => "nsl-kdd",
            DatasetKind::UnswNb15 => "unsw-nb15",
        }
    }

    pub fn schema(self) -> DatasetSchema {
        match self {
            DatasetKind::Kdd99 => DatasetSchema {
                name: self,
                raw_width: 42,
                feature_count: 41,
                categorical_indices: vec![1, 2, 3],
                label_index: 41,
                extra_columns: vec![],
            },
            DatasetKind::NslKdd => DatasetSchema {
                name: self,
                raw_width: 43,
                feature_count: 41,
                categorical_indices: vec![1, 2, 3],
                label_index: 41,
                extra_columns: vec![42],
            },
            // id, 42 features, attack_cat, binary label
            DatasetKind::UnswNb15 => DatasetSchema {
                name: self,
                raw_width: 45,
                feature_count: 42,
                categorical_indices: vec![1, 2, 3],
                label_index: 43,
                extra_columns: vec![0, 44],
            },
        }
    }

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            DatasetKind::Kdd99 | DatasetKind::NslKdd => &KDD_CLASSES,
            DatasetKind::UnswNb15 => &UNSW_CLASSES,
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Index of the benign class.
    pub fn normal_class(self) -> usize {
        match self {
            DatasetKind::Kdd99 | DatasetKind::NslKdd => 4,
            DatasetKind::UnswNb15 => 9,
        }
    }

    /// The taxonomy shipped with the crate for this dataset.
    pub fn default_taxonomy(self) -> AttackTaxonomy {
        let text = match self {
            DatasetKind::Kdd99 | DatasetKind::NslKdd => KDD_TAXONOMY,
            DatasetKind::UnswNb15 => UNSW_TAXONOMY,
        };
        AttackTaxonomy::parse(text, &self.class_names()).expect("shipped taxonomy is valid")
    }

    pub fn default_has_header(self) -> bool {
        matches!(self, DatasetKind::UnswNb15)
    }

    /// Conventional file names of the official train and test files.
    pub fn default_files(self) -> (&'static str, &'static str) {
        match self {
            DatasetKind::Kdd99 => ("kddcup.data_10_percent_corrected", "corrected"),
            DatasetKind::NslKdd => ("KDDTrain+.txt", "KDDTest+.txt"),
            DatasetKind::UnswNb15 => ("UNSW_NB15_training-set.csv", "UNSW_NB15_testing-set.csv"),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "kdd99" | "kdd-99" | "kddcup99" => Ok(DatasetKind::Kdd99),
            "nsl-kdd" | "nslkdd" => Ok(DatasetKind::NslKdd),
            "unsw-nb15" | "unswnb15" => Ok(DatasetKind::UnswNb15),
            other => Err(Error::ConfigInvalid(format!("unknown dataset {other:?}"))),
        }
    }
}

/// Raw column layout of one benchmark file.
///
/// `categorical_indices` are positions in the feature vector (after the label
/// and extra columns are removed); `label_index` and `extra_columns` are raw
/// CSV column positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: DatasetKind,
    pub raw_width: usize,
    pub feature_count: usize,
    pub categorical_indices: Vec<usize>,
    pub label_index: usize,
    pub extra_columns: Vec<usize>,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(format!("schema {}: {msg}", self.name)));
        if self
            .categorical_indices
            .iter()
            .any(|&c| c >= self.feature_count)
        {
            return bad("categorical index outside the feature range".into());
        }
        if self.label_index >= self.raw_width
            || self.extra_columns.iter().any(|&c| c >= self.raw_width)
        {
            return bad("label or extra column outside the raw width".into());
        }
        if self.extra_columns.contains(&self.label_index) {
            return bad("label column is also declared extra".into());
        }
        let extras: BTreeSet<_> = self.extra_columns.iter().collect();
        if self.raw_width - 1 - extras.len() != self.feature_count {
            return bad(format!(
                "{} raw columns minus label and {} extras != {} features",
                self.raw_width,
                extras.len(),
                self.feature_count
            ));
        }
        Ok(())
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.feature_count)
            .filter(|i| !self.categorical_indices.contains(i))
            .collect()
    }

    fn is_feature_column(&self, raw: usize) -> bool {
        raw != self.label_index && !self.extra_columns.contains(&raw)
    }
}

/// Raw attack name to class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackTaxonomy {
    pub class_names: Vec<String>,
    pub raw_to_class: BTreeMap<String, usize>,
}

impl AttackTaxonomy {
    /// Parses `raw_label<TAB>category` lines; `#` starts a comment.
    pub fn parse(text: &str, class_names: &[String]) -> Result<Self> {
        let mut raw_to_class = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (raw, category) = line.split_once('\t').ok_or_else(|| {
                Error::Taxonomy(format!("line {}: expected raw_label<TAB>category", n + 1))
            })?;
            let category = category.trim();
            let class = class_names
                .iter()
                .position(|c| c.eq_ignore_ascii_case(category))
                .ok_or_else(|| {
                    Error::Taxonomy(format!("line {}: unknown category {category:?}", n + 1))
                })?;
            let key = normalize_label(raw);
            if let Some(prev) = raw_to_class.insert(key.clone(), class) {
                if prev != class {
                    return Err(Error::Taxonomy(format!(
                        "line {}: label {key:?} mapped to two categories",
                        n + 1
                    )));
                }
            }
        }
        Ok(AttackTaxonomy {
            class_names: class_names.to_vec(),
            raw_to_class,
        })
    }

    pub fn load(path: &Path, class_names: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, class_names)
    }

    pub fn lookup(&self, raw: &str) -> Option<usize> {
        self.raw_to_class.get(&normalize_label(raw)).copied()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// KDD'99 labels carry a trailing period ("neptune."); NSL-KDD's do not.
fn normalize_label(raw: &str) -> String {
    let t = raw.trim();
    t.strip_suffix('.').unwrap_or(t).trim().to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub schema: DatasetSchema,
    pub class_names: Vec<String>,
    /// Feature fields only, label and extra columns removed.
    pub records: Vec<Vec<String>>,
    /// Raw label text as it appeared in the file, trimmed.
    pub raw_labels: Vec<String>,
    pub class_indices: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Records at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            schema: self.schema.clone(),
            class_names: self.class_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            raw_labels: indices
                .iter()
                .map(|&i| self.raw_labels[i].clone())
                .collect(),
            class_indices: indices.iter().map(|&i| self.class_indices[i]).collect(),
        }
    }

    /// Raw CSV row with the label re-inserted; extra columns are written empty.
    pub fn raw_row(&self, i: usize) -> Vec<&str> {
        let mut features = self.records[i].iter();
        (0..self.schema.raw_width)
            .map(|c| {
                if c == self.schema.label_index {
                    self.raw_labels[i].as_str()
                } else if self.schema.extra_columns.contains(&c) {
                    ""
                } else {
                    features.next().map(String::as_str).unwrap_or("")
                }
            })
            .collect()
    }

    /// Writes records back out in the schema's raw layout.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        if header {
            let names: Vec<String> = (0..self.schema.raw_width)
                .map(|c| format!("c{c}"))
                .collect();
            w.write_record(&names).map_err(ser)?;
        }
        for i in 0..self.len() {
            w.write_record(self.raw_row(i)).map_err(ser)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }
}

/// Parses a benchmark CSV file. Rows keep their file order.
pub fn load_csv(
    path: &Path,
    schema: &DatasetSchema,
    taxonomy: &AttackTaxonomy,
    has_header: bool,
) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema, taxonomy, has_header).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &DatasetSchema,
    taxonomy: &AttackTaxonomy,
    has_header: bool,
) -> Result<LabeledDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = Vec::new();
    let mut raw_labels = Vec::new();
    let mut class_indices = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e)),
        }
        let line = row.position().map_or(0, |p| p.line());
        // tolerate blank trailing lines
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != schema.raw_width {
            return Err(Error::MalformedRow {
                line,
                expected: schema.raw_width,
                found: row.len(),
            });
        }
        let label = &row[schema.label_index];
        let class = taxonomy.lookup(label).ok_or_else(|| Error::UnknownLabel {
            line,
            label: label.to_string(),
        })?;
        records.push(
            row.iter()
                .enumerate()
                .filter(|(c, _)| schema.is_feature_column(*c))
                .map(|(_, v)| v.to_string())
                .collect(),
        );
        raw_labels.push(label.to_string());
        class_indices.push(class);
    }

    Ok(LabeledDataset {
        schema: schema.clone(),
        class_names: taxonomy.class_names.clone(),
        records,
        raw_labels,
        class_indices,
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<input>", io),
        csv::ErrorKind::Utf8 { .. } => Error::MalformedRow {
            line,
            expected: 0,
            found: 0,
        },
        other => Error::Serialization(format!("line {line}: {other:?}")),
    }
}

/// Record count per class index; every class of the taxonomy is present.
pub fn class_distribution(ds: &LabeledDataset) -> BTreeMap<usize, usize> {
    let mut counts: BTreeMap<usize, usize> = (0..ds.num_classes()).map(|c| (c, 0)).collect();
    for &c in &ds.class_indices {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
}

/// Random held-out split. Both halves keep the original record order.
pub fn split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Class-proportional subsample of `n` records (largest-remainder allocation),
/// returned in file order. Returns a copy when `n >= ds.len()`.
pub fn stratified_subsample(ds: &LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n >= ds.len() {
        return Ok(ds.clone());
    }
    let total = ds.len();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in ds.class_indices.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }

    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, members)| {
            let exact = members.len() as f64 * n as f64 / total as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &q in by_remainder.iter().take(n - assigned) {
        quotas[q].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (c, quota, _) in quotas {
        let mut members = by_class[&c].clone();
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..quota]);
    }
    picked.sort_unstable();
    Ok(ds.subset(&picked))
}
