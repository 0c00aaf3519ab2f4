//! Fit-on-train, apply-everywhere feature pipeline.
//!
//! Categorical columns are expanded into one-hot blocks over a vocabulary
//! learned from the training data (lexicographic order); numeric columns pass
//! through as reals. Every encoded column is then min-max scaled with the
//! training extrema. Test data is only ever transformed with the fitted state:
//! unseen categorical values produce an all-zeros block and out-of-range
//! numeric values are clipped into `[0, 1]`.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::dataset::{DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    /// Position in the raw feature vector.
    pub index: usize,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub feature_count: usize,
    pub categorical: Vec<CategoricalColumn>,
    pub total_encoded_width: usize,
}

impl EncoderSpec {
    /// Column layout of the encoded vector: each raw feature in order, a
    /// single column for numeric features and a vocabulary block for
    /// categorical ones.
    fn layout(&self) -> Vec<Slot<'_>> {
        (0..self.feature_count)
            .map(|i| match self.categorical.iter().find(|c| c.index == i) {
                Some(c) => Slot::OneHot(&c.vocabulary),
                None => Slot::Numeric,
            })
            .collect()
    }

    /// Human-readable names of the encoded columns (`f4`, `f1=tcp`, ...).
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.total_encoded_width);
        for (i, slot) in self.layout().into_iter().enumerate() {
            match slot {
                Slot::Numeric => names.push(format!("f{i}")),
                Slot::OneHot(vocab) => names.extend(vocab.iter().map(|v| format!("f{i}={v}"))),
            }
        }
        names
    }

    /// Encoded columns that come from one-hot expansion.
    pub fn one_hot_columns(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut col = 0;
        for slot in self.layout() {
            match slot {
                Slot::Numeric => col += 1,
                Slot::OneHot(vocab) => {
                    out.extend(col..col + vocab.len());
                    col += vocab.len();
                }
            }
        }
        out
    }
}

enum Slot<'a> {
    Numeric,
    OneHot(&'a [String]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormalizerSpec {
    pub fn width(&self) -> usize {
        self.min.len()
    }
}

/// Encoded (and usually normalized) records with their class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor2,
    pub class_indices: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    /// Matrix file: JSON with a base64 little-endian `f64` payload.
    pub fn to_json(&self) -> String {
        let doc = MatrixFile {
            format: MATRIX_FORMAT.into(),
            version: MATRIX_VERSION,
            rows: self.rows(),
            cols: self.cols(),
            class_indices: self.class_indices.clone(),
            values: codec::encode_f64s(self.values.as_slice()),
        };
        serde_json::to_string(&doc).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MatrixFile = serde_json::from_str(text)
            .map_err(|e| Error::CorruptArtifact(format!("matrix file: {e}")))?;
        if doc.format != MATRIX_FORMAT {
            return Err(Error::CorruptArtifact(format!(
                "not a matrix file: {:?}",
                doc.format
            )));
        }
        if doc.version != MATRIX_VERSION {
            return Err(Error::VersionMismatch {
                expected: MATRIX_VERSION,
                found: doc.version,
            });
        }
        let values = Tensor2::from_vec(doc.rows, doc.cols, codec::decode_f64s(&doc.values)?)
            .map_err(|e| Error::CorruptArtifact(e.to_string()))?;
        if doc.class_indices.len() != doc.rows {
            return Err(Error::CorruptArtifact(
                "label count differs from row count".into(),
            ));
        }
        Ok(FeatureMatrix {
            values,
            class_indices: doc.class_indices,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = codec::read_file(path)?;
        Self::from_json(&String::from_utf8_lossy(&bytes))
    }
}

const MATRIX_FORMAT: &str = "mcids-matrix";
const MATRIX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    class_indices: Vec<usize>,
    values: String,
}

pub fn fit_encoder(train: &LabeledDataset) -> Result<EncoderSpec> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let schema = &train.schema;
    let mut categorical = Vec::new();
    for &index in &schema.categorical_indices {
        let vocab: BTreeSet<&str> = train.records.iter().map(|r| r[index].as_str()).collect();
        categorical.push(CategoricalColumn {
            index,
            vocabulary: vocab.into_iter().map(str::to_string).collect(),
        });
    }
    categorical.sort_by_key(|c| c.index);
    let numeric = schema.feature_count - categorical.len();
    let total_encoded_width = numeric
        + categorical
            .iter()
            .map(|c| c.vocabulary.len())
            .sum::<usize>();
    Ok(EncoderSpec {
        feature_count: schema.feature_count,
        categorical,
        total_encoded_width,
    })
}

pub fn encode(ds: &LabeledDataset, spec: &EncoderSpec) -> Result<FeatureMatrix> {
    if ds.schema.feature_count != spec.feature_count {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} features, encoder expects {}",
            ds.schema.feature_count, spec.feature_count
        )));
    }
    let layout = spec.layout();
    let width = spec.total_encoded_width;
    let rows: Vec<Vec<f64>> = ds
        .records
        .par_iter()
        .enumerate()
        .map(|(r, record)| encode_row(r, record, &layout, width))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(rows.len() * width);
    for row in rows {
        data.extend(row);
    }
    Ok(FeatureMatrix {
        values: Tensor2::from_vec(ds.len(), width, data)?,
        class_indices: ds.class_indices.clone(),
    })
}

fn encode_row(r: usize, record: &[String], layout: &[Slot<'_>], width: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(width);
    for (c, (field, slot)) in record.iter().zip(layout).enumerate() {
        match slot {
            Slot::Numeric => {
                let v = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumericValue {
                        row: r,
                        col: c,
                        value: field.clone(),
                    })?;
                out.push(v);
            }
            Slot::OneHot(vocab) => {
                let hit = vocab.binary_search_by(|v| v.as_str().cmp(field)).ok();
                out.extend((0..vocab.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(out)
}

pub fn fit_normalizer(m: &FeatureMatrix) -> Result<NormalizerSpec> {
    if m.rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let cols = m.cols();
    let mut min = m.values.row(0).to_vec();
    let mut max = min.clone();
    for r in 1..m.rows() {
        for (j, &v) in m.values.row(r).iter().enumerate() {
            if v < min[j] {
                min[j] = v;
            }
            if v > max[j] {
                max[j] = v;
            }
        }
    }
    let constant = (0..cols).map(|j| min[j] == max[j]).collect();
    Ok(NormalizerSpec { min, max, constant })
}

/// `x' = (x - min) / (max - min)`, clipped to `[0, 1]`; constant columns map to 0.
pub fn normalize(m: &FeatureMatrix, spec: &NormalizerSpec) -> Result<FeatureMatrix> {
    if m.cols() != spec.width() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, normalizer expects {}",
            m.cols(),
            spec.width()
        )));
    }
    let cols = m.cols();
    let mut values = m.values.clone();
    if cols > 0 {
        values.as_mut_slice().par_chunks_mut(cols).for_each(|row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if spec.constant[j] {
                    0.0
                } else {
                    ((*v - spec.min[j]) / (spec.max[j] - spec.min[j])).clamp(0.0, 1.0)
                };
            }
        });
    }
    Ok(FeatureMatrix {
        values,
        class_indices: m.class_indices.clone(),
    })
}

/// Encoder and normalizer fitted together on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub schema_name: DatasetKind,
    pub class_names: Vec<String>,
    pub encoder: EncoderSpec,
    pub normalizer: NormalizerSpec,
}

impl PipelineState {
    /// Fits both stages on `train` and returns the normalized training matrix.
    pub fn fit(train: &LabeledDataset) -> Result<(PipelineState, FeatureMatrix)> {
        let encoder = fit_encoder(train)?;
        let encoded = encode(train, &encoder)?;
        let normalizer = fit_normalizer(&encoded)?;
        let matrix = normalize(&encoded, &normalizer)?;
        Ok((
            PipelineState {
                schema_name: train.schema.name,
                class_names: train.class_names.clone(),
                encoder,
                normalizer,
            },
            matrix,
        ))
    }

    /// Encodes and normalizes with the frozen state; never refits.
    pub fn apply(&self, ds: &LabeledDataset) -> Result<FeatureMatrix> {
        if ds.schema.name != self.schema_name {
            return Err(Error::SchemaMismatch {
                expected: self.schema_name.to_string(),
                found: ds.schema.name.to_string(),
            });
        }
        normalize(&encode(ds, &self.encoder)?, &self.normalizer)
    }

    pub fn width(&self) -> usize {
        self.encoder.total_encoded_width
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: PipelineState = serde_json::from_str(text)
            .map_err(|e| Error::CorruptArtifact(format!("pipeline file: {e}")))?;
        if p.normalizer.width() != p.encoder.total_encoded_width
            || p.normalizer.max.len() != p.normalizer.width()
            || p.normalizer.constant.len() != p.normalizer.width()
        {
            return Err(Error::CorruptArtifact("pipeline widths disagree".into()));
        }
        Ok(p)
    }

    pub fn checksum(&self) -> String {
        codec::sha256_hex(
            serde_json::to_string(self)
                .expect("pipeline serializes")
                .as_bytes(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = codec::read_file(path)?;
        Self::from_json(&String::from_utf8_lossy(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_csv, DatasetKind};
    use proptest::prelude::*;

    fn ds_from(rows: &[(&str, &str, &str, f64)]) -> LabeledDataset {
        let lines: Vec<String> = rows
            .iter()
            .map(|(proto, svc, flag, x)| {
                let mut f: Vec<String> = (0..41).map(|i| format!("{}", i)).collect();
                f[0] = format!("{x}");
                f[1] = proto.to_string();
                f[2] = svc.to_string();
                f[3] = flag.to_string();
                format!("{},normal,0", f.join(","))
            })
            .collect();
        let kind = DatasetKind::NslKdd;
        read_csv(
            lines.join("\n").as_bytes(),
            &kind.schema(),
            &kind.default_taxonomy(),
            false,
        )
        .unwrap()
    }

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix {
            values: Tensor2::from_rows(rows).unwrap(),
            class_indices: vec![0; rows.len()],
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_width_consistent() {
        let protos = ["udp", "tcp", "icmp"];
        let rows: Vec<_> = (0..100)
            .map(|i| (protos[i % 3], "http", "SF", i as f64))
            .collect();
        let ds = ds_from(&rows);
        let spec = fit_encoder(&ds).unwrap();
        assert_eq!(spec.categorical[0].vocabulary, ["icmp", "tcp", "udp"]);
        assert_eq!(spec.categorical[1].vocabulary, ["http"]);
        assert_eq!(spec.total_encoded_width, 38 + 3 + 1 + 1);
        let m = encode(&ds, &spec).unwrap();
        assert_eq!(m.cols(), spec.total_encoded_width);
        assert_eq!(spec.column_names().len(), spec.total_encoded_width);
        assert_eq!(spec.one_hot_columns(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn one_hot_blocks_and_unseen_values() {
        let train = ds_from(&[
            ("icmp", "http", "SF", 1.0),
            ("tcp", "http", "SF", 2.0),
            ("udp", "ftp", "S0", 3.0),
        ]);
        let spec = fit_encoder(&train).unwrap();
        let test = ds_from(&[("tcp", "http", "SF", 1.0), ("sctp", "http", "SF", 1.0)]);
        let m = encode(&test, &spec).unwrap();
        assert_eq!(&m.values.row(0)[1..4], &[0.0, 1.0, 0.0]);
        assert_eq!(&m.values.row(1)[1..4], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_numeric_field_is_reported() {
        let train = ds_from(&[("tcp", "http", "SF", 1.0)]);
        let spec = fit_encoder(&train).unwrap();
        let mut bad = train.clone();
        bad.records[0][5] = "abc".into();
        assert!(matches!(
            encode(&bad, &spec),
            Err(Error::NonNumericValue { row: 0, col: 5, .. })
        ));
        bad.records[0][5] = "inf".into();
        assert!(encode(&bad, &spec).is_err());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let train = ds_from(&[("tcp", "http", "SF", 1.0)]);
        assert!(matches!(
            fit_encoder(&train.subset(&[])),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            fit_normalizer(&matrix(&[])),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn normalizer_extrema_and_formula() {
        let m = matrix(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![10.0, 5.0]]);
        let spec = fit_normalizer(&m).unwrap();
        assert_eq!(spec.min, vec![2.0, 5.0]);
        assert_eq!(spec.max, vec![10.0, 5.0]);
        assert_eq!(spec.constant, vec![false, true]);

        let t = matrix(&[
            vec![2.0, 5.0],
            vec![10.0, 7.0],
            vec![6.0, 1.0],
            vec![12.0, 5.0],
            vec![-3.0, 5.0],
        ]);
        let n = normalize(&t, &spec).unwrap();
        let col0: Vec<f64> = (0..5).map(|r| n.values.get(r, 0)).collect();
        assert_eq!(col0, vec![0.0, 1.0, 0.5, 1.0, 0.0]);
        assert!((0..5).all(|r| n.values.get(r, 1) == 0.0));

        assert!(matches!(
            normalize(&matrix(&[vec![1.0]]), &spec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn one_hot_columns_fit_to_unit_range() {
        let m = matrix(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let spec = fit_normalizer(&m).unwrap();
        assert!(spec.min.iter().all(|&v| v == 0.0));
        assert!(spec.max.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pipeline_json_round_trip_and_schema_check() {
        let train = ds_from(&[("tcp", "http", "SF", 1.0), ("udp", "ftp", "S0", 3.0)]);
        let (p, m) = PipelineState::fit(&train).unwrap();
        assert_eq!(m.cols(), p.width());
        let back = PipelineState::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.checksum(), p.checksum());
        assert_eq!(p.apply(&train).unwrap(), m);

        let mut other = train.clone();
        other.schema = DatasetKind::Kdd99.schema();
        assert!(matches!(p.apply(&other), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn matrix_file_round_trip() {
        let m = matrix(&[vec![0.25, 1.0 / 3.0], vec![1e-300, 0.0]]);
        let back = FeatureMatrix::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(FeatureMatrix::from_json("{\"format\":\"x\"").is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6, 1usize..12).prop_flat_map(|(cols, rows)| {
            proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, cols), rows)
        })
    }

    proptest! {
        #[test]
        fn training_matrix_normalizes_into_unit_interval(rows in arb_matrix()) {
            let m = matrix(&rows);
            let spec = fit_normalizer(&m).unwrap();
            let n = normalize(&m, &spec).unwrap();
            prop_assert!(n.values.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            for j in 0..m.cols() {
                if !spec.constant[j] {
                    let col: Vec<f64> = (0..n.rows()).map(|r| n.values.get(r, j)).collect();
                    prop_assert!(col.contains(&0.0));
                    prop_assert!(col.contains(&1.0));
                }
            }
        }

        #[test]
        fn normalizing_a_unit_range_matrix_is_identity(rows in arb_matrix()) {
            let m = matrix(&rows);
            let once = normalize(&m, &fit_normalizer(&m).unwrap()).unwrap();
            let spec2 = fit_normalizer(&once).unwrap();
            let twice = normalize(&once, &spec2).unwrap();
            for j in 0..once.cols() {
                if !spec2.constant[j] {
                    for r in 0..once.rows() {
                        prop_assert_eq!(once.values.get(r, j), twice.values.get(r, j));
                    }
                }
            }
        }

        #[test]
        fn one_hot_blocks_sum_to_one_or_zero(picks in proptest::collection::vec(0usize..5, 1..20)) {
            let services = ["a", "b", "c", "d", "zz"];
            // "zz" never appears in training
            let train = ds_from(&[("tcp", "a", "SF", 0.0), ("tcp", "b", "SF", 0.0), ("tcp", "c", "SF", 0.0), ("tcp", "d", "SF", 0.0)]);
            let spec = fit_encoder(&train).unwrap();
            let rows: Vec<_> = picks.iter().map(|&p| ("tcp", services[p], "SF", 1.0)).collect();
            let m = encode(&ds_from(&rows), &spec).unwrap();
            prop_assert_eq!(m.cols(), spec.total_encoded_width);
            for (r, &p) in picks.iter().enumerate() {
                let block: f64 = m.values.row(r)[2..6].iter().sum();
                prop_assert_eq!(block, if p == 4 { 0.0 } else { 1.0 });
            }
        }
    }
}
