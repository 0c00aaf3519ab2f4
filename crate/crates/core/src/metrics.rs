//! Confusion-matrix metrics, per-class results and one-vs-rest ROC curves.
//!
//! Overall detection rate, precision, F1 and false-alarm rate use the
//! attack-vs-normal binarization of the multi-class matrix: any attack class
//! predicted for an attack record counts as a detection. Accuracy is the
//! multi-class trace over the total. Ratios with a zero denominator are `None`
//! and serialize as `null`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const METRIC_DEFINITIONS: [&str; 5] = [
    "accuracy: multi-class correct predictions / all records",
    "detection_rate (= recall): attack records predicted as any attack class / all attack records",
    "precision: attack records predicted as attack / all records predicted as attack",
    "far: normal records predicted as any attack class / all normal records",
    "per-class accuracy is one-vs-rest; per-class detection_rate is class recall",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<u64>>,
    pub normal_class: usize,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize, normal_class: usize) -> Result<Self> {
        if normal_class >= k {
            return Err(Error::OutOfRangeClass {
                class: normal_class,
                k,
            });
        }
        Ok(ConfusionMatrix {
            k,
            counts: vec![vec![0; k]; k],
            normal_class,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_total(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Element-wise sum of two shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k || other.normal_class != self.normal_class {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge a {}-class matrix into a {}-class matrix",
                other.k, self.k
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(
    y_true: &[usize],
    y_pred: &[usize],
    k: usize,
    normal_class: usize,
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k, normal_class)?;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for c in [t, p] {
            if c >= k {
                return Err(Error::OutOfRangeClass { class: c, k });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub detection_rate: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub far: Option<f64>,
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

pub fn overall_metrics(cm: &ConfusionMatrix) -> Result<OverallMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = cm.normal_class;
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            match (t == n, p == n) {
                (false, false) => tp += c,
                (false, true) => fn_ += c,
                (true, false) => fp += c,
                (true, true) => tn += c,
            }
        }
    }
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    Ok(OverallMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        detection_rate: recall,
        precision,
        recall,
        f1: harmonic(precision, recall),
        far: ratio(fp, fp + tn),
        tp,
        fn_,
        fp,
        tn,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// True records of this class.
    pub support: u64,
    /// One-vs-rest accuracy.
    pub accuracy: f64,
    /// Class recall; `None` when the class has no true records.
    pub detection_rate: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics>> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok((0..cm.k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support = cm.row_total(c);
            let predicted = cm.col_total(c);
            let tn = total + tp - support - predicted;
            let recall = ratio(tp, support);
            let precision = ratio(tp, predicted);
            ClassMetrics {
                class: c,
                support,
                accuracy: (tp + tn) as f64 / total as f64,
                detection_rate: recall,
                precision,
                f1: harmonic(precision, recall),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// One-vs-rest ROC for `class`, sweeping the class score from high to low with
/// tied scores taken as a single threshold.
pub fn roc_ovr(scores: &Tensor2, y_true: &[usize], class: usize) -> Result<RocCurve> {
    if scores.rows() != y_true.len() {
        return Err(Error::LengthMismatch {
            left: scores.rows(),
            right: y_true.len(),
        });
    }
    let k = scores.cols();
    if class >= k {
        return Err(Error::OutOfRangeClass { class, k });
    }
    if let Some(&bad) = y_true.iter().find(|&&t| t >= k) {
        return Err(Error::OutOfRangeClass { class: bad, k });
    }
    let positives = y_true.iter().filter(|&&t| t == class).count();
    let negatives = y_true.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateClass {
            class,
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..y_true.len()).collect();
    order.sort_by(|&a, &b| {
        scores
            .get(b, class)
            .total_cmp(&scores.get(a, class))
            .then(a.cmp(&b))
    });

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores.get(order[i], class);
        while i < order.len() && scores.get(order[i], class).total_cmp(&s) == Ordering::Equal {
            if y_true[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("anchored");
        let (x1, y1) = (fp as f64 / n, tp as f64 / p);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { class, points, auc })
}

/// Index of the largest entry per row; the lowest index wins ties.
pub fn argmax_rows(probs: &Tensor2) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| {
            probs
                .row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| {
                    if v > best.1 {
                        (c, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// Per-class ROC outcome; degenerate classes carry no curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub class: usize,
    pub name: String,
    pub positives: usize,
    pub negatives: usize,
    pub auc: Option<f64>,
    pub degenerate: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub definitions: Vec<String>,
    pub class_names: Vec<String>,
    pub normal_class: usize,
    pub records: usize,
    pub confusion: ConfusionMatrix,
    pub overall: OverallMetrics,
    pub per_class: Vec<ClassMetrics>,
    pub roc: Vec<ClassRoc>,
}

impl MetricsReport {
    /// Scores every record by argmax of `probs` and computes all metrics.
    pub fn build(
        class_names: &[String],
        normal_class: usize,
        y_true: &[usize],
        probs: &Tensor2,
    ) -> Result<Self> {
        let k = class_names.len();
        if probs.cols() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} probability columns for {k} classes",
                probs.cols()
            )));
        }
        let y_pred = argmax_rows(probs);
        let cm = confusion(y_true, &y_pred, k, normal_class)?;
        let overall = overall_metrics(&cm)?;
        let per_class = per_class_metrics(&cm)?;
        let mut roc = Vec::with_capacity(k);
        for (c, name) in class_names.iter().enumerate() {
            let positives = cm.row_total(c) as usize;
            let negatives = y_true.len() - positives;
            let entry = match roc_ovr(probs, y_true, c) {
                Ok(curve) => ClassRoc {
                    class: c,
                    name: name.clone(),
                    positives,
                    negatives,
                    auc: Some(curve.auc),
                    degenerate: false,
                    points: curve.points,
                },
                Err(Error::DegenerateClass { .. }) => ClassRoc {
                    class: c,
                    name: name.clone(),
                    positives,
                    negatives,
                    auc: None,
                    degenerate: true,
                    points: Vec::new(),
                },
                Err(e) => return Err(e),
            };
            roc.push(entry);
        }
        Ok(MetricsReport {
            definitions: METRIC_DEFINITIONS.iter().map(|s| s.to_string()).collect(),
            class_names: class_names.to_vec(),
            normal_class,
            records: y_true.len(),
            confusion: cm,
            overall,
            per_class,
            roc,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Long format: `scope,class,name,metric,value`; undefined values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,class,name,metric,value\n");
        let o = &self.overall;
        let overall: [(&str, Option<f64>); 6] = [
            ("accuracy", Some(o.accuracy)),
            ("detection_rate", o.detection_rate),
            ("precision", o.precision),
            ("recall", o.recall),
            ("f1", o.f1),
            ("far", o.far),
        ];
        for (metric, v) in overall {
            out.push_str(&format!("overall,,,{metric},{}\n", fmt_opt(v)));
        }
        for c in &self.per_class {
            let name = &self.class_names[c.class];
            let auc = self.roc.get(c.class).and_then(|r| r.auc);
            let rows: [(&str, Option<f64>); 6] = [
                ("support", Some(c.support as f64)),
                ("accuracy", Some(c.accuracy)),
                ("detection_rate", c.detection_rate),
                ("precision", c.precision),
                ("f1", c.f1),
                ("auc", auc),
            ];
            for (metric, v) in rows {
                out.push_str(&format!(
                    "class,{},{name},{metric},{}\n",
                    c.class,
                    fmt_opt(v)
                ));
            }
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `fpr,tpr` rows for external plotting.
pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cm_from(counts: Vec<Vec<u64>>, normal: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            k: counts.len(),
            counts,
            normal_class: normal,
        }
    }

    #[test]
    fn confusion_counts_pairs() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2, 1).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let diag = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3, 2).unwrap();
        assert_eq!(
            diag.counts,
            vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]
        );
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(matches!(
            confusion(&[0], &[0, 1], 2, 0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&[0, 2], &[0, 1], 2, 0),
            Err(Error::OutOfRangeClass { class: 2, k: 2 })
        ));
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let cm = cm_from(vec![vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 5]], 2);
        let m = overall_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.detection_rate, Some(1.0));
        assert_eq!(m.far, Some(0.0));
        assert!(per_class_metrics(&cm)
            .unwrap()
            .iter()
            .all(|c| c.detection_rate == Some(1.0)));
    }

    #[test]
    fn attacks_all_missed() {
        let cm = cm_from(vec![vec![0, 4], vec![0, 6]], 1);
        let m = overall_metrics(&cm).unwrap();
        assert_eq!(m.detection_rate, Some(0.0));
        assert_eq!(m.far, Some(0.0));
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
    }

    #[test]
    fn two_class_hand_count() {
        let cm = cm_from(vec![vec![8, 2], vec![1, 9]], 1);
        let pc = per_class_metrics(&cm).unwrap();
        assert_eq!(pc[0].detection_rate, Some(0.8));
        assert_eq!(pc[1].detection_rate, Some(0.9));
        assert_eq!(pc[0].accuracy, 17.0 / 20.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let cm = ConfusionMatrix::zeros(3, 0).unwrap();
        assert!(matches!(overall_metrics(&cm), Err(Error::EmptyMatrix)));
        assert!(matches!(per_class_metrics(&cm), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn absent_class_has_no_recall() {
        let cm = cm_from(vec![vec![2, 0, 0], vec![0, 0, 0], vec![1, 0, 3]], 2);
        assert_eq!(per_class_metrics(&cm).unwrap()[1].detection_rate, None);
    }

    #[test]
    fn merge_adds_shards() {
        let a = confusion(&[0, 1, 1], &[0, 0, 1], 2, 1).unwrap();
        let b = confusion(&[1, 0], &[1, 1], 2, 1).unwrap();
        let mut m = a.clone();
        m.merge(&b).unwrap();
        assert_eq!(
            m,
            confusion(&[0, 1, 1, 1, 0], &[0, 0, 1, 1, 1], 2, 1).unwrap()
        );
        assert!(m.merge(&ConfusionMatrix::zeros(3, 1).unwrap()).is_err());
    }

    #[test]
    fn relabeling_permutes_per_class_results() {
        let y_true = [0, 1, 2, 2, 1, 0, 2, 1];
        let y_pred = [0, 2, 2, 1, 1, 0, 0, 1];
        let perm = [2, 0, 1];
        let pt: Vec<usize> = y_true.iter().map(|&c| perm[c]).collect();
        let pp: Vec<usize> = y_pred.iter().map(|&c| perm[c]).collect();
        let a = per_class_metrics(&confusion(&y_true, &y_pred, 3, 0).unwrap()).unwrap();
        let b = per_class_metrics(&confusion(&pt, &pp, 3, perm[0]).unwrap()).unwrap();
        for c in 0..3 {
            let (x, y) = (&a[c], &b[perm[c]]);
            assert_eq!(
                (x.support, x.accuracy, x.detection_rate),
                (y.support, y.accuracy, y.detection_rate)
            );
        }
    }

    fn probs(rows: &[Vec<f64>]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn separating_scores_give_unit_auc() {
        let s = probs(&[
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.3, 0.7],
            vec![0.1, 0.9],
        ]);
        let roc = roc_ovr(&s, &[0, 0, 1, 1], 0).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn tied_scores_give_chance_auc() {
        let s = probs(&vec![vec![0.5, 0.5]; 6]);
        let roc = roc_ovr(&s, &[0, 1, 0, 1, 1, 0], 1).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn degenerate_class_is_flagged() {
        let s = probs(&[vec![0.6, 0.4], vec![0.7, 0.3]]);
        assert!(matches!(
            roc_ovr(&s, &[0, 0], 1),
            Err(Error::DegenerateClass {
                class: 1,
                positives: 0,
                negatives: 2
            })
        ));
        assert!(matches!(
            roc_ovr(&s, &[0, 0], 2),
            Err(Error::OutOfRangeClass { .. })
        ));
    }

    fn mann_whitney(s: &Tensor2, y: &[usize], c: usize) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == c && y[j] != c {
                    pairs += 1.0;
                    let (a, b) = (s.get(i, c), s.get(j, c));
                    wins += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_statistic(seed in any::<u64>(), n in 2usize..60, k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            // coarse scores so ties occur
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(0..5) as f64 / 4.0).collect()).collect();
            let s = probs(&rows);
            for c in 0..k {
                match roc_ovr(&s, &y, c) {
                    Ok(roc) => {
                        prop_assert!((roc.auc - mann_whitney(&s, &y, c)).abs() < 1e-10);
                        prop_assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
                    }
                    Err(Error::DegenerateClass { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }

        #[test]
        fn accuracy_is_trace_over_total(seed in any::<u64>(), n in 1usize..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let cm = confusion(&t, &p, 5, 4).unwrap();
            let m = overall_metrics(&cm).unwrap();
            let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
            prop_assert_eq!(m.accuracy, correct as f64 / n as f64);
            prop_assert_eq!(m.fp + m.tn, cm.row_total(4));
        }
    }

    #[test]
    fn report_serializes_nulls() {
        let names: Vec<String> = ["a", "b", "normal"].iter().map(|s| s.to_string()).collect();
        let s = probs(&[
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.1, 0.8],
            vec![0.6, 0.3, 0.1],
        ]);
        let r = MetricsReport::build(&names, 2, &[0, 2, 0], &s).unwrap();
        assert!(r.roc[1].degenerate);
        let json = r.to_json();
        assert!(json.contains("\"auc\": null"));
        assert_eq!(MetricsReport::from_json(&json).unwrap(), r);
        let csv = r.to_csv();
        assert!(csv.starts_with("scope,class,name,metric,value\n"));
        assert!(csv.contains("class,1,b,detection_rate,\n"));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(
            argmax_rows(&probs(&[vec![0.4, 0.4, 0.2], vec![0.1, 0.2, 0.7]])),
            vec![0, 2]
        );
    }
}
