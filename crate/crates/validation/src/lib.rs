//! Independent reference computations and data-location helpers for the
//! acceptance suite. Nothing here calls into the code it checks.

use std::path::{Path, PathBuf};

use mcids::dataset::{load_csv, DatasetKind, LabeledDataset};
use mcids::optim::{HyperParams, OptimizerKind};

/// `IDS_DATA_DIR`, or `<workspace>/data/nsl-kdd` when unset.
pub fn data_dir() -> PathBuf {
    std::env::var_os("IDS_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/nsl-kdd"))
}

pub fn nsl_files() -> std::result::Result<(PathBuf, PathBuf), String> {
    let dir = data_dir();
    let (train, test) = DatasetKind::NslKdd.default_files();
    let (train, test) = (dir.join(train), dir.join(test));
    for p in [&train, &test] {
        if !p.is_file() {
            return Err(format!(
                "NSL-KDD file not found: {} (set IDS_DATA_DIR)",
                p.display()
            ));
        }
    }
    Ok((train, test))
}

pub fn load_nsl(path: &Path) -> std::result::Result<LabeledDataset, String> {
    let k = DatasetKind::NslKdd;
    load_csv(path, &k.schema(), &k.default_taxonomy(), false)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Scalar optimizer rules applied to f(θ) = θ², gradient 2θ.
pub fn oracle_trajectory(
    kind: OptimizerKind,
    hp: &HyperParams,
    theta0: f64,
    steps: usize,
) -> Vec<f64> {
    let (lr, b1, b2, rho, eps) = (hp.learning_rate, hp.beta1, hp.beta2, hp.rho, hp.epsilon);
    let mut theta = theta0;
    let (mut s1, mut s2) = (0.0_f64, 0.0_f64);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = 2.0 * theta;
        let tf = t as f64;
        match kind {
            OptimizerKind::Sgd => theta -= lr * g,
            OptimizerKind::Adagrad => {
                s1 += g * g;
                theta -= lr / (s1.sqrt() + eps) * g;
            }
            OptimizerKind::RmsProp => {
                s1 = rho * s1 + (1.0 - rho) * g * g;
                theta -= lr / (s1.sqrt() + eps) * g;
            }
            OptimizerKind::Adadelta => {
                s1 = rho * s1 + (1.0 - rho) * g * g;
                let dx = -((s2 + eps).sqrt() / (s1 + eps).sqrt()) * g;
                s2 = rho * s2 + (1.0 - rho) * dx * dx;
                theta += lr * dx;
            }
            OptimizerKind::Adam => {
                s1 = b1 * s1 + (1.0 - b1) * g;
                s2 = b2 * s2 + (1.0 - b2) * g * g;
                let m_hat = s1 / (1.0 - b1.powf(tf));
                let v_hat = s2 / (1.0 - b2.powf(tf));
                theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            OptimizerKind::Adamax => {
                s1 = b1 * s1 + (1.0 - b1) * g;
                s2 = (b2 * s2).max(g.abs());
                theta -= (lr / (1.0 - b1.powf(tf))) * s1 / s2;
            }
            OptimizerKind::Nadam => {
                s1 = b1 * s1 + (1.0 - b1) * g;
                s2 = b2 * s2 + (1.0 - b2) * g * g;
                let m_hat = s1 / (1.0 - b1.powf(tf));
                let v_hat = s2 / (1.0 - b2.powf(tf));
                theta -=
                    lr / (v_hat.sqrt() + eps) * (b1 * m_hat + (1.0 - b1) * g / (1.0 - b1.powf(tf)));
            }
        }
        out.push(theta);
    }
    out
}

/// First step from θ₀ worked out by hand: every moment estimate equals g or g².
pub fn first_step_by_hand(kind: OptimizerKind, hp: &HyperParams, theta0: f64) -> f64 {
    let g = 2.0 * theta0;
    let (lr, eps) = (hp.learning_rate, hp.epsilon);
    match kind {
        OptimizerKind::Sgd => theta0 * (1.0 - 2.0 * lr),
        OptimizerKind::Adagrad | OptimizerKind::Adam => theta0 - lr * g / (g.abs() + eps),
        OptimizerKind::RmsProp => theta0 - lr * g / ((1.0 - hp.rho).sqrt() * g.abs() + eps),
        OptimizerKind::Adadelta => {
            theta0 - lr * eps.sqrt() / ((1.0 - hp.rho) * g * g + eps).sqrt() * g
        }
        OptimizerKind::Adamax => theta0 - lr * g.signum(),
        OptimizerKind::Nadam => theta0 - lr * (1.0 + hp.beta1) * g / (g.abs() + eps),
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn f1_of(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    }
}

/// Record-by-record recount, no confusion matrix involved.
pub fn recount_overall(t: &[usize], p: &[usize], normal: usize) -> (f64, [Option<f64>; 4]) {
    let n = t.len() as u64;
    let correct = t.iter().zip(p).filter(|(a, b)| a == b).count() as u64;
    let attack_true = t.iter().filter(|&&c| c != normal).count() as u64;
    let attack_hit = t
        .iter()
        .zip(p)
        .filter(|(&a, &b)| a != normal && b != normal)
        .count() as u64;
    let attack_pred = p.iter().filter(|&&c| c != normal).count() as u64;
    let normal_true = n - attack_true;
    let normal_flagged = t
        .iter()
        .zip(p)
        .filter(|(&a, &b)| a == normal && b != normal)
        .count() as u64;
    let dr = ratio(attack_hit, attack_true);
    let precision = ratio(attack_hit, attack_pred);
    (
        correct as f64 / n as f64,
        [
            dr,
            precision,
            f1_of(precision, dr),
            ratio(normal_flagged, normal_true),
        ],
    )
}

pub fn recount_class(
    t: &[usize],
    p: &[usize],
    c: usize,
) -> (u64, f64, Option<f64>, Option<f64>, Option<f64>) {
    let n = t.len();
    let support = t.iter().filter(|&&v| v == c).count() as u64;
    let hit = t.iter().zip(p).filter(|(&a, &b)| a == c && b == c).count() as u64;
    let predicted = p.iter().filter(|&&v| v == c).count() as u64;
    let agree = t
        .iter()
        .zip(p)
        .filter(|(&a, &b)| (a == c) == (b == c))
        .count();
    let recall = ratio(hit, support);
    let precision = ratio(hit, predicted);
    (
        support,
        agree as f64 / n as f64,
        recall,
        precision,
        f1_of(precision, recall),
    )
}

/// All positive/negative pairs: wins count 1, ties 1/2.
pub fn mann_whitney_auc(scores: &[f64], t: &[usize], c: usize) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(t)
        .filter(|(_, &y)| y == c)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(t)
        .filter(|(_, &y)| y != c)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut u = 0.0;
    for a in &pos {
        for b in &neg {
            u += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(u / (pos.len() * neg.len()) as f64)
}
