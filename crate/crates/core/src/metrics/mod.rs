//! Confusion-matrix metrics, ROC/PRC areas, dataset splitting and the
//! hyperparameter grid search.
//!
//! The positive class is [`Label::Malicious`]; scores are malicious
//! probabilities and a sample is predicted malicious when its score is
//! strictly above the threshold (ties go to benign, as in prediction).

mod grid;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::Label;
pub use grid::{grid_search, stratified_subset, Factor, GridPoint, GridResult, SearchSpace};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(scores: &[f64], labels: &[Label], threshold: f64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch(scores.len(), labels.len()));
        }
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s > threshold, l) {
                (true, Label::Malicious) => c.tp += 1,
                (true, Label::Benign) => c.fp += 1,
                (false, Label::Benign) => c.tn += 1,
                (false, Label::Malicious) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub roc_auc: f64,
    pub prc_auc: f64,
    pub confusion: Confusion,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub degenerate: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricReport {
    /// Threshold metrics of a confusion matrix; the curve areas stay 0.
    pub fn from_confusion(c: Confusion) -> Self {
        let mut flags = Vec::new();
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy", &mut flags);
        let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut flags);
        let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut flags);
        let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, "f1", &mut flags);
        let fpr = ratio(c.fp, c.tn + c.fp, "fpr", &mut flags);
        MetricReport {
            accuracy,
            precision,
            recall,
            f1,
            fpr,
            fnr: 1.0 - recall,
            roc_auc: 0.0,
            prc_auc: 0.0,
            confusion: c,
            degenerate: flags,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn compute_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<(Confusion, MetricReport)> {
    let c = Confusion::from_predictions(scores, labels, threshold)?;
    let mut r = MetricReport::from_confusion(c);
    match (roc_auc(scores, labels), prc_auc(scores, labels)) {
        (Ok(roc), Ok(prc)) => {
            r.roc_auc = roc;
            r.prc_auc = prc;
        }
        _ => r.degenerate.extend(["roc_auc".to_string(), "prc_auc".to_string()]),
    }
    Ok((c, r))
}

/// Cumulative (tp, fp) points plus the positive and negative totals.
type Sweep = (Vec<(usize, usize)>, usize, usize);

/// Cumulative (tp, fp) after each distinct score, highest score first.
fn sweep(scores: &[f64], labels: &[Label]) -> Result<Sweep> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Malicious).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in idx.iter().enumerate() {
        match labels[i] {
            Label::Malicious => tp += 1,
            Label::Benign => fp += 1,
        }
        if idx.get(k + 1).is_none_or(|&j| scores[j] != scores[i]) {
            points.push((tp, fp));
        }
    }
    Ok((points, pos, neg))
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// ROC curve from (0, 0) to (1, 1), one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    let (points, pos, neg) = sweep(scores, labels)?;
    let mut curve = vec![(0.0, 0.0)];
    curve.extend(
        points
            .into_iter()
            .map(|(tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)),
    );
    Ok(curve)
}

/// Precision-recall curve as (recall, precision); starts at recall 0 with
/// the precision of the highest threshold.
pub fn prc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    let (points, pos, _) = sweep(scores, labels)?;
    let mut curve: Vec<(f64, f64)> = points
        .into_iter()
        .map(|(tp, fp)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64))
        .collect();
    curve.insert(0, (0.0, curve[0].1));
    Ok(curve)
}

pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    Ok(trapezoid(&roc_curve(scores, labels)?))
}

pub fn prc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    Ok(trapezoid(&prc_curve(scores, labels)?))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// True when timestamps were missing and the test set is random.
    pub random_test: bool,
}

fn share(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).round() as usize
}

/// 8:1:1 split per class. With timestamps on every item the newest tenth of
/// each class is the test set; otherwise the test set is drawn at random.
/// The rest is shuffled with `seed` and split 8:1.
pub fn split_dataset(items: &[(Option<NaiveDate>, Label)], seed: u64) -> Split {
    let dated = items.iter().all(|(d, _)| d.is_some());
    if !dated {
        log::warn!("timestamps missing; using a seeded random 8:1:1 split");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        random_test: !dated,
        ..Split::default()
    };
    for class in [Label::Benign, Label::Malicious] {
        let mut members: Vec<usize> = (0..items.len()).filter(|&i| items[i].1 == class).collect();
        let n = members.len();
        let n_test = share(n, 0.1);
        if dated {
            // Newest first; the index breaks ties so the order is total.
            members.sort_by(|&a, &b| items[b].0.cmp(&items[a].0).then(a.cmp(&b)));
        } else {
            members.shuffle(&mut rng);
        }
        let mut rest = members.split_off(n_test);
        split.test.extend(members);
        rest.shuffle(&mut rng);
        let n_val = share(n, 0.1).min(rest.len());
        split.val.extend(rest.drain(..n_val));
        split.train.extend(rest);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}
