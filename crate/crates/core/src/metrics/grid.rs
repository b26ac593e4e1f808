use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricReport;
use crate::error::Result;
use crate::ir::Label;
use crate::nn::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    RowLen,
    HiddenLayers,
    LstmUnits,
    LabelLen,
    GnnSteps,
    Epochs,
    BatchSize,
}

impl Factor {
    pub const ALL: [Factor; 7] = [
        Factor::RowLen,
        Factor::HiddenLayers,
        Factor::LstmUnits,
        Factor::LabelLen,
        Factor::GnnSteps,
        Factor::Epochs,
        Factor::BatchSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::RowLen => "row_len",
            Factor::HiddenLayers => "hidden_layers",
            Factor::LstmUnits => "lstm_units",
            Factor::LabelLen => "label_len",
            Factor::GnnSteps => "gnn_steps",
            Factor::Epochs => "epochs",
            Factor::BatchSize => "batch_size",
        }
    }

    pub fn get(self, h: &Hyperparams) -> usize {
        match self {
            Factor::RowLen => h.row_len,
            Factor::HiddenLayers => h.hidden_layers,
            Factor::LstmUnits => h.lstm_units,
            Factor::LabelLen => h.label_len,
            Factor::GnnSteps => h.gnn_steps,
            Factor::Epochs => h.epochs,
            Factor::BatchSize => h.batch_size,
        }
    }

    pub fn set(self, h: &mut Hyperparams, v: usize) {
        match self {
            Factor::RowLen => h.row_len = v,
            Factor::HiddenLayers => h.hidden_layers = v,
            Factor::LstmUnits => h.lstm_units = v,
            Factor::LabelLen => h.label_len = v,
            Factor::GnnSteps => h.gnn_steps = v,
            Factor::Epochs => h.epochs = v,
            Factor::BatchSize => h.batch_size = v,
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| crate::error::Error::Format(format!("unknown factor `{s}`")))
    }
}

/// Sampling space per hyperparameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub values: BTreeMap<Factor, Vec<usize>>,
}

impl SearchSpace {
    /// The published tuning table.
    pub fn table() -> Self {
        let range = |lo: usize, hi: usize, step: usize| (lo..=hi).step_by(step).collect::<Vec<_>>();
        SearchSpace {
            values: BTreeMap::from([
                (Factor::RowLen, range(50, 200, 25)),
                (Factor::HiddenLayers, range(1, 4, 1)),
                (Factor::LstmUnits, vec![64, 128, 256, 512]),
                (Factor::LabelLen, range(9, 15, 2)),
                (Factor::GnnSteps, range(6, 12, 2)),
                (Factor::Epochs, range(15, 30, 5)),
                (Factor::BatchSize, vec![4, 8, 16, 32]),
            ]),
        }
    }

    /// Every factor fixed at the value in `h`.
    pub fn fixed(h: &Hyperparams) -> Self {
        SearchSpace {
            values: Factor::ALL.iter().map(|&f| (f, vec![f.get(h)])).collect(),
        }
    }

    /// Replaces the space of one factor.
    pub fn with(mut self, f: Factor, values: Vec<usize>) -> Self {
        self.values.insert(f, values);
        self
    }

    pub fn contains(&self, h: &Hyperparams) -> bool {
        Factor::ALL
            .iter()
            .all(|f| self.values.get(f).is_none_or(|v| v.contains(&f.get(h))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Factor being swept when this point was evaluated.
    pub factor: Option<Factor>,
    pub hyper: Hyperparams,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    pub best: GridPoint,
    /// Re-validated top points on the full sets, best first.
    pub revalidated: Vec<GridPoint>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "factor,row_len,hidden_layers,lstm_units,label_len,gnn_steps,epochs,batch_size,\
             accuracy,precision,recall,f1,fpr,fnr,roc_auc,prc_auc\n",
        );
        for p in &self.points {
            let h = &p.hyper;
            let r = &p.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.factor.map_or("-", Factor::name),
                h.row_len,
                h.hidden_layers,
                h.lstm_units,
                h.label_len,
                h.gnn_steps,
                h.epochs,
                h.batch_size,
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                r.fpr,
                r.fnr,
                r.roc_auc,
                r.prc_auc
            );
        }
        out
    }
}

/// Per-class random subset holding `fraction` of each class (at least one
/// item of every non-empty class). Returned indices are sorted.
pub fn stratified_subset(labels: &[Label], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in [Label::Benign, Label::Malicious] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        out.extend_from_slice(&members[..k]);
    }
    out.sort_unstable();
    out
}

fn better(a: &MetricReport, b: &MetricReport) -> bool {
    a.f1 > b.f1
}

/// One-factor-at-a-time sweep.
///
/// Starting from `start` (values outside the space are replaced by the
/// first value of that factor), each factor with more than one value is
/// swept in table order while the others stay at their current best; the
/// factor is then fixed at its max-F1 value (earliest value wins ties).
/// `evaluate` is called once per distinct point. When `revalidate` is given,
/// the top three distinct points are re-scored by it and the best of those
/// becomes the result.
pub fn grid_search<E, R>(
    space: &SearchSpace,
    start: Hyperparams,
    mut evaluate: E,
    revalidate: Option<R>,
) -> Result<GridResult>
where
    E: FnMut(&Hyperparams) -> Result<MetricReport>,
    R: FnMut(&Hyperparams) -> Result<MetricReport>,
{
    let mut current = start;
    for f in Factor::ALL {
        if let Some(vals) = space.values.get(&f) {
            if !vals.is_empty() && !vals.contains(&f.get(&current)) {
                f.set(&mut current, vals[0]);
            }
        }
    }
    let mut cache: Vec<(Hyperparams, MetricReport)> = Vec::new();
    let mut eval_cached = |h: &Hyperparams| -> Result<MetricReport> {
        if let Some((_, r)) = cache.iter().find(|(k, _)| k == h) {
            return Ok(r.clone());
        }
        let r = evaluate(h)?;
        cache.push((*h, r.clone()));
        Ok(r)
    };

    let mut points = Vec::new();
    for f in Factor::ALL {
        let vals = match space.values.get(&f) {
            Some(v) if v.len() > 1 => v,
            _ => continue,
        };
        let mut best: Option<(usize, MetricReport)> = None;
        for &v in vals {
            let mut h = current;
            f.set(&mut h, v);
            let report = eval_cached(&h)?;
            if best.as_ref().is_none_or(|(_, b)| better(&report, b)) {
                best = Some((v, report.clone()));
            }
            points.push(GridPoint {
                factor: Some(f),
                hyper: h,
                report,
            });
        }
        if let Some((v, _)) = best {
            f.set(&mut current, v);
        }
    }
    if points.is_empty() {
        points.push(GridPoint {
            factor: None,
            hyper: current,
            report: eval_cached(&current)?,
        });
    }

    let mut best = points[0].clone();
    for p in &points[1..] {
        if better(&p.report, &best.report) {
            best = p.clone();
        }
    }

    let mut revalidated = Vec::new();
    if let Some(mut rv) = revalidate {
        let mut ranked: Vec<&GridPoint> = Vec::new();
        for p in &points {
            if !ranked.iter().any(|q| q.hyper == p.hyper) {
                ranked.push(p);
            }
        }
        // Stable sort keeps sweep order among equal F1 scores.
        ranked.sort_by(|a, b| b.report.f1.total_cmp(&a.report.f1));
        for p in ranked.into_iter().take(3) {
            revalidated.push(GridPoint {
                factor: p.factor,
                hyper: p.hyper,
                report: rv(&p.hyper)?,
            });
        }
        let mut top = revalidated[0].clone();
        for p in &revalidated[1..] {
            if better(&p.report, &top.report) {
                top = p.clone();
            }
        }
        best = top;
        revalidated.sort_by(|a, b| b.report.f1.total_cmp(&a.report.f1));
    }
    Ok(GridResult {
        points,
        best,
        revalidated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_space_sizes() {
        let s = SearchSpace::table();
        assert_eq!(s.values[&Factor::RowLen], vec![50, 75, 100, 125, 150, 175, 200]);
        assert_eq!(s.values[&Factor::LabelLen], vec![9, 11, 13, 15]);
        assert!(s.contains(&Hyperparams::default()));
    }

    #[test]
    fn single_point_space_returns_it() {
        let h = Hyperparams::default();
        let r = grid_search(
            &SearchSpace::fixed(&h),
            h,
            |_| Ok(MetricReport::default()),
            None::<fn(&Hyperparams) -> Result<MetricReport>>,
        )
        .unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.best.hyper, h);
    }
}
