//! Binary classification metrics, ROC/AUC, and k-fold cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_kfold, Label};
use crate::error::{Error, Result};
use crate::model::{predict_proba, train, InputShape, Sample, TrainConfig};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts with the other class taken as positive.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

pub fn confusion(preds: &[Label], truth: &[Label], positive: Label) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Shape("confusion matrix needs at least one sample".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.tp + cm.tn, cm.total(), "accuracy")
}

pub fn precision(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.tp, cm.tp + cm.fp, "precision")
}

/// Recall of the positive class.
pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.tp, cm.tp + cm.fn_, "sensitivity")
}

pub fn negative_predictive_value(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.tn, cm.tn + cm.fn_, "negative predictive value")
}

pub fn specificity(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.tn, cm.tn + cm.fp, "specificity")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +inf,
    /// stored as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve and trapezoidal AUC for positive-class scores.
///
/// Equal scores form a single threshold step, so the area equals the
/// fraction of (positive, negative) pairs ordered correctly, ties counting half.
pub fn auc(scores: &[f64], truth: &[Label], positive: Label) -> Result<Roc> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("score {s} is not finite")));
    }
    let pos = truth.iter().filter(|&&t| t == positive).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    // Twice the area, in units of one (positive, negative) pair.
    let mut area2: u64 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(Roc {
        points,
        auc: area2 as f64 / (2 * pos * neg) as f64,
    })
}

/// CSV with columns `threshold,fpr,tpr`.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub support: u64,
}

/// Metrics with `Ruminating` as the positive class. `None` marks a metric
/// whose denominator is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub auc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub roc_points: Vec<RocPoint>,
}

/// Hard decision used everywhere: positive iff the positive-class probability exceeds one half.
pub fn decide(score: f64) -> Label {
    if score > 0.5 {
        Label::Ruminating
    } else {
        Label::Other
    }
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], truth: &[Label]) -> Result<EvalReport> {
        let preds: Vec<Label> = scores.iter().map(|&s| decide(s)).collect();
        let cm = confusion(&preds, truth, Label::Ruminating)?;
        let roc = match auc(scores, truth, Label::Ruminating) {
            Ok(r) => Some(r),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let per_class = Label::ALL
            .iter()
            .map(|&label| {
                let m = if label == Label::Ruminating { cm } else { cm.swapped() };
                ClassMetrics {
                    label,
                    precision: precision(&m).ok(),
                    recall: sensitivity(&m).ok(),
                    support: m.tp + m.fn_,
                }
            })
            .collect();
        Ok(EvalReport {
            confusion: cm,
            accuracy: accuracy(&cm)?,
            precision: precision(&cm).ok(),
            recall: sensitivity(&cm).ok(),
            auc: roc.as_ref().map(|r| r.auc),
            per_class,
            roc_points: roc.map(|r| r.points).unwrap_or_default(),
        })
    }

    /// True when the scalar fields agree exactly with the stored confusion matrix.
    pub fn is_consistent(&self) -> bool {
        let cm = &self.confusion;
        accuracy(cm).ok() == Some(self.accuracy)
            && precision(cm).ok() == self.precision
            && sensitivity(cm).ok() == self.recall
    }
}

/// Evaluates a trained model on samples.
pub fn evaluate_model(params: &crate::model::ModelParams, samples: &[Sample]) -> Result<EvalReport> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.input.clone()).collect();
    let probs = predict_proba(params, &inputs)?;
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let truth: Vec<Label> = samples.iter().map(|s| s.label).collect();
    EvalReport::from_scores(&scores, &truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValSummary {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// `None` if any fold had an undefined AUC.
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub std_kind: String,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CrossValSummary {
    pub fn from_folds(folds: Vec<FoldResult>) -> Result<CrossValSummary> {
        if folds.is_empty() {
            return Err(Error::Data("no folds to summarize".into()));
        }
        let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        let aucs: Option<Vec<f64>> = folds.iter().map(|f| f.auc).collect();
        let auc_stats = aucs.map(|a| mean_std(&a));
        Ok(CrossValSummary {
            k: folds.len(),
            folds,
            mean_accuracy,
            std_accuracy,
            mean_auc: auc_stats.map(|s| s.0),
            std_auc: auc_stats.map(|s| s.1),
            std_kind: "population".into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossValConfig {
    pub k: usize,
    pub seed: u64,
    /// Train folds concurrently. Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        CrossValConfig {
            k: 10,
            seed: 0,
            parallel: true,
        }
    }
}

/// k-fold cross-validation over pooled samples.
///
/// `groups[i]` identifies the source clip of sample `i`; samples sharing a
/// group (augmented copies) always land in the same fold. Folds are
/// stratified by group label. Each fold's model early-stops on its own
/// training data, so the held-out fold never influences training.
pub fn crossval(
    input: InputShape,
    samples: &[Sample],
    groups: &[usize],
    train_cfg: &TrainConfig,
    cv: &CrossValConfig,
) -> Result<CrossValSummary> {
    if groups.len() != samples.len() {
        return Err(Error::Shape(format!(
            "{} group ids for {} samples",
            groups.len(),
            samples.len()
        )));
    }
    let mut group_ids: Vec<usize> = groups.to_vec();
    group_ids.sort_unstable();
    group_ids.dedup();
    let mut group_labels = Vec::with_capacity(group_ids.len());
    for &g in &group_ids {
        let mut members = samples.iter().zip(groups).filter(|(_, &h)| h == g);
        let first = members.next().expect("group has a member").0.label;
        if members.any(|(s, _)| s.label != first) {
            return Err(Error::Data(format!("group {g} mixes labels")));
        }
        group_labels.push(first);
    }
    let group_folds = stratified_kfold(&group_labels, cv.k, derive_seed(cv.seed, "crossval", 0))?;
    let mut fold_of_group = vec![0; group_ids.len()];
    for (f, members) in group_folds.iter().enumerate() {
        for &gi in members {
            fold_of_group[gi] = f;
        }
    }
    let fold_of: Vec<usize> = groups
        .iter()
        .map(|g| fold_of_group[group_ids.binary_search(g).expect("known group")])
        .collect();

    let run = |f: usize| -> Result<FoldResult> {
        let mut test = Vec::new();
        let mut train_set = Vec::new();
        for (s, &sf) in samples.iter().zip(&fold_of) {
            if sf == f {
                test.push(s.clone());
            } else {
                train_set.push(s.clone());
            }
        }
        let cfg = TrainConfig {
            seed: derive_seed(train_cfg.seed, "fold", f as u64),
            ..train_cfg.clone()
        };
        let (params, _) = train(input, &train_set, &train_set, &cfg)?;
        let report = evaluate_model(&params, &test)?;
        Ok(FoldResult {
            fold: f,
            n_train: train_set.len(),
            n_test: test.len(),
            accuracy: report.accuracy,
            auc: report.auc,
        })
    };
    let folds: Vec<FoldResult> = if cv.parallel {
        (0..cv.k).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..cv.k).map(run).collect::<Result<_>>()?
    };
    CrossValSummary::from_folds(folds)
}
