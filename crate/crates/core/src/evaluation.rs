//! Confusion matrices, per-class precision/recall/F1 and their averages.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::nncore::NUM_CLASSES;

/// The six emotion classes, in their fixed index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Joy,
    Sad,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_CLASSES] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sad,
        Emotion::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        Emotion::ALL
            .get(idx)
            .copied()
            .ok_or(Error::LabelOutOfRange(idx))
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sad => "sad",
            Emotion::Surprise => "surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Case-insensitive; surrounding whitespace is ignored.
impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| s.to_string())
    }
}

pub fn label_names() -> Vec<String> {
    Emotion::ALL.iter().map(|e| e.name().to_string()).collect()
}

/// Rows are gold classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        let mut cm = ConfusionMatrix::new(k);
        for (g, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::shape("ConfusionMatrix::from_counts", k, row.len()));
            }
            cm.counts[g * k..(g + 1) * k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes + pred]
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        for label in [gold, pred] {
            if label >= self.classes {
                return Err(Error::LabelOutOfRange(label));
            }
        }
        self.counts[gold * self.classes + pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        (0..self.classes).map(|p| self.get(gold, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, pred)).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }
}

/// Six-class confusion matrix.
pub fn confusion(golds: &[usize], preds: &[usize]) -> Result<ConfusionMatrix> {
    confusion_k(golds, preds, NUM_CLASSES)
}

pub fn confusion_k(golds: &[usize], preds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&g, &p) in golds.iter().zip(preds) {
        cm.add(g, p)?;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub micro: Average,
    pub macro_avg: Average,
}

/// `num / den`, or 0 when `den` is 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean of per-class F1 scores.
pub fn macro_f1(per_class_f1: &[f64]) -> f64 {
    if per_class_f1.is_empty() {
        return 0.0;
    }
    per_class_f1.iter().sum::<f64>() / per_class_f1.len() as f64
}

/// Metrics with emotion names when the matrix is six-class, `class<i>` otherwise.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let labels = if cm.classes() == NUM_CLASSES {
        label_names()
    } else {
        (0..cm.classes()).map(|c| format!("class{c}")).collect()
    };
    metrics_with_labels(cm, labels)
}

pub fn metrics_with_labels(cm: &ConfusionMatrix, labels: Vec<String>) -> MetricsReport {
    let k = cm.classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.row_sum(c),
            }
        })
        .collect();

    // pooled counts: every error is one FP and one FN
    let tp = cm.correct();
    let fp = cm.total() - tp;
    let fn_ = fp;
    let micro_p = ratio(tp, tp + fp);
    let micro_r = ratio(tp, tp + fn_);
    let micro = Average {
        precision: micro_p,
        recall: micro_r,
        f1: f1_score(micro_p, micro_r),
    };

    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let macro_avg = Average {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };

    MetricsReport {
        labels,
        per_class,
        micro,
        macro_avg,
    }
}

impl MetricsReport {
    /// `{per_class: {label: {p, r, f1, support}}, micro: {p, r, f1}, macro: {p, r, f1}}`
    pub fn to_json(&self) -> Value {
        let mut per_class = Map::new();
        for (label, m) in self.labels.iter().zip(&self.per_class) {
            per_class.insert(
                label.clone(),
                json!({"p": m.precision, "r": m.recall, "f1": m.f1, "support": m.support}),
            );
        }
        let avg = |a: &Average| json!({"p": a.precision, "r": a.recall, "f1": a.f1});
        json!({
            "per_class": per_class,
            "micro": avg(&self.micro),
            "macro": avg(&self.macro_avg),
        })
    }

    pub fn table(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        for (label, m) in self.labels.iter().zip(&self.per_class) {
            let _ = writeln!(
                out,
                "{label:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        for (name, a) in [("micro avg", &self.micro), ("macro avg", &self.macro_avg)] {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>9.3}  {:>9.3}  {:>9.3}",
                a.precision, a.recall, a.f1
            );
        }
        out
    }
}

/// Items whose gold label is `gold_class` and prediction is `pred_class`.
/// Items without a gold label are skipped.
pub fn error_listing<'a, T>(
    items: &'a [T],
    golds: &[Option<usize>],
    preds: &[usize],
    gold_class: usize,
    pred_class: usize,
) -> Result<Vec<&'a T>> {
    if items.len() != preds.len() || golds.len() != preds.len() {
        return Err(Error::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    Ok(items
        .iter()
        .zip(golds.iter().zip(preds))
        .filter(|(_, (g, &p))| **g == Some(gold_class) && p == pred_class)
        .map(|(item, _)| item)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("SAD".parse::<Emotion>(), Ok(Emotion::Sad));
        assert_eq!(" Joy ".parse::<Emotion>(), Ok(Emotion::Joy));
        assert!("sadness".parse::<Emotion>().is_err());
        assert_eq!(Emotion::Surprise.index(), 5);
        assert!(Emotion::from_index(6).is_err());
    }

    #[test]
    fn identical_sequences_give_diagonal() {
        let labels = [0, 1, 2, 3, 4, 5, 5, 0];
        let cm = confusion(&labels, &labels).unwrap();
        for g in 0..6 {
            for p in 0..6 {
                if g != p {
                    assert_eq!(cm.get(g, p), 0);
                }
            }
        }
        assert_eq!(cm.total(), 8);
        let report = metrics(&cm);
        assert!(report.per_class.iter().all(|m| m.f1 == 1.0));
        assert_eq!(report.macro_avg.f1, 1.0);
        assert_eq!(report.micro.f1, 1.0);
    }

    #[test]
    fn empty_inputs_give_zero_matrix() {
        let cm = confusion(&[], &[]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(6));
        let report = metrics(&cm);
        assert_eq!(report.macro_avg.f1, 0.0);
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(matches!(
            confusion(&[0, 1], &[0]),
            Err(Error::LengthMismatch { golds: 2, preds: 1 })
        ));
        assert!(matches!(confusion(&[6], &[0]), Err(Error::LabelOutOfRange(6))));
    }

    #[test]
    fn published_per_class_scores_average_to_reported_macro() {
        let f1 = [0.622, 0.688, 0.730, 0.788, 0.668, 0.656];
        assert!((macro_f1(&f1) - 0.692).abs() < 0.0005);
    }

    #[test]
    fn hand_computed_three_class_collapse() {
        // everything predicted as class 0
        let cm = ConfusionMatrix::from_counts(&[vec![4, 0, 0], vec![3, 0, 0], vec![2, 0, 0]]).unwrap();
        let r = metrics(&cm);
        assert!((r.per_class[0].precision - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.per_class[0].recall, 1.0);
        assert!((r.per_class[0].f1 - 8.0 / 13.0).abs() < 1e-15);
        assert_eq!(r.per_class[1], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 3 });
        assert!((r.macro_avg.f1 - 8.0 / 39.0).abs() < 1e-15);
        assert!((r.micro.f1 - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn json_report_schema() {
        let cm = confusion(&[0, 4, 4], &[0, 4, 1]).unwrap();
        let v = metrics(&cm).to_json();
        assert_eq!(v["per_class"]["sad"]["support"], 2);
        assert_eq!(v["per_class"]["sad"]["r"], 0.5);
        assert!(v["macro"]["f1"].is_number());
        assert!(v["micro"]["p"].is_number());
        assert_eq!(v["per_class"].as_object().unwrap().len(), 6);
        assert!(metrics(&cm).table().contains("macro avg"));
    }

    #[test]
    fn listing_picks_matching_pairs() {
        let items = ["a", "b", "c", "d", "e"];
        let golds = [Some(0), Some(0), Some(4), Some(0), None];
        let preds = [4, 0, 0, 4, 4];
        let hits = error_listing(&items, &golds, &preds, 0, 4).unwrap();
        assert_eq!(hits, vec![&"a", &"d"]);
        assert!(error_listing(&items, &golds, &preds, 1, 4).unwrap().is_empty());
        let all = error_listing(&items[..2], &[Some(2), Some(2)], &[3, 3], 2, 3).unwrap();
        assert_eq!(all.len(), 2);
    }

    /// Independent metrics from explicit TP/FP/FN counts over label lists.
    fn brute_force(golds: &[usize], preds: &[usize], k: usize) -> (Vec<f64>, f64) {
        let mut f1s = Vec::new();
        for c in 0..k {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for (&g, &p) in golds.iter().zip(preds) {
                match (g == c, p == c) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fn_ += 1.0,
                    _ => {}
                }
            }
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            f1s.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let acc = golds.iter().zip(preds).filter(|(g, p)| g == p).count() as f64 / golds.len().max(1) as f64;
        (f1s, acc)
    }

    fn pairs() -> impl Strategy<Value = Vec<(usize, usize)>> {
        prop::collection::vec((0usize..6, 0usize..6), 0..100)
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in pairs()) {
            let golds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let cm = confusion(&golds, &preds).unwrap();
            let mut naive = [[0u64; 6]; 6];
            for (&g, &p) in golds.iter().zip(&preds) {
                naive[g][p] += 1;
            }
            for g in 0..6 {
                for p in 0..6 {
                    prop_assert_eq!(cm.get(g, p), naive[g][p]);
                }
            }
            let r = metrics(&cm);
            let (f1s, acc) = brute_force(&golds, &preds, 6);
            for (m, f) in r.per_class.iter().zip(&f1s) {
                prop_assert!((m.f1 - f).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&m.precision));
                prop_assert!((0.0..=1.0).contains(&m.recall));
            }
            prop_assert!((r.macro_avg.f1 - macro_f1(&f1s)).abs() < 1e-12);
            prop_assert!((r.micro.precision - acc).abs() < 1e-12);
            prop_assert!((r.micro.recall - acc).abs() < 1e-12);
            prop_assert!((r.micro.f1 - acc).abs() < 1e-12);
        }

        #[test]
        fn macro_f1_invariant_under_relabeling(pairs in pairs(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..6).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let golds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let pg: Vec<usize> = golds.iter().map(|&g| perm[g]).collect();
            let pp: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
            let a = metrics(&confusion(&golds, &preds).unwrap()).macro_avg.f1;
            let b = metrics(&confusion(&pg, &pp).unwrap()).macro_avg.f1;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
