//! Agreement and ranking metrics: Cohen's kappa, majority aggregation,
//! per-label and macro F1, and exact AUROC.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least two annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("gold labels contain a single class")]
    DegenerateGold,
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Cohen's kappa between two annotators.
///
/// Chance agreement comes from each annotator's marginal label frequencies.
/// When chance agreement is 1 (both annotators used one and the same label
/// throughout) the result is 1.0 for identical sequences and 0.0 otherwise.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    check_lengths(a.len(), b.len())?;
    let n = a.len() as f64;
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 =
        marg_a.iter().map(|(label, &ca)| ca as f64 * marg_b.get(label).copied().unwrap_or(0) as f64).sum::<f64>()
            / (n * n);
    if p_e >= 1.0 {
        return Ok(if agree == a.len() { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean of pairwise kappas across every pair of annotators.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    /// `(i, j, kappa)` for annotator indices `i < j`.
    pub pairwise_kappas: Vec<(usize, usize, f64)>,
    pub mean_kappa: f64,
    /// Positions without a strict majority label.
    pub tie_count: usize,
}

pub fn agreement_report<T: Ord + Clone>(annotators: &[Vec<T>]) -> Result<AgreementReport, MetricError> {
    let majority = aggregate_majority(annotators)?;
    let mut pairwise = Vec::new();
    for i in 0..annotators.len() {
        for j in i + 1..annotators.len() {
            pairwise.push((i, j, cohen_kappa(&annotators[i], &annotators[j])?));
        }
    }
    let mean_kappa = pairwise.iter().map(|p| p.2).sum::<f64>() / pairwise.len() as f64;
    Ok(AgreementReport {
        pairwise_kappas: pairwise,
        mean_kappa,
        tie_count: majority.iter().filter(|m| m.is_unresolved()).count(),
    })
}

/// Consensus at one position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consensus<T> {
    Majority(T),
    /// No label reached a strict majority; needs human adjudication.
    Unresolved,
}

impl<T> Consensus<T> {
    pub fn is_unresolved(&self) -> bool {
        matches!(self, Consensus::Unresolved)
    }

    pub fn label(&self) -> Option<&T> {
        match self {
            Consensus::Majority(t) => Some(t),
            Consensus::Unresolved => None,
        }
    }
}

/// Per-position strict-majority label across annotators.
pub fn aggregate_majority<T: Ord + Clone>(annotators: &[Vec<T>]) -> Result<Vec<Consensus<T>>, MetricError> {
    if annotators.len() < 2 {
        return Err(MetricError::TooFewAnnotators(annotators.len()));
    }
    let len = annotators[0].len();
    for seq in &annotators[1..] {
        if seq.len() != len {
            return Err(MetricError::LengthMismatch(len, seq.len()));
        }
    }
    let voters = annotators.len();
    Ok((0..len)
        .map(|pos| {
            let mut votes: BTreeMap<&T, usize> = BTreeMap::new();
            for seq in annotators {
                *votes.entry(&seq[pos]).or_default() += 1;
            }
            votes
                .into_iter()
                .find(|&(_, count)| 2 * count > voters)
                .map_or(Consensus::Unresolved, |(label, _)| Consensus::Majority(label.clone()))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Occurrences in gold.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report<T: Ord> {
    /// Every label seen in either sequence.
    pub per_label: BTreeMap<T, LabelScores>,
    /// Unweighted mean F1 over labels present in gold.
    pub macro_f1: f64,
}

pub fn macro_f1<T: Ord + Clone>(pred: &[T], gold: &[T]) -> Result<F1Report<T>, MetricError> {
    check_lengths(pred.len(), gold.len())?;
    // (tp, fp, fn)
    let mut counts: BTreeMap<&T, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        if p == g {
            counts.entry(p).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_label: BTreeMap<T, LabelScores> = counts
        .into_iter()
        .map(|(label, (tp, fp, fn_))| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (label.clone(), LabelScores { precision, recall, f1, support: tp + fn_ })
        })
        .collect();
    let gold_labels: Vec<&LabelScores> = per_label.values().filter(|s| s.support > 0).collect();
    let macro_f1 = gold_labels.iter().map(|s| s.f1).sum::<f64>() / gold_labels.len() as f64;
    Ok(F1Report { per_label, macro_f1 })
}

/// Exact area under the ROC curve via the rank-sum statistic, with tied
/// scores given their average rank (equivalent to counting tied
/// positive/negative pairs as one half).
pub fn auroc(scores: &[f64], gold: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), gold.len())?;
    let positives = gold.iter().filter(|&&g| g).count();
    let negatives = gold.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::DegenerateGold);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]].total_cmp(&scores[order[start]]).is_eq() {
            end += 1;
        }
        // Ranks are 1-based; the tied block [start, end) shares their mean.
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let block_positives = order[start..end].iter().filter(|&&i| gold[i]).count();
        positive_rank_sum += mean_rank * block_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// One-vs-rest AUROC per class plus their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAuroc<T: Ord> {
    /// Classes whose gold column has both positives and negatives.
    pub per_label: BTreeMap<T, f64>,
    /// Classes skipped because gold was all one class for them.
    pub degenerate: BTreeSet<T>,
    pub macro_auroc: f64,
}

/// `scores[i][c]` is item `i`'s score for `classes[c]`.
pub fn macro_auroc<T: Ord + Clone>(
    classes: &[T],
    scores: &[Vec<f64>],
    gold: &[T],
) -> Result<MacroAuroc<T>, MetricError> {
    check_lengths(scores.len(), gold.len())?;
    let mut per_label = BTreeMap::new();
    let mut degenerate = BTreeSet::new();
    for (c, class) in classes.iter().enumerate() {
        let column: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        let is_class: Vec<bool> = gold.iter().map(|g| g == class).collect();
        match auroc(&column, &is_class) {
            Ok(v) => {
                per_label.insert(class.clone(), v);
            }
            Err(MetricError::DegenerateGold) => {
                degenerate.insert(class.clone());
            }
            Err(e) => return Err(e),
        }
    }
    if per_label.is_empty() {
        return Err(MetricError::DegenerateGold);
    }
    let macro_auroc = per_label.values().sum::<f64>() / per_label.len() as f64;
    Ok(MacroAuroc { per_label, degenerate, macro_auroc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn kappa_examples() {
        assert_eq!(cohen_kappa(&['A', 'B', 'A'], &['A', 'B', 'A']).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&['A', 'A', 'B', 'B'], &['A', 'B', 'A', 'B']).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&['A', 'A'], &['A', 'A']).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&['A'], &['B']).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&['A', 'B'], &['A']), Err(MetricError::LengthMismatch(2, 1)));
    }

    #[test]
    fn kappa_is_symmetric() {
        let a = ['x', 'y', 'y', 'z', 'x', 'x'];
        let b = ['x', 'y', 'z', 'z', 'y', 'x'];
        assert_eq!(cohen_kappa(&a, &b).unwrap(), cohen_kappa(&b, &a).unwrap());
    }

    #[test]
    fn majority_examples() {
        let m = aggregate_majority(&[vec!['A', 'A', 'B'], vec!['A', 'B', 'B'], vec!['B', 'C', 'B']]).unwrap();
        assert_eq!(m, vec![Consensus::Majority('A'), Consensus::Unresolved, Consensus::Majority('B')]);
        assert_eq!(aggregate_majority(&[vec!['A']]), Err(MetricError::TooFewAnnotators(1)));
        // Two annotators disagreeing cannot form a strict majority.
        assert!(aggregate_majority(&[vec!['A'], vec!['B']]).unwrap()[0].is_unresolved());
    }

    #[test]
    fn agreement_report_means_pairs() {
        let r = agreement_report(&[vec![1, 1, 2, 2], vec![1, 2, 1, 2], vec![1, 1, 2, 2]]).unwrap();
        assert_eq!(r.pairwise_kappas.len(), 3);
        assert!((r.mean_kappa - (0.0 + 1.0 + 0.0) / 3.0).abs() < 1e-12);
        assert_eq!(r.tie_count, 0);
    }

    #[test]
    fn f1_examples() {
        let r = macro_f1(&['A', 'A', 'B'], &['A', 'B', 'B']).unwrap();
        assert!((r.per_label[&'A'].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_label[&'B'].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(macro_f1(&['A', 'B'], &['A', 'B']).unwrap().macro_f1, 1.0);
        assert_eq!(macro_f1(&['B', 'B'], &['A', 'A']).unwrap().macro_f1, 0.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.8, 0.4], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(MetricError::DegenerateGold));
    }

    #[test]
    fn macro_auroc_skips_degenerate_classes() {
        let scores = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0], vec![0.7, 0.3, 0.0]];
        let r = macro_auroc(&['a', 'b', 'c'], &scores, &['a', 'b', 'a']).unwrap();
        assert_eq!(r.per_label[&'a'], 1.0);
        assert_eq!(r.per_label[&'b'], 1.0);
        assert!(r.degenerate.contains(&'c'));
        assert_eq!(r.macro_auroc, 1.0);
    }
}
