use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn check(preds: &[usize], golds: &[usize]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Validation("metrics are undefined on an empty set".into()));
    }
    Ok(())
}

/// Checks that predictions and golds refer to the same samples in the same order.
pub fn check_alignment<A: AsRef<str>, B: AsRef<str>>(pred_ids: &[A], gold_ids: &[B]) -> Result<()> {
    if pred_ids.len() != gold_ids.len() {
        return Err(Error::Alignment(format!(
            "{} predicted samples for {} gold samples",
            pred_ids.len(),
            gold_ids.len()
        )));
    }
    for (i, (p, g)) in pred_ids.iter().zip(gold_ids).enumerate() {
        if p.as_ref() != g.as_ref() {
            return Err(Error::Alignment(format!(
                "row {i}: prediction for {} but gold for {}",
                p.as_ref(),
                g.as_ref()
            )));
        }
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check(preds, golds)?;
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Rows are gold classes, columns predicted classes.
pub fn confusion_matrix(preds: &[usize], golds: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    check(preds, golds)?;
    let mut m = vec![vec![0u64; classes]; classes];
    for (i, (&p, &g)) in preds.iter().zip(golds).enumerate() {
        if p >= classes || g >= classes {
            return Err(Error::Validation(format!(
                "row {i}: label outside the {classes}-class set (predicted {p}, gold {g})"
            )));
        }
        m[g][p] += 1;
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class; each is 0 when its denominator is 0.
pub fn per_class(cm: &[Vec<u64>]) -> Vec<ClassMetrics> {
    (0..cm.len())
        .map(|c| {
            let tp = cm[c][c];
            let support: u64 = cm[c].iter().sum();
            let predicted: u64 = cm.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

pub fn macro_f1(preds: &[usize], golds: &[usize], classes: usize) -> Result<f64> {
    if classes == 0 {
        return Err(Error::Validation("macro F1 needs a non-empty class set".into()));
    }
    let cm = confusion_matrix(preds, golds, classes)?;
    Ok(per_class(&cm).iter().map(|m| m.f1).sum::<f64>() / classes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
        assert!((accuracy(&[0, 1, 0], &[0, 0, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&[], &[]).is_err());
        let (g, p) = ([0, 0, 1, 1], [0, 1, 1, 1]);
        assert!((macro_f1(&p, &g, 2).unwrap() - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-9);
        assert_eq!(confusion_matrix(&p, &g, 2).unwrap(), vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(macro_f1(&[1, 1], &[1, 1], 2).unwrap(), 0.5);
        assert!(confusion_matrix(&[2], &[0], 2).is_err());
        assert!(matches!(accuracy(&[0], &[0, 1]), Err(Error::Alignment(_))));
    }

    #[test]
    fn constant_predictor_on_balanced_binary_set() {
        let golds = [0, 1, 0, 1];
        assert_eq!(accuracy(&[0; 4], &golds).unwrap(), 0.5);
        assert!((macro_f1(&[0; 4], &golds, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn coherence(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60), perm_seed in 0usize..24) {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let golds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let cm = confusion_matrix(&preds, &golds, 4).unwrap();
            let trace: u64 = (0..4).map(|i| cm[i][i]).sum();
            let acc = accuracy(&preds, &golds).unwrap();
            proptest::prop_assert!((acc - trace as f64 / preds.len() as f64).abs() < 1e-15);
            for c in 0..4 {
                let count = golds.iter().filter(|&&g| g == c).count() as u64;
                proptest::prop_assert_eq!(cm[c].iter().sum::<u64>(), count);
            }
            let m = per_class(&cm);
            let support: u64 = m.iter().map(|x| x.support).sum();
            let micro_recall = m.iter().map(|x| x.recall * x.support as f64).sum::<f64>() / support as f64;
            proptest::prop_assert!((micro_recall - acc).abs() < 1e-12);
            let mut perm = [0, 1, 2, 3];
            let mut k = perm_seed;
            for i in (1..4).rev() {
                perm.swap(i, k % (i + 1));
                k /= i + 1;
            }
            let pp: Vec<usize> = preds.iter().map(|&x| perm[x]).collect();
            let pg: Vec<usize> = golds.iter().map(|&x| perm[x]).collect();
            let a = macro_f1(&preds, &golds, 4).unwrap();
            let b = macro_f1(&pp, &pg, 4).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
