//! Multilabel ranking metrics.
//!
//! Average precision here is the non-interpolated information-retrieval
//! form: rank items by descending score (ties keep their original order),
//! then average the precision at each positive item's rank.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Average precision of one class, `None` when there are no positives.
pub fn average_precision<T: Scalar>(scores: &[T], targets: &[bool]) -> Result<Option<T>> {
    if scores.len() != targets.len() {
        return Err(Error::dim("average_precision", &[scores.len()], &[targets.len()]));
    }
    let positives = targets.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index among equal scores
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut hits = 0usize;
    let mut total = T::zero();
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] {
            hits += 1;
            total += T::of_usize(hits) / T::of_usize(rank + 1);
        }
    }
    Ok(Some(total / T::of_usize(positives)))
}

/// Expected AP of a uniformly random ranking of `positives` among `n` items.
///
/// A positive at rank `k` sees `(k−1)(P−1)/(N−1)` other positives above it
/// on average, so `E[AP] = (H_N + (P−1)/(N−1)·(N − H_N)) / N`.
pub fn expected_random_ap(positives: usize, n: usize) -> Option<f64> {
    if positives == 0 || positives > n {
        return None;
    }
    if n == 1 {
        return Some(1.0);
    }
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    let nf = n as f64;
    Some((harmonic + (positives - 1) as f64 / (nf - 1.0) * (nf - harmonic)) / nf)
}

/// Scores and binary targets, `n_samples × n_classes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<T> {
    n_samples: usize,
    n_classes: usize,
    scores: Vec<T>,
    targets: Vec<bool>,
}

impl<T: Scalar> PredictionMatrix<T> {
    pub fn new(n_classes: usize, scores: Vec<T>, targets: Vec<bool>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Contract("prediction matrix needs at least one class".into()));
        }
        if scores.len() != targets.len() || scores.len() % n_classes != 0 {
            return Err(Error::dim("prediction matrix", &[scores.len()], &[targets.len(), n_classes]));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite score in prediction matrix".into()));
        }
        Ok(Self {
            n_samples: scores.len() / n_classes,
            n_classes,
            scores,
            targets,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn column(&self, c: usize) -> (Vec<T>, Vec<bool>) {
        let stride = self.n_classes;
        (
            self.scores.iter().skip(c).step_by(stride).copied().collect(),
            self.targets.iter().skip(c).step_by(stride).copied().collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult<T> {
    pub per_class: Vec<Option<T>>,
    /// Mean over classes with at least one positive; `None` if there are none.
    pub map: Option<T>,
    pub n_positive: Vec<usize>,
}

impl<T: Scalar> ApResult<T> {
    /// mAP with zero standing in when no class is defined.
    pub fn map_or_zero(&self) -> T {
        self.map.unwrap_or_else(T::zero)
    }

    pub fn skipped_classes(&self) -> Vec<usize> {
        self.per_class
            .iter()
            .enumerate()
            .filter_map(|(i, ap)| ap.is_none().then_some(i))
            .collect()
    }
}

pub fn mean_average_precision<T: Scalar>(pm: &PredictionMatrix<T>) -> Result<ApResult<T>> {
    if pm.n_samples == 0 {
        return Err(Error::Contract("mean average precision over zero samples".into()));
    }
    let mut per_class = Vec::with_capacity(pm.n_classes);
    let mut n_positive = Vec::with_capacity(pm.n_classes);
    for c in 0..pm.n_classes {
        let (scores, targets) = pm.column(c);
        n_positive.push(targets.iter().filter(|&&t| t).count());
        per_class.push(average_precision(&scores, &targets)?);
    }
    let defined: Vec<T> = per_class.iter().flatten().copied().collect();
    let map = (!defined.is_empty())
        .then(|| defined.iter().copied().sum::<T>() / T::of_usize(defined.len()));
    let result = ApResult {
        per_class,
        map,
        n_positive,
    };
    let skipped = result.skipped_classes();
    if !skipped.is_empty() {
        log::warn!("classes without positives excluded from mAP: {skipped:?}");
    }
    Ok(result)
}

/// Fixed-width text table: one row per class, then the overall mAP.
pub fn classwise_table<T: Scalar>(result: &ApResult<T>, class_names: &[&str]) -> Result<String> {
    if class_names.len() != result.per_class.len() {
        return Err(Error::dim(
            "classwise_table",
            &[class_names.len()],
            &[result.per_class.len()],
        ));
    }
    let fmt_ap = |ap: Option<T>| ap.map_or_else(|| "n/a".to_string(), |v| format!("{:.3}", v.as_f64()));
    let mut out = String::new();
    writeln!(out, "{:<20} {:>6} {:>6}", "class", "AP", "n_pos").unwrap();
    for ((name, ap), n) in class_names.iter().zip(&result.per_class).zip(&result.n_positive) {
        writeln!(out, "{:<20} {:>6} {:>6}", name, fmt_ap(*ap), n).unwrap();
    }
    writeln!(out, "{:<20} {:>6}", "mAP", fmt_ap(result.map)).unwrap();
    Ok(out)
}

/// `class,ap,n_positive` CSV with LF line endings.
pub fn classwise_csv<T: Scalar>(result: &ApResult<T>, class_names: &[&str]) -> Result<String> {
    if class_names.len() != result.per_class.len() {
        return Err(Error::dim("classwise_csv", &[class_names.len()], &[result.per_class.len()]));
    }
    let mut out = String::from("class,ap,n_positive\n");
    for ((name, ap), n) in class_names.iter().zip(&result.per_class).zip(&result.n_positive) {
        let ap = ap.map_or_else(|| "n/a".to_string(), |v| format!("{:.6}", v.as_f64()));
        writeln!(out, "{name},{ap},{n}").unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dataio::CLASS_NAMES;

    /// Enumerates every ordering of `n` items and returns the minimum AP.
    fn worst_ap_brute(targets: &[bool]) -> f64 {
        fn permute(items: &mut Vec<usize>, k: usize, targets: &[bool], best: &mut f64) {
            if k == items.len() {
                let n = items.len();
                let scores: Vec<f64> = (0..n)
                    .map(|i| (n - items.iter().position(|&x| x == i).unwrap()) as f64)
                    .collect();
                let ap = average_precision(&scores, targets).unwrap().unwrap();
                *best = best.min(ap);
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permute(items, k + 1, targets, best);
                items.swap(k, i);
            }
        }
        let mut items: Vec<usize> = (0..targets.len()).collect();
        let mut best = f64::INFINITY;
        permute(&mut items, 0, targets, &mut best);
        best
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.1, 0.05], &[true, true, false, false]).unwrap();
        assert_eq!(ap, Some(1.0));
        let ap = average_precision(&[0.9f64, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap.unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let ap = average_precision(&[0.9, 0.8], &[false, false]).unwrap();
        assert_eq!(ap, None);
        assert!(average_precision(&[0.1, 0.2], &[true]).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        // equal scores: index 0 (negative) ranks ahead of index 1 (positive)
        let ap = average_precision(&[0.5f64, 0.5], &[false, true]).unwrap().unwrap();
        assert!((ap - 0.5).abs() < 1e-15);
        let ap = average_precision(&[0.5, 0.5], &[true, false]).unwrap().unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn map_skips_undefined_classes() {
        let pm = PredictionMatrix::new(1, vec![0.9, 0.1, 0.4], vec![true, false, false]).unwrap();
        assert_eq!(mean_average_precision(&pm).unwrap().map, Some(1.0));

        // 14 classes, classes 3 and 9 have no positives
        let n = 6;
        let mut scores = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            for c in 0..14 {
                scores.push(((i * 14 + c) % 7) as f64 / 7.0);
                targets.push(c != 3 && c != 9 && (i + c) % 2 == 0);
            }
        }
        let pm = PredictionMatrix::new(14, scores, targets).unwrap();
        let r = mean_average_precision(&pm).unwrap();
        assert_eq!(r.skipped_classes(), vec![3, 9]);
        let defined: Vec<f64> = r.per_class.iter().flatten().copied().collect();
        assert_eq!(defined.len(), 12);
        let mean = defined.iter().sum::<f64>() / 12.0;
        assert!((r.map.unwrap() - mean).abs() < 1e-15);
        assert_eq!(r.n_positive[3], 0);
    }

    #[test]
    fn matrix_validation() {
        assert!(PredictionMatrix::new(2, vec![0.1; 3], vec![false; 3]).is_err());
        assert!(PredictionMatrix::new(1, vec![f64::NAN], vec![true]).is_err());
        let empty = PredictionMatrix::<f64>::new(3, vec![], vec![]).unwrap();
        assert!(mean_average_precision(&empty).is_err());
    }

    #[test]
    fn expected_random_ap_matches_enumeration() {
        // average AP over all orderings of 5 items with 2 positives
        let mut total = 0.0;
        let mut count = 0.0;
        for a in 0..5 {
            for b in a + 1..5 {
                let mut t = [false; 5];
                t[a] = true;
                t[b] = true;
                let scores = [5.0, 4.0, 3.0, 2.0, 1.0];
                total += average_precision(&scores, &t).unwrap().unwrap();
                count += 1.0;
            }
        }
        assert!((expected_random_ap(2, 5).unwrap() - total / count).abs() < 1e-12);
        assert_eq!(expected_random_ap(0, 5), None);
        assert_eq!(expected_random_ap(3, 3), Some(1.0));
    }

    #[test]
    fn perfect_table_and_na() {
        let perfect = ApResult {
            per_class: vec![Some(1.0f64); 14],
            map: Some(1.0),
            n_positive: vec![3; 14],
        };
        let table = classwise_table(&perfect, &CLASS_NAMES).unwrap();
        assert_eq!(table.lines().filter(|l| l.contains(" 1.000 ")).count(), 14);

        let mut partial = perfect.clone();
        partial.per_class[2] = None;
        partial.n_positive[2] = 0;
        let table = classwise_table(&partial, &CLASS_NAMES).unwrap();
        assert!(table.lines().nth(3).unwrap().contains("n/a"));
        assert!(classwise_table(&partial, &CLASS_NAMES[..3]).is_err());
    }

    #[test]
    fn table_golden() {
        let r = ApResult {
            per_class: vec![Some(0.5f64), None, Some(0.83333)],
            map: Some(0.666665),
            n_positive: vec![2, 0, 12],
        };
        let golden = "\
class                    AP  n_pos
hand-face             0.500      2
hand-mouth              n/a      0
gesture               0.833     12
mAP                   0.667
";
        assert_eq!(classwise_table(&r, &CLASS_NAMES[..3]).unwrap(), golden);
        let csv = "class,ap,n_positive\nhand-face,0.500000,2\nhand-mouth,n/a,0\ngesture,0.833330,12\n";
        assert_eq!(classwise_csv(&r, &CLASS_NAMES[..3]).unwrap(), csv);
    }

    #[test]
    fn duplicating_samples_can_change_ap() {
        // [neg, pos] has AP 1/2; stacked twice the two negatives precede both
        // positives, giving (1/3 + 2/4) / 2.
        let pm = PredictionMatrix::new(1, vec![0.9, 0.1], vec![false, true]).unwrap();
        let doubled =
            PredictionMatrix::new(1, vec![0.9f64, 0.1, 0.9, 0.1], vec![false, true, false, true]).unwrap();
        assert_eq!(mean_average_precision(&pm).unwrap().map, Some(0.5));
        let d = mean_average_precision(&doubled).unwrap().map.unwrap();
        assert!((d - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn worst_ranking_lower_bound() {
        for n in 1..=6usize {
            for mask in 1u32..(1 << n) {
                let targets: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let p = targets.iter().filter(|&&t| t).count();
                let worst = worst_ap_brute(&targets);
                // positives all at the bottom: ranks N−P+1..N
                let bottom: f64 =
                    (1..=p).map(|j| j as f64 / (n - p + j) as f64).sum::<f64>() / p as f64;
                assert!((worst - bottom).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_maps(
            scores in prop::collection::vec(0.01f64..0.99, 2..40),
            seed in any::<u64>(),
        ) {
            let targets: Vec<bool> = scores.iter().enumerate()
                .map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
            let base = average_precision(&scores, &targets).unwrap();
            let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
            let cubic: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
            prop_assert_eq!(base, average_precision(&affine, &targets).unwrap());
            prop_assert_eq!(base, average_precision(&cubic, &targets).unwrap());
            if let Some(ap) = base {
                let n = scores.len();
                let p = targets.iter().filter(|&&t| t).count();
                let bottom: f64 = (1..=p).map(|j| j as f64 / (n - p + j) as f64).sum::<f64>() / p as f64;
                prop_assert!(ap <= 1.0 && ap >= bottom - 1e-12);
            }
        }

        #[test]
        fn map_invariant_under_sample_permutation(
            n in 1usize..20,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = 4;
            let scores: Vec<f64> = (0..n * c).map(|_| rng.random_range(0.0..1.0)).collect();
            let targets: Vec<bool> = (0..n * c).map(|_| rng.random_bool(0.4)).collect();
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let pick = |v: &[f64]| rows.iter().flat_map(|&r| v[r * c..(r + 1) * c].to_vec()).collect::<Vec<_>>();
            let pick_t = |v: &[bool]| rows.iter().flat_map(|&r| v[r * c..(r + 1) * c].to_vec()).collect::<Vec<_>>();
            let pm = PredictionMatrix::new(c, scores.clone(), targets.clone()).unwrap();
            let shuffled = PredictionMatrix::new(c, pick(&scores), pick_t(&targets)).unwrap();
            let a = mean_average_precision(&pm).unwrap().map;
            let b = mean_average_precision(&shuffled).unwrap().map;
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
