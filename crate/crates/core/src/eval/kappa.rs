//! Cohen's kappa between two raters over a shared category set.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KappaError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label at position {0} is not in the category set")]
    UnknownCategory(usize),
    #[error("no labels to compare")]
    EmptyInput,
}

/// `(p_o - p_e) / (1 - p_e)`, with chance agreement from the raters'
/// marginals. When both raters use a single category throughout, `p_e = 1`
/// and the result is 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T], categories: &[T]) -> Result<f64, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::EmptyInput);
    }
    let index: BTreeMap<&T, usize> = categories.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let k = categories.len();
    let mut table = vec![0u64; k * k];
    for (pos, (x, y)) in a.iter().zip(b).enumerate() {
        let i = *index.get(x).ok_or(KappaError::UnknownCategory(pos))?;
        let j = *index.get(y).ok_or(KappaError::UnknownCategory(pos))?;
        table[i * k + j] += 1;
    }
    Ok(kappa_from_table(&table, k))
}

/// Kappa from a row-major `k x k` contingency table (rows: rater A).
pub fn kappa_from_table(table: &[u64], k: usize) -> f64 {
    assert_eq!(table.len(), k * k, "table must be k x k");
    let n: u64 = table.iter().sum();
    let n = n as f64;
    let agree: u64 = (0..k).map(|i| table[i * k + i]).sum();
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = (0..k).map(|j| table[i * k + j]).sum();
            let col: u64 = (0..k).map(|j| table[j * k + i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if p_e >= 1.0 {
        return 1.0;
    }
    (p_o - p_e) / (1.0 - p_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identical_raters() {
        let a = [0, 1, 1, 0, 1];
        assert_eq!(cohen_kappa(&a, &a, &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn contingency_fixture() {
        // rater A 60/40, rater B 50/50, 70 agreements
        let table = [40, 20, 10, 30];
        assert_abs_diff_eq!(kappa_from_table(&table, 2), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_single_category() {
        assert_eq!(cohen_kappa(&["x"; 4], &["x"; 4], &["x", "y"]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(cohen_kappa(&[0], &[0, 1], &[0, 1]), Err(KappaError::LengthMismatch(1, 2)));
        assert_eq!(cohen_kappa::<u8>(&[], &[], &[0]), Err(KappaError::EmptyInput));
        assert_eq!(cohen_kappa(&[0, 2], &[0, 1], &[0, 1]), Err(KappaError::UnknownCategory(1)));
    }

    proptest! {
        #[test]
        fn bounded_above_and_one_only_on_agreement(pairs in prop::collection::vec((0u8..3, 0u8..3), 1..60)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k = cohen_kappa(&a, &b, &[0, 1, 2]).unwrap();
            prop_assert!(k <= 1.0 + 1e-12);
            let mut cats: Vec<u8> = a.iter().chain(&b).copied().collect();
            cats.sort_unstable();
            cats.dedup();
            if cats.len() > 1 {
                prop_assert_eq!((k - 1.0).abs() < 1e-12, a == b);
            }
        }
    }
}
