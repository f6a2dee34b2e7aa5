use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`; undefined for an empty reference.
    pub fn rate(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::Undefined("word error rate of an empty reference".into()));
        }
        Ok(self.errors() as f64 / self.ref_len as f64)
    }

    pub fn add(&mut self, o: &EditCounts) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.ref_len += o.ref_len;
    }
}

/// Minimum edit-distance alignment with unit costs. On ties the backtrace
/// prefers a substitution, then an insertion, then a deletion.
pub fn align_counts<S: AsRef<str>>(reference: &[S], hyp: &[S]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[(i - 1) * w + j - 1]
                + usize::from(reference[i - 1].as_ref() != hyp[j - 1].as_ref());
            let ins = cost[i * w + j - 1] + 1;
            let del = cost[(i - 1) * w + j] + 1;
            cost[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut c = EditCounts {
        ref_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hyp[j - 1].as_ref();
            if here == cost[(i - 1) * w + j - 1] + usize::from(!same) {
                if !same {
                    c.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == cost[i * w + j - 1] + 1 {
            c.insertions += 1;
            j -= 1;
        } else {
            c.deletions += 1;
            i -= 1;
        }
    }
    c
}

/// Edit counts and rate for one reference/hypothesis pair.
pub fn wer<S: AsRef<str>>(reference: &[S], hyp: &[S]) -> Result<(EditCounts, f64)> {
    let c = align_counts(reference, hyp);
    let r = c.rate()?;
    Ok((c, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_has_no_errors() {
        let (c, r) = wer(&w("a b c"), &w("a b c")).unwrap();
        assert_eq!(c.errors(), 0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn one_deletion() {
        let (c, r) = wer(&w("a b c"), &w("a c")).unwrap();
        assert_eq!((c.substitutions, c.insertions, c.deletions), (0, 0, 1));
        assert!((r - 1.0 / 3.0).abs() < 1e-12);
        let (c, r) = wer(&w("a"), &w("")).unwrap();
        assert_eq!(c.deletions, 1);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn empty_reference_is_undefined() {
        assert!(matches!(wer(&w(""), &w("a")), Err(Error::Undefined(_))));
    }

    #[test]
    fn ties_prefer_substitution() {
        // "a b" vs "c": one substitution plus one deletion either way
        let c = align_counts(&w("a b"), &w("c"));
        assert_eq!((c.substitutions, c.insertions, c.deletions), (1, 0, 1));
        let c = align_counts(&w("a"), &w("b c"));
        assert_eq!((c.substitutions, c.insertions, c.deletions), (1, 1, 0));
    }
}
