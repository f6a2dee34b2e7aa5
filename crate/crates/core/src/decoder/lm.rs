use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SENT_START: &str = "<s>";
pub const SENT_END: &str = "</s>";

/// Bigram table over histories `<s>, w_1..w_V` and targets `w_1..w_V, </s>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "LmRepr", try_from = "LmRepr")]
pub struct BigramLm {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    /// `(V+1) × (V+1)` row-major log-probabilities.
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LmRepr {
    vocab: Vec<String>,
    /// Rows: `<s>` then each word; columns: each word then `</s>`.
    /// `null` marks a zero probability.
    log_probs: Vec<Vec<Option<f64>>>,
}

impl From<BigramLm> for LmRepr {
    fn from(lm: BigramLm) -> Self {
        let k = lm.vocab.len() + 1;
        LmRepr {
            log_probs: lm
                .table
                .chunks(k)
                .map(|r| r.iter().map(|&l| (l > f64::NEG_INFINITY).then_some(l)).collect())
                .collect(),
            vocab: lm.vocab,
        }
    }
}

impl TryFrom<LmRepr> for BigramLm {
    type Error = Error;

    fn try_from(r: LmRepr) -> Result<Self> {
        let k = r.vocab.len() + 1;
        if r.log_probs.len() != k || r.log_probs.iter().any(|row| row.len() != k) {
            return Err(Error::Validation("bigram table must be (V+1)×(V+1)".into()));
        }
        let probs: Vec<Vec<f64>> = r
            .log_probs
            .iter()
            .map(|row| row.iter().map(|l| l.map_or(0.0, f64::exp)).collect())
            .collect();
        BigramLm::from_probs(r.vocab, &probs)
    }
}

impl BigramLm {
    /// Build from a probability table with rows `<s>, w_1..` and columns
    /// `w_1.., </s>`; every row must sum to 1 within 1e-9.
    pub fn from_probs(vocab: Vec<String>, probs: &[Vec<f64>]) -> Result<Self> {
        let k = vocab.len() + 1;
        if vocab.is_empty() {
            return Err(Error::Validation("empty vocabulary".into()));
        }
        if probs.len() != k {
            return Err(Error::Validation("bigram table must be (V+1)×(V+1)".into()));
        }
        let mut index = HashMap::new();
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary word {w}")));
            }
        }
        let mut table = Vec::with_capacity(k * k);
        for (h, row) in probs.iter().enumerate() {
            if row.len() != k || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!("bad bigram row {h}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("bigram row {h} sums to {s}")));
            }
            table.extend(row.iter().map(|p| p.ln()));
        }
        Ok(BigramLm {
            vocab,
            index,
            table,
        })
    }

    /// Every target equally likely after every history.
    pub fn uniform(vocab: Vec<String>) -> Result<Self> {
        let k = vocab.len() + 1;
        let row = vec![1.0 / k as f64; k];
        Self::from_probs(vocab, &vec![row; k])
    }

    /// Bigrams seen at least `cutoff` times keep their relative frequency;
    /// the remaining histories and a `floor` share of every row go to a
    /// uniform distribution over all targets.
    pub fn estimate(
        vocab: Vec<String>,
        transcripts: &[Vec<String>],
        cutoff: usize,
        floor: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&floor) {
            return Err(Error::Domain(format!("floor mass {floor} outside [0, 1]")));
        }
        let k = vocab.len() + 1;
        let pos: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let mut counts = vec![0usize; k * k];
        for words in transcripts {
            let mut h = 0;
            for w in words {
                let i = *pos
                    .get(w.as_str())
                    .ok_or_else(|| Error::OutOfVocabulary(w.clone()))?;
                counts[h * k + i] += 1;
                h = i + 1;
            }
            counts[h * k + k - 1] += 1;
        }
        let mut probs = Vec::with_capacity(k);
        for h in 0..k {
            let row = &counts[h * k..(h + 1) * k];
            let kept: Vec<f64> = row
                .iter()
                .map(|&c| if c >= cutoff.max(1) { c as f64 } else { 0.0 })
                .collect();
            let total: f64 = kept.iter().sum();
            let uniform = 1.0 / k as f64;
            probs.push(if total == 0.0 {
                vec![uniform; k]
            } else {
                kept.iter()
                    .map(|c| (1.0 - floor) * c / total + floor * uniform)
                    .collect()
            });
        }
        Self::from_probs(vocab, &probs)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word_index(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// `log p(target | history)` by index: history 0 is `<s>`, history
    /// `i + 1` is word `i`; target `V` is `</s>`.
    #[inline]
    pub fn log_prob_idx(&self, history: usize, target: usize) -> f64 {
        self.table[history * (self.vocab.len() + 1) + target]
    }

    pub fn log_prob(&self, history: &str, target: &str) -> Result<f64> {
        let h = if history == SENT_START {
            0
        } else {
            self.word_index(history)
                .ok_or_else(|| Error::OutOfVocabulary(history.into()))?
                + 1
        };
        let t = if target == SENT_END {
            self.vocab.len()
        } else {
            self.word_index(target)
                .ok_or_else(|| Error::OutOfVocabulary(target.into()))?
        };
        Ok(self.log_prob_idx(h, t))
    }

    /// Log-probability of a whole sentence including `</s>`.
    pub fn sentence_log_prob(&self, words: &[String]) -> Result<f64> {
        let mut h = SENT_START;
        let mut total = 0.0;
        for w in words {
            total += self.log_prob(h, w)?;
            h = w;
        }
        Ok(total + self.log_prob(h, SENT_END)?)
    }

    /// Probability row of a history (for sampling).
    pub fn row_probs(&self, history: usize) -> Vec<f64> {
        let k = self.vocab.len() + 1;
        self.table[history * k..(history + 1) * k]
            .iter()
            .map(|l| l.exp())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn estimate_rows_normalize() {
        let ts = vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string()],
            vec!["b".to_string(), "b".to_string()],
        ];
        let lm = BigramLm::estimate(vocab(), &ts, 1, 0.1).unwrap();
        for h in 0..3 {
            let s: f64 = lm.row_probs(h).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        // <s> a: 2 of 3 starts
        let p = lm.log_prob("<s>", "a").unwrap().exp();
        assert!((p - (0.9 * 2.0 / 3.0 + 0.1 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn cutoff_drops_rare_bigrams() {
        let ts = vec![vec!["a".to_string()]; 8];
        let lm = BigramLm::estimate(vocab(), &ts, 8, 0.0).unwrap();
        assert!((lm.log_prob("<s>", "a").unwrap()).abs() < 1e-12);
        let lm = BigramLm::estimate(vocab(), &ts, 9, 0.0).unwrap();
        assert!((lm.log_prob("<s>", "a").unwrap().exp() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let lm = BigramLm::uniform(vocab()).unwrap();
        let s = serde_json::to_string(&lm).unwrap();
        let back: BigramLm = serde_json::from_str(&s).unwrap();
        for h in 0..3 {
            for t in 0..3 {
                assert!((back.log_prob_idx(h, t) - lm.log_prob_idx(h, t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_probabilities_survive_json() {
        let probs = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.25, 0.25, 0.5]];
        let lm = BigramLm::from_probs(vocab(), &probs).unwrap();
        let s = serde_json::to_string(&lm).unwrap();
        assert!(s.contains("null"));
        let back: BigramLm = serde_json::from_str(&s).unwrap();
        assert_eq!(back.log_prob("<s>", "</s>").unwrap(), f64::NEG_INFINITY);
        assert!((back.log_prob("a", "</s>").unwrap()).abs() < 1e-15);
    }
}
