use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::HmmModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    Monophone,
    WordInternalTriphone,
}

impl std::str::FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monophone" => Ok(ContextMode::Monophone),
            "word-internal-triphone" | "triphone" => Ok(ContextMode::WordInternalTriphone),
            other => Err(Error::Config(format!("unknown context mode {other}"))),
        }
    }
}

/// Pronunciations per word plus the silence unit used between words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Vec<String>>>,
    mode: ContextMode,
    silence: String,
}

/// Center phone of a unit label: `b` for `a-b+c`, `a-b`, `b+c` or `b`.
pub fn center_phone(label: &str) -> &str {
    let s = label.split_once('-').map_or(label, |(_, r)| r);
    s.split_once('+').map_or(s, |(l, _)| l)
}

impl Lexicon {
    pub fn new(mode: ContextMode, silence: impl Into<String>) -> Self {
        Lexicon {
            entries: BTreeMap::new(),
            mode,
            silence: silence.into(),
        }
    }

    pub fn add(&mut self, word: impl Into<String>, pron: Vec<String>) -> Result<()> {
        let word = word.into();
        if pron.is_empty() {
            return Err(Error::Validation(format!("empty pronunciation for {word}")));
        }
        if word.starts_with('<') {
            return Err(Error::Validation(format!("reserved word symbol {word}")));
        }
        let prons = self.entries.entry(word).or_default();
        if !prons.contains(&pron) {
            prons.push(pron);
        }
        Ok(())
    }

    pub fn mode(&self) -> ContextMode {
        self.mode
    }

    pub fn silence(&self) -> &str {
        &self.silence
    }

    /// Words in sorted order.
    pub fn words(&self) -> Vec<&str> {
        self.entries.keys().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn prons(&self, word: &str) -> Result<&[Vec<String>]> {
        self.entries
            .get(word)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }

    /// Model unit labels for one pronunciation under the context mode.
    pub fn expand(&self, pron: &[String]) -> Vec<String> {
        match self.mode {
            ContextMode::Monophone => pron.to_vec(),
            ContextMode::WordInternalTriphone => {
                let k = pron.len();
                (0..k)
                    .map(|i| {
                        let mut s = String::new();
                        if i > 0 {
                            write!(s, "{}-", pron[i - 1]).unwrap();
                        }
                        s.push_str(&pron[i]);
                        if i + 1 < k {
                            write!(s, "+{}", pron[i + 1]).unwrap();
                        }
                        s
                    })
                    .collect()
            }
        }
    }

    /// Unit indices for one pronunciation.
    pub fn units(&self, model: &HmmModel, pron: &[String]) -> Result<Vec<usize>> {
        self.expand(pron)
            .iter()
            .map(|l| model.unit_index(l))
            .collect()
    }

    /// Check that every expanded unit, and silence, exists in `model`.
    pub fn validate(&self, model: &HmmModel) -> Result<()> {
        model.unit_index(&self.silence)?;
        for prons in self.entries.values() {
            for p in prons {
                self.units(model, p)?;
            }
        }
        Ok(())
    }

    /// Parse `word phone phone ...` lines; blank lines and `#` comments skipped.
    pub fn parse(text: &str, mode: ContextMode, silence: &str) -> Result<Self> {
        let mut lex = Lexicon::new(mode, silence);
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let word = it.next().unwrap();
            let pron: Vec<String> = it.map(str::to_string).collect();
            lex.add(word, pron)
                .map_err(|e| Error::format(format!("lexicon line {}", no + 1), e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (w, prons) in &self.entries {
            for p in prons {
                writeln!(s, "{w} {}", p.join(" ")).unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triphone_expansion() {
        let lex = Lexicon::new(ContextMode::WordInternalTriphone, "sil");
        let p: Vec<String> = ["k", "ae", "t"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lex.expand(&p), vec!["k+ae", "k-ae+t", "ae-t"]);
        assert_eq!(lex.expand(&p[..1]), vec!["k"]);
        assert_eq!(center_phone("k-ae+t"), "ae");
        assert_eq!(center_phone("k+ae"), "k");
        assert_eq!(center_phone("ae-t"), "t");
        assert_eq!(center_phone("sil"), "sil");
    }

    #[test]
    fn parse_round_trip() {
        let text = "b v1 c2\na c1 v0\na c1 v1\n";
        let lex = Lexicon::parse(text, ContextMode::Monophone, "sil").unwrap();
        assert_eq!(lex.words(), vec!["a", "b"]);
        assert_eq!(lex.prons("a").unwrap().len(), 2);
        assert!(matches!(lex.prons("zz"), Err(Error::OutOfVocabulary(_))));
        let again = Lexicon::parse(&lex.to_text(), ContextMode::Monophone, "sil").unwrap();
        assert_eq!(again, lex);
    }
}
