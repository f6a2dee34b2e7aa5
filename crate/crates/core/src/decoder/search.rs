use std::collections::HashMap;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::hmm::HmmModel;
use crate::mmi::PhoneScaleMap;

use super::graph::SILENCE_SLOT_LOGP;
use super::lexicon::Lexicon;
use super::lm::BigramLm;

#[derive(Clone, Debug)]
pub struct DecodeOptions {
    /// Language-model scale κ.
    pub kappa: f64,
    /// Number of distinct word sequences to keep.
    pub nbest: usize,
    pub scales: PhoneScaleMap,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            kappa: 1.0,
            nbest: 1,
            scales: PhoneScaleMap::default(),
        }
    }
}

impl DecodeOptions {
    pub fn with_kappa(kappa: f64) -> Self {
        DecodeOptions {
            kappa,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain(format!("language-model scale {} must be ≥ 0", self.kappa)));
        }
        if self.nbest == 0 {
            return Err(Error::Domain("N-best depth must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// A decoded word sequence with its total score
/// (scaled acoustic + κ·LM + silence priors) and its unscaled LM log-prob.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub words: Vec<String>,
    pub score: f64,
    pub lm: f64,
}

#[derive(Clone, Debug)]
struct ChainState {
    output: u32,
    unit: u32,
    stay: f64,
    /// Leaving the state; for a unit's last state, into the next unit too.
    next: f64,
    /// Entry log-probability of the following unit, charged to its scale.
    into: Option<(u32, f64)>,
}

/// Chain transition weights under a set of phone scales.
struct Weights {
    stay: Vec<f64>,
    next: Vec<f64>,
    entry: Vec<f64>,
}

impl Weights {
    fn new<'c>(chains: impl Iterator<Item = &'c Chain>, unit_scale: &[f64]) -> Self {
        let mut w = Weights { stay: Vec::new(), next: Vec::new(), entry: Vec::new() };
        for c in chains {
            w.entry.push(unit_scale[c.states[0].unit as usize] * c.entry);
            for st in &c.states {
                let s = unit_scale[st.unit as usize];
                w.stay.push(s * st.stay);
                let into = st.into.map_or(0.0, |(u, lp)| unit_scale[u as usize] * lp);
                w.next.push(s * st.next + into);
            }
        }
        w
    }
}

#[derive(Clone, Debug)]
struct Chain {
    word: usize,
    entry: f64,
    states: Vec<ChainState>,
    offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Tok {
    score: f64,
    hist: u32,
}

/// Insert into a score-sorted list of at most `n` tokens with distinct
/// histories, keeping the better score per history.
fn push_top(list: &mut Vec<Tok>, cand: Tok, n: usize) {
    if cand.score == f64::NEG_INFINITY {
        return;
    }
    if let Some(i) = list.iter().position(|t| t.hist == cand.hist) {
        if list[i].score >= cand.score {
            return;
        }
        list.remove(i);
    }
    let pos = list
        .iter()
        .position(|t| cand.score > t.score || (cand.score == t.score && cand.hist < t.hist))
        .unwrap_or(list.len());
    if pos < n {
        list.insert(pos, cand);
        list.truncate(n);
    }
}

/// Interned word histories: id → (parent id, word index); id 0 is empty.
#[derive(Default)]
struct Histories {
    nodes: Vec<(u32, u32)>,
    map: HashMap<(u32, u32), u32>,
}

impl Histories {
    fn new() -> Self {
        Histories {
            nodes: vec![(u32::MAX, u32::MAX)],
            map: HashMap::new(),
        }
    }

    fn extend(&mut self, parent: u32, word: u32) -> u32 {
        let next = self.nodes.len() as u32;
        *self.map.entry((parent, word)).or_insert_with(|| {
            self.nodes.push((parent, word));
            next
        })
    }

    fn words(&self, mut id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        while id != 0 {
            let (p, w) = self.nodes[id as usize];
            out.push(w);
            id = p;
        }
        out.reverse();
        out
    }
}

/// Exact time-synchronous bigram decoder over the lexicon's word chains,
/// with an optional silence before, between and after words.
pub struct Decoder<'a> {
    model: &'a HmmModel,
    lm: &'a BigramLm,
    chains: Vec<Chain>,
    by_word: Vec<Vec<usize>>,
    silence: Chain,
    n_word_states: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a HmmModel, lexicon: &'a Lexicon, lm: &'a BigramLm) -> Result<Self> {
        let mut chains = Vec::new();
        let mut by_word = vec![Vec::new(); lm.vocab().len()];
        let mut offset = 0;
        for (wi, w) in lm.vocab().iter().enumerate() {
            for pron in lexicon.prons(w)? {
                let units = lexicon.units(model, pron)?;
                let mut c = make_chain(model, &units, wi)?;
                c.offset = offset;
                offset += c.states.len();
                by_word[wi].push(chains.len());
                chains.push(c);
            }
        }
        let sil = model.unit_index(lexicon.silence())?;
        let silence = make_chain(model, &[sil], usize::MAX)?;
        Ok(Decoder {
            model,
            lm,
            chains,
            by_word,
            silence,
            n_word_states: offset,
        })
    }

    /// Top distinct word sequences, best first.
    pub fn nbest(&self, utt: &Utterance, opts: &DecodeOptions) -> Result<Vec<Hypothesis>> {
        opts.validate()?;
        if utt.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: utt.dim(),
            });
        }
        let n_frames = utt.len();
        if n_frames == 0 {
            return Err(Error::DecodeFailure(utt.id.clone()));
        }
        let n = opts.nbest;
        let kappa = opts.kappa;
        let v = self.lm.vocab().len();
        let s_len = self.silence.states.len();
        let mut hist = Histories::new();
        let mut words: Vec<Vec<Tok>> = vec![Vec::new(); self.n_word_states];
        let mut sil: Vec<Vec<Tok>> = vec![Vec::new(); (v + 1) * s_len];
        let mut emit = vec![0.0; self.model.n_outputs()];
        let unit_scale: Vec<f64> = (0..self.model.units().len())
            .map(|u| opts.scales.scale(self.model.unit(u).label()))
            .collect();
        let ww = Weights::new(self.chains.iter(), &unit_scale);
        let sw = Weights::new(std::iter::once(&self.silence), &unit_scale);
        // the silence-slot prior is weighted with the language model
        let slot = kappa * SILENCE_SLOT_LOGP;
        // per history v (0 = <s>): tokens waiting at the word-entry junction
        let mut boundary: Vec<Vec<Tok>> = vec![Vec::new(); v + 1];
        let mut sil_entry: Vec<Vec<Tok>> = vec![Vec::new(); v + 1];

        for t in 0..n_frames {
            let x = utt.frame(t);
            for (j, e) in emit.iter_mut().enumerate() {
                *e = self.model.output(j as u32).log_density_unchecked(x);
            }
            for b in boundary.iter_mut().chain(sil_entry.iter_mut()) {
                b.clear();
            }
            if t == 0 {
                boundary[0].push(Tok { score: slot, hist: 0 });
                sil_entry[0].push(Tok { score: slot, hist: 0 });
            } else {
                self.exits(&words, &sil, &ww, &sw, &mut hist, n, |h, tok, from_silence| {
                    if from_silence {
                        push_top(&mut boundary[h], tok, n);
                    } else {
                        let skip = Tok {
                            score: tok.score + slot,
                            hist: tok.hist,
                        };
                        push_top(&mut boundary[h], skip, n);
                        push_top(&mut sil_entry[h], skip, n);
                    }
                });
            }

            // word entries
            let mut entries: Vec<Vec<Tok>> = vec![Vec::new(); v];
            for (wi, list) in entries.iter_mut().enumerate() {
                for (h, toks) in boundary.iter().enumerate() {
                    let lp = kappa * self.lm.log_prob_idx(h, wi);
                    for tok in toks {
                        push_top(
                            list,
                            Tok {
                                score: tok.score + lp,
                                hist: tok.hist,
                            },
                            n,
                        );
                    }
                }
            }

            let mut next_words: Vec<Vec<Tok>> = vec![Vec::new(); self.n_word_states];
            for (ci, c) in self.chains.iter().enumerate() {
                for (i, st) in c.states.iter().enumerate() {
                    let k = c.offset + i;
                    let list = &mut next_words[k];
                    for tok in &words[k] {
                        push_top(list, Tok { score: tok.score + ww.stay[k], hist: tok.hist }, n);
                    }
                    if i > 0 {
                        for tok in &words[k - 1] {
                            push_top(list, Tok { score: tok.score + ww.next[k - 1], hist: tok.hist }, n);
                        }
                    } else {
                        for tok in &entries[c.word] {
                            push_top(list, Tok { score: tok.score + ww.entry[ci], hist: tok.hist }, n);
                        }
                    }
                    let b = unit_scale[st.unit as usize] * emit[st.output as usize];
                    for tok in list.iter_mut() {
                        tok.score += b;
                    }
                }
            }
            let mut next_sil: Vec<Vec<Tok>> = vec![Vec::new(); (v + 1) * s_len];
            for h in 0..=v {
                for (i, st) in self.silence.states.iter().enumerate() {
                    let k = h * s_len + i;
                    let list = &mut next_sil[k];
                    for tok in &sil[k] {
                        push_top(list, Tok { score: tok.score + sw.stay[i], hist: tok.hist }, n);
                    }
                    if i > 0 {
                        for tok in &sil[k - 1] {
                            push_top(list, Tok { score: tok.score + sw.next[i - 1], hist: tok.hist }, n);
                        }
                    } else {
                        for tok in &sil_entry[h] {
                            push_top(list, Tok { score: tok.score + sw.entry[0], hist: tok.hist }, n);
                        }
                    }
                    let b = unit_scale[st.unit as usize] * emit[st.output as usize];
                    for tok in list.iter_mut() {
                        tok.score += b;
                    }
                }
            }
            words = next_words;
            sil = next_sil;
        }

        let mut finals: Vec<Tok> = Vec::new();
        self.exits(&words, &sil, &ww, &sw, &mut hist, n, |h, tok, from_silence| {
            if h == 0 {
                return;
            }
            let lp = kappa * self.lm.log_prob_idx(h, v);
            let extra = if from_silence { 0.0 } else { slot };
            push_top(
                &mut finals,
                Tok {
                    score: tok.score + lp + extra,
                    hist: tok.hist,
                },
                n,
            );
        });
        if finals.is_empty() {
            return Err(Error::DecodeFailure(utt.id.clone()));
        }
        finals
            .iter()
            .map(|tok| {
                let words: Vec<String> = hist
                    .words(tok.hist)
                    .into_iter()
                    .map(|w| self.lm.vocab()[w as usize].clone())
                    .collect();
                let lm = self.lm.sentence_log_prob(&words)?;
                Ok(Hypothesis {
                    words,
                    score: tok.score,
                    lm,
                })
            })
            .collect()
    }

    /// Tokens leaving word ends (history extended by the word) and silence
    /// ends, reported per history word `h` (0 = `<s>`).
    fn exits(
        &self,
        words: &[Vec<Tok>],
        sil: &[Vec<Tok>],
        ww: &Weights,
        sw: &Weights,
        hist: &mut Histories,
        n: usize,
        mut sink: impl FnMut(usize, Tok, bool),
    ) {
        let v = self.lm.vocab().len();
        for (wi, chains) in self.by_word.iter().enumerate() {
            let mut out: Vec<Tok> = Vec::new();
            for &ci in chains {
                let c = &self.chains[ci];
                let last = c.states.len() - 1;
                for tok in &words[c.offset + last] {
                    push_top(
                        &mut out,
                        Tok {
                            score: tok.score + ww.next[c.offset + last],
                            hist: tok.hist,
                        },
                        n,
                    );
                }
            }
            for tok in out {
                let h = hist.extend(tok.hist, wi as u32);
                sink(wi + 1, Tok { score: tok.score, hist: h }, false);
            }
        }
        let s_len = self.silence.states.len();
        let last = sw.next[s_len - 1];
        for h in 0..=v {
            for tok in &sil[h * s_len + s_len - 1] {
                sink(
                    h,
                    Tok {
                        score: tok.score + last,
                        hist: tok.hist,
                    },
                    true,
                );
            }
        }
    }

    /// Best word sequence.
    pub fn recognize(&self, utt: &Utterance, kappa: f64) -> Result<Vec<String>> {
        let opts = DecodeOptions::with_kappa(kappa);
        Ok(self.nbest(utt, &opts)?.swap_remove(0).words)
    }

    pub fn model(&self) -> &HmmModel {
        self.model
    }

    pub fn lm(&self) -> &BigramLm {
        self.lm
    }
}

fn make_chain(
    model: &HmmModel,
    units: &[usize],
    word: usize,
) -> Result<Chain> {
    let mut states = Vec::new();
    for (k, &u) in units.iter().enumerate() {
        let unit = model.unit(u);
        if unit.has_tee() && word != usize::MAX {
            return Err(Error::Validation(format!(
                "unit {} has a tee arc; only silence may be skipped",
                unit.label()
            )));
        }
        for s in 0..unit.n_states() {
            let into = (s + 1 == unit.n_states() && k + 1 < units.len())
                .then(|| (units[k + 1] as u32, model.unit(units[k + 1]).entry().ln()));
            states.push(ChainState {
                output: model.tied(u, s),
                unit: u as u32,
                stay: unit.self_loop(s).ln(),
                next: unit.advance(s).ln(),
                into,
            });
        }
    }
    Ok(Chain {
        word,
        entry: model.unit(units[0]).entry().ln(),
        states,
        offset: 0,
    })
}

/// Decode with default options; convenience for the one-best case.
pub fn recognize(
    model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    kappa: f64,
    utt: &Utterance,
) -> Result<Vec<String>> {
    Decoder::new(model, lexicon, lm)?.recognize(utt, kappa)
}
