use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::hmm::{segment_spans, viterbi_path, HmmModel, NodeKind};
use crate::mmi::PhoneScaleMap;
use crate::numeric::log_add;

use super::graph::{build_scaled_graph, SILENCE_SLOT_LOGP};
use super::lexicon::Lexicon;
use super::lm::{BigramLm, SENT_END, SENT_START};
use super::search::{DecodeOptions, Decoder};

pub const SILENCE_WORD: &str = "<sil>";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeNode {
    /// Frame boundary (0 ..= frame count).
    pub time: u32,
    /// Last word so far; `<s>` at the start, `</s>` for the final node.
    pub word: String,
    pub after_silence: bool,
}

/// One phone on an arc with its frame span `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneMark {
    pub unit: String,
    pub start: u32,
    pub end: u32,
    /// Emission log-density summed along the within-phone alignment.
    pub acoustic: f64,
    /// Log transition probabilities inside the phone, entry and exit included.
    pub transitions: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeArc {
    pub from: u32,
    pub to: u32,
    /// A word, `<sil>`, or the zero-length `</s>` arc into the final node.
    pub word: String,
    pub phones: Vec<PhoneMark>,
    /// Unscaled bigram log-probability.
    pub lm: f64,
    /// Silence-slot log prior.
    pub prior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePath {
    pub words: Vec<String>,
    pub arcs: Vec<u32>,
    pub score: f64,
}

/// Time-marked word/phone graph built from aligned hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub utt_id: String,
    pub frames: u32,
    pub nodes: Vec<LatticeNode>,
    pub arcs: Vec<LatticeArc>,
    pub start: u32,
    pub end: u32,
    /// The hypotheses the lattice was built from, best first.
    pub paths: Vec<LatticePath>,
}

/// A phone's state alignment under some model.
#[derive(Clone, Debug, PartialEq)]
pub struct PhoneAlignment {
    pub start: usize,
    pub states: Vec<u32>,
    pub acoustic: f64,
    pub transitions: f64,
}

/// Arc weight under a model plus the within-phone alignments behind it.
#[derive(Clone, Debug)]
pub struct ArcScore {
    pub weight: f64,
    pub phones: Vec<PhoneAlignment>,
}

struct Builder {
    lat: Lattice,
    node_ids: HashMap<LatticeNode, u32>,
    arc_ids: HashMap<String, u32>,
}

impl Builder {
    fn new(utt_id: &str, frames: u32) -> Self {
        let mut b = Builder {
            lat: Lattice {
                utt_id: utt_id.to_string(),
                frames,
                nodes: Vec::new(),
                arcs: Vec::new(),
                start: 0,
                end: 0,
                paths: Vec::new(),
            },
            node_ids: HashMap::new(),
            arc_ids: HashMap::new(),
        };
        b.lat.start = b.node(LatticeNode {
            time: 0,
            word: SENT_START.into(),
            after_silence: false,
        });
        b.lat.end = b.node(LatticeNode {
            time: frames,
            word: SENT_END.into(),
            after_silence: false,
        });
        b
    }

    fn node(&mut self, n: LatticeNode) -> u32 {
        if let Some(&id) = self.node_ids.get(&n) {
            return id;
        }
        let id = self.lat.nodes.len() as u32;
        self.lat.nodes.push(n.clone());
        self.node_ids.insert(n, id);
        id
    }

    fn arc(&mut self, arc: LatticeArc) -> u32 {
        let mut key = format!("{}|{}|{}", arc.from, arc.to, arc.word);
        for p in &arc.phones {
            key.push_str(&format!("|{}:{}:{}", p.unit, p.start, p.end));
        }
        if let Some(&id) = self.arc_ids.get(&key) {
            return id;
        }
        let id = self.lat.arcs.len() as u32;
        self.lat.arcs.push(arc);
        self.arc_ids.insert(key, id);
        id
    }

    fn from_lattice(lat: &Lattice) -> Self {
        let mut b = Builder::new(&lat.utt_id, lat.frames);
        for p in &lat.paths {
            b.add_path_from(lat, p);
        }
        b
    }

    fn add_path_from(&mut self, src: &Lattice, p: &LatticePath) {
        let mut arcs = Vec::with_capacity(p.arcs.len());
        for &a in &p.arcs {
            let arc = &src.arcs[a as usize];
            let from = self.node(src.nodes[arc.from as usize].clone());
            let to = self.node(src.nodes[arc.to as usize].clone());
            arcs.push(self.arc(LatticeArc {
                from,
                to,
                ..arc.clone()
            }));
        }
        if !self.lat.paths.iter().any(|q| q.words == p.words) {
            self.lat.paths.push(LatticePath {
                arcs,
                ..p.clone()
            });
        }
    }
}

fn unit_transitions(model: &HmmModel, unit: usize, states: &[u16]) -> f64 {
    let u = model.unit(unit);
    let mut lp = u.entry().ln();
    for w in states.windows(2) {
        lp += if w[0] == w[1] {
            u.self_loop(w[0] as usize).ln()
        } else {
            u.advance(w[0] as usize).ln()
        };
    }
    lp + u.advance(u.n_states() - 1).ln()
}

impl Lattice {
    /// Lattice of the given word sequences, each aligned by (scaled) Viterbi
    /// over its transcription graph. Sequences are kept in the given order.
    pub fn from_hypotheses(
        utt: &Utterance,
        model: &HmmModel,
        lexicon: &Lexicon,
        lm: &BigramLm,
        opts: &DecodeOptions,
        hyps: &[Vec<String>],
    ) -> Result<Lattice> {
        let frames = utt.len() as u32;
        let mut b = Builder::new(&utt.id, frames);
        for words in hyps {
            if b.lat.paths.iter().any(|p| &p.words == words) {
                continue;
            }
            let graph = build_scaled_graph(words, lexicon, model, &opts.scales, opts.kappa)?;
            let node_scale: Vec<f64> = (0..graph.n_emitting())
                .map(|e| match graph.node(graph.emitting_node(e)) {
                    NodeKind::Emitting { unit, .. } => opts.scales.scale(model.unit(unit as usize).label()),
                    NodeKind::Junction => 1.0,
                })
                .collect();
            let scaled = (!opts.scales.is_identity()).then_some(node_scale.as_slice());
            let (best, path) = viterbi_path(model, &graph, utt, scaled)?;
            let nodes: Vec<_> = path.iter().map(|&e| graph.emitting_node(e)).collect();
            let spans = segment_spans(&graph, &nodes);

            // group unit spans into word / silence arcs
            let mut groups: Vec<(Option<u32>, Vec<(u32, usize, usize)>)> = Vec::new();
            for &(seg, s, e) in &spans {
                let word = graph.segments()[seg as usize].word;
                match groups.last_mut() {
                    Some((w, g)) if word.is_some() && *w == word => g.push((seg, s, e)),
                    _ => groups.push((word, vec![(seg, s, e)])),
                }
            }
            let mut from = b.lat.start;
            let mut last_word = SENT_START.to_string();
            let mut arcs = Vec::new();
            let mut score = 0.0;
            for (word, spans) in groups {
                let mut phones = Vec::with_capacity(spans.len());
                for (seg, s, e) in spans {
                    let unit = graph.segments()[seg as usize].unit as usize;
                    let states: Vec<u16> = nodes[s..e]
                        .iter()
                        .map(|&id| match graph.node(id) {
                            NodeKind::Emitting { state, .. } => state,
                            NodeKind::Junction => unreachable!(),
                        })
                        .collect();
                    let acoustic: f64 = (s..e)
                        .map(|t| {
                            model
                                .output(graph.emitting_output(path[t]))
                                .log_density_unchecked(utt.frame(t))
                        })
                        .sum();
                    phones.push(PhoneMark {
                        unit: model.unit(unit).label().to_string(),
                        start: s as u32,
                        end: e as u32,
                        acoustic,
                        transitions: unit_transitions(model, unit, &states),
                    });
                }
                let end_time = phones.last().unwrap().end;
                let (label, lmp, prior, after_silence) = match word {
                    Some(pos) => {
                        let w = &words[pos as usize];
                        let lp = lm.log_prob(&last_word, w)?;
                        last_word = w.clone();
                        (w.clone(), lp, SILENCE_SLOT_LOGP, false)
                    }
                    None => (SILENCE_WORD.to_string(), 0.0, 0.0, true),
                };
                let to = b.node(LatticeNode {
                    time: end_time,
                    word: last_word.clone(),
                    after_silence,
                });
                let arc = LatticeArc {
                    from,
                    to,
                    word: label,
                    phones,
                    lm: lmp,
                    prior,
                };
                score += arc_weight(&arc, opts.kappa, &opts.scales);
                arcs.push(b.arc(arc));
                from = to;
            }
            let arc = LatticeArc {
                from,
                to: b.lat.end,
                word: SENT_END.into(),
                phones: Vec::new(),
                lm: lm.log_prob(&last_word, SENT_END)?,
                prior: if words.is_empty() { 0.0 } else { SILENCE_SLOT_LOGP },
            };
            score += arc_weight(&arc, opts.kappa, &opts.scales);
            arcs.push(b.arc(arc));
            debug_assert!((best + opts.kappa * lm.sentence_log_prob(words)? - score).abs() < 1e-6 * (1.0 + score.abs()));
            b.lat.paths.push(LatticePath {
                words: words.clone(),
                arcs,
                score,
            });
        }
        Ok(b.lat)
    }

    /// Single-path lattice of the reference transcription.
    pub fn numerator(
        utt: &Utterance,
        model: &HmmModel,
        lexicon: &Lexicon,
        lm: &BigramLm,
        opts: &DecodeOptions,
    ) -> Result<Lattice> {
        Self::from_hypotheses(utt, model, lexicon, lm, opts, std::slice::from_ref(&utt.transcript))
    }

    /// Union of two lattices over the same utterance.
    pub fn merge(&self, other: &Lattice) -> Result<Lattice> {
        if self.frames != other.frames {
            return Err(Error::Validation(format!(
                "lattices span {} and {} frames",
                self.frames, other.frames
            )));
        }
        let mut b = Builder::from_lattice(self);
        for p in &other.paths {
            b.add_path_from(other, p);
        }
        Ok(b.lat)
    }

    /// Node ids in an order where every arc goes forward.
    pub fn topological_order(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = (0..self.nodes.len() as u32).collect();
        ids.sort_by_key(|&i| (self.nodes[i as usize].time, i == self.end, i));
        ids
    }

    /// Arc weights recomputed under `model`: phone boundaries stay fixed, the
    /// state alignment inside each phone is re-derived by Viterbi.
    pub fn score_arcs(
        &self,
        model: &HmmModel,
        utt: &Utterance,
        kappa: f64,
        scales: &PhoneScaleMap,
    ) -> Result<Vec<ArcScore>> {
        if utt.len() as u32 != self.frames {
            return Err(Error::Validation(format!(
                "lattice has {} frames, utterance {}",
                self.frames,
                utt.len()
            )));
        }
        let mut cache: HashMap<(String, u32, u32), PhoneAlignment> = HashMap::new();
        let mut out = Vec::with_capacity(self.arcs.len());
        for arc in &self.arcs {
            let mut weight = kappa * (arc.lm + arc.prior);
            let mut phones = Vec::with_capacity(arc.phones.len());
            for p in &arc.phones {
                let key = (p.unit.clone(), p.start, p.end);
                let s = scales.scale(&p.unit);
                let al = match cache.get(&key) {
                    Some(a) => a.clone(),
                    None => {
                        let a = align_phone(model, utt, &p.unit, p.start as usize, p.end as usize)?;
                        cache.insert(key, a.clone());
                        a
                    }
                };
                weight += s * (al.acoustic + al.transitions);
                phones.push(al);
            }
            out.push(ArcScore { weight, phones });
        }
        Ok(out)
    }

    /// Log total weight and per-arc posteriors.
    pub fn arc_posteriors(&self, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
        let order = self.topological_order();
        let n = self.nodes.len();
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, a) in self.arcs.iter().enumerate() {
            incoming[a.to as usize].push(i);
            outgoing[a.from as usize].push(i);
        }
        let mut alpha = vec![f64::NEG_INFINITY; n];
        alpha[self.start as usize] = 0.0;
        for &v in &order {
            for &a in &incoming[v as usize] {
                let from = self.arcs[a].from as usize;
                alpha[v as usize] = log_add(alpha[v as usize], alpha[from] + weights[a]);
            }
        }
        let z = alpha[self.end as usize];
        if !z.is_finite() {
            return Err(Error::DisconnectedLattice(self.utt_id.clone()));
        }
        let mut beta = vec![f64::NEG_INFINITY; n];
        beta[self.end as usize] = 0.0;
        for &v in order.iter().rev() {
            for &a in &outgoing[v as usize] {
                let to = self.arcs[a].to as usize;
                beta[v as usize] = log_add(beta[v as usize], weights[a] + beta[to]);
            }
        }
        let post = self
            .arcs
            .iter()
            .enumerate()
            .map(|(i, a)| (alpha[a.from as usize] + weights[i] + beta[a.to as usize] - z).exp())
            .collect();
        Ok((z, post))
    }

    /// Highest-weight complete path: its score, arcs and words.
    pub fn best_path(&self, weights: &[f64]) -> Result<(f64, Vec<u32>, Vec<String>)> {
        let n = self.nodes.len();
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, a) in self.arcs.iter().enumerate() {
            incoming[a.to as usize].push(i);
        }
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut back = vec![usize::MAX; n];
        best[self.start as usize] = 0.0;
        for &v in &self.topological_order() {
            for &a in &incoming[v as usize] {
                let s = best[self.arcs[a].from as usize] + weights[a];
                if s > best[v as usize] {
                    best[v as usize] = s;
                    back[v as usize] = a;
                }
            }
        }
        let score = best[self.end as usize];
        if !score.is_finite() {
            return Err(Error::DisconnectedLattice(self.utt_id.clone()));
        }
        let mut arcs = Vec::new();
        let mut v = self.end as usize;
        while v != self.start as usize {
            let a = back[v];
            arcs.push(a as u32);
            v = self.arcs[a].from as usize;
        }
        arcs.reverse();
        let words = arcs
            .iter()
            .map(|&a| &self.arcs[a as usize].word)
            .filter(|w| *w != SILENCE_WORD && *w != SENT_END)
            .cloned()
            .collect();
        Ok((score, arcs, words))
    }
}

/// Weight of an arc from its stored scores.
pub fn arc_weight(arc: &LatticeArc, kappa: f64, scales: &PhoneScaleMap) -> f64 {
    arc.phones
        .iter()
        .map(|p| scales.scale(&p.unit) * (p.acoustic + p.transitions))
        .sum::<f64>()
        + kappa * (arc.lm + arc.prior)
}

/// Best state path through one unit over frames `[start, end)`. A phone
/// scale multiplies the whole path score, so it does not change the path.
pub fn align_phone(
    model: &HmmModel,
    utt: &Utterance,
    label: &str,
    start: usize,
    end: usize,
) -> Result<PhoneAlignment> {
    let u = model.unit_index(label)?;
    let unit = model.unit(u);
    let n = unit.n_states();
    let len = end - start;
    if len < n {
        return Err(Error::Validation(format!(
            "phone {label} spans {len} frames but has {n} states"
        )));
    }
    let emit = |t: usize, s: usize| {
        model
            .output(model.tied(u, s))
            .log_density_unchecked(utt.frame(start + t))
    };
    let ninf = f64::NEG_INFINITY;
    let mut delta = vec![ninf; n];
    let mut back = vec![0u8; len * n];
    delta[0] = unit.entry().ln() + emit(0, 0);
    for t in 1..len {
        let mut next = vec![ninf; n];
        for s in 0..n {
            let stay = delta[s] + unit.self_loop(s).ln();
            let adv = if s > 0 {
                delta[s - 1] + unit.advance(s - 1).ln()
            } else {
                ninf
            };
            let (v, b) = if adv > stay { (adv, 1) } else { (stay, 0) };
            if v > ninf {
                next[s] = v + emit(t, s);
                back[t * n + s] = b;
            }
        }
        delta = next;
    }
    if delta[n - 1] == ninf {
        return Err(Error::Validation(format!("phone {label} cannot be aligned to its span")));
    }
    let mut states_local = vec![0usize; len];
    let mut s = n - 1;
    for t in (0..len).rev() {
        states_local[t] = s;
        if t > 0 && back[t * n + s] == 1 {
            s -= 1;
        }
    }
    let acoustic = (0..len).map(|t| emit(t, states_local[t])).sum();
    let st16: Vec<u16> = states_local.iter().map(|&s| s as u16).collect();
    Ok(PhoneAlignment {
        start,
        states: states_local.iter().map(|&s| model.tied(u, s)).collect(),
        acoustic,
        transitions: unit_transitions(model, u, &st16),
    })
}

/// Merged N-best lattice for one utterance.
pub fn nbest_lattice(
    decoder: &Decoder,
    lexicon: &Lexicon,
    utt: &Utterance,
    opts: &DecodeOptions,
) -> Result<Lattice> {
    let hyps = decoder.nbest(utt, opts)?;
    let words: Vec<Vec<String>> = hyps.into_iter().map(|h| h.words).collect();
    Lattice::from_hypotheses(utt, decoder.model(), lexicon, decoder.lm(), opts, &words)
}
