//! Simulation from HMMs, ground-truth corpora, dependence injection and
//! feature-space transforms.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Utterance};
use crate::decoder::{BigramLm, ContextMode, Lexicon};
use crate::dists::{
    laplace_from_normal, normal_quantile, sample_geometric, sample_output, DiagonalGaussian,
    DiscreteSampler, OutputDist, RandomSource,
};
use crate::error::{Error, Result};
use crate::hmm::{segment_spans, Alignment, CompositeGraph, HmmModel, HmmUnit, NodeKind};

pub const SILENCE: &str = "sil";

const VOWELS: [&str; 12] = ["aa", "ae", "ah", "ao", "eh", "ih", "iy", "uw", "ow", "ey", "ay", "er"];
const CONSONANTS: [&str; 20] = [
    "b", "d", "g", "k", "p", "t", "m", "n", "s", "z", "f", "v", "l", "r", "w", "y", "sh", "ch",
    "th", "hh",
];

pub fn is_vowel(phone: &str) -> bool {
    VOWELS.contains(&phone)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionKind {
    Gaussian,
    /// Laplace with the Gaussian's mean and variance.
    Laplace,
}

impl EmissionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmissionKind::Gaussian => "gaussian",
            EmissionKind::Laplace => "laplace",
        }
    }
}

impl std::str::FromStr for EmissionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EmissionKind::Gaussian),
            "laplace" => Ok(EmissionKind::Laplace),
            other => Err(Error::Config(format!("unknown emission kind {other}"))),
        }
    }
}

/// Recipe for a random ground-truth model, lexicon and language model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub vowels: usize,
    pub consonants: usize,
    pub vocab: usize,
    /// Consonant-vowel syllables per word, inclusive range.
    pub syllables: (usize, usize),
    /// Probability that a word gets a second pronunciation.
    pub alt_pron: f64,
    pub dim: usize,
    pub states_per_phone: usize,
    /// Radius of the sphere the state means are drawn on.
    pub separation: f64,
    /// Base per-dimension variance.
    pub variance: f64,
    /// Variances are `variance · exp(jitter · u)`, `u` uniform on [−1, 1].
    pub variance_jitter: f64,
    /// Self-loop probabilities are uniform on this range.
    pub self_loop: (f64, f64),
    pub speakers: usize,
    /// Scale of a constant per-speaker offset added to every frame.
    pub speaker_offset: f64,
    /// Dirichlet concentration of the random bigram rows.
    pub lm_concentration: f64,
    /// Probability of ending the sentence after each word.
    pub end_prob: f64,
    pub max_words: usize,
    pub context: ContextMode,
    pub emission: EmissionKind,
}

impl Default for GroundTruthSpec {
    fn default() -> Self {
        GroundTruthSpec {
            vowels: 6,
            consonants: 10,
            vocab: 40,
            syllables: (1, 2),
            alt_pron: 0.2,
            dim: 13,
            states_per_phone: 3,
            separation: 4.0,
            variance: 1.0,
            variance_jitter: 0.2,
            self_loop: (0.4, 0.7),
            speakers: 4,
            speaker_offset: 0.0,
            lm_concentration: 0.5,
            end_prob: 0.2,
            max_words: 8,
            context: ContextMode::Monophone,
            emission: EmissionKind::Gaussian,
        }
    }
}

impl GroundTruthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vowels == 0 || self.vowels > VOWELS.len() {
            return bad(format!("vowels must be in 1..={}", VOWELS.len()));
        }
        if self.consonants == 0 || self.consonants > CONSONANTS.len() {
            return bad(format!("consonants must be in 1..={}", CONSONANTS.len()));
        }
        if self.vocab == 0 || self.dim == 0 || self.states_per_phone == 0 || self.speakers == 0 {
            return bad("vocab, dim, states per phone and speakers must be positive".into());
        }
        if self.syllables.0 == 0 || self.syllables.0 > self.syllables.1 {
            return bad(format!("bad syllable range {:?}", self.syllables));
        }
        if !(self.separation > 0.0 && self.variance > 0.0 && self.variance_jitter >= 0.0) {
            return bad("separation and variance must be positive".into());
        }
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !(open(self.self_loop.0) && open(self.self_loop.1) && self.self_loop.0 <= self.self_loop.1) {
            return bad(format!("self-loop range {:?} must lie in (0, 1)", self.self_loop));
        }
        if !(0.0..1.0).contains(&self.alt_pron) || !open(self.end_prob) {
            return bad("alt_pron must be in [0,1) and end_prob in (0,1)".into());
        }
        if self.lm_concentration <= 0.0 || self.speaker_offset < 0.0 || self.max_words == 0 {
            return bad("lm concentration and max words must be positive, offset ≥ 0".into());
        }
        Ok(())
    }

    pub fn phones(&self) -> Vec<String> {
        VOWELS[..self.vowels]
            .iter()
            .chain(&CONSONANTS[..self.consonants])
            .map(|s| s.to_string())
            .collect()
    }
}

/// Constant per-speaker offset vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeakerOffsets {
    pub speakers: Vec<String>,
    pub offsets: Vec<Vec<f64>>,
}

impl SpeakerOffsets {
    pub fn draw(speakers: &[String], dim: usize, scale: f64, rng: &RandomSource) -> Self {
        let offsets = speakers
            .iter()
            .map(|s| {
                let mut r = rng.derive(s);
                (0..dim).map(|_| scale * normal_quantile(r.uniform())).collect()
            })
            .collect();
        SpeakerOffsets {
            speakers: speakers.to_vec(),
            offsets,
        }
    }

    pub fn get(&self, speaker: &str) -> Option<&[f64]> {
        self.speakers
            .iter()
            .position(|s| s == speaker)
            .map(|i| self.offsets[i].as_slice())
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub model: HmmModel,
    pub lexicon: Lexicon,
    pub lm: BigramLm,
    pub train: Corpus,
    pub test: Corpus,
}

fn dirichlet_row(k: usize, alpha: f64, rng: &mut RandomSource) -> Vec<f64> {
    use rand_distr::{Distribution, Gamma};
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut v: Vec<f64> = (0..k).map(|_| g.sample(rng).max(1e-12)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// A random model with means on a sphere of radius `separation`.
pub fn random_model(spec: &GroundTruthSpec, lexicon: &Lexicon, rng: &RandomSource) -> Result<HmmModel> {
    let phones: Vec<String> = std::iter::once(SILENCE.to_string()).chain(spec.phones()).collect();
    let n = spec.states_per_phone;
    let mut r = rng.derive("model");
    let mut outputs = Vec::with_capacity(phones.len() * n);
    for _ in 0..phones.len() * n {
        let dir: Vec<f64> = (0..spec.dim).map(|_| normal_quantile(r.uniform())).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mean = dir.iter().map(|x| spec.separation * x / norm).collect();
        let var = (0..spec.dim)
            .map(|_| spec.variance * (spec.variance_jitter * (2.0 * r.uniform() - 1.0)).exp())
            .collect();
        let g = DiagonalGaussian::new(mean, var)?;
        outputs.push(match spec.emission {
            EmissionKind::Gaussian => OutputDist::Diagonal(g),
            EmissionKind::Laplace => OutputDist::Laplace(laplace_from_normal(&g)),
        });
    }
    let mut loops_of = Vec::with_capacity(phones.len());
    for _ in &phones {
        let (lo, hi) = spec.self_loop;
        loops_of.push((0..n).map(|_| lo + (hi - lo) * r.uniform()).collect::<Vec<f64>>());
    }
    let tied_of = |p: usize| (0..n).map(|s| (p * n + s) as u32).collect::<Vec<u32>>();
    let mut units = Vec::new();
    let mut tying = Vec::new();
    for (p, label) in phones.iter().enumerate() {
        units.push(HmmUnit::linear(label.clone(), &loops_of[p], None)?);
        tying.push(tied_of(p));
    }
    if lexicon.mode() == ContextMode::WordInternalTriphone {
        let mut labels = BTreeSet::new();
        for w in lexicon.words() {
            for pron in lexicon.prons(w)? {
                labels.extend(lexicon.expand(pron));
            }
        }
        for label in labels {
            if phones.contains(&label) {
                continue;
            }
            let c = crate::decoder::center_phone(&label);
            let p = phones
                .iter()
                .position(|q| q == c)
                .ok_or_else(|| Error::UnknownUnit(label.clone()))?;
            units.push(HmmUnit::linear(label, &loops_of[p], None)?);
            tying.push(tied_of(p));
        }
    }
    HmmModel::new(spec.dim, units, tying, outputs)
}

/// Consonant-vowel words with distinct spellings.
pub fn random_lexicon(spec: &GroundTruthSpec, rng: &RandomSource) -> Result<Lexicon> {
    let vowels = &VOWELS[..spec.vowels];
    let cons = &CONSONANTS[..spec.consonants];
    let mut r = rng.derive("lexicon");
    let mut lex = Lexicon::new(spec.context, SILENCE);
    let mut seen = BTreeSet::new();
    let syllable = |r: &mut RandomSource| vec![cons[r.below(cons.len())].to_string(), vowels[r.below(vowels.len())].to_string()];
    let mut attempts = 0;
    while seen.len() < spec.vocab {
        attempts += 1;
        if attempts > 1000 * spec.vocab {
            return Err(Error::Config(format!(
                "cannot draw {} distinct words from the phone set",
                spec.vocab
            )));
        }
        let k = spec.syllables.0 + r.below(spec.syllables.1 - spec.syllables.0 + 1);
        let pron: Vec<String> = (0..k).flat_map(|_| syllable(&mut r)).collect();
        if seen.contains(&pron) {
            continue;
        }
        let word = format!("w{:03}", seen.len());
        seen.insert(pron.clone());
        lex.add(word.clone(), pron.clone())?;
        if r.uniform() < spec.alt_pron {
            // swap the last vowel
            let mut alt = pron.clone();
            let last = alt.len() - 1;
            alt[last] = vowels[r.below(vowels.len())].to_string();
            if alt != pron && !seen.contains(&alt) {
                seen.insert(alt.clone());
                lex.add(word, alt)?;
            }
        }
    }
    Ok(lex)
}

/// Bigram rows drawn from a symmetric Dirichlet, with a fixed end probability
/// after each word and none directly after `<s>`.
pub fn random_lm(spec: &GroundTruthSpec, lexicon: &Lexicon, rng: &RandomSource) -> Result<BigramLm> {
    let vocab: Vec<String> = lexicon.words().iter().map(|w| w.to_string()).collect();
    let v = vocab.len();
    let mut r = rng.derive("lm");
    let mut rows = Vec::with_capacity(v + 1);
    for h in 0..=v {
        let words = dirichlet_row(v, spec.lm_concentration, &mut r);
        let end = if h == 0 { 0.0 } else { spec.end_prob };
        let mut row: Vec<f64> = words.iter().map(|p| p * (1.0 - end)).collect();
        row.push(end);
        rows.push(row);
    }
    BigramLm::from_probs(vocab, &rows)
}

/// Word sequence drawn from the language model, redrawn while longer than `max_words`.
pub fn sample_sentence(lm: &BigramLm, max_words: usize, rng: &mut RandomSource) -> Result<Vec<String>> {
    let v = lm.vocab().len();
    for _ in 0..10_000 {
        let mut words = Vec::new();
        let mut h = 0;
        loop {
            let row = lm.row_probs(h);
            let weights: Vec<f64> = row.iter().map(|&p| p.max(1e-300)).collect();
            let j = DiscreteSampler::new(&weights)?.index(rng.uniform());
            if j == v {
                break;
            }
            words.push(lm.vocab()[j].clone());
            h = j + 1;
            if words.len() > max_words {
                break;
            }
        }
        if !words.is_empty() && words.len() <= max_words {
            return Ok(words);
        }
    }
    Err(Error::Config(format!(
        "language model rarely ends within {max_words} words"
    )))
}

/// Tied-state ids of a unit sequence with geometric state durations.
pub fn simulate_state_sequence(model: &HmmModel, units: &[usize], rng: &mut RandomSource) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for &u in units {
        let unit = model.unit(u);
        if unit.has_tee() && rng.uniform() < unit.tee() {
            continue;
        }
        for s in 0..unit.n_states() {
            let q = unit.self_loop(s);
            let dur = if q <= 0.0 { 1 } else { sample_geometric(1.0 - q, rng)? };
            out.extend(std::iter::repeat_n(model.tied(u, s), dur as usize));
        }
    }
    Ok(out)
}

/// Independent frames from the outputs of a state sequence.
pub fn simulate_frames(model: &HmmModel, states: &[u32], rng: &mut RandomSource) -> Vec<f64> {
    let mut frames = Vec::with_capacity(states.len() * model.dim());
    for &s in states {
        frames.extend(sample_output(model.output(s), rng));
    }
    frames
}

/// Unit sequence of a transcription: one pronunciation per word chosen
/// uniformly and each optional silence taken with probability ½.
pub fn sample_units(model: &HmmModel, lexicon: &Lexicon, words: &[String], rng: &mut RandomSource) -> Result<Vec<usize>> {
    let sil = model.unit_index(lexicon.silence())?;
    let mut units = Vec::new();
    for w in words {
        let prons = lexicon.prons(w)?;
        if rng.uniform() < 0.5 {
            units.push(sil);
        }
        let pron = &prons[rng.below(prons.len())];
        units.extend(lexicon.units(model, pron)?);
    }
    if words.is_empty() || rng.uniform() < 0.5 {
        units.push(sil);
    }
    Ok(units)
}

/// Units visited by a hard alignment over `graph`, in order.
pub fn alignment_units(graph: &CompositeGraph, alignment: &Alignment) -> Result<Vec<usize>> {
    let nodes = alignment.hard_nodes().ok_or_else(|| {
        Error::Validation(format!("alignment for {} is not hard", alignment.utt_id))
    })?;
    if nodes.iter().any(|&n| n as usize >= graph.nodes().len() || matches!(graph.node(n), NodeKind::Junction)) {
        return Err(Error::Validation(format!(
            "alignment for {} does not belong to this graph",
            alignment.utt_id
        )));
    }
    Ok(segment_spans(graph, nodes)
        .into_iter()
        .map(|(seg, _, _)| graph.segments()[seg as usize].unit as usize)
        .collect())
}

/// Where a simulated utterance takes its pronunciation and silence choices.
pub enum PronSource<'a> {
    Random,
    /// Reuse the unit sequence of an existing alignment over `graph`.
    FromAlignment(&'a CompositeGraph, &'a Alignment),
}

/// A pseudo utterance for `transcript`, recording the true state sequence.
pub fn simulate_utterance(
    model: &HmmModel,
    lexicon: &Lexicon,
    id: &str,
    speaker: &str,
    transcript: &[String],
    source: PronSource<'_>,
    rng: &mut RandomSource,
) -> Result<Utterance> {
    let units = match source {
        PronSource::Random => sample_units(model, lexicon, transcript, rng)?,
        PronSource::FromAlignment(g, a) => alignment_units(g, a)?,
    };
    let states = simulate_state_sequence(model, &units, rng)?;
    let frames = simulate_frames(model, &states, rng);
    Utterance::new(id, speaker, transcript.to_vec(), model.dim(), frames)?.with_states(states)
}

fn simulate_set(
    gt_model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    spec: &GroundTruthSpec,
    prefix: &str,
    n: usize,
    offsets: &SpeakerOffsets,
    rng: &RandomSource,
) -> Result<Corpus> {
    let utts: Vec<Utterance> = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = format!("{prefix}{i:04}");
            let speaker = &offsets.speakers[i % offsets.speakers.len()];
            let mut r = rng.derive(&id);
            let words = sample_sentence(lm, spec.max_words, &mut r)?;
            let mut u = simulate_utterance(gt_model, lexicon, &id, speaker, &words, PronSource::Random, &mut r)?;
            if spec.speaker_offset > 0.0 {
                let off = offsets.get(speaker).unwrap();
                for x in u.data_mut().chunks_mut(spec.dim) {
                    x.iter_mut().zip(off).for_each(|(a, b)| *a += b);
                }
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    Corpus::new(spec.dim, utts)
}

/// Ground-truth model, lexicon and language model plus train and test sets
/// simulated from them.
pub fn generate_corpus(spec: &GroundTruthSpec, n_train: usize, n_test: usize, rng: &RandomSource) -> Result<GroundTruth> {
    spec.validate()?;
    let lexicon = random_lexicon(spec, rng)?;
    let model = random_model(spec, &lexicon, rng)?;
    let lm = random_lm(spec, &lexicon, rng)?;
    let speakers: Vec<String> = (0..spec.speakers).map(|i| format!("spk{i:02}")).collect();
    let offsets = SpeakerOffsets::draw(&speakers, spec.dim, spec.speaker_offset, &rng.derive("speakers"));
    let train = simulate_set(&model, &lexicon, &lm, spec, "tr", n_train, &offsets, &rng.derive("train"))?;
    let test = simulate_set(&model, &lexicon, &lm, spec, "te", n_test, &offsets, &rng.derive("test"))?;
    Ok(GroundTruth {
        model,
        lexicon,
        lm,
        train,
        test,
    })
}

/// Within-region AR(1), between-region carry and per-speaker offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceConfig {
    pub rho_within: f64,
    pub rho_between: f64,
    pub speaker_offset: f64,
}

impl DependenceConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..1.0).contains(&r);
        if !ok(self.rho_within) || !ok(self.rho_between) || self.speaker_offset < 0.0 {
            return Err(Error::Config(format!(
                "dependence coefficients must be in [0, 1) and offset ≥ 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

fn output_sd(dist: &OutputDist) -> Vec<f64> {
    match dist {
        OutputDist::Diagonal(g) => g.variance().iter().map(|v| v.sqrt()).collect(),
        OutputDist::Full(g) => {
            let d = g.dim();
            (0..d).map(|i| g.covariance()[i * d + i].sqrt()).collect()
        }
        OutputDist::Laplace(l) => l.scale().iter().map(|b| b * std::f64::consts::SQRT_2).collect(),
    }
}

/// Replace standardized residuals about the aligned state means by an AR(1)
/// process driven by those same residuals: coefficient `rho_within` inside a
/// state region, `rho_between` across a region boundary, fresh at the start
/// of each utterance. Innovations are scaled to keep unit marginal variance.
pub fn inject_dependence(
    corpus: &Corpus,
    alignments: &[Alignment],
    model: &HmmModel,
    cfg: &DependenceConfig,
    rng: &RandomSource,
) -> Result<Corpus> {
    cfg.validate()?;
    if alignments.len() != corpus.len() {
        return Err(Error::Validation(format!(
            "{} alignments for {} utterances",
            alignments.len(),
            corpus.len()
        )));
    }
    let d = corpus.dim();
    let sds: Vec<Vec<f64>> = model.outputs().iter().map(output_sd).collect();
    let offsets = SpeakerOffsets::draw(&corpus.speakers(), d, cfg.speaker_offset, &rng.derive("speakers"));
    let (cw, cb) = ((1.0 - cfg.rho_within.powi(2)).sqrt(), (1.0 - cfg.rho_between.powi(2)).sqrt());
    let utts = corpus
        .utterances()
        .par_iter()
        .zip(alignments)
        .map(|(u, al)| {
            if al.utt_id != u.id {
                return Err(Error::MissingAlignment(u.id.clone()));
            }
            let states = al.hard_states().ok_or_else(|| {
                Error::Validation(format!("alignment for {} is not hard", u.id))
            })?;
            if states.len() != u.len() {
                return Err(Error::Validation(format!("alignment length mismatch for {}", u.id)));
            }
            let off = offsets.get(&u.speaker).unwrap();
            let mut out = Vec::with_capacity(u.len() * d);
            let mut e = vec![0.0; d];
            for (t, &s) in states.iter().enumerate() {
                let mu = model.output(s).mean();
                let sd = &sds[s as usize];
                let x = u.frame(t);
                let (rho, c) = if t == 0 {
                    (0.0, 1.0)
                } else if states[t - 1] == s {
                    (cfg.rho_within, cw)
                } else {
                    (cfg.rho_between, cb)
                };
                for i in 0..d {
                    let z = (x[i] - mu[i]) / sd[i];
                    e[i] = rho * e[i] + c * z;
                    out.push(mu[i] + sd[i] * e[i] + off[i]);
                }
            }
            u.with_frames(d, out)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(d, utts)
}

/// Weighted moving average along time, centred, with edge frames repeated.
/// `weights` must have odd length, be non-negative and have a positive sum.
pub fn smooth_frames(utt: &Utterance, weights: &[f64]) -> Result<Utterance> {
    let total: f64 = weights.iter().sum();
    if weights.len() % 2 == 0 || weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(Error::Domain(format!("bad smoothing weights {weights:?}")));
    }
    let (d, n) = (utt.dim(), utt.len());
    let h = (weights.len() / 2) as isize;
    let mut out = vec![0.0; n * d];
    for t in 0..n {
        let row = &mut out[t * d..(t + 1) * d];
        for (k, w) in weights.iter().enumerate() {
            let s = (t as isize + k as isize - h).clamp(0, n as isize - 1) as usize;
            for (o, x) in row.iter_mut().zip(utt.frame(s)) {
                *o += w / total * x;
            }
        }
    }
    utt.with_frames(d, out)
}

pub fn smooth_corpus(corpus: &Corpus, weights: &[f64]) -> Result<Corpus> {
    let utts = corpus
        .utterances()
        .iter()
        .map(|u| smooth_frames(u, weights))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(corpus.dim(), utts)
}

/// Append first (`(x[t+1] − x[t−1]) / 2`) and second (`x[t+1] − 2x[t] + x[t−1]`)
/// differences, with edge frames repeated.
pub fn append_deltas(utt: &Utterance) -> Result<Utterance> {
    let (d, n) = (utt.dim(), utt.len());
    let mut out = Vec::with_capacity(n * 3 * d);
    for t in 0..n {
        let prev = utt.frame(t.saturating_sub(1));
        let cur = utt.frame(t);
        let next = utt.frame((t + 1).min(n - 1));
        out.extend_from_slice(cur);
        out.extend((0..d).map(|i| 0.5 * (next[i] - prev[i])));
        out.extend((0..d).map(|i| next[i] - 2.0 * cur[i] + prev[i]));
    }
    utt.with_frames(3 * d, out)
}

pub fn append_deltas_corpus(corpus: &Corpus) -> Result<Corpus> {
    let utts = corpus.utterances().iter().map(append_deltas).collect::<Result<Vec<_>>>()?;
    Corpus::new(3 * corpus.dim(), utts)
}

/// Leading `k` coordinates of every frame.
pub fn project_corpus(corpus: &Corpus, k: usize) -> Result<Corpus> {
    let d = corpus.dim();
    if k == 0 || k > d {
        return Err(Error::Domain(format!("cannot project {d} dimensions onto {k}")));
    }
    let utts = corpus
        .utterances()
        .iter()
        .map(|u| {
            let frames = u.frames().flat_map(|x| x[..k].iter().copied()).collect();
            u.with_frames(k, frames)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(k, utts)
}

/// Model restricted to the leading `k` coordinates.
pub fn project_model(model: &HmmModel, k: usize) -> Result<HmmModel> {
    let outputs = model.outputs().iter().map(|o| o.project(k)).collect::<Result<Vec<_>>>()?;
    HmmModel::new(k, model.units().to_vec(), model.tying().to_vec(), outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::FixedStream;

    #[test]
    fn state_sequence_shape_for_fixed_durations() {
        // one 4-state unit; durations 2, 2, 1, 1 when the first draws stay
        let unit = HmmUnit::linear("a", &[0.5, 0.5, 0.5, 0.5], None).unwrap();
        let outs = (0..4)
            .map(|_| OutputDist::Diagonal(DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap()))
            .collect();
        let model = HmmModel::new(1, vec![unit], vec![vec![0, 1, 2, 3]], outs).unwrap();
        // sample_geometric(0.5): u ≥ 0.5 continues, u < 0.5 stops
        let mut s = FixedStream::new(vec![0.9, 0.1, 0.7, 0.2, 0.3, 0.4]);
        let mut seq = Vec::new();
        for st in 0..4u32 {
            let n = sample_geometric(0.5, &mut s).unwrap();
            seq.extend(std::iter::repeat_n(st + 1, n as usize));
        }
        assert_eq!(seq, vec![1, 1, 2, 2, 3, 4]);
        let mut r = RandomSource::new(1, "x");
        let states = simulate_state_sequence(&model, &[0], &mut r).unwrap();
        assert!(states.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*states.last().unwrap(), 3);
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let u = Utterance::new("u", "s", vec![], 2, [1.0, 2.0].repeat(5)).unwrap();
        let v = append_deltas(&u).unwrap();
        assert_eq!(v.dim(), 6);
        for x in v.frames() {
            assert_eq!(&x[2..], &[0.0; 4]);
        }
        let ramp = Utterance::new("r", "s", vec![], 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = append_deltas(&ramp).unwrap();
        assert_eq!(r.frame(0), &[0.0, 0.5, 1.0]);
        assert_eq!(r.frame(1), &[1.0, 1.0, 0.0]);
        assert_eq!(r.frame(3), &[3.0, 0.5, -1.0]);
    }
}
