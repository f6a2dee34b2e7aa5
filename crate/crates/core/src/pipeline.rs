//! Corpus-level steps shared by the experiment pipelines: training,
//! alignment, decoding, simulation and resampling over whole corpora.

use rayon::prelude::*;

use crate::corpus::{Corpus, Utterance};
use crate::decoder::{
    align_counts, build_graph, nbest_lattice, BigramLm, DecodeOptions, Decoder, EditCounts, Lattice, Lexicon,
};
use crate::dists::{DiagonalGaussian, OutputDist, RandomSource, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::hmm::{forward_backward, train, viterbi_align, Alignment, CompositeGraph, HmmModel, OutputStats, TrainOptions};
use crate::mmi::LatticePair;
use crate::resample::{resample_states, UrnSet};
use crate::synth::{sample_units, simulate_frames, simulate_state_sequence};

/// Stop Baum-Welch once no mean, variance or self-loop moves more than this.
pub const TRAIN_TOL: f64 = 1e-9;

/// Copy of a model whose Laplace outputs become diagonal Gaussians with the
/// same mean and variance, so that Baum-Welch can re-estimate it.
pub fn gaussianize(model: &HmmModel) -> Result<HmmModel> {
    model.map_outputs(|o| match o {
        OutputDist::Laplace(l) => Ok(OutputDist::Diagonal(DiagonalGaussian::new(
            l.location().to_vec(),
            l.scale().iter().map(|b| 2.0 * b * b).collect(),
        )?)),
        other => Ok(other.clone()),
    })
}

pub fn transcription_graphs(model: &HmmModel, lexicon: &Lexicon, corpus: &Corpus) -> Result<Vec<CompositeGraph>> {
    corpus
        .utterances()
        .par_iter()
        .map(|u| build_graph(&u.transcript, lexicon, model))
        .collect()
}

/// Baum-Welch from `init` on the transcriptions of `corpus`. Returns the
/// model and the log-likelihood before each pass.
pub fn train_ml(
    init: &HmmModel,
    lexicon: &Lexicon,
    corpus: &Corpus,
    max_passes: usize,
) -> Result<(HmmModel, Vec<f64>)> {
    train(
        init,
        corpus.utterances(),
        |m, u| build_graph(&u.transcript, lexicon, m),
        &TrainOptions::default(),
        max_passes,
        TRAIN_TOL,
    )
}

/// Forced Viterbi alignment of every utterance to its transcription.
pub fn align_hard(model: &HmmModel, lexicon: &Lexicon, corpus: &Corpus) -> Result<Vec<Alignment>> {
    corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let g = build_graph(&u.transcript, lexicon, model)?;
            Ok(viterbi_align(model, &g, u)?.1)
        })
        .collect()
}

/// Forward-backward state occupancies of every utterance.
pub fn align_fractional(model: &HmmModel, lexicon: &Lexicon, corpus: &Corpus) -> Result<Vec<Alignment>> {
    corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let g = build_graph(&u.transcript, lexicon, model)?;
            Ok(forward_backward(model, &g, u)?.1)
        })
        .collect()
}

/// Hard alignments from the state ids recorded at simulation time.
pub fn recorded_alignments(corpus: &Corpus) -> Result<Vec<Alignment>> {
    corpus
        .utterances()
        .iter()
        .map(|u| {
            let s = u
                .states
                .as_ref()
                .ok_or_else(|| Error::MissingAlignment(u.id.clone()))?;
            Ok(Alignment::from_states(u.id.clone(), s.clone()))
        })
        .collect()
}

/// A model with the structure of `template` and outputs estimated from
/// `alignments` over `corpus`, whose dimension may differ from the
/// template's. States without data keep a unit-variance zero-mean output.
pub fn estimate_outputs(template: &HmmModel, corpus: &Corpus, alignments: &[Alignment]) -> Result<HmmModel> {
    let d = corpus.dim();
    let mut stats: Vec<OutputStats> = (0..template.n_outputs()).map(|_| OutputStats::new(vec![0.0; d], false)).collect();
    for (u, a) in corpus.utterances().iter().zip(alignments) {
        if a.utt_id != u.id || a.len() != u.len() {
            return Err(Error::MissingAlignment(u.id.clone()));
        }
        for t in 0..u.len() {
            for (s, w) in a.state_weights(t) {
                stats[s as usize].add(u.frame(t), w);
            }
        }
    }
    let outputs = stats
        .iter()
        .map(|st| {
            if st.occ <= 0.0 {
                return Ok(OutputDist::Diagonal(DiagonalGaussian::new(vec![0.0; d], vec![1.0; d])?));
            }
            Ok(OutputDist::Diagonal(DiagonalGaussian::with_floor(
                st.mean(),
                st.variance(),
                VARIANCE_FLOOR,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;
    HmmModel::new(d, template.units().to_vec(), template.tying().to_vec(), outputs)
}

/// One-best word strings for every utterance.
pub fn decode_corpus(
    model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    corpus: &Corpus,
    opts: &DecodeOptions,
) -> Result<Vec<Vec<String>>> {
    let dec = Decoder::new(model, lexicon, lm)?;
    corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let best = dec.nbest(u, opts)?;
            Ok(best.into_iter().next().map(|h| h.words).unwrap_or_default())
        })
        .collect()
}

/// Pooled edit counts of hypotheses against the corpus transcripts.
pub fn score_hypotheses(corpus: &Corpus, hyps: &[Vec<String>]) -> EditCounts {
    let mut total = EditCounts::default();
    for (u, h) in corpus.utterances().iter().zip(hyps) {
        total.add(&align_counts(&u.transcript, h));
    }
    total
}

pub fn decode_and_score(
    model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    corpus: &Corpus,
    opts: &DecodeOptions,
) -> Result<EditCounts> {
    Ok(score_hypotheses(corpus, &decode_corpus(model, lexicon, lm, corpus, opts)?))
}

/// Pseudo corpus simulated from `model` with the ids, speakers and
/// transcripts of `template`; pronunciations and silences drawn afresh.
pub fn simulate_like(model: &HmmModel, lexicon: &Lexicon, template: &Corpus, rng: &RandomSource) -> Result<Corpus> {
    let utts = template
        .utterances()
        .par_iter()
        .map(|t| {
            let mut r = rng.derive(&t.id);
            let units = sample_units(model, lexicon, &t.transcript, &mut r)?;
            let states = simulate_state_sequence(model, &units, &mut r)?;
            let frames = simulate_frames(model, &states, &mut r);
            Utterance::new(t.id.clone(), t.speaker.clone(), t.transcript.clone(), model.dim(), frames)?.with_states(states)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(model.dim(), utts)
}

/// Resampled pseudo corpus whose state sequences are simulated from
/// `model` for the transcripts of `template`, with frames drawn from urns
/// over `source`.
pub fn resample_simulated(
    urns: &UrnSet,
    source: &Corpus,
    model: &HmmModel,
    lexicon: &Lexicon,
    template: &Corpus,
    rng: &RandomSource,
) -> Result<Corpus> {
    let utts = template
        .utterances()
        .par_iter()
        .map(|t| {
            let mut r = rng.derive(&t.id);
            let units = sample_units(model, lexicon, &t.transcript, &mut r)?;
            let states = simulate_state_sequence(model, &units, &mut r)?;
            resample_states(urns, source, t, &states, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(source.dim(), utts)
}

/// Numerator and N-best denominator lattices for every utterance, generated
/// under `opts`.
pub fn generate_lattices(
    model: &HmmModel,
    lexicon: &Lexicon,
    lm: &BigramLm,
    corpus: &Corpus,
    opts: &DecodeOptions,
) -> Result<Vec<LatticePair>> {
    let dec = Decoder::new(model, lexicon, lm)?;
    corpus
        .utterances()
        .par_iter()
        .map(|u| {
            Ok(LatticePair {
                numerator: Lattice::numerator(u, model, lexicon, lm, opts)?,
                denominator: nbest_lattice(&dec, lexicon, u, opts)?,
            })
        })
        .collect()
}
