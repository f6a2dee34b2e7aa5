use std::f64::consts::LN_2;

use crate::error::Result;
use crate::hmm::{CompositeGraph, GraphBuilder, HmmModel, NodeId};
use crate::mmi::PhoneScaleMap;

use super::lexicon::Lexicon;

/// Log prior of one optional-silence slot, taken or skipped.
pub const SILENCE_SLOT_LOGP: f64 = -LN_2;

/// Transition scaling while placing units: per-phone scales on unit
/// transitions and a weight on the silence-slot prior.
struct Place<'a> {
    model: &'a HmmModel,
    scales: Option<&'a PhoneScaleMap>,
    prior: f64,
}

impl Place<'_> {
    fn unit(&self, b: &mut GraphBuilder, unit: usize, word: Option<u32>) -> (NodeId, NodeId) {
        let s = self.scales.map_or(1.0, |m| m.scale(self.model.unit(unit).label()));
        b.scaled_unit(self.model, unit, word, s)
    }

    fn silence_slot(&self, b: &mut GraphBuilder, sil: usize, from: NodeId) -> NodeId {
        let to = b.junction();
        let (entry, exit) = self.unit(b, sil, None);
        b.arc(from, entry, self.prior * SILENCE_SLOT_LOGP);
        b.arc(exit, to, 0.0);
        b.arc(from, to, self.prior * SILENCE_SLOT_LOGP);
        to
    }

    #[allow(clippy::too_many_arguments)]
    fn word_arcs(
        &self,
        b: &mut GraphBuilder,
        lexicon: &Lexicon,
        word: &str,
        pos: u32,
        from: NodeId,
        to: NodeId,
        logp: f64,
    ) -> Result<()> {
        for pron in lexicon.prons(word)? {
            let mut prev = from;
            let mut w = logp;
            for u in lexicon.units(self.model, pron)? {
                let (entry, exit) = self.unit(b, u, Some(pos));
                b.arc(prev, entry, w);
                w = 0.0;
                prev = exit;
            }
            b.arc(prev, to, 0.0);
        }
        Ok(())
    }

    fn transcription(&self, words: &[String], lexicon: &Lexicon) -> Result<CompositeGraph> {
        for w in words {
            lexicon.prons(w)?;
        }
        let sil = self.model.unit_index(lexicon.silence())?;
        let mut b = GraphBuilder::new();
        let start = b.junction();
        if words.is_empty() {
            let (entry, exit) = self.unit(&mut b, sil, None);
            b.arc(start, entry, 0.0);
            return b.build(start, exit);
        }
        let mut at = self.silence_slot(&mut b, sil, start);
        for (i, w) in words.iter().enumerate() {
            let next = b.junction();
            self.word_arcs(&mut b, lexicon, w, i as u32, at, next, 0.0)?;
            at = self.silence_slot(&mut b, sil, next);
        }
        b.build(start, at)
    }
}

/// State graph of a transcription: any pronunciation of each word, with an
/// optional silence before every word and after the last one. An empty
/// transcription yields silence alone.
pub fn build_graph(words: &[String], lexicon: &Lexicon, model: &HmmModel) -> Result<CompositeGraph> {
    Place { model, scales: None, prior: 1.0 }.transcription(words, lexicon)
}

/// [`build_graph`] with unit transitions multiplied by their phone scales
/// and silence-slot priors by `kappa`.
pub fn build_scaled_graph(
    words: &[String],
    lexicon: &Lexicon,
    model: &HmmModel,
    scales: &PhoneScaleMap,
    kappa: f64,
) -> Result<CompositeGraph> {
    Place { model, scales: Some(scales), prior: kappa }.transcription(words, lexicon)
}

/// Free word loop over the whole lexicon with uniform word choice and
/// optional silences; at least one word.
pub fn build_loop_graph(lexicon: &Lexicon, model: &HmmModel) -> Result<CompositeGraph> {
    let p = Place { model, scales: None, prior: 1.0 };
    let sil = model.unit_index(lexicon.silence())?;
    let mut b = GraphBuilder::new();
    let start = b.junction();
    let words_in = p.silence_slot(&mut b, sil, start);
    let words_out = b.junction();
    let choice = -(lexicon.len() as f64).ln();
    for w in lexicon.words() {
        p.word_arcs(&mut b, lexicon, w, 0, words_in, words_out, choice)?;
    }
    let after = p.silence_slot(&mut b, sil, words_out);
    let end = b.junction();
    b.arc(after, words_in, -LN_2);
    b.arc(after, end, -LN_2);
    b.build(start, end)
}
