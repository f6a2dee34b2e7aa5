//! Lexicon, bigram language model, exact N-best decoding, lattices and WER.

mod graph;
mod lattice;
mod lexicon;
mod lm;
mod search;
mod wer;

pub use graph::{build_graph, build_loop_graph, build_scaled_graph, SILENCE_SLOT_LOGP};
pub use lattice::{
    align_phone, arc_weight, nbest_lattice, ArcScore, Lattice, LatticeArc, LatticeNode,
    LatticePath, PhoneAlignment, PhoneMark, SILENCE_WORD,
};
pub use lexicon::{center_phone, ContextMode, Lexicon};
pub use lm::{BigramLm, SENT_END, SENT_START};
pub use search::{recognize, DecodeOptions, Decoder, Hypothesis};
pub use wer::{align_counts, wer, EditCounts};
